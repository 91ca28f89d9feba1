//! CSV tables and the run manifest.

use std::path::{Path, PathBuf};

use aerocourier::milp::{BackendStatus, PlanSolution, PostCheckReport};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// One row of a plan or sweep summary.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub case: usize,
    pub label: String,
    pub status: BackendStatus,
    pub launchpads: String,
    pub kiosks: String,
    pub sites_built: usize,
    pub objective: f64,
    pub infrastructure: f64,
    pub courier_wages: f64,
    pub drone_cost: f64,
    pub time_penalty: f64,
    pub avg_delivery_time: f64,
    pub avg_bundling_prob: f64,
    pub couriers: f64,
    pub drones: f64,
    pub exact_objective: f64,
    pub max_rel_error: f64,
    /// Active air routes as `restaurant-launchpad-kiosk-customer`.
    pub air_routes: String,
}

/// Air flow below this is reported as inactive.
pub const ACTIVE_FLOW: f64 = 1e-7;

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

impl SummaryRow {
    pub fn new(case: usize, label: String, solution: &PlanSolution, report: &PostCheckReport) -> Self {
        SummaryRow {
            case,
            label,
            status: solution.status,
            launchpads: join(&solution.launchpads_built),
            kiosks: join(&solution.kiosks_built),
            sites_built: solution.built_sites(),
            objective: solution.objective,
            infrastructure: solution.costs.infrastructure,
            courier_wages: solution.costs.courier_wages,
            drone_cost: solution.costs.drone_cost,
            time_penalty: solution.costs.time_penalty,
            avg_delivery_time: report.avg_delivery_time,
            avg_bundling_prob: report.avg_bundling_prob,
            couriers: solution.couriers,
            drones: solution.drones,
            exact_objective: report.exact_objective,
            max_rel_error: report.max_rel_error,
            air_routes: join(
                solution
                    .air
                    .iter()
                    .filter(|a| a.realized > ACTIVE_FLOW)
                    .map(|a| join(a.route).replace(';', "-")),
            ),
        }
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Writes serializable rows with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// CSV text of serializable rows, for stdout.
pub fn csv_string<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

/// Hex SHA-256 of the JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reproducibility record written next to every output. Holds no clock
/// readings so identical runs produce identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config_hash: String,
    pub config: C,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<serde_json::Value>,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(command: &'static str, seed: u64, config: C) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config_hash: config_hash(&config),
            config,
            outputs: Vec::new(),
            cache: None,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_text(&path, &(text + "\n"))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        a: u32,
        b: f64,
    }

    #[test]
    fn config_hash_is_sha256_of_the_json_text() {
        // SHA-256 of the single byte "1".
        assert_eq!(config_hash(&1u8), "6b86b273ff34fce19d6b804eff5a3f5747ada4eaa22f1d49c01e52ddb7875b4b");
        assert_ne!(config_hash(&serde_json::json!({"a": 1})), config_hash(&serde_json::json!({"a": 2})));
    }

    #[test]
    fn csv_has_a_header_and_one_line_per_row() {
        let text = csv_string(&[Row { a: 1, b: 0.5 }, Row { a: 2, b: -1.0 }]);
        assert_eq!(text, "a,b\n1,0.5\n2,-1.0\n");
    }

    #[test]
    fn manifest_records_hash_of_its_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new("plan", 7, serde_json::json!({"k": [1, 2]}));
        m.outputs.push("plan.json".into());
        let path = m.write(dir.path()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(v["seed"], 7);
        assert_eq!(v["command"], "plan");
        assert_eq!(v["config_hash"], config_hash(&serde_json::json!({"k": [1, 2]})));
        assert!(v.get("cache").is_none());
    }

    #[test]
    fn join_uses_semicolons() {
        assert_eq!(join([3, 9]), "3;9");
        assert_eq!(join(Vec::<u32>::new()), "");
    }
}
