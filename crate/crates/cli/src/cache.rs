//! On-disk surrogate cache.
//!
//! A model file is keyed by everything that determines its weights: the OD's
//! ground context, the sampled box, the point count and the training config.
//! Anything else (costs, other ODs, solver settings) can change without
//! invalidating it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aerocourier::milp;
use aerocourier::scenario::NetworkScenario;
use aerocourier::surrogate::{self, InputBox, SurrogateModel, TrainConfig, TrainTask};
use aerocourier::{ODGroundContext, OdPair};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Sampling and training settings shared by every task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSettings {
    pub n_points: usize,
    pub config: TrainConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            n_points: 45_000,
            config: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

impl CacheStats {
    pub fn since(self, earlier: CacheStats) -> CacheStats {
        CacheStats {
            hits: self.hits - earlier.hits,
            misses: self.misses - earlier.misses,
        }
    }
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    model_version: u32,
    od: OdPair,
    template: ODGroundContext,
    input_box: &'a InputBox,
    settings: &'a TrainSettings,
}

pub struct ModelCache {
    dir: PathBuf,
    settings: TrainSettings,
    memory: BTreeMap<String, SurrogateModel>,
    stats: CacheStats,
}

impl ModelCache {
    pub fn new(dir: impl Into<PathBuf>, settings: TrainSettings) -> Self {
        ModelCache {
            dir: dir.into(),
            settings,
            memory: BTreeMap::new(),
            stats: CacheStats::default(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn settings(&self) -> &TrainSettings {
        &self.settings
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    fn key(&self, task: &TrainTask) -> String {
        // Flow and idle count are the surrogate's inputs, not part of its identity.
        let template = task.template.with_flow(0.0, 0.0);
        let material = KeyMaterial {
            model_version: surrogate::MODEL_VERSION,
            od: task.od,
            template,
            input_box: &task.input_box,
            settings: &self.settings,
        };
        let bytes = serde_json::to_vec(&material).expect("key material serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn path(&self, od: OdPair, key: &str) -> PathBuf {
        self.dir.join(format!("od_{}_{}_{key}.json", od.0, od.1))
    }

    /// Surrogates for every ground OD the planning model of `scenario` needs,
    /// trained on boxes whose flow axis is stretched by `lambda_scale`.
    pub fn models_for(
        &mut self,
        scenario: &NetworkScenario,
        lambda_scale: f64,
    ) -> Result<BTreeMap<OdPair, SurrogateModel>, CliError> {
        let tasks = milp::training_tasks(scenario, lambda_scale).map_err(CliError::runtime)?;
        let mut out = BTreeMap::new();
        let mut missing = Vec::new();
        for task in tasks {
            let key = self.key(&task);
            if let Some(m) = self.memory.get(&key) {
                self.stats.hits += 1;
                out.insert(task.od, m.clone());
                continue;
            }
            let path = self.path(task.od, &key);
            if path.exists() {
                let m = surrogate::load(&path).map_err(CliError::runtime)?;
                self.stats.hits += 1;
                self.memory.insert(key, m.clone());
                out.insert(task.od, m);
            } else {
                missing.push((key, task));
            }
        }
        if missing.is_empty() {
            return Ok(out);
        }
        std::fs::create_dir_all(&self.dir)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", self.dir.display())))?;
        let tasks: Vec<TrainTask> = missing.iter().map(|(_, t)| t.clone()).collect();
        log::info!("training {} surrogate(s)", tasks.len());
        let mut trained =
            surrogate::train_many(&tasks, self.settings.n_points, &self.settings.config).map_err(CliError::runtime)?;
        for (key, task) in missing {
            let m = trained.remove(&task.od).expect("one model per task");
            surrogate::save(&m, &self.path(task.od, &key)).map_err(CliError::runtime)?;
            self.stats.misses += 1;
            self.memory.insert(key, m.clone());
            out.insert(task.od, m);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aerocourier::scenario::{load_scenario_file, KeyPolicy};

    fn line() -> NetworkScenario {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/line.json");
        load_scenario_file(&path, KeyPolicy::Strict).unwrap()
    }

    fn tiny() -> TrainSettings {
        let mut s = TrainSettings {
            n_points: 200,
            ..TrainSettings::default()
        };
        s.config.epochs = 5;
        s
    }

    #[test]
    fn second_request_hits_memory_and_a_fresh_cache_hits_disk() {
        let dir = tempfile::tempdir().unwrap();
        let sc = line();
        let mut cache = ModelCache::new(dir.path(), tiny());
        let first = cache.models_for(&sc, 1.0).unwrap();
        let trained = cache.stats().misses;
        assert!(trained > 0);
        assert_eq!(cache.stats().hits, 0);
        let again = cache.models_for(&sc, 1.0).unwrap();
        assert_eq!(cache.stats(), CacheStats { hits: trained, misses: trained });
        let mut fresh = ModelCache::new(dir.path(), tiny());
        let loaded = fresh.models_for(&sc, 1.0).unwrap();
        assert_eq!(fresh.stats(), CacheStats { hits: trained, misses: 0 });
        for (od, m) in &first {
            assert_eq!(again[od].net, m.net);
            assert_eq!(loaded[od].net, m.net);
        }
    }

    #[test]
    fn key_changes_with_settings_and_box_but_not_with_flow() {
        let sc = line();
        let task = milp::training_tasks(&sc, 1.0).unwrap().remove(0);
        let cache = ModelCache::new("unused", tiny());
        let key = cache.key(&task);
        let mut moved = task.clone();
        moved.template = moved.template.with_flow(0.3, 2.0);
        assert_eq!(cache.key(&moved), key);
        let mut wider = task.clone();
        wider.input_box.lambda[1] *= 2.0;
        assert_ne!(cache.key(&wider), key);
        let mut other = tiny();
        other.config.seed = 1;
        assert_ne!(ModelCache::new("unused", other).key(&task), key);
    }

    #[test]
    fn stats_difference() {
        let a = CacheStats { hits: 5, misses: 3 };
        let b = CacheStats { hits: 2, misses: 3 };
        assert_eq!(a.since(b), CacheStats { hits: 3, misses: 0 });
    }
}
