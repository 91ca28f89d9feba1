//! Mixed-integer planning model: construction, surrogate embedding, solving
//! and solution extraction.
//!
//! The model places launchpads and kiosks, splits each OD's demand between
//! couriers and drone routes, picks a reliability level per launchpad,
//! balances idle couriers across zones and charges the bundling cost of all
//! ground flows through embedded ReLU surrogates. Solving is delegated to a
//! [`SolverBackend`]; [`highs::HighsBackend`] is the bundled one.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scenario::{GroundLeg, NetworkScenario, NodeId, OdPair, ScenarioError, ZoneId};
use crate::surrogate::{InputBox, SurrogateModel};

mod build;
pub mod highs;
mod lp;
mod model;
mod post;

pub use build::{
    air_routes, build_model, embed_relu, ground_flow_bounds, required_boxes, training_tasks, BigM, BuildOptions, GroundKey,
    LaunchpadVars, ObjectiveParts, PlanLayout, PlanModel, ReluBlock, ReturnVars, RouteVars,
};
pub use lp::{export_model, to_lp_string};
pub use model::{Census, Constraint, MilpModel, Sense, VarId, VarKind, Variable};
pub use post::{post_check, OdCheck, PostCheckReport, REL_ERROR_FLOOR};

/// Environment variable naming the default backend.
pub const BACKEND_ENV: &str = "AEROCOURIER_BACKEND";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MilpError {
    #[error("no surrogate for ground OD {0:?}")]
    MissingSurrogate(OdPair),
    #[error("surrogate box for OD {od:?} is {have:?} but the model needs {need:?}")]
    InfeasibleBox { od: OdPair, have: InputBox, need: InputBox },
    #[error("neuron {neuron} of OD {od:?} has unbounded pre-activation")]
    UnboundedNeuron { od: OdPair, neuron: usize },
    #[error("solver backend error: {0}")]
    Backend(String),
    #[error("model is infeasible")]
    InfeasibleModel,
    #[error("time limit reached without a feasible solution (bound {bound})")]
    NoIncumbent { bound: f64 },
    #[error("unknown solver backend `{0}`")]
    UnknownBackend(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendStatus {
    Optimal,
    GapLimit,
    TimeLimit,
    Infeasible,
}

/// Backend result in column order of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSolution {
    pub status: BackendStatus,
    /// Column values when a feasible point is known.
    pub values: Option<Vec<f64>>,
    pub objective: f64,
    /// Best proven lower bound.
    pub bound: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Seconds; `None` means unlimited.
    pub time_limit: Option<f64>,
    pub mip_gap: f64,
    /// Zero leaves the backend default.
    pub threads: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            time_limit: None,
            mip_gap: 1e-7,
            threads: 1,
            seed: 0,
        }
    }
}

/// Whole-model hand-off to an exact solver.
pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> Result<RawSolution, MilpError>;
    /// Solves a model stored as LP text.
    fn solve_lp_file(&self, path: &Path, opts: &SolveOptions) -> Result<RawSolution, MilpError>;
}

pub fn backend_by_name(name: &str) -> Result<Box<dyn SolverBackend>, MilpError> {
    match name.to_ascii_lowercase().as_str() {
        "highs" => Ok(Box::new(highs::HighsBackend)),
        _ => Err(MilpError::UnknownBackend(name.to_string())),
    }
}

/// Backend named by [`BACKEND_ENV`], or HiGHS when unset.
pub fn default_backend() -> Result<Box<dyn SolverBackend>, MilpError> {
    match std::env::var(BACKEND_ENV) {
        Ok(name) if !name.is_empty() => backend_by_name(&name),
        _ => Ok(Box::new(highs::HighsBackend)),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub infrastructure: f64,
    pub courier_wages: f64,
    pub drone_cost: f64,
    pub time_penalty: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.infrastructure + self.courier_wages + self.drone_cost + self.time_penalty
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirFlow {
    /// `(restaurant, launchpad, kiosk, customer)`.
    pub route: [NodeId; 4],
    pub intended: f64,
    pub realized: f64,
    pub flight_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundFlow {
    pub od: OdPair,
    pub legs: Vec<GroundLeg>,
    pub flow: f64,
    pub idle: f64,
    /// Surrogate outputs at the solution.
    pub theta: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectFlow {
    pub od: OdPair,
    pub demand: f64,
    pub ground: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnFlow {
    pub kiosk: NodeId,
    pub launchpad: NodeId,
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reposition {
    pub from: ZoneId,
    pub to: ZoneId,
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaunchpadState {
    pub node: NodeId,
    pub built: bool,
    /// Index into the reliability grid, `None` when closed.
    pub level: Option<usize>,
    pub gamma: f64,
    pub nu_o: f64,
    pub nu_d: f64,
    pub n_drones: f64,
    pub n_orders: f64,
    /// Mean wait in minutes, `None` without throughput.
    pub wait: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSolution {
    pub status: BackendStatus,
    pub objective: f64,
    /// Proven lower bound, `None` when the backend has none.
    pub bound: Option<f64>,
    pub gap: Option<f64>,
    pub launchpads_built: Vec<NodeId>,
    pub kiosks_built: Vec<NodeId>,
    pub direct: Vec<DirectFlow>,
    pub air: Vec<AirFlow>,
    pub ground: Vec<GroundFlow>,
    pub returns: Vec<ReturnFlow>,
    pub launchpads: Vec<LaunchpadState>,
    pub idle: BTreeMap<ZoneId, f64>,
    pub reposition: Vec<Reposition>,
    pub couriers: f64,
    pub drones: f64,
    pub costs: CostBreakdown,
    pub total_demand: f64,
    /// Largest constraint, bound or integrality violation of the returned
    /// point, evaluated independently of the backend.
    pub max_violation: f64,
    pub violation_at: String,
}

impl PlanSolution {
    pub fn built_sites(&self) -> usize {
        self.launchpads_built.len() + self.kiosks_built.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan solutions serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, MilpError> {
        serde_json::from_str(text).map_err(|e| MilpError::Io(format!("plan document: {e}")))
    }
}

fn dot(terms: &[(VarId, f64)], x: &[f64]) -> f64 {
    terms.iter().map(|(v, c)| c * x[v.0]).sum()
}

/// Rounds binaries to their nearest integer so downstream reads are exact.
fn snap(model: &MilpModel, x: &mut [f64]) {
    for (v, xv) in model.vars().iter().zip(x.iter_mut()) {
        if v.kind == VarKind::Binary {
            *xv = xv.round();
        }
    }
}

/// Solves a planning model and extracts the plan.
pub fn solve(plan: &PlanModel, backend: &dyn SolverBackend, opts: &SolveOptions) -> Result<PlanSolution, MilpError> {
    let raw = backend.solve(&plan.model, opts)?;
    match raw.status {
        BackendStatus::Infeasible => return Err(MilpError::InfeasibleModel),
        _ if raw.values.is_none() => return Err(MilpError::NoIncumbent { bound: raw.bound }),
        _ => {}
    }
    let values = raw.values.clone().expect("checked above");
    Ok(extract(plan, &raw, values))
}

fn extract(plan: &PlanModel, raw: &RawSolution, raw_values: Vec<f64>) -> PlanSolution {
    let m = &plan.model;
    let lay = &plan.layout;
    let (max_violation, violation_at) = m.max_violation(&raw_values);
    if max_violation > 1e-6 {
        log::warn!("solution violates `{violation_at}` by {max_violation:e}");
    }
    let costs = CostBreakdown {
        infrastructure: dot(&lay.parts.infrastructure, &raw_values),
        courier_wages: dot(&lay.parts.courier_wages, &raw_values),
        drone_cost: dot(&lay.parts.drone_cost, &raw_values),
        time_penalty: dot(&lay.parts.time_penalty, &raw_values),
    };
    let mut x = raw_values;
    snap(m, &mut x);
    let launchpads: Vec<LaunchpadState> = lay
        .launchpads
        .iter()
        .map(|lv| {
            let built = x[lv.y.0] > 0.5;
            let level = lv.omega.iter().position(|w| x[w.0] > 0.5);
            let throughput: f64 = lay.routes.iter().filter(|r| r.route.1 == lv.node).map(|r| x[r.la.0]).sum();
            let n_orders = x[lv.n_orders.0];
            LaunchpadState {
                node: lv.node,
                built,
                level,
                gamma: level.map_or(0.0, |r| lay.gamma_grid[r]),
                nu_o: x[lv.nu_o.0],
                nu_d: x[lv.nu_d.0],
                n_drones: x[lv.n_drones.0],
                n_orders,
                wait: crate::droneq::launchpad_wait(n_orders, throughput).minutes(),
            }
        })
        .collect();
    PlanSolution {
        status: raw.status,
        objective: raw.objective,
        bound: raw.bound.is_finite().then_some(raw.bound),
        gap: raw.gap.is_finite().then_some(raw.gap),
        launchpads_built: launchpads.iter().filter(|s| s.built).map(|s| s.node).collect(),
        kiosks_built: lay.kiosks.iter().filter(|(_, z)| x[z.0] > 0.5).map(|(&k, _)| k).collect(),
        direct: lay
            .ground
            .iter()
            .map(|(&od, v)| DirectFlow {
                od,
                // The direct ground column is bounded by the OD's demand.
                demand: m.var(*v).upper,
                ground: x[v.0],
            })
            .collect(),
        air: lay
            .routes
            .iter()
            .map(|r| AirFlow {
                route: [r.route.0, r.route.1, r.route.2, r.route.3],
                intended: x[r.lhat.0],
                realized: x[r.la.0],
                flight_time: r.flight_time,
            })
            .collect(),
        ground: lay
            .keys
            .iter()
            .map(|k| GroundFlow {
                od: k.od,
                legs: k.legs.clone(),
                flow: x[k.lgall.0],
                idle: x[lay.idle[&k.origin_zone].0],
                theta: [x[k.theta[0].0], x[k.theta[1].0]],
            })
            .collect(),
        returns: lay
            .returns
            .iter()
            .map(|r| ReturnFlow {
                kiosk: r.kiosk,
                launchpad: r.launchpad,
                flow: x[r.var.0],
            })
            .collect(),
        launchpads,
        idle: lay.idle.iter().map(|(z, v)| (z.clone(), x[v.0])).collect(),
        reposition: lay
            .reposition
            .iter()
            .map(|((a, b), v)| Reposition {
                from: a.clone(),
                to: b.clone(),
                flow: x[v.0],
            })
            .collect(),
        couriers: x[lay.n_couriers.0],
        drones: x[lay.n_drones.0],
        costs,
        total_demand: lay.total_demand,
        max_violation,
        violation_at,
    }
}

/// Builds and solves in one step.
pub fn plan(
    scenario: &NetworkScenario,
    surrogates: &BTreeMap<OdPair, SurrogateModel>,
    backend: &dyn SolverBackend,
    opts: &SolveOptions,
) -> Result<PlanSolution, MilpError> {
    let model = build_model(scenario, surrogates, &BuildOptions::default())?;
    solve(&model, backend, opts)
}
