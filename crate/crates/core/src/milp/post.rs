//! Exact re-evaluation of a plan against the closed-form bundling map.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CostBreakdown, PlanSolution};
use crate::bundling::{self, BundlingEquilibrium};
use crate::droneq::{self, LaunchpadQueueMetrics};
use crate::fleet::{self, AirRoute};
use crate::scenario::{NetworkScenario, NodeId, OdPair};

/// Surrogate versus exact bundling outputs of one ground OD pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdCheck {
    pub od: OdPair,
    pub flow: f64,
    pub idle: f64,
    pub surrogate: [f64; 2],
    pub exact: [f64; 2],
    pub abs_error: [f64; 2],
    /// `None` where the exact value is below [`REL_ERROR_FLOOR`].
    pub rel_error: [Option<f64>; 2],
    pub p_s: f64,
}

/// Exact outputs smaller than this are rounding residue of a zero flow, so no
/// relative error is reported for them.
pub const REL_ERROR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostCheckReport {
    pub ods: Vec<OdCheck>,
    pub max_rel_error: f64,
    /// Objective re-summed from the plan's fields and the scenario's prices,
    /// using the surrogate outputs the solver saw.
    pub accounting_objective: f64,
    pub accounting_costs: CostBreakdown,
    /// Objective with every surrogate output replaced by its exact value.
    pub exact_objective: f64,
    pub exact_costs: CostBreakdown,
    pub couriers_exact: f64,
    pub drones: f64,
    pub launchpads: Vec<(NodeId, LaunchpadQueueMetrics)>,
    /// Demand-weighted mean delivery time from exact bundling times.
    pub avg_delivery_time: f64,
    /// Ground-flow-weighted mean probability an order is bundled.
    pub avg_bundling_prob: f64,
    pub warnings: Vec<String>,
}

/// Recomputes bundling outputs, fleet sizes, launchpad queues and the
/// objective for a solved plan.
pub fn post_check(solution: &PlanSolution, scenario: &NetworkScenario) -> PostCheckReport {
    let p = scenario.params();
    let c = &p.costs;
    let mut warnings = Vec::new();
    let mut ods = Vec::new();
    let mut equilibria: BTreeMap<OdPair, BundlingEquilibrium> = BTreeMap::new();
    let mut flows: BTreeMap<OdPair, f64> = BTreeMap::new();
    for g in &solution.ground {
        // Solver noise can leave tiny negative flows.
        let flow = g.flow.max(0.0);
        flows.insert(g.od, flow);
        if g.idle >= p.idle.max * (1.0 - 1e-9) {
            warnings.push(format!("OD {:?}: idle couriers at the upper limit {}", g.od, p.idle.max));
        }
        let eq = scenario
            .ground_context(g.od.0, g.od.1)
            .map_err(|e| e.to_string())
            .and_then(|ctx| bundling::equilibrium(&ctx.with_flow(flow, g.idle)).map_err(|e| e.to_string()));
        let (exact, p_s) = match eq {
            Ok(eq) => {
                let out = ([eq.theta1, eq.theta2], eq.p_s);
                equilibria.insert(g.od, eq);
                out
            }
            Err(e) => {
                warnings.push(format!("OD {:?}: exact bundling unavailable: {e}", g.od));
                ([f64::NAN; 2], f64::NAN)
            }
        };
        let abs_error = [(g.theta[0] - exact[0]).abs(), (g.theta[1] - exact[1]).abs()];
        let rel = |o: usize| (exact[o].abs() > REL_ERROR_FLOOR).then(|| abs_error[o] / exact[o].abs());
        ods.push(OdCheck {
            od: g.od,
            flow,
            idle: g.idle,
            surrogate: g.theta,
            exact,
            abs_error,
            rel_error: [rel(0), rel(1)],
            p_s,
        });
    }
    let max_rel_error = ods
        .iter()
        .flat_map(|o| o.rel_error.iter().flatten())
        .fold(0.0, |a: f64, &b| a.max(b));

    // Fleet.
    let repo: BTreeMap<(String, String), f64> = solution
        .reposition
        .iter()
        .map(|r| ((r.from.clone(), r.to.clone()), r.flow))
        .collect();
    let repo_time = |a: &str, b: &str| scenario.reposition_time(a, b);
    let couriers_exact = match fleet::courier_count(&flows, &equilibria, &solution.idle, &repo, repo_time) {
        Ok(cc) => cc.total,
        Err(e) => {
            warnings.push(format!("courier count: {e}"));
            f64::NAN
        }
    };
    let air: BTreeMap<AirRoute, f64> = solution
        .air
        .iter()
        .map(|a| ((a.route[0], a.route[1], a.route[2], a.route[3]), a.realized))
        .collect();
    let returns: BTreeMap<(NodeId, NodeId), f64> =
        solution.returns.iter().map(|r| ((r.kiosk, r.launchpad), r.flow)).collect();
    let cap = p.queue.capacity;
    let mut launchpads = Vec::new();
    let mut idle_drones = BTreeMap::new();
    for s in &solution.launchpads {
        let throughput: f64 = solution.air.iter().filter(|a| a.route[1] == s.node).map(|a| a.realized).sum();
        let metrics = if s.built && s.gamma > 0.0 {
            droneq::queue_metrics(s.gamma, cap)
                .map(|m| m.with_wait(throughput))
                .unwrap_or_else(|_| LaunchpadQueueMetrics::inactive(cap))
        } else {
            LaunchpadQueueMetrics::inactive(cap)
        };
        idle_drones.insert(s.node, metrics.n_drones);
        launchpads.push((s.node, metrics));
    }
    let air_time = |a: NodeId, b: NodeId| scenario.air_time(a, b).unwrap_or(f64::NAN);
    let drones = match fleet::drone_count(&air, &returns, air_time, &idle_drones) {
        Ok(d) => d,
        Err(e) => {
            // Conservation holds only to solver tolerance.
            log::debug!("drone count: {e}");
            idle_drones.values().sum::<f64>()
                + air.iter().map(|(r, f)| f * air_time(r.1, r.2)).sum::<f64>()
                + returns.iter().map(|(r, f)| f * air_time(r.0, r.1)).sum::<f64>()
        }
    };

    // Objective pieces shared by both recomputations.
    let infrastructure: f64 = solution.launchpads_built.iter().map(|&l| c.launchpad.get(l)).sum::<f64>()
        + solution.kiosks_built.iter().map(|&k| c.kiosk.get(k)).sum::<f64>();
    let idle_total: f64 = solution.idle.values().sum();
    let repositioning: f64 = repo.iter().map(|((a, b), q)| q * scenario.reposition_time(a, b)).sum();
    let waiting: f64 = launchpads.iter().map(|(_, m)| m.n_orders).sum();
    let flying: f64 = solution.air.iter().map(|a| a.realized * a.flight_time).sum();
    let total = scenario.total_demand();
    let time_cost = |theta1: f64| {
        if total > 0.0 {
            c.alpha_w * (waiting + flying + theta1) / total
        } else {
            0.0
        }
    };

    let sur1: f64 = solution.ground.iter().map(|g| g.theta[0]).sum();
    let sur2: f64 = solution.ground.iter().map(|g| g.theta[1]).sum();
    let accounting_costs = CostBreakdown {
        infrastructure,
        courier_wages: c.courier_wage * (idle_total + sur1 - sur2 + repositioning),
        drone_cost: c.drone * drones,
        time_penalty: time_cost(sur1),
    };
    let ex1: f64 = ods.iter().map(|o| o.exact[0]).sum();
    let exact_costs = CostBreakdown {
        infrastructure,
        courier_wages: c.courier_wage * couriers_exact,
        drone_cost: c.drone * drones,
        time_penalty: time_cost(ex1),
    };
    let avg_delivery_time = if total > 0.0 {
        (waiting + flying + ex1) / total
    } else {
        0.0
    };
    let ground_total: f64 = ods.iter().map(|o| o.flow).sum();
    let avg_bundling_prob = if ground_total > 0.0 {
        ods.iter().filter(|o| o.flow > 0.0).map(|o| o.flow * o.p_s).sum::<f64>() / ground_total
    } else {
        0.0
    };
    PostCheckReport {
        ods,
        max_rel_error,
        accounting_objective: accounting_costs.total(),
        accounting_costs,
        exact_objective: exact_costs.total(),
        exact_costs,
        couriers_exact,
        drones,
        launchpads,
        avg_delivery_time,
        avg_bundling_prob,
        warnings,
    }
}
