//! Courier and drone fleet accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bundling::BundlingEquilibrium;
use crate::scenario::{NodeId, OdPair, ZoneId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FleetError {
    #[error("OD {0:?} has flow but no equilibrium")]
    MissingEquilibrium(OdPair),
    #[error("OD {od:?} equilibrium was evaluated at flow {eq_flow}, not {flow}")]
    FlowMismatch { od: OdPair, flow: f64, eq_flow: f64 },
    #[error("drone flow is not conserved at kiosk {kiosk}: {inflow} in, {outflow} out")]
    Conservation { kiosk: NodeId, inflow: f64, outflow: f64 },
    #[error("node {0} has no zone")]
    UnknownZone(NodeId),
}

/// Relative tolerance for flow pairing and conservation checks.
const FLOW_TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= FLOW_TOL * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourierCount {
    pub occupied: f64,
    pub repositioning: f64,
    pub total: f64,
}

/// Occupied, repositioning and total couriers.
///
/// Each OD's equilibrium must have been evaluated at exactly the OD's flow;
/// mixing flows would make the shared-time deduction inconsistent.
pub fn courier_count(
    flows: &BTreeMap<OdPair, f64>,
    equilibria: &BTreeMap<OdPair, BundlingEquilibrium>,
    idle: &BTreeMap<ZoneId, f64>,
    repo: &BTreeMap<(ZoneId, ZoneId), f64>,
    repo_time: impl Fn(&str, &str) -> f64,
) -> Result<CourierCount, FleetError> {
    let mut occupied = 0.0;
    for (&od, &flow) in flows {
        let Some(eq) = equilibria.get(&od) else {
            if flow == 0.0 {
                continue;
            }
            return Err(FleetError::MissingEquilibrium(od));
        };
        if !close(eq.lambda_all, flow) {
            return Err(FleetError::FlowMismatch {
                od,
                flow,
                eq_flow: eq.lambda_all,
            });
        }
        occupied += flow * eq.w_g - (0.5 * flow * eq.t_s1 + 2.0 / 3.0 * flow * eq.t_s2);
    }
    let repositioning: f64 = repo.iter().map(|((a, b), q)| q * repo_time(a, b)).sum();
    let total = idle.values().sum::<f64>() + occupied + repositioning;
    Ok(CourierCount {
        occupied,
        repositioning,
        total,
    })
}

/// Per-zone courier imbalance: outgoing repositioning plus ground flow
/// originating in the zone, minus incoming repositioning and ground flow
/// ending in the zone.
pub fn reposition_residuals(
    flows: &BTreeMap<OdPair, f64>,
    repo: &BTreeMap<(ZoneId, ZoneId), f64>,
    zone_of: impl Fn(NodeId) -> Option<ZoneId>,
) -> Result<BTreeMap<ZoneId, f64>, FleetError> {
    let mut out: BTreeMap<ZoneId, f64> = BTreeMap::new();
    for (&(i, j), &f) in flows {
        let zi = zone_of(i).ok_or(FleetError::UnknownZone(i))?;
        let zj = zone_of(j).ok_or(FleetError::UnknownZone(j))?;
        *out.entry(zi).or_default() += f;
        *out.entry(zj).or_default() -= f;
    }
    for ((a, b), &q) in repo {
        *out.entry(a.clone()).or_default() += q;
        *out.entry(b.clone()).or_default() -= q;
    }
    Ok(out)
}

/// Air route `(restaurant, launchpad, kiosk, customer)`.
pub type AirRoute = (NodeId, NodeId, NodeId, NodeId);

/// Idle drones plus drones in flight to kiosks and back to launchpads.
pub fn drone_count(
    air_flows: &BTreeMap<AirRoute, f64>,
    returns: &BTreeMap<(NodeId, NodeId), f64>,
    air_time: impl Fn(NodeId, NodeId) -> f64,
    idle_drones: &BTreeMap<NodeId, f64>,
) -> Result<f64, FleetError> {
    let mut inflow: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut outflow: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut delivering = 0.0;
    for (&(_, l, k, _), &f) in air_flows {
        *inflow.entry(k).or_default() += f;
        delivering += f * air_time(l, k);
    }
    let mut returning = 0.0;
    for (&(k, l), &f) in returns {
        *outflow.entry(k).or_default() += f;
        returning += f * air_time(k, l);
    }
    for k in inflow.keys().chain(outflow.keys()) {
        let a = inflow.get(k).copied().unwrap_or(0.0);
        let b = outflow.get(k).copied().unwrap_or(0.0);
        if !close(a, b) {
            return Err(FleetError::Conservation {
                kiosk: *k,
                inflow: a,
                outflow: b,
            });
        }
    }
    Ok(idle_drones.values().sum::<f64>() + delivering + returning)
}

/// Fleet composition of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetAccount {
    pub idle: BTreeMap<ZoneId, f64>,
    pub occupied: f64,
    pub repositioning: f64,
    pub total_couriers: f64,
    pub drones: f64,
    pub reposition_flows: BTreeMap<(ZoneId, ZoneId), f64>,
    pub drone_returns: BTreeMap<(NodeId, NodeId), f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn eq_at(lambda: f64, w_g: f64, t_s1: f64, t_s2: f64) -> BundlingEquilibrium {
        let ctx = crate::bundling::ODGroundContext {
            lambda_all: lambda,
            idle_count: 1.0,
            pickup_scale: 1.0,
            gap_origin: 1.0,
            gap_dest: 1.0,
            trip_time: 1.0,
        };
        let mut e = crate::bundling::equilibrium(&ctx).unwrap();
        e.w_g = w_g;
        e.t_s1 = t_s1;
        e.t_s2 = t_s2;
        e
    }

    fn one_od(lambda: f64, eq: BundlingEquilibrium) -> (BTreeMap<OdPair, f64>, BTreeMap<OdPair, BundlingEquilibrium>) {
        (
            BTreeMap::from([((1, 2), lambda)]),
            BTreeMap::from([((1, 2), eq)]),
        )
    }

    #[test]
    fn littles_law_count() {
        let (f, e) = one_od(1.0, eq_at(1.0, 10.0, 0.0, 0.0));
        let c = courier_count(&f, &e, &BTreeMap::new(), &BTreeMap::new(), |_, _| 0.0).unwrap();
        assert_abs_diff_eq!(c.total, 10.0);
        let (f, e) = one_od(1.0, eq_at(1.0, 10.0, 2.0, 0.0));
        let c = courier_count(&f, &e, &BTreeMap::new(), &BTreeMap::new(), |_, _| 0.0).unwrap();
        assert_abs_diff_eq!(c.total, 9.0);
    }

    #[test]
    fn totals_include_idle_and_repositioning() {
        let (f, e) = one_od(1.0, eq_at(1.0, 10.0, 0.0, 3.0));
        let idle = BTreeMap::from([("A".to_string(), 2.0), ("B".to_string(), 1.5)]);
        let repo = BTreeMap::from([(("B".to_string(), "A".to_string()), 0.5)]);
        let c = courier_count(&f, &e, &idle, &repo, |_, _| 4.0).unwrap();
        assert_abs_diff_eq!(c.occupied, 8.0);
        assert_abs_diff_eq!(c.repositioning, 2.0);
        assert_abs_diff_eq!(c.total, 3.5 + 8.0 + 2.0);
    }

    #[test]
    fn unpaired_flow_is_rejected() {
        let f = BTreeMap::from([((1, 2), 1.0)]);
        let e = BTreeMap::new();
        assert_eq!(
            courier_count(&f, &e, &BTreeMap::new(), &BTreeMap::new(), |_, _| 0.0),
            Err(FleetError::MissingEquilibrium((1, 2)))
        );
        let (f, e) = one_od(0.7, eq_at(0.5, 10.0, 0.0, 0.0));
        assert!(matches!(
            courier_count(&f, &e, &BTreeMap::new(), &BTreeMap::new(), |_, _| 0.0),
            Err(FleetError::FlowMismatch { .. })
        ));
    }

    #[test]
    fn residual_bookkeeping() {
        let zone = |n: NodeId| Some(if n <= 2 { "A" } else { "B" }.to_string());
        let sym = BTreeMap::from([((1, 3), 0.4), ((3, 1), 0.4), ((1, 2), 0.3)]);
        let r = reposition_residuals(&sym, &BTreeMap::new(), zone).unwrap();
        assert!(r.values().all(|v| v.abs() < 1e-15));

        let one = BTreeMap::from([((1, 3), 0.4)]);
        let r = reposition_residuals(&one, &BTreeMap::new(), zone).unwrap();
        assert_abs_diff_eq!(r["A"], 0.4);
        assert_abs_diff_eq!(r["B"], -0.4);

        let repo = BTreeMap::from([(("B".to_string(), "A".to_string()), 0.4)]);
        let r = reposition_residuals(&one, &repo, zone).unwrap();
        assert!(r.values().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn drone_count_arithmetic() {
        let air = BTreeMap::from([((1, 2, 3, 4), 0.5)]);
        let ret = BTreeMap::from([((3, 2), 0.5)]);
        let idle = BTreeMap::from([(2, 0.125)]);
        let n = drone_count(&air, &ret, |_, _| 4.0, &idle).unwrap();
        assert_abs_diff_eq!(n, 4.125);
        let n = drone_count(&BTreeMap::new(), &BTreeMap::new(), |_, _| 4.0, &BTreeMap::new()).unwrap();
        assert_eq!(n, 0.0);
    }

    #[test]
    fn kiosk_imbalance_is_named() {
        let air = BTreeMap::from([((1, 2, 3, 4), 0.5)]);
        let ret = BTreeMap::from([((3, 2), 0.2)]);
        assert!(matches!(
            drone_count(&air, &ret, |_, _| 1.0, &BTreeMap::new()),
            Err(FleetError::Conservation { kiosk: 3, .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn coords(n: NodeId) -> (f64, f64) {
            ((n as f64 * 37.0) % 11.0, (n as f64 * 13.0) % 7.0)
        }

        fn air_time(a: NodeId, b: NodeId) -> f64 {
            let (pa, pb) = (coords(a), coords(b));
            (pa.0 - pb.0).hypot(pa.1 - pb.1)
        }

        /// Random route flows with returns sent back to the route's launchpad.
        fn flows() -> impl Strategy<Value = (BTreeMap<AirRoute, f64>, BTreeMap<(NodeId, NodeId), f64>, BTreeMap<NodeId, f64>)> {
            proptest::collection::vec((0u32..3, 10u32..13, 20u32..24, 30u32..33, 0.0f64..2.0), 0..12)
                .prop_flat_map(|routes| {
                    let mut air = BTreeMap::new();
                    for (i, l, k, j, f) in routes {
                        *air.entry((i, l, k, j)).or_insert(0.0) += f;
                    }
                    let mut ret = BTreeMap::new();
                    for (&(_, l, k, _), &f) in &air {
                        *ret.entry((k, l)).or_insert(0.0) += f;
                    }
                    let idle = proptest::collection::btree_map(10u32..13, 0.0f64..3.0, 0..3);
                    (Just(air), Just(ret), idle)
                })
        }

        proptest! {
            #[test]
            fn matches_per_leg_littles_law((air, ret, idle) in flows()) {
                let n = drone_count(&air, &ret, air_time, &idle).unwrap();
                // Each unit of route flow keeps one drone busy for the outbound
                // and return legs of its own launchpad-kiosk pair.
                let oracle: f64 = idle.values().sum::<f64>()
                    + air.iter().map(|(&(_, l, k, _), f)| f * (air_time(l, k) + air_time(k, l))).sum::<f64>();
                prop_assert!((n - oracle).abs() <= 1e-9 * oracle.max(1.0));
                prop_assert!(n >= 0.0);
            }

            #[test]
            fn additive_over_disjoint_routes((a1, r1, _) in flows(), (a2, r2, _) in flows()) {
                // Shift the second set onto disjoint node ids.
                let a2: BTreeMap<AirRoute, f64> = a2.into_iter().map(|((i, l, k, j), f)| ((i + 100, l + 100, k + 100, j + 100), f)).collect();
                let r2: BTreeMap<(NodeId, NodeId), f64> = r2.into_iter().map(|((k, l), f)| ((k + 100, l + 100), f)).collect();
                let none = BTreeMap::new();
                let n1 = drone_count(&a1, &r1, air_time, &none).unwrap();
                let n2 = drone_count(&a2, &r2, air_time, &none).unwrap();
                let mut a = a1.clone();
                a.extend(a2);
                let mut r = r1.clone();
                r.extend(r2);
                let n = drone_count(&a, &r, air_time, &none).unwrap();
                prop_assert!((n - n1 - n2).abs() <= 1e-9 * n.max(1.0));
            }

            #[test]
            fn courier_count_is_additive_in_split_flow(lambda in 0.01f64..5.0, share in 0.0f64..1.0, w in 1.0f64..30.0, s1 in 0.0f64..5.0, s2 in 0.0f64..5.0) {
                // Same per-order times, flow split across two identical ODs.
                let whole = one_od(lambda, eq_at(lambda, w, s1, s2));
                let a = lambda * share;
                let b = lambda - a;
                let flows = BTreeMap::from([((1, 2), a), ((1, 3), b)]);
                let eqs = BTreeMap::from([((1, 2), eq_at(a, w, s1, s2)), ((1, 3), eq_at(b, w, s1, s2))]);
                let none = BTreeMap::new();
                let n_whole = courier_count(&whole.0, &whole.1, &none, &BTreeMap::new(), |_, _| 0.0).unwrap();
                let n_split = courier_count(&flows, &eqs, &none, &BTreeMap::new(), |_, _| 0.0).unwrap();
                prop_assert!((n_whole.total - n_split.total).abs() <= 1e-12 * n_whole.total.max(1.0));
            }
        }
    }
}
