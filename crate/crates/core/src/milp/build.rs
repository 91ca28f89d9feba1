//! Planning model construction.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::model::{MilpModel, Sense, VarId, VarKind};
use super::MilpError;
use crate::droneq;
use crate::fleet::AirRoute;
use crate::scenario::{GroundLeg, NetworkScenario, NodeId, OdPair, ZoneId};
use crate::surrogate::{InputBox, SurrogateModel, TrainTask};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildOptions {
    /// Extra cap on idle couriers per zone, added as a row so that an
    /// impossible cap shows up as an infeasible model.
    pub idle_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteVars {
    pub route: AirRoute,
    /// Intended allocation.
    pub lhat: VarId,
    /// Realized flow after launchpad blocking.
    pub la: VarId,
    pub flight_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaunchpadVars {
    pub node: NodeId,
    pub y: VarId,
    pub nu_o: VarId,
    pub nu_d: VarId,
    /// One indicator per reliability level.
    pub omega: Vec<VarId>,
    pub n_drones: VarId,
    pub n_orders: VarId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnVars {
    pub kiosk: NodeId,
    pub launchpad: NodeId,
    pub var: VarId,
    pub flight_time: f64,
}

/// Variables of one embedded hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluBlock {
    pub h: Vec<VarId>,
    pub h_check: Vec<VarId>,
    pub kappa: Vec<VarId>,
    /// Per-neuron bounds on the positive and negative parts.
    pub m_plus: Vec<f64>,
    pub m_minus: Vec<f64>,
}

/// A ground OD pair whose overall flow can be positive.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundKey {
    pub od: OdPair,
    pub legs: Vec<GroundLeg>,
    pub lgall: VarId,
    pub upper: f64,
    pub origin_zone: ZoneId,
    pub theta: [VarId; 2],
    pub relu: ReluBlock,
}

/// Objective split into the reported cost components.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectiveParts {
    pub infrastructure: Vec<(VarId, f64)>,
    pub courier_wages: Vec<(VarId, f64)>,
    pub drone_cost: Vec<(VarId, f64)>,
    pub time_penalty: Vec<(VarId, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigM {
    pub launchpad: f64,
    pub kiosk: f64,
    pub gamma: f64,
}

/// Maps model columns back to planning quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanLayout {
    pub launchpads: Vec<LaunchpadVars>,
    pub kiosks: BTreeMap<NodeId, VarId>,
    pub routes: Vec<RouteVars>,
    /// Demand served directly by couriers.
    pub ground: BTreeMap<OdPair, VarId>,
    pub keys: Vec<GroundKey>,
    pub returns: Vec<ReturnVars>,
    pub reposition: BTreeMap<(ZoneId, ZoneId), VarId>,
    pub idle: BTreeMap<ZoneId, VarId>,
    pub n_drones: VarId,
    pub n_couriers: VarId,
    pub parts: ObjectiveParts,
    pub gamma_grid: Vec<f64>,
    pub capacity: u32,
    pub total_demand: f64,
    pub big_m: BigM,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanModel {
    pub model: MilpModel,
    pub layout: PlanLayout,
}

/// Air routes that survive the delivery battery limit, in a stable order.
/// Routes whose launchpad coincides with the restaurant or kiosk, or whose
/// kiosk coincides with the customer, are omitted.
pub fn air_routes(scenario: &NetworkScenario) -> Result<Vec<(AirRoute, f64)>, MilpError> {
    let limit = scenario.params().battery.max_delivery_time;
    let mut out = Vec::new();
    for ((i, j), rate) in scenario.demand() {
        if rate <= 0.0 {
            continue;
        }
        for &l in scenario.launchpads() {
            for &k in scenario.kiosks() {
                if l == i || l == k || k == j {
                    continue;
                }
                let t = scenario.air_time(l, k)?;
                if t <= limit {
                    out.push(((i, l, k, j), t));
                }
            }
        }
    }
    Ok(out)
}

/// Upper bound of the overall ground flow of every ground OD pair that can
/// carry flow, with the roles it plays.
pub fn ground_flow_bounds(scenario: &NetworkScenario) -> Result<BTreeMap<OdPair, (f64, Vec<GroundLeg>)>, MilpError> {
    let demand: BTreeMap<OdPair, f64> = scenario.demand().into_iter().collect();
    let routes = air_routes(scenario)?;
    let mut first: BTreeMap<OdPair, BTreeSet<OdPair>> = BTreeMap::new();
    let mut last: BTreeMap<OdPair, BTreeSet<OdPair>> = BTreeMap::new();
    for &((i, l, k, j), _) in &routes {
        first.entry((i, l)).or_default().insert((i, j));
        last.entry((k, j)).or_default().insert((i, j));
    }
    let mut out: BTreeMap<OdPair, (f64, Vec<GroundLeg>)> = BTreeMap::new();
    for (od, _) in scenario.ground_od_pairs() {
        let mut ub = 0.0;
        let mut legs = Vec::new();
        if let Some(&r) = demand.get(&od) {
            if r > 0.0 {
                ub += r;
                legs.push(GroundLeg::Direct);
            }
        }
        // Each demand pair sends at most its rate through any one leg.
        if let Some(ods) = first.get(&od) {
            ub += ods.iter().map(|p| demand[p]).sum::<f64>();
            legs.push(GroundLeg::FirstMile);
        }
        if let Some(ods) = last.get(&od) {
            ub += ods.iter().map(|p| demand[p]).sum::<f64>();
            legs.push(GroundLeg::LastMile);
        }
        if !legs.is_empty() {
            out.insert(od, (ub, legs));
        }
    }
    Ok(out)
}

/// Zones that originate at least one ground OD pair able to carry flow.
fn feeding_zones(
    scenario: &NetworkScenario,
    bounds: &BTreeMap<OdPair, (f64, Vec<GroundLeg>)>,
) -> Result<BTreeSet<ZoneId>, MilpError> {
    bounds
        .keys()
        .map(|&(i, _)| Ok(scenario.zone_of(i)?.clone()))
        .collect()
}

/// Idle-courier range of a zone. Zones feeding no surrogate may hold none.
fn idle_range(scenario: &NetworkScenario, feeding: &BTreeSet<ZoneId>, zone: &ZoneId) -> [f64; 2] {
    let p = &scenario.params().idle;
    if feeding.contains(zone) {
        [p.min, p.max]
    } else {
        [0.0, p.max]
    }
}

/// Surrogate input box each ground OD pair must be trained on.
pub fn required_boxes(scenario: &NetworkScenario) -> Result<BTreeMap<OdPair, InputBox>, MilpError> {
    let idle = &scenario.params().idle;
    Ok(ground_flow_bounds(scenario)?
        .into_iter()
        .map(|(od, (ub, _))| {
            (
                od,
                InputBox {
                    lambda: [0.0, ub],
                    idle: [idle.min, idle.max],
                },
            )
        })
        .collect())
}

/// Training tasks for every required box, with the flow axis stretched by
/// `lambda_scale` so that one model set covers scaled-demand variants.
pub fn training_tasks(scenario: &NetworkScenario, lambda_scale: f64) -> Result<Vec<TrainTask>, MilpError> {
    required_boxes(scenario)?
        .into_iter()
        .map(|(od, b)| {
            Ok(TrainTask {
                od,
                template: scenario.ground_context(od.0, od.1)?,
                input_box: InputBox {
                    lambda: [b.lambda[0], b.lambda[1] * lambda_scale],
                    idle: b.idle,
                },
            })
        })
        .collect()
}

fn interval(w: f64, lo: f64, hi: f64) -> (f64, f64) {
    let (a, b) = (w * lo, w * hi);
    (a.min(b), a.max(b))
}

/// Embeds the surrogate's hidden layer with per-neuron big-M constants from
/// interval arithmetic over `domain`, the box the input variables can reach.
/// A domain smaller than the training box gives tighter constants. Inputs are
/// `(lambda_all, idle)` in raw units; outputs receive `(theta1, theta2)`.
pub fn embed_relu(
    model: &mut MilpModel,
    tag: &str,
    surrogate: &SurrogateModel,
    domain: &InputBox,
    inputs: [VarId; 2],
    outputs: [VarId; 2],
) -> Result<ReluBlock, MilpError> {
    let net = surrogate.folded().0;
    let bx = [domain.lambda, domain.idle];
    let mut block = ReluBlock {
        h: Vec::new(),
        h_check: Vec::new(),
        kappa: Vec::new(),
        m_plus: Vec::new(),
        m_minus: Vec::new(),
    };
    for (v, (w, &b)) in net.w0.iter().zip(&net.b0).enumerate() {
        let (mut lo, mut hi) = (b, b);
        for u in 0..2 {
            let (a, c) = interval(w[u], bx[u][0], bx[u][1]);
            lo += a;
            hi += c;
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(MilpError::UnboundedNeuron {
                od: surrogate.od,
                neuron: v,
            });
        }
        let (mp, mm) = (hi.max(0.0), (-lo).max(0.0));
        let h = model.add_var(format!("h_{tag}_{v}"), VarKind::Continuous, 0.0, mp);
        let hc = model.add_var(format!("hc_{tag}_{v}"), VarKind::Continuous, 0.0, mm);
        let k = model.add_var(format!("kap_{tag}_{v}"), VarKind::Binary, 0.0, 1.0);
        // w.x + b = h - hc
        model.add_constraint(
            format!("aff_{tag}_{v}"),
            vec![(inputs[0], w[0]), (inputs[1], w[1]), (h, -1.0), (hc, 1.0)],
            Sense::Eq,
            -b,
        );
        // h <= M+ (1 - kappa)
        model.add_constraint(format!("hon_{tag}_{v}"), vec![(h, 1.0), (k, mp)], Sense::Le, mp);
        // hc <= M- kappa
        model.add_constraint(format!("hoff_{tag}_{v}"), vec![(hc, 1.0), (k, -mm)], Sense::Le, 0.0);
        block.h.push(h);
        block.h_check.push(hc);
        block.kappa.push(k);
        block.m_plus.push(mp);
        block.m_minus.push(mm);
    }
    for o in 0..2 {
        let mut terms: Vec<(VarId, f64)> = block.h.iter().zip(&net.w1[o]).map(|(&h, &w)| (h, -w)).collect();
        terms.push((outputs[o], 1.0));
        model.add_constraint(format!("out_{tag}_{o}"), terms, Sense::Eq, net.b1[o]);
    }
    Ok(block)
}

fn key_tag((i, j): OdPair) -> String {
    format!("{i}_{j}")
}

/// Assembles the planning MILP.
pub fn build_model(
    scenario: &NetworkScenario,
    surrogates: &BTreeMap<OdPair, SurrogateModel>,
    options: &BuildOptions,
) -> Result<PlanModel, MilpError> {
    let p = scenario.params();
    let total = scenario.total_demand();
    let demand: Vec<(OdPair, f64)> = scenario.demand();
    let routes = air_routes(scenario)?;
    let bounds = ground_flow_bounds(scenario)?;
    let feeding = feeding_zones(scenario, &bounds)?;
    let big_m = BigM {
        launchpad: total,
        kiosk: total,
        gamma: total,
    };
    let grid = p.queue.gamma_grid.clone();
    let cap = p.queue.capacity;

    // Surrogate coverage is checked before any variable is created.
    for (&od, &(ub, _)) in &bounds {
        let s = surrogates.get(&od).ok_or(MilpError::MissingSurrogate(od))?;
        let zone = scenario.zone_of(od.0)?;
        let need = InputBox {
            lambda: [0.0, ub],
            idle: idle_range(scenario, &feeding, zone),
        };
        if !s.input_box.covers(&need) {
            return Err(MilpError::InfeasibleBox {
                od,
                have: s.input_box,
                need,
            });
        }
    }

    let mut m = MilpModel::new();

    // Sites.
    let mut launchpads = Vec::new();
    for &l in scenario.launchpads() {
        let y = m.add_var(format!("y_{l}"), VarKind::Binary, 0.0, 1.0);
        launchpads.push((l, y));
    }
    let kiosks: BTreeMap<NodeId, VarId> = scenario
        .kiosks()
        .iter()
        .map(|&k| (k, m.add_var(format!("z_{k}"), VarKind::Binary, 0.0, 1.0)))
        .collect();

    // Demand allocation.
    let rate: BTreeMap<OdPair, f64> = demand.iter().copied().collect();
    let route_vars: Vec<RouteVars> = routes
        .iter()
        .map(|&(r, t)| {
            let ub = rate[&(r.0, r.3)];
            let tag = format!("{}_{}_{}_{}", r.0, r.1, r.2, r.3);
            RouteVars {
                route: r,
                lhat: m.add_var(format!("lhat_{tag}"), VarKind::Continuous, 0.0, ub),
                la: m.add_var(format!("la_{tag}"), VarKind::Continuous, 0.0, ub),
                flight_time: t,
            }
        })
        .collect();
    let mut ground = BTreeMap::new();
    for &((i, j), r) in &demand {
        let lg = m.add_var(format!("lg_{i}_{j}"), VarKind::Continuous, 0.0, r);
        ground.insert((i, j), lg);
        let mut terms = vec![(lg, 1.0)];
        let mut hat = Vec::new();
        for rv in route_vars.iter().filter(|rv| (rv.route.0, rv.route.3) == (i, j)) {
            terms.push((rv.la, 1.0));
            hat.push((rv.lhat, 1.0));
        }
        m.add_constraint(format!("dem_{i}_{j}"), terms, Sense::Eq, r);
        if !hat.is_empty() {
            m.add_constraint(format!("hatcap_{i}_{j}"), hat, Sense::Le, r);
        }
    }
    for &(l, y) in &launchpads {
        let mut terms: Vec<(VarId, f64)> = route_vars
            .iter()
            .filter(|rv| rv.route.1 == l)
            .map(|rv| (rv.lhat, 1.0))
            .collect();
        terms.push((y, -big_m.launchpad));
        m.add_constraint(format!("capl_{l}"), terms, Sense::Le, 0.0);
    }
    for (&k, &z) in &kiosks {
        let mut terms: Vec<(VarId, f64)> = route_vars
            .iter()
            .filter(|rv| rv.route.2 == k)
            .map(|rv| (rv.lhat, 1.0))
            .collect();
        terms.push((z, -big_m.kiosk));
        m.add_constraint(format!("capk_{k}"), terms, Sense::Le, 0.0);
    }

    // Drone returns within the return battery limit.
    let mut returns = Vec::new();
    for &k in scenario.kiosks() {
        for &l in scenario.launchpads() {
            if k == l {
                continue;
            }
            let t = scenario.air_time(k, l)?;
            if t <= p.battery.max_return_time {
                let var = m.add_var(format!("ltil_{k}_{l}"), VarKind::Continuous, 0.0, total);
                returns.push(ReturnVars {
                    kiosk: k,
                    launchpad: l,
                    var,
                    flight_time: t,
                });
            }
        }
    }
    for &k in scenario.kiosks() {
        let mut terms: Vec<(VarId, f64)> = route_vars
            .iter()
            .filter(|rv| rv.route.2 == k)
            .map(|rv| (rv.la, 1.0))
            .collect();
        terms.extend(returns.iter().filter(|r| r.kiosk == k).map(|r| (r.var, -1.0)));
        m.add_constraint(format!("consk_{k}"), terms, Sense::Eq, 0.0);
    }

    // Launchpad queues.
    let level_drones: Vec<f64> = grid.iter().map(|&g| droneq::mean_drones(g, cap)).collect();
    // A launchpad at the closed level holds no orders.
    let level_orders: Vec<f64> = grid
        .iter()
        .map(|&g| if g == 0.0 { 0.0 } else { droneq::mean_orders(g, cap) })
        .collect();
    let max_nd = level_drones.iter().copied().fold(0.0, f64::max);
    let max_no = level_orders.iter().copied().fold(0.0, f64::max);
    let mut lp_vars = Vec::new();
    for &(l, y) in &launchpads {
        let nu_o = m.add_var(format!("nuo_{l}"), VarKind::Continuous, 0.0, total);
        let nu_d = m.add_var(format!("nud_{l}"), VarKind::Continuous, 0.0, total);
        let omega: Vec<VarId> = (0..grid.len())
            .map(|r| m.add_var(format!("omega_{l}_{r}"), VarKind::Binary, 0.0, 1.0))
            .collect();
        let nd = m.add_var(format!("nd_{l}"), VarKind::Continuous, 0.0, max_nd);
        let no = m.add_var(format!("no_{l}"), VarKind::Continuous, 0.0, max_no);
        let at_l: Vec<&RouteVars> = route_vars.iter().filter(|rv| rv.route.1 == l).collect();
        let back: Vec<VarId> = returns.iter().filter(|r| r.launchpad == l).map(|r| r.var).collect();

        let mut t: Vec<(VarId, f64)> = back.iter().map(|&v| (v, 1.0)).collect();
        t.extend(at_l.iter().map(|rv| (rv.la, -1.0)));
        m.add_constraint(format!("consl_{l}"), t, Sense::Eq, 0.0);
        let mut t: Vec<(VarId, f64)> = back.iter().map(|&v| (v, 1.0)).collect();
        t.push((nu_d, -1.0));
        m.add_constraint(format!("nud_{l}"), t, Sense::Eq, 0.0);
        let mut t: Vec<(VarId, f64)> = at_l.iter().map(|rv| (rv.lhat, 1.0)).collect();
        t.push((nu_o, -1.0));
        m.add_constraint(format!("nuo_{l}"), t, Sense::Eq, 0.0);

        // Exactly one level at an open launchpad, none at a closed one.
        let mut t: Vec<(VarId, f64)> = omega.iter().map(|&w| (w, 1.0)).collect();
        t.push((y, -1.0));
        m.add_constraint(format!("omega_{l}"), t, Sense::Eq, 0.0);
        for (r, &g) in grid.iter().enumerate() {
            for rv in &at_l {
                let tag = format!("{}_{}_{}_{}_{r}", rv.route.0, rv.route.1, rv.route.2, rv.route.3);
                // la >= g lhat - (1 - omega) M
                m.add_constraint(
                    format!("thlo_{tag}"),
                    vec![(rv.la, 1.0), (rv.lhat, -g), (omega[r], -big_m.gamma)],
                    Sense::Ge,
                    -big_m.gamma,
                );
                // la <= g lhat + (1 - omega) M
                m.add_constraint(
                    format!("thhi_{tag}"),
                    vec![(rv.la, 1.0), (rv.lhat, -g), (omega[r], big_m.gamma)],
                    Sense::Le,
                    big_m.gamma,
                );
            }
        }
        for rv in &at_l {
            let (i, l, k, j) = rv.route;
            m.add_constraint(
                format!("thin_{i}_{l}_{k}_{j}"),
                vec![(rv.la, 1.0), (rv.lhat, -1.0)],
                Sense::Le,
                0.0,
            );
        }
        let mut t: Vec<(VarId, f64)> = omega.iter().zip(&level_drones).map(|(&w, &c)| (w, -c)).collect();
        t.push((nd, 1.0));
        m.add_constraint(format!("nd_{l}"), t, Sense::Eq, 0.0);
        let mut t: Vec<(VarId, f64)> = omega.iter().zip(&level_orders).map(|(&w, &c)| (w, -c)).collect();
        t.push((no, 1.0));
        m.add_constraint(format!("no_{l}"), t, Sense::Eq, 0.0);
        lp_vars.push(LaunchpadVars {
            node: l,
            y,
            nu_o,
            nu_d,
            omega,
            n_drones: nd,
            n_orders: no,
        });
    }

    // Overall ground flows.
    let zones: Vec<ZoneId> = scenario.zones().to_vec();
    let mut idle = BTreeMap::new();
    for (zi, z) in zones.iter().enumerate() {
        let [lo, hi] = idle_range(scenario, &feeding, z);
        let v = m.add_var(format!("ni_{zi}"), VarKind::Continuous, lo, hi);
        if let Some(c) = options.idle_cap {
            m.add_constraint(format!("idlecap_{zi}"), vec![(v, 1.0)], Sense::Le, c);
        }
        idle.insert(z.clone(), v);
    }
    let mut keys = Vec::new();
    for (&od, (ub, legs)) in &bounds {
        let tag = key_tag(od);
        let lgall = m.add_var(format!("lgall_{tag}"), VarKind::Continuous, 0.0, *ub);
        let mut terms = vec![(lgall, -1.0)];
        for leg in legs {
            match leg {
                GroundLeg::Direct => terms.push((ground[&od], 1.0)),
                GroundLeg::FirstMile => terms.extend(
                    route_vars
                        .iter()
                        .filter(|rv| (rv.route.0, rv.route.1) == od)
                        .map(|rv| (rv.la, 1.0)),
                ),
                GroundLeg::LastMile => terms.extend(
                    route_vars
                        .iter()
                        .filter(|rv| (rv.route.2, rv.route.3) == od)
                        .map(|rv| (rv.la, 1.0)),
                ),
            }
        }
        m.add_constraint(format!("gall_{tag}"), terms, Sense::Eq, 0.0);
        let origin_zone = scenario.zone_of(od.0)?.clone();
        let th1 = m.add_var(format!("th1_{tag}"), VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY);
        let th2 = m.add_var(format!("th2_{tag}"), VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY);
        let domain = InputBox {
            lambda: [0.0, *ub],
            idle: idle_range(scenario, &feeding, &origin_zone),
        };
        let relu = embed_relu(&mut m, &tag, &surrogates[&od], &domain, [lgall, idle[&origin_zone]], [th1, th2])?;
        keys.push(GroundKey {
            od,
            legs: legs.clone(),
            lgall,
            upper: *ub,
            origin_zone,
            theta: [th1, th2],
            relu,
        });
    }

    // Courier repositioning between zones.
    let q_ub: f64 = keys.iter().map(|k| k.upper).sum();
    let mut reposition = BTreeMap::new();
    for (a, za) in zones.iter().enumerate() {
        for (b, zb) in zones.iter().enumerate() {
            if a != b {
                let v = m.add_var(format!("q_{a}_{b}"), VarKind::Continuous, 0.0, q_ub);
                reposition.insert((za.clone(), zb.clone()), v);
            }
        }
    }
    for (zi, z) in zones.iter().enumerate() {
        let mut t = Vec::new();
        for ((a, b), &v) in &reposition {
            if a == z {
                t.push((v, 1.0));
            }
            if b == z {
                t.push((v, -1.0));
            }
        }
        for key in &keys {
            let dz = scenario.zone_of(key.od.1)?;
            if &key.origin_zone == z {
                t.push((key.lgall, 1.0));
            }
            if dz == z {
                t.push((key.lgall, -1.0));
            }
        }
        m.add_constraint(format!("zone_{zi}"), t, Sense::Eq, 0.0);
    }

    // Fleet sizes.
    let na = m.add_var("na", VarKind::Continuous, 0.0, f64::INFINITY);
    let mut t: Vec<(VarId, f64)> = vec![(na, 1.0)];
    t.extend(lp_vars.iter().map(|lv| (lv.n_drones, -1.0)));
    t.extend(route_vars.iter().map(|rv| (rv.la, -rv.flight_time)));
    t.extend(returns.iter().map(|r| (r.var, -r.flight_time)));
    m.add_constraint("fleet_drones", t, Sense::Eq, 0.0);

    let n = m.add_var("n", VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY);
    let mut t: Vec<(VarId, f64)> = vec![(n, 1.0)];
    t.extend(idle.values().map(|&v| (v, -1.0)));
    for key in &keys {
        t.push((key.theta[0], -1.0));
        t.push((key.theta[1], 1.0));
    }
    for ((a, b), &v) in &reposition {
        t.push((v, -scenario.reposition_time(a, b)));
    }
    m.add_constraint("fleet_couriers", t, Sense::Eq, 0.0);

    // Objective.
    let c = &p.costs;
    let mut parts = ObjectiveParts::default();
    for lv in &lp_vars {
        parts.infrastructure.push((lv.y, c.launchpad.get(lv.node)));
    }
    for (&k, &z) in &kiosks {
        parts.infrastructure.push((z, c.kiosk.get(k)));
    }
    parts.courier_wages.push((n, c.courier_wage));
    parts.drone_cost.push((na, c.drone));
    if total > 0.0 {
        let a = c.alpha_w / total;
        parts.time_penalty.extend(lp_vars.iter().map(|lv| (lv.n_orders, a)));
        parts
            .time_penalty
            .extend(route_vars.iter().map(|rv| (rv.la, a * rv.flight_time)));
        parts.time_penalty.extend(keys.iter().map(|k| (k.theta[0], a)));
    }
    let objective: Vec<(VarId, f64)> = parts
        .infrastructure
        .iter()
        .chain(&parts.courier_wages)
        .chain(&parts.drone_cost)
        .chain(&parts.time_penalty)
        .copied()
        .collect();
    m.set_objective(objective);

    Ok(PlanModel {
        model: m,
        layout: PlanLayout {
            launchpads: lp_vars,
            kiosks,
            routes: route_vars,
            ground,
            keys,
            returns,
            reposition,
            idle,
            n_drones: na,
            n_couriers: n,
            parts,
            gamma_grid: grid,
            capacity: cap,
            total_demand: total,
            big_m,
        },
    })
}
