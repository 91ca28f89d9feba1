//! Network, demand and parameter ingestion.
//!
//! A scenario document is a JSON object. Loading validates every invariant and
//! precomputes all-pairs shortest ground distances, so downstream modules can
//! query travel times without error paths for reachable pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};

use crate::bundling::ODGroundContext;

pub type NodeId = u32;
pub type ZoneId = String;
/// Ordered (origin, destination) pair.
pub type OdPair = (NodeId, NodeId);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("nodes {0} and {1} are not connected")]
    Unreachable(NodeId, NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    /// Planar coordinates in meters.
    pub x: f64,
    pub y: f64,
    pub zone: ZoneId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub a: NodeId,
    pub b: NodeId,
    /// Meters.
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSets {
    pub restaurants: Vec<NodeId>,
    pub customers: Vec<NodeId>,
    pub launchpads: Vec<NodeId>,
    pub kiosks: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandRecord {
    pub i: NodeId,
    pub j: NodeId,
    /// Orders per minute.
    pub rate: f64,
}

/// A scenario-wide value with optional per-node overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerNode {
    pub default: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_node: BTreeMap<NodeId, f64>,
}

impl PerNode {
    pub fn uniform(value: f64) -> Self {
        PerNode {
            default: value,
            per_node: BTreeMap::new(),
        }
    }

    pub fn get(&self, node: NodeId) -> f64 {
        self.per_node.get(&node).copied().unwrap_or(self.default)
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.default).chain(self.per_node.values().copied())
    }
}

/// Money in $/min.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Costs {
    pub launchpad: PerNode,
    pub kiosk: PerNode,
    /// Per drone.
    pub drone: f64,
    /// Per courier.
    pub courier_wage: f64,
    /// Per minute of average delivery time.
    pub alpha_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueParams {
    pub capacity: u32,
    pub gamma_grid: Vec<f64>,
}

/// Maximum flight times in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub max_delivery_time: f64,
    pub max_return_time: f64,
}

/// Range of idle couriers per zone the optimizer may choose from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdleParams {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Meters per minute.
    pub courier_speed: f64,
    /// Meters per minute.
    pub drone_speed: f64,
    /// Minutes * sqrt(couriers).
    pub pickup_scale: PerNode,
    /// Minutes.
    pub intra_node_gap: PerNode,
    /// Minutes, keyed by origin zone then destination zone.
    pub reposition_time: BTreeMap<ZoneId, BTreeMap<ZoneId, f64>>,
    pub costs: Costs,
    pub queue: QueueParams,
    pub battery: BatteryParams,
    pub idle: IdleParams,
}

/// Serialized form of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDocument {
    pub nodes: Vec<NodeRecord>,
    pub links: Vec<LinkRecord>,
    pub zones: Vec<ZoneId>,
    pub sets: SiteSets,
    pub demand: Vec<DemandRecord>,
    pub params: Params,
}

/// How unknown document keys are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeyPolicy {
    #[default]
    Strict,
    Lenient,
}

/// Role of a ground OD pair in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundLeg {
    /// Restaurant to customer.
    Direct,
    /// Restaurant to launchpad.
    FirstMile,
    /// Kiosk to customer.
    LastMile,
}

/// Validated, immutable world description.
#[derive(Debug, Clone)]
pub struct NetworkScenario {
    doc: ScenarioDocument,
    index: HashMap<NodeId, usize>,
    /// Shortest ground distance in meters between node indices.
    dist: Vec<Vec<f64>>,
}

impl PartialEq for NetworkScenario {
    fn eq(&self, other: &Self) -> bool {
        self.doc == other.doc
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(source: &str, policy: KeyPolicy) -> Result<NetworkScenario, ScenarioError> {
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(source);
    let doc: ScenarioDocument = serde_ignored::deserialize(&mut de, |path| {
        unknown.push(path.to_string());
    })
    .map_err(|e| ScenarioError::Parse(e.to_string()))?;
    de.end().map_err(|e| ScenarioError::Parse(e.to_string()))?;
    if let Some(first) = unknown.first() {
        match policy {
            KeyPolicy::Strict => return Err(invalid(format!("unknown key `{first}`"))),
            KeyPolicy::Lenient => {
                for key in &unknown {
                    log::warn!("ignoring unknown scenario key `{key}`");
                }
            }
        }
    }
    NetworkScenario::from_document(doc)
}

pub fn load_scenario_file(
    path: &std::path::Path,
    policy: KeyPolicy,
) -> Result<NetworkScenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    load_scenario(&text, policy)
}

fn positive(name: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be nonnegative and finite, got {v}")))
    }
}

impl NetworkScenario {
    pub fn from_document(doc: ScenarioDocument) -> Result<Self, ScenarioError> {
        let index = validate_structure(&doc)?;
        validate_params(&doc)?;
        let dist = all_pairs(&doc, &index);
        let s = NetworkScenario { doc, index, dist };
        s.validate_connectivity()?;
        if !s.doc.demand.iter().any(|d| d.rate > 0.0) {
            return Err(invalid("no OD pair has positive demand"));
        }
        Ok(s)
    }

    pub fn document(&self) -> &ScenarioDocument {
        &self.doc
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("scenario documents always serialize")
    }

    pub fn params(&self) -> &Params {
        &self.doc.params
    }

    pub fn restaurants(&self) -> &[NodeId] {
        &self.doc.sets.restaurants
    }

    pub fn customers(&self) -> &[NodeId] {
        &self.doc.sets.customers
    }

    pub fn launchpads(&self) -> &[NodeId] {
        &self.doc.sets.launchpads
    }

    pub fn kiosks(&self) -> &[NodeId] {
        &self.doc.sets.kiosks
    }

    pub fn zones(&self) -> &[ZoneId] {
        &self.doc.zones
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeRecord, ScenarioError> {
        self.index
            .get(&id)
            .map(|&k| &self.doc.nodes[k])
            .ok_or(ScenarioError::UnknownNode(id))
    }

    pub fn zone_of(&self, id: NodeId) -> Result<&ZoneId, ScenarioError> {
        Ok(&self.node(id)?.zone)
    }

    /// Demand pairs in document order, including zero-rate pairs.
    pub fn demand(&self) -> Vec<(OdPair, f64)> {
        self.doc.demand.iter().map(|d| ((d.i, d.j), d.rate)).collect()
    }

    pub fn total_demand(&self) -> f64 {
        self.doc.demand.iter().map(|d| d.rate).sum()
    }

    /// Minimal path length over links divided by the courier speed.
    pub fn ground_time(&self, i: NodeId, j: NodeId) -> Result<f64, ScenarioError> {
        let a = *self.index.get(&i).ok_or(ScenarioError::UnknownNode(i))?;
        let b = *self.index.get(&j).ok_or(ScenarioError::UnknownNode(j))?;
        let d = self.dist[a][b];
        if d.is_finite() {
            Ok(d / self.doc.params.courier_speed)
        } else {
            Err(ScenarioError::Unreachable(i, j))
        }
    }

    /// Straight-line distance divided by the drone speed.
    pub fn air_time(&self, l: NodeId, k: NodeId) -> Result<f64, ScenarioError> {
        let a = self.node(l)?;
        let b = self.node(k)?;
        Ok((a.x - b.x).hypot(a.y - b.y) / self.doc.params.drone_speed)
    }

    pub fn pickup_scale(&self, node: NodeId) -> f64 {
        self.doc.params.pickup_scale.get(node)
    }

    pub fn intra_node_gap(&self, node: NodeId) -> f64 {
        self.doc.params.intra_node_gap.get(node)
    }

    /// Idle-courier repositioning time between distinct zones.
    pub fn reposition_time(&self, from: &str, to: &str) -> f64 {
        if from == to {
            return 0.0;
        }
        self.doc.params.reposition_time[from][to]
    }

    /// Every ground OD pair the courier network may serve, in a stable order:
    /// demand pairs, then restaurant-to-launchpad, then kiosk-to-customer.
    /// A pair reachable in several roles is listed once under its first role.
    pub fn ground_od_pairs(&self) -> Vec<(OdPair, GroundLeg)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let origins: BTreeSet<NodeId> = self.doc.demand.iter().map(|d| d.i).collect();
        let dests: BTreeSet<NodeId> = self.doc.demand.iter().map(|d| d.j).collect();
        for d in &self.doc.demand {
            if seen.insert((d.i, d.j)) {
                out.push(((d.i, d.j), GroundLeg::Direct));
            }
        }
        for &i in &origins {
            for &l in self.launchpads() {
                if i != l && seen.insert((i, l)) {
                    out.push(((i, l), GroundLeg::FirstMile));
                }
            }
        }
        for &k in self.kiosks() {
            for &j in &dests {
                if k != j && seen.insert((k, j)) {
                    out.push(((k, j), GroundLeg::LastMile));
                }
            }
        }
        out
    }

    /// Bundling context of a ground OD pair with zero flow and unit idle
    /// couriers; callers set both via [`ODGroundContext::with_flow`].
    pub fn ground_context(&self, i: NodeId, j: NodeId) -> Result<ODGroundContext, ScenarioError> {
        Ok(ODGroundContext {
            lambda_all: 0.0,
            idle_count: 1.0,
            pickup_scale: self.pickup_scale(i),
            gap_origin: self.intra_node_gap(i),
            gap_dest: self.intra_node_gap(j),
            trip_time: self.ground_time(i, j)?,
        })
    }

    /// Copy with every demand rate multiplied by `factor`. A zero factor is
    /// allowed and yields a scenario with no demand.
    pub fn scaled_demand(&self, factor: f64) -> Result<Self, ScenarioError> {
        nonnegative("demand scale", factor)?;
        let mut s = self.clone();
        for d in &mut s.doc.demand {
            d.rate *= factor;
        }
        Ok(s)
    }

    /// Copy with launchpad and kiosk costs multiplied by the given factors.
    pub fn scaled_site_costs(&self, launchpad: f64, kiosk: f64) -> Result<Self, ScenarioError> {
        nonnegative("launchpad cost scale", launchpad)?;
        nonnegative("kiosk cost scale", kiosk)?;
        let mut s = self.clone();
        let costs = &mut s.doc.params.costs;
        scale_per_node(&mut costs.launchpad, launchpad);
        scale_per_node(&mut costs.kiosk, kiosk);
        Ok(s)
    }

    fn validate_connectivity(&self) -> Result<(), ScenarioError> {
        let sets = &self.doc.sets;
        let key: BTreeSet<NodeId> = sets
            .restaurants
            .iter()
            .chain(&sets.customers)
            .chain(&sets.launchpads)
            .chain(&sets.kiosks)
            .copied()
            .collect();
        let Some(&first) = key.iter().next() else {
            return Ok(());
        };
        let a = self.index[&first];
        for &n in &key {
            if !self.dist[a][self.index[&n]].is_finite() {
                return Err(invalid(format!(
                    "graph is disconnected: no path between nodes {first} and {n}"
                )));
            }
        }
        Ok(())
    }
}

fn scale_per_node(p: &mut PerNode, factor: f64) {
    p.default *= factor;
    for v in p.per_node.values_mut() {
        *v *= factor;
    }
}

fn validate_structure(doc: &ScenarioDocument) -> Result<HashMap<NodeId, usize>, ScenarioError> {
    let zones: BTreeSet<&str> = doc.zones.iter().map(String::as_str).collect();
    if zones.len() != doc.zones.len() {
        return Err(invalid("duplicate zone id"));
    }
    let mut index = HashMap::new();
    for (k, n) in doc.nodes.iter().enumerate() {
        if index.insert(n.id, k).is_some() {
            return Err(invalid(format!("duplicate node id {}", n.id)));
        }
        if !(n.x.is_finite() && n.y.is_finite()) {
            return Err(invalid(format!("node {} has non-finite coordinates", n.id)));
        }
        if !zones.contains(n.zone.as_str()) {
            return Err(invalid(format!("node {} is in undeclared zone `{}`", n.id, n.zone)));
        }
    }
    for l in &doc.links {
        for end in [l.a, l.b] {
            if !index.contains_key(&end) {
                return Err(invalid(format!("link endpoint {end} does not exist")));
            }
        }
        positive(&format!("length of link {}-{}", l.a, l.b), l.length)?;
    }
    let sets = [
        ("restaurant", &doc.sets.restaurants),
        ("customer", &doc.sets.customers),
        ("launchpad", &doc.sets.launchpads),
        ("kiosk", &doc.sets.kiosks),
    ];
    for (name, set) in sets {
        let mut seen = BTreeSet::new();
        for &n in set {
            if !index.contains_key(&n) {
                return Err(invalid(format!("{name} {n} does not exist")));
            }
            if !seen.insert(n) {
                return Err(invalid(format!("{name} {n} listed twice")));
            }
        }
    }
    let restaurants: BTreeSet<_> = doc.sets.restaurants.iter().collect();
    let customers: BTreeSet<_> = doc.sets.customers.iter().collect();
    let mut pairs = BTreeSet::new();
    for d in &doc.demand {
        if !restaurants.contains(&d.i) {
            return Err(invalid(format!("demand origin {} is not a restaurant", d.i)));
        }
        if !customers.contains(&d.j) {
            return Err(invalid(format!("demand destination {} is not a customer", d.j)));
        }
        if d.i == d.j {
            return Err(invalid(format!("demand pair {}->{} has equal endpoints", d.i, d.j)));
        }
        if !pairs.insert((d.i, d.j)) {
            return Err(invalid(format!("demand pair {}->{} listed twice", d.i, d.j)));
        }
        nonnegative(&format!("demand {}->{}", d.i, d.j), d.rate)?;
    }
    Ok(index)
}

fn validate_params(doc: &ScenarioDocument) -> Result<(), ScenarioError> {
    let p = &doc.params;
    positive("courier_speed", p.courier_speed)?;
    positive("drone_speed", p.drone_speed)?;
    for v in p.pickup_scale.values() {
        positive("pickup_scale", v)?;
    }
    for v in p.intra_node_gap.values() {
        positive("intra_node_gap", v)?;
    }
    for v in p.costs.launchpad.values().chain(p.costs.kiosk.values()) {
        nonnegative("site cost", v)?;
    }
    nonnegative("drone cost", p.costs.drone)?;
    nonnegative("courier_wage", p.costs.courier_wage)?;
    nonnegative("alpha_w", p.costs.alpha_w)?;
    if p.queue.capacity < 1 {
        return Err(invalid("queue capacity must be at least 1"));
    }
    let grid = &p.queue.gamma_grid;
    if grid.first() != Some(&0.0) {
        return Err(invalid("reliability grid must start at 0"));
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(invalid(format!(
                "reliability grid must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if let Some(&g) = grid.iter().find(|g| !(**g >= 0.0 && **g < 1.0)) {
        return Err(invalid(format!("reliability level {g} outside [0, 1)")));
    }
    positive("max_delivery_time", p.battery.max_delivery_time)?;
    positive("max_return_time", p.battery.max_return_time)?;
    positive("idle.min", p.idle.min)?;
    positive("idle.max", p.idle.max)?;
    if p.idle.min >= p.idle.max {
        return Err(invalid("idle.min must be below idle.max"));
    }
    for (from, row) in &p.reposition_time {
        if !doc.zones.contains(from) {
            return Err(invalid(format!("reposition_time names undeclared zone `{from}`")));
        }
        for (to, &t) in row {
            if !doc.zones.contains(to) {
                return Err(invalid(format!("reposition_time names undeclared zone `{to}`")));
            }
            nonnegative(&format!("reposition_time {from}->{to}"), t)?;
        }
    }
    for from in &doc.zones {
        for to in &doc.zones {
            if from != to && p.reposition_time.get(from).and_then(|r| r.get(to)).is_none() {
                return Err(invalid(format!("reposition_time {from}->{to} missing")));
            }
        }
    }
    Ok(())
}

fn all_pairs(doc: &ScenarioDocument, index: &HashMap<NodeId, usize>) -> Vec<Vec<f64>> {
    let n = doc.nodes.len();
    let mut g: UnGraph<(), f64> = UnGraph::with_capacity(n, doc.links.len());
    for _ in 0..n {
        g.add_node(());
    }
    for l in &doc.links {
        g.add_edge(NodeIndex::new(index[&l.a]), NodeIndex::new(index[&l.b]), l.length);
    }
    (0..n)
        .map(|s| {
            let reach = dijkstra(&g, NodeIndex::new(s), None, |e| *e.weight());
            (0..n)
                .map(|t| reach.get(&NodeIndex::new(t)).copied().unwrap_or(f64::INFINITY))
                .collect()
        })
        .collect()
}
