//! Random tree grids, anomaly injection and the damaged-section fixture.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tl::{AdmittanceModel, Branch, BranchId, CableSpec, InlineElement, Load, Node, NodeId, Port, Topology};

/// Ratio of the mean degree-capped spanning-tree edge to `side / sqrt(n)` for
/// uniform placement in a square; measured for n = 5..20.
const EDGE_FACTOR: f64 = 0.73;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortChoice {
    HighestDegree,
    Random,
}

/// Distribution of leaf terminations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadDistribution {
    pub r_min: f64,
    pub r_max: f64,
    /// Share of loads whose series resonance falls inside `band_hz`.
    pub resonant_fraction: f64,
    pub open_fraction: f64,
    /// Range of the characteristic reactance `sqrt(L/C)` in ohm.
    pub reactance_min: f64,
    pub reactance_max: f64,
    pub band_hz: (f64, f64),
}

impl Default for LoadDistribution {
    fn default() -> Self {
        Self {
            r_min: 5.0,
            r_max: 1000.0,
            resonant_fraction: 0.3,
            open_fraction: 0.1,
            reactance_min: 10.0,
            reactance_max: 300.0,
            band_hz: (4.3e3, 500e3),
        }
    }
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp()
}

impl LoadDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.r_min
            && self.r_min <= self.r_max
            && (0.0..=1.0).contains(&self.resonant_fraction)
            && (0.0..=1.0).contains(&self.open_fraction)
            && self.resonant_fraction + self.open_fraction <= 1.0
            && 0.0 < self.reactance_min
            && self.reactance_min <= self.reactance_max
            && 0.0 < self.band_hz.0
            && self.band_hz.0 < self.band_hz.1;
        if ok {
            Ok(())
        } else {
            Err(Error::config("invalid load distribution"))
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> AdmittanceModel {
        let u: f64 = rng.random();
        if u < self.open_fraction {
            return AdmittanceModel::Open;
        }
        let r = log_uniform(rng, self.r_min, self.r_max);
        let x0 = log_uniform(rng, self.reactance_min, self.reactance_max);
        let (lo, hi) = self.band_hz;
        let f0 = if u < self.open_fraction + self.resonant_fraction {
            log_uniform(rng, lo, hi)
        } else if rng.random::<bool>() {
            log_uniform(rng, lo / 10.0, lo / 2.0)
        } else {
            log_uniform(rng, 2.0 * hi, 10.0 * hi)
        };
        let w0 = 2.0 * PI * f0;
        AdmittanceModel::SeriesRlc { r, l: Some(x0 / w0), c: Some(1.0 / (w0 * x0)) }
    }

    /// One independent termination per conductor.
    pub fn sample_load(&self, rng: &mut impl Rng, channels: usize) -> Load {
        Load {
            elements: (0..channels)
                .map(|i| crate::tl::LoadElement { from: i, to: None, model: self.sample(rng) })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub n_nodes: usize,
    pub avg_branch_length: f64,
    pub max_node_degree: usize,
    /// Fixed placement square. When absent the layout is scaled so the mean
    /// branch length equals `avg_branch_length` exactly.
    pub area_side: Option<f64>,
    pub cable: CableSpec,
    pub loads: LoadDistribution,
    pub port: PortChoice,
    pub seed: u64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            n_nodes: 20,
            avg_branch_length: 900.0,
            max_node_degree: 4,
            area_side: None,
            cable: CableSpec::siso(),
            loads: LoadDistribution::default(),
            port: PortChoice::HighestDegree,
            seed: 0,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::config("n_nodes must be >= 2"));
        }
        if !(self.avg_branch_length.is_finite() && self.avg_branch_length > 0.0) {
            return Err(Error::config("avg_branch_length must be positive"));
        }
        if self.max_node_degree < 2 {
            return Err(Error::config("max_node_degree must be >= 2"));
        }
        if let Some(s) = self.area_side {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::config("area_side must be positive"));
            }
        }
        self.cable.validate()?;
        self.loads.validate()
    }

    /// Square side giving the target mean branch length on average.
    pub fn placement_side(&self) -> f64 {
        self.area_side
            .unwrap_or(self.avg_branch_length * (self.n_nodes as f64).sqrt() / EDGE_FACTOR)
    }
}

/// Prim's algorithm restricted to tree nodes with spare degree.
fn capped_prim(pts: &[(f64, f64)], cap: usize) -> Result<Vec<(usize, usize)>> {
    let n = pts.len();
    let dist = |i: usize, j: usize| (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1);
    let mut in_tree = vec![false; n];
    let mut degree = vec![0usize; n];
    in_tree[0] = true;
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for u in (0..n).filter(|&u| in_tree[u] && degree[u] < cap) {
            for v in (0..n).filter(|&v| !in_tree[v]) {
                let d = dist(u, v);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, u, v));
                }
            }
        }
        let (_, u, v) = best.ok_or_else(|| Error::config("degree bound prevents a spanning tree"))?;
        in_tree[v] = true;
        degree[u] += 1;
        degree[v] += 1;
        edges.push((u, v));
    }
    Ok(edges)
}

/// Random connected tree with terminations on every leaf except the port.
pub fn generate_topology(config: &TopologyConfig, seed: u64) -> Result<Topology> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.n_nodes;
    let side = config.placement_side();
    let mut pts: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random::<f64>() * side, rng.random::<f64>() * side))
        .collect();
    let edges = capped_prim(&pts, config.max_node_degree)?;
    let len = |p: &[(f64, f64)], (u, v): (usize, usize)| (p[u].0 - p[v].0).hypot(p[u].1 - p[v].1);
    if config.area_side.is_none() {
        let mean = edges.iter().map(|&e| len(&pts, e)).sum::<f64>() / edges.len() as f64;
        let scale = config.avg_branch_length / mean;
        for p in &mut pts {
            p.0 *= scale;
            p.1 *= scale;
        }
    }
    let channels = config.cable.channels();
    let mut topo = Topology {
        channels,
        nodes: pts.iter().enumerate().map(|(id, &(x, y))| Node { id, x, y }).collect(),
        branches: edges
            .iter()
            .enumerate()
            .map(|(id, &(a, b))| Branch {
                id,
                a,
                b,
                length_m: len(&pts, (a, b)),
                cable: config.cable.clone(),
                inline: vec![],
            })
            .collect(),
        loads: BTreeMap::new(),
        ports: vec![],
    };
    let port = match config.port {
        PortChoice::HighestDegree => (0..n).max_by_key(|&i| (topo.degree(i), std::cmp::Reverse(i))).unwrap_or(0),
        PortChoice::Random => rng.random_range(0..n),
    };
    for leaf in topo.leaves() {
        if leaf != port {
            let load = config.loads.sample_load(&mut rng, channels);
            topo.loads.insert(leaf, load);
        }
    }
    topo.ports.push(Port { node: port, y0: None });
    topo.validate()?;
    Ok(topo)
}

/// Electrical anomaly to insert into a topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Anomaly {
    LoadChange {
        node: NodeId,
        load: Load,
    },
    /// Lumped shunt at `offset_m` from endpoint `a`. `conductors` is the
    /// affected pair; `None` as second member means the reference wire.
    LocalizedFault {
        branch: BranchId,
        offset_m: f64,
        admittance: AdmittanceModel,
        #[serde(default)]
        conductors: (usize, Option<usize>),
    },
    DistributedFault {
        branch: BranchId,
        start_m: f64,
        length_m: f64,
        cable: CableSpec,
    },
}

impl Anomaly {
    pub fn kind(&self) -> AnomalyKind {
        match self {
            Anomaly::LoadChange { .. } => AnomalyKind::LoadChange,
            Anomaly::LocalizedFault { .. } => AnomalyKind::LocalizedFault,
            Anomaly::DistributedFault { .. } => AnomalyKind::DistributedFault,
        }
    }

    pub fn branch(&self) -> Option<BranchId> {
        match *self {
            Anomaly::LoadChange { .. } => None,
            Anomaly::LocalizedFault { branch, .. } | Anomaly::DistributedFault { branch, .. } => Some(branch),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    LoadChange,
    LocalizedFault,
    DistributedFault,
}

impl AnomalyKind {
    pub fn name(self) -> &'static str {
        match self {
            AnomalyKind::LoadChange => "load_change",
            AnomalyKind::LocalizedFault => "localized_fault",
            AnomalyKind::DistributedFault => "distributed_fault",
        }
    }
}

impl std::str::FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "load_change" | "loadchange" => Ok(AnomalyKind::LoadChange),
            "localized_fault" | "localizedfault" => Ok(AnomalyKind::LocalizedFault),
            "distributed_fault" | "distributedfault" => Ok(AnomalyKind::DistributedFault),
            other => Err(Error::config(format!("unknown anomaly kind '{other}'"))),
        }
    }
}

/// Copy of `topo` with the anomaly applied.
pub fn inject_anomaly(topo: &Topology, anomaly: &Anomaly) -> Result<Topology> {
    let mut out = topo.clone();
    let branch_mut = |t: &mut Topology, id: BranchId| -> Result<usize> {
        t.branch_index(id)
            .ok_or_else(|| Error::domain(format!("anomaly references unknown branch {id}")))
    };
    match anomaly {
        Anomaly::LoadChange { node, load } => {
            if !topo.has_node(*node) {
                return Err(Error::domain(format!("anomaly references unknown node {node}")));
            }
            out.loads.insert(*node, load.clone());
        }
        Anomaly::LocalizedFault { branch, offset_m, admittance, conductors } => {
            let bi = branch_mut(&mut out, *branch)?;
            let load = Load::between(conductors.0, conductors.1, admittance.clone());
            out.branches[bi].inline.push(InlineElement::Shunt { offset_m: *offset_m, load });
        }
        Anomaly::DistributedFault { branch, start_m, length_m, cable } => {
            let bi = branch_mut(&mut out, *branch)?;
            out.branches[bi].inline.push(InlineElement::Degraded {
                start_m: *start_m,
                end_m: start_m + length_m,
                cable: cable.clone(),
            });
        }
    }
    out.validate()?;
    Ok(out)
}

/// Parameter ranges for random anomalies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySampler {
    /// Log-uniform range of the fault resistance (ohm).
    pub fault_r_ohm: (f64, f64),
    /// Conductor the fault connects to the reference (or to `fault_to`).
    pub fault_conductor: usize,
    pub fault_to: Option<usize>,
    /// Degraded section length as a fraction of its branch.
    pub section_fraction: (f64, f64),
    /// Faults keep this fraction of the branch length away from its ends.
    pub edge_margin: f64,
    pub aging: (f64, f64),
    pub loads: LoadDistribution,
}

impl Default for AnomalySampler {
    fn default() -> Self {
        Self {
            fault_r_ohm: (10.0, 1000.0),
            fault_conductor: 0,
            fault_to: None,
            section_fraction: (0.2, 0.5),
            edge_margin: 0.05,
            aging: (AGING_R_FACTOR, AGING_C_FACTOR),
            loads: LoadDistribution::default(),
        }
    }
}

/// Random anomaly of the given kind. Faults land on a point drawn uniformly
/// over the total cable length; load changes on a terminated node other than
/// `port`.
pub fn sample_anomaly(
    topo: &Topology,
    port: NodeId,
    kind: AnomalyKind,
    sampler: &AnomalySampler,
    rng: &mut impl Rng,
) -> Result<Anomaly> {
    if kind == AnomalyKind::LoadChange {
        let nodes: Vec<NodeId> = topo.loads.keys().copied().filter(|&n| n != port).collect();
        if nodes.is_empty() {
            return Err(Error::domain("no terminated node besides the port"));
        }
        let node = nodes[rng.random_range(0..nodes.len())];
        let old = &topo.loads[&node];
        let mut load = sampler.loads.sample_load(rng, topo.channels);
        // the draw may reproduce the old load (e.g. open to open)
        for _ in 0..16 {
            if &load != old {
                break;
            }
            load = sampler.loads.sample_load(rng, topo.channels);
        }
        return Ok(Anomaly::LoadChange { node, load });
    }
    let total: f64 = topo.branches.iter().map(|b| b.length_m).sum();
    if !(total > 0.0) {
        return Err(Error::domain("network has no cable to fault"));
    }
    let mut u = rng.random::<f64>() * total;
    let branch = topo
        .branches
        .iter()
        .find(|b| {
            u -= b.length_m;
            u < 0.0
        })
        .unwrap_or_else(|| topo.branches.last().expect("non-empty"));
    let l = branch.length_m;
    let m = sampler.edge_margin * l;
    match kind {
        AnomalyKind::LocalizedFault => Ok(Anomaly::LocalizedFault {
            branch: branch.id,
            offset_m: rng.random_range(m..=l - m),
            admittance: AdmittanceModel::resistor(log_uniform(rng, sampler.fault_r_ohm.0, sampler.fault_r_ohm.1)),
            conductors: (sampler.fault_conductor, sampler.fault_to),
        }),
        _ => {
            let (lo, hi) = sampler.section_fraction;
            let length_m = rng.random_range(lo..=hi) * l;
            let start_m = rng.random_range(0.0..=(l - length_m));
            Ok(Anomaly::DistributedFault {
                branch: branch.id,
                start_m,
                length_m,
                cable: branch.cable.degraded(sampler.aging.0, sampler.aging.1),
            })
        }
    }
}

/// Path distance from `port` to where the anomaly first appears.
pub fn anomaly_distance(topo: &Topology, port: NodeId, anomaly: &Anomaly) -> Result<f64> {
    let d = node_distances(topo, port)?;
    let along = |id: BranchId, offset: f64| -> Result<f64> {
        let b = topo.branch(id).ok_or_else(|| Error::domain(format!("unknown branch {id}")))?;
        Ok(if d[&b.a] <= d[&b.b] { d[&b.a] + offset } else { d[&b.a] - offset })
    };
    match anomaly {
        Anomaly::LoadChange { node, .. } => {
            d.get(node).copied().ok_or_else(|| Error::domain(format!("unknown node {node}")))
        }
        Anomaly::LocalizedFault { branch, offset_m, .. } => along(*branch, *offset_m),
        Anomaly::DistributedFault { branch, start_m, length_m, .. } => {
            Ok(along(*branch, *start_m)?.min(along(*branch, start_m + length_m)?))
        }
    }
}

/// Tree-path length from `port` to every node.
pub fn node_distances(topo: &Topology, port: NodeId) -> Result<HashMap<NodeId, f64>> {
    let tree = topo.rooted_at(port)?;
    let mut d = HashMap::from([(port, 0.0)]);
    for &node in &tree.order[1..] {
        let b = &topo.branches[tree.parent_branch[&node]];
        let parent = tree.parent[&node];
        d.insert(node, d[&parent] + b.length_m);
    }
    Ok(d)
}

/// Default cable-aging degradation: +50 % R, +10 % C.
pub const AGING_R_FACTOR: f64 = 1.5;
pub const AGING_C_FACTOR: f64 = 1.1;

/// Reference scenario: port, 11 km trunk to a junction, two branches ending at
/// 12.95 km (low-impedance load) and 15.95 km (high-impedance load).
pub mod fixture {
    use super::*;

    pub const PORT: NodeId = 0;
    pub const JUNCTION: NodeId = 1;
    pub const END_B2: NodeId = 2;
    pub const END_B3: NodeId = 3;
    pub const TRUNK: BranchId = 1;
    pub const B2: BranchId = 2;
    pub const B3: BranchId = 3;
    pub const TRUNK_LEN: f64 = 11_000.0;
    pub const DAMAGE_START: f64 = 11_500.0;
    pub const DAMAGE_END: f64 = 12_400.0;

    pub fn topology() -> Topology {
        let cable = CableSpec::siso();
        let branch = |id, a, b, length_m| Branch { id, a, b, length_m, cable: cable.clone(), inline: vec![] };
        Topology {
            channels: 1,
            nodes: vec![
                Node { id: PORT, x: 0.0, y: 0.0 },
                Node { id: JUNCTION, x: TRUNK_LEN, y: 0.0 },
                Node { id: END_B2, x: TRUNK_LEN + 1_950.0 * 0.6, y: 1_950.0 * 0.8 },
                Node { id: END_B3, x: TRUNK_LEN + 4_950.0 * 0.6, y: -4_950.0 * 0.8 },
            ],
            branches: vec![
                branch(TRUNK, PORT, JUNCTION, TRUNK_LEN),
                branch(B2, JUNCTION, END_B2, 1_950.0),
                branch(B3, JUNCTION, END_B3, 4_950.0),
            ],
            loads: BTreeMap::from([
                (END_B2, Load::shunt(AdmittanceModel::resistor(20.0))),
                (END_B3, Load::shunt(AdmittanceModel::resistor(300.0))),
            ]),
            ports: vec![Port { node: PORT, y0: None }],
        }
    }

    /// Aged section 11.5–12.4 km from the port on `branch` (B2 or B3).
    pub fn damage(branch: BranchId) -> Anomaly {
        Anomaly::DistributedFault {
            branch,
            start_m: DAMAGE_START - TRUNK_LEN,
            length_m: DAMAGE_END - DAMAGE_START,
            cable: CableSpec::siso().degraded(AGING_R_FACTOR, AGING_C_FACTOR),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::tl::{input_admittance, port_reflection, transfer_function, FrequencyGrid};

    fn cfg(n: usize) -> TopologyConfig {
        TopologyConfig { n_nodes: n, ..Default::default() }
    }

    #[test]
    fn sampled_anomalies_inject_cleanly() {
        let t = generate_topology(&cfg(10), 5).unwrap();
        let port = t.ports[0].node;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = AnomalySampler::default();
        for kind in [AnomalyKind::LoadChange, AnomalyKind::LocalizedFault, AnomalyKind::DistributedFault] {
            for _ in 0..50 {
                let a = sample_anomaly(&t, port, kind, &s, &mut rng).unwrap();
                assert_eq!(a.kind(), kind);
                inject_anomaly(&t, &a).unwrap();
                let d = anomaly_distance(&t, port, &a).unwrap();
                let far = node_distances(&t, port).unwrap().values().cloned().fold(0.0, f64::max);
                assert!(d > 0.0 && d <= far + 1e-9);
            }
        }
    }

    #[test]
    fn fixture_anomaly_distances() {
        let t = fixture::topology();
        assert_eq!(anomaly_distance(&t, 0, &fixture::damage(fixture::B3)).unwrap(), fixture::DAMAGE_START);
        let lc = Anomaly::LoadChange { node: fixture::END_B3, load: Load::shunt(AdmittanceModel::Open) };
        assert_eq!(anomaly_distance(&t, 0, &lc).unwrap(), 15_950.0);
    }

    #[test]
    fn two_nodes_give_one_branch_one_load_one_port() {
        let t = generate_topology(&cfg(2), 3).unwrap();
        assert_eq!(t.branches.len(), 1);
        assert_eq!(t.loads.len(), 1);
        assert_eq!(t.ports.len(), 1);
        assert!((t.branches[0].length_m - 900.0).abs() < 1e-9);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_topology(&cfg(20), 42).unwrap().to_json().unwrap();
        let b = generate_topology(&cfg(20), 42).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_topology(&cfg(20), 43).unwrap().to_json().unwrap());
    }

    #[test]
    fn unscaled_placement_mean_length_over_many_samples() {
        // fixed square from the placement rule, no per-instance rescaling
        let mut c = cfg(20);
        c.area_side = Some(c.placement_side());
        let mut total = 0.0;
        let mut count = 0;
        for seed in 0..1000 {
            let t = generate_topology(&c, seed).unwrap();
            total += t.branches.iter().map(|b| b.length_m).sum::<f64>();
            count += t.branches.len();
        }
        let mean = total / count as f64;
        assert!((765.0..=1035.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn degree_cap_respected() {
        let mut c = cfg(20);
        c.max_node_degree = 2;
        let t = generate_topology(&c, 9).unwrap();
        assert!(t.nodes.iter().all(|n| t.degree(n.id) <= 2));
        assert!(t.rooted_at(0).is_ok());
    }

    #[test]
    fn port_is_highest_degree_node() {
        let t = generate_topology(&cfg(15), 5).unwrap();
        let p = t.ports[0].node;
        assert!(t.nodes.iter().all(|n| t.degree(n.id) <= t.degree(p)));
        assert!(!t.loads.contains_key(&p) || t.degree(p) > 1);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate_topology(&cfg(1), 0).is_err());
        let mut c = cfg(5);
        c.max_node_degree = 1;
        assert!(generate_topology(&c, 0).is_err());
    }

    #[test]
    fn null_fault_leaves_responses_unchanged() {
        let grid = FrequencyGrid::narrowband();
        let t = generate_topology(&cfg(8), 11).unwrap();
        let port = t.ports[0].node;
        let b = &t.branches[2];
        let faulted = inject_anomaly(
            &t,
            &Anomaly::LocalizedFault {
                branch: b.id,
                offset_m: 0.4 * b.length_m,
                admittance: AdmittanceModel::conductance(0.0),
                conductors: (0, None),
            },
        )
        .unwrap();
        let y0 = input_admittance(&t, port, &grid).unwrap();
        let y1 = input_admittance(&faulted, port, &grid).unwrap();
        for (a, b) in y0.values.iter().zip(&y1.values) {
            assert!(linalg::rel_diff(a, b) < 1e-12);
        }
        let rx = *t.leaves().iter().find(|&&l| l != port).unwrap();
        let h0 = transfer_function(&t, port, rx, &grid, 1.0, 1e5).unwrap();
        let h1 = transfer_function(&faulted, port, rx, &grid, 1.0, 1e5).unwrap();
        for (a, b) in h0.values.iter().zip(&h1.values) {
            assert!(linalg::rel_diff(a, b) < 1e-12);
        }
    }

    #[test]
    fn null_degradation_leaves_responses_unchanged() {
        let grid = FrequencyGrid::narrowband();
        let t = fixture::topology();
        let a = Anomaly::DistributedFault { branch: fixture::B3, start_m: 500.0, length_m: 900.0, cable: CableSpec::siso() };
        let f = inject_anomaly(&t, &a).unwrap();
        let y0 = input_admittance(&t, 0, &grid).unwrap();
        let y1 = input_admittance(&f, 0, &grid).unwrap();
        for (a, b) in y0.values.iter().zip(&y1.values) {
            assert!(linalg::rel_diff(a, b) < 1e-10);
        }
    }

    #[test]
    fn injection_is_pure_and_repeatable() {
        let t = fixture::topology();
        let before = t.to_json().unwrap();
        let a = inject_anomaly(&t, &fixture::damage(fixture::B3)).unwrap().to_json().unwrap();
        let b = inject_anomaly(&t, &fixture::damage(fixture::B3)).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        assert_eq!(before, t.to_json().unwrap());
    }

    #[test]
    fn matched_load_change_gives_zero_reflection() {
        let grid = FrequencyGrid::narrowband();
        let t = generate_topology(&cfg(2), 1).unwrap();
        let port = t.ports[0].node;
        let far = t.branches[0].other(port);
        // per-tone matched termination is not an RLC, so use the lossless line
        let mut lossless = t.clone();
        let cable = CableSpec::scalar(0.0, crate::tl::cable::DEFAULT_L, 0.0, crate::tl::cable::DEFAULT_C);
        lossless.branches[0].cable = cable;
        let yc = (crate::tl::cable::DEFAULT_C / crate::tl::cable::DEFAULT_L).sqrt();
        let m = inject_anomaly(&lossless, &Anomaly::LoadChange { node: far, load: Load::shunt(AdmittanceModel::conductance(yc)) })
            .unwrap();
        let rho = port_reflection(&m, port, &grid).unwrap();
        assert!(rho.values.iter().all(|v| v[(0, 0)].norm() < 1e-12));
    }

    #[test]
    fn dangling_references_rejected() {
        let t = fixture::topology();
        let bad = Anomaly::LoadChange { node: 99, load: Load::shunt(AdmittanceModel::Open) };
        assert!(inject_anomaly(&t, &bad).is_err());
        let bad = Anomaly::DistributedFault { branch: 9, start_m: 0.0, length_m: 1.0, cable: CableSpec::siso() };
        assert!(inject_anomaly(&t, &bad).is_err());
        let bad = Anomaly::DistributedFault { branch: fixture::B2, start_m: 1500.0, length_m: 900.0, cable: CableSpec::siso() };
        assert!(inject_anomaly(&t, &bad).is_err());
    }

    #[test]
    fn fixture_distances() {
        let d = node_distances(&fixture::topology(), fixture::PORT).unwrap();
        assert_eq!(d[&fixture::PORT], 0.0);
        assert!((d[&fixture::END_B2] - 12_950.0).abs() < 1e-9);
        assert!((d[&fixture::END_B3] - 15_950.0).abs() < 1e-9);
    }

    #[test]
    fn two_node_distance() {
        let t = generate_topology(&cfg(2), 4).unwrap();
        let p = t.ports[0].node;
        let d = node_distances(&t, p).unwrap();
        assert!((d[&t.branches[0].other(p)] - 900.0).abs() < 1e-9);
    }
}
