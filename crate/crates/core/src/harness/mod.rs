//! Monte-Carlo evaluation: random networks, injected anomalies, simulated
//! sensing and the full detect/classify/locate chain, with per-cell summaries.

mod config;
mod stats;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use config::{ChannelMode, ExperimentConfig, GroupKey, NoiseLevel, SEED_ENV};
pub use stats::{p_failure_overlap, wilson_interval, Rate, Z95};

use crate::detect::{
    classify, delta_against, detect_step, normalized_deviation, AnomalyClass, ClassifyConfig, DeltaModel,
    DetectConfig, EntrySelection, ReferenceState, StepOutcome, TraceMode,
};
use crate::error::{Error, Result};
use crate::locate::{localize_single, LocateConfig, TargetKind};
use crate::sensing::{derive_seed, qnr_of, SensorStream};
use crate::tl::{
    input_admittance, port_reflection, transfer_function, FrequencyGrid, NodeId, Quantity, Spectrum, Topology,
};
use crate::topogen::{
    anomaly_distance, generate_topology, inject_anomaly, node_distances, sample_anomaly, Anomaly, AnomalyKind,
    AnomalySampler,
};

/// Transmitter output and receiver input impedances for end-to-end sensing (ohm).
pub const TX_IMPEDANCE: f64 = 1.0;
pub const RX_IMPEDANCE: f64 = 1e5;

/// Class a detector should report for an anomaly of this kind.
pub fn expected_class(kind: AnomalyKind) -> AnomalyClass {
    match kind {
        AnomalyKind::LoadChange => AnomalyClass::ImpedanceVariation,
        AnomalyKind::LocalizedFault => AnomalyClass::LocalizedFault,
        AnomalyKind::DistributedFault => AnomalyClass::DistributedFault,
    }
}

/// Receiver for end-to-end sensing: the leaf farthest from `port`, lowest id
/// on ties.
pub fn farthest_leaf(topo: &Topology, port: NodeId) -> Result<NodeId> {
    let d = node_distances(topo, port)?;
    topo.leaves()
        .into_iter()
        .filter(|&n| n != port)
        .max_by(|a, b| d[a].total_cmp(&d[b]).then(b.cmp(a)))
        .ok_or_else(|| Error::domain("network has no receiver candidate"))
}

/// Noiseless quantity observed at `port` (and at the farthest leaf for H).
pub fn true_spectrum(topo: &Topology, port: NodeId, quantity: Quantity, grid: &FrequencyGrid) -> Result<Spectrum> {
    match quantity {
        Quantity::Yin => input_admittance(topo, port, grid),
        Quantity::Rho => port_reflection(topo, port, grid),
        Quantity::H => transfer_function(topo, port, farthest_leaf(topo, port)?, grid, TX_IMPEDANCE, RX_IMPEDANCE),
    }
}

fn entry_label(e: (usize, usize)) -> String {
    format!("{}-{}", e.0 + 1, e.1 + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub cell: usize,
    pub trial: usize,
    pub seed: u64,
    pub n_nodes: usize,
    pub noise: String,
    pub quantity: &'static str,
    pub model: &'static str,
    pub entry: String,
    pub anomaly: &'static str,
    pub anomaly_branch: Option<usize>,
    pub anomaly_node: Option<usize>,
    pub anomaly_distance_m: f64,
    pub realized_qnr_db: f64,
    /// max over tones of |Δ| / σ for a normal and for an anomalous estimate.
    pub stat_normal: f64,
    pub stat_anomalous: f64,
    pub detected: bool,
    pub detect_step: Option<usize>,
    pub class: &'static str,
    pub class_correct: bool,
    pub located: bool,
    pub branch_hit: bool,
    pub first_node_hit: bool,
    pub chosen: Option<usize>,
    pub d_hat_m: Option<f64>,
    pub error: Option<String>,
}

impl TrialRecord {
    /// Localization is scored for reflectometric quantities; undetected
    /// anomalies count as misses there.
    fn is_reflectometric(&self) -> bool {
        self.quantity.parse::<Quantity>().is_ok_and(Quantity::is_reflectometric)
    }
}

/// Everything a trial shares across the quantity/model/entry cells.
struct Scenario {
    topo: Topology,
    port: NodeId,
    anomaly: Anomaly,
    faulty: Topology,
    distance: f64,
    stream_seed: u64,
}

fn build_scenario(cfg: &ExperimentConfig, n_nodes: usize, seed: u64) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topo = generate_topology(&cfg.topology(n_nodes), rng.random())?;
    let port = topo.ports.first().ok_or_else(|| Error::domain("generated network has no port"))?.node;
    let kind = cfg.anomalies[rng.random_range(0..cfg.anomalies.len())];
    let sampler = AnomalySampler {
        fault_conductor: match cfg.channels {
            ChannelMode::Siso => 0,
            ChannelMode::Mimo => 1,
        },
        fault_r_ohm: cfg.fault_r_ohm,
        ..AnomalySampler::default()
    };
    let anomaly = sample_anomaly(&topo, port, kind, &sampler, &mut rng)?;
    let faulty = inject_anomaly(&topo, &anomaly)?;
    let distance = anomaly_distance(&topo, port, &anomaly)?;
    Ok(Scenario { topo, port, anomaly, faulty, distance, stream_seed: rng.random() })
}

struct Outcome {
    realized_qnr_db: f64,
    stat_normal: f64,
    stat_anomalous: f64,
    detected: bool,
    detect_step: Option<usize>,
    class: Option<AnomalyClass>,
    located: bool,
    branch_hit: bool,
    first_node_hit: bool,
    chosen: Option<usize>,
    d_hat_m: Option<f64>,
}

fn mean_spectrum(items: &[Spectrum]) -> Spectrum {
    let mut out = items[0].clone();
    for s in &items[1..] {
        for (a, b) in out.values.iter_mut().zip(&s.values) {
            *a += b;
        }
    }
    let k = crate::linalg::C64::new(items.len() as f64, 0.0);
    for a in &mut out.values {
        *a /= k;
    }
    out
}

/// One cell of one trial, given the estimate streams before and after.
#[allow(clippy::too_many_arguments)]
fn evaluate(
    cfg: &ExperimentConfig,
    sc: &Scenario,
    quantity: Quantity,
    truth: &Spectrum,
    warm: &[Spectrum],
    normal: &Spectrum,
    post: &[Spectrum],
    model: DeltaModel,
    entry: (usize, usize),
) -> Result<Outcome> {
    let det = DetectConfig {
        model,
        entries: EntrySelection::Entry(entry.0, entry.1),
        warmup: cfg.warmup,
        sigma_factor: cfg.sigma_factor,
        confirmations: cfg.confirmations,
        ..DetectConfig::default()
    };
    let mut state = ReferenceState::from_warmup(warm)?;
    let max_stat = |s: &Spectrum, st: &ReferenceState| -> Result<f64> {
        Ok(normalized_deviation(s, st, &det)?.iter().map(|z| z.0).fold(0.0, f64::max))
    };
    let mut out = Outcome {
        realized_qnr_db: qnr_of(&[normal], truth)?.aggregate_db,
        stat_normal: max_stat(normal, &state)?,
        stat_anomalous: max_stat(&post[0], &state)?,
        detected: false,
        detect_step: None,
        class: None,
        located: false,
        branch_hit: false,
        first_node_hit: false,
        chosen: None,
        d_hat_m: None,
    };
    let mut hit = None;
    for (i, est) in post.iter().enumerate() {
        if let StepOutcome::Detected { n_max, entry, .. } = detect_step(est, &mut state, &det)? {
            hit = Some((i, n_max, entry));
            break;
        }
    }
    let Some((i, n_max, det_entry)) = hit else {
        return Ok(out);
    };
    out.detected = true;
    out.detect_step = Some(i + 1);

    // the reference was frozen while the exceedances were pending
    let before = Spectrum { values: state.reference.clone(), ..truth.clone() };
    let after = mean_spectrum(&post[..=i]);
    let delta = delta_against(&after, &before.values, model)?;
    let velocity = sc.topo.branches[0].cable.velocity();
    let mode = if quantity.is_reflectometric() { TraceMode::Reflectometry } else { TraceMode::EndToEnd };
    let ccfg = ClassifyConfig { velocity, mode, ..ClassifyConfig::default() };
    let report = classify(&before, &after, &delta, Some(n_max), det_entry, &ccfg)?;
    out.class = Some(report.class);
    out.d_hat_m = report.first_peak_m;

    if quantity.is_reflectometric() {
        out.located = true;
        let lcfg = LocateConfig::for_grid(&truth.grid, velocity);
        if let Ok(loc) = localize_single(&report, &report.evidence.delta_peaks, &sc.topo, sc.port, &lcfg) {
            out.chosen = Some(loc.chosen);
            match &sc.anomaly {
                Anomaly::LoadChange { node, .. } => {
                    let hit = loc.target == TargetKind::Node && loc.chosen == *node;
                    out.branch_hit = hit;
                    out.first_node_hit = hit;
                }
                Anomaly::LocalizedFault { branch, .. } | Anomaly::DistributedFault { branch, .. } => {
                    let d = node_distances(&sc.topo, sc.port)?;
                    let b = sc.topo.branch(*branch).expect("anomaly branch exists");
                    let near = if d[&b.a] <= d[&b.b] { b.a } else { b.b };
                    out.branch_hit = loc.target == TargetKind::Branch && loc.chosen == *branch;
                    out.first_node_hit = loc.first_node == near;
                }
            }
        }
    }
    Ok(out)
}

/// All records of one (scenario, trial) unit, across quantity/model/entry.
fn run_unit(cfg: &ExperimentConfig, grid: &FrequencyGrid, scenario_idx: usize, trial: usize) -> Vec<TrialRecord> {
    let (n_nodes, noise) = cfg.scenario(scenario_idx);
    let seed = derive_seed(&[cfg.seed, scenario_idx as u64, trial as u64]);
    let built = build_scenario(cfg, n_nodes, seed);
    let mut records = Vec::new();
    for (q_idx, &quantity) in cfg.quantities.iter().enumerate() {
        // truths and estimate streams are common to every model and entry
        let streams = built.as_ref().map_err(|e| e.to_string()).and_then(|sc| {
            let truth = true_spectrum(&sc.topo, sc.port, quantity, grid).map_err(|e| e.to_string())?;
            let truth_a = true_spectrum(&sc.faulty, sc.port, quantity, grid).map_err(|e| e.to_string())?;
            let stream = SensorStream::new(noise.model(), cfg.plan, sc.stream_seed);
            let est = |t: &Spectrum, step: usize| stream.estimate(t, step as u64).map(|e| e.spectrum);
            let w = cfg.warmup;
            let warm: Vec<Spectrum> = (0..w).map(|s| est(&truth, s)).collect::<Result<_>>().map_err(|e| e.to_string())?;
            let normal = est(&truth, w).map_err(|e| e.to_string())?;
            let post: Vec<Spectrum> =
                (0..cfg.post_steps).map(|s| est(&truth_a, w + 1 + s)).collect::<Result<_>>().map_err(|e| e.to_string())?;
            Ok((truth, warm, normal, post))
        });
        for (m_idx, &model) in cfg.models.iter().enumerate() {
            for (e_idx, &entry) in cfg.entries().iter().enumerate() {
                let cell = cfg.cell_index(scenario_idx, q_idx, m_idx, e_idx);
                let mut rec = TrialRecord {
                    cell,
                    trial,
                    seed,
                    n_nodes,
                    noise: noise.label(),
                    quantity: quantity.name(),
                    model: model.name(),
                    entry: entry_label(entry),
                    anomaly: "",
                    anomaly_branch: None,
                    anomaly_node: None,
                    anomaly_distance_m: f64::NAN,
                    realized_qnr_db: f64::NAN,
                    stat_normal: f64::NAN,
                    stat_anomalous: f64::NAN,
                    detected: false,
                    detect_step: None,
                    class: AnomalyClass::None.name(),
                    class_correct: false,
                    located: false,
                    branch_hit: false,
                    first_node_hit: false,
                    chosen: None,
                    d_hat_m: None,
                    error: None,
                };
                if let Ok(sc) = &built {
                    rec.anomaly = sc.anomaly.kind().name();
                    rec.anomaly_branch = sc.anomaly.branch();
                    rec.anomaly_node = match &sc.anomaly {
                        Anomaly::LoadChange { node, .. } => Some(*node),
                        _ => None,
                    };
                    rec.anomaly_distance_m = sc.distance;
                }
                let result = built.as_ref().map_err(|e| e.to_string()).and_then(|sc| {
                    let (truth, warm, normal, post) = streams.as_ref().map_err(|e| e.clone())?;
                    evaluate(cfg, sc, quantity, truth, warm, normal, post, model, entry).map_err(|e| e.to_string())
                });
                match result {
                    Ok(o) => {
                        rec.realized_qnr_db = o.realized_qnr_db;
                        rec.stat_normal = o.stat_normal;
                        rec.stat_anomalous = o.stat_anomalous;
                        rec.detected = o.detected;
                        rec.detect_step = o.detect_step;
                        if let Some(c) = o.class {
                            rec.class = c.name();
                            rec.class_correct = built.as_ref().is_ok_and(|sc| expected_class(sc.anomaly.kind()) == c);
                        }
                        rec.located = o.located;
                        rec.branch_hit = o.branch_hit;
                        rec.first_node_hit = o.first_node_hit;
                        rec.chosen = o.chosen;
                        rec.d_hat_m = o.d_hat_m;
                    }
                    Err(e) => rec.error = Some(e),
                }
                records.push(rec);
            }
        }
    }
    records
}

/// Run every cell of the experiment. The output depends only on the
/// configuration (including its seed), not on the worker count.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let grid = FrequencyGrid::narrowband();
    let units: Vec<(usize, usize)> =
        (0..cfg.scenario_count()).flat_map(|s| (0..cfg.trials).map(move |t| (s, t))).collect();
    let work = || -> Vec<TrialRecord> {
        units.par_iter().flat_map_iter(|&(s, t)| run_unit(cfg, &grid, s, t)).collect()
    };
    let mut records = if cfg.workers == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?
            .install(work)
    };
    records.sort_by_key(|r| (r.cell, r.trial));
    Ok(records)
}

pub fn records_csv(records: &[TrialRecord]) -> Result<String> {
    to_csv(records)
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
    for r in rows {
        w.serialize(r).map_err(|e| Error::config(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::config(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::config(format!("csv: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub group: String,
    pub count: usize,
    pub errors: usize,
    pub p_failure: f64,
    pub detect_rate: f64,
    pub detect_lower: f64,
    pub detect_upper: f64,
    pub class_rate: f64,
    pub class_lower: f64,
    pub class_upper: f64,
    pub located_count: usize,
    pub branch_rate: f64,
    pub branch_lower: f64,
    pub branch_upper: f64,
    pub first_node_rate: f64,
    pub first_node_lower: f64,
    pub first_node_upper: f64,
    pub mean_qnr_db: f64,
}

fn group_key(r: &TrialRecord, keys: &[GroupKey]) -> String {
    keys.iter()
        .map(|k| match k {
            GroupKey::Quantity => format!("quantity={}", r.quantity),
            GroupKey::Model => format!("model={}", r.model),
            GroupKey::Entry => format!("entry={}", r.entry),
            GroupKey::Nodes => format!("nodes={}", r.n_nodes),
            GroupKey::Noise => format!("noise={}", r.noise),
            GroupKey::Anomaly => format!("anomaly={}", r.anomaly),
            GroupKey::DistanceKm => format!("distance_km={}", (r.anomaly_distance_m / 1000.0).floor()),
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Per-group p_failure and success rates with Wilson intervals. Groups keep
/// their first-appearance order; records with an error count toward `errors`
/// only.
pub fn summarize(records: &[TrialRecord], grouping: &[GroupKey]) -> Vec<SummaryRow> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        let k = group_key(r, grouping);
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(r);
    }
    order
        .into_iter()
        .map(|k| {
            let all = &groups[&k];
            let ok: Vec<&&TrialRecord> = all.iter().filter(|r| r.error.is_none()).collect();
            let n = ok.len();
            let count = |f: &dyn Fn(&TrialRecord) -> bool| ok.iter().filter(|r| f(r)).count();
            let normal: Vec<f64> = ok.iter().map(|r| r.stat_normal).collect();
            let anomalous: Vec<f64> = ok.iter().map(|r| r.stat_anomalous).collect();
            let detect = Rate::of(count(&|r| r.detected), n);
            let class = Rate::of(count(&|r| r.class_correct), n);
            let located_n = count(&|r| r.is_reflectometric());
            let branch = Rate::of(count(&|r| r.branch_hit), located_n);
            let first = Rate::of(count(&|r| r.first_node_hit), located_n);
            let qnr: Vec<f64> = ok.iter().map(|r| r.realized_qnr_db).filter(|x| x.is_finite()).collect();
            SummaryRow {
                group: k,
                count: all.len(),
                errors: all.len() - n,
                p_failure: if n == 0 { f64::NAN } else { p_failure_overlap(&normal, &anomalous) },
                detect_rate: detect.rate,
                detect_lower: detect.lower,
                detect_upper: detect.upper,
                class_rate: class.rate,
                class_lower: class.lower,
                class_upper: class.upper,
                located_count: located_n,
                branch_rate: branch.rate,
                branch_lower: branch.lower,
                branch_upper: branch.upper,
                first_node_rate: first.rate,
                first_node_lower: first.lower,
                first_node_upper: first.upper,
                mean_qnr_db: if qnr.is_empty() { f64::NAN } else { qnr.iter().sum::<f64>() / qnr.len() as f64 },
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    to_csv(rows)
}

pub fn summary_json(rows: &[SummaryRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)?)
}
