//! Anomaly localization from Δ-trace peaks: a single reflectometric sensor
//! matched against the known topology, or first-peak distances from several
//! sensors fused geometrically.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::detect::{AnomalyClass, DetectionReport, Peak};
use crate::error::{Error, Result};
use crate::tl::{BranchId, CableSpec, FrequencyGrid, NodeId, Topology};
use crate::topogen::node_distances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Mean distance of the two endpoint predictions to their nearest peaks.
    Mean,
    /// Smaller of the two, as the algorithm is literally written.
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocateConfig {
    pub score: ScoreMode,
    /// Resolution cell of the distance axis (m).
    pub bin_width_m: f64,
    /// Node match threshold for impedance variations (bins).
    pub node_threshold_bins: f64,
    /// A branch is a candidate if its port-path interval, widened by this
    /// much on both sides, contains the anomaly distance (bins).
    pub interval_slack_bins: f64,
    /// Scores closer than this to the best one make the result ambiguous (bins).
    pub ambiguity_bins: f64,
    /// Grid step of the multi-sensor search (bins).
    pub grid_step_bins: f64,
    /// Largest RMS residual accepted as a multi-sensor fix (bins).
    pub max_residual_bins: f64,
}

impl LocateConfig {
    pub fn for_grid(grid: &FrequencyGrid, velocity: f64) -> Self {
        Self { bin_width_m: velocity / (2.0 * grid.count() as f64 * grid.delta_f()), ..Self::default() }
    }
}

impl Default for LocateConfig {
    fn default() -> Self {
        let grid = FrequencyGrid::narrowband();
        Self {
            score: ScoreMode::Mean,
            bin_width_m: CableSpec::siso().velocity() / (2.0 * grid.count() as f64 * grid.delta_f()),
            node_threshold_bins: 1.5,
            interval_slack_bins: 1.0,
            ambiguity_bins: 0.05,
            grid_step_bins: 0.25,
            max_residual_bins: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Node,
    Branch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub id: usize,
    pub score_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub target: TargetKind,
    pub chosen: usize,
    /// Port-side endpoint of the chosen branch, or the chosen node.
    pub first_node: NodeId,
    /// Anomaly distance from the (first) sensing port (m).
    pub d_hat_m: f64,
    /// Position along the chosen branch from its `a` end, when resolved.
    pub offset_m: Option<f64>,
    /// Ascending by score; the first entry is the chosen one.
    pub scores: Vec<CandidateScore>,
    pub ambiguous: bool,
}

impl LocalizationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn nearest(peaks: &[f64], x: f64) -> f64 {
    peaks.iter().map(|p| (p - x).abs()).fold(f64::INFINITY, f64::min)
}

fn sort_scores(scores: &mut [CandidateScore]) {
    scores.sort_by(|a, b| a.score_m.total_cmp(&b.score_m).then(a.id.cmp(&b.id)));
}

/// Single-sensor localization. `peaks` are Δ-trace peak positions in metres;
/// the report's first peak is the anomaly distance.
pub fn localize_single(
    report: &DetectionReport,
    peaks: &[Peak],
    topo: &Topology,
    port: NodeId,
    cfg: &LocateConfig,
) -> Result<LocalizationReport> {
    let d_hat = match (report.detected, report.first_peak_m) {
        (true, Some(d)) => d,
        _ => return Err(Error::Localization("no detected anomaly with a distance estimate".into())),
    };
    let bin = cfg.bin_width_m;
    let dist = node_distances(topo, port)?;

    if report.class == AnomalyClass::ImpedanceVariation {
        let mut scores: Vec<CandidateScore> = topo
            .nodes
            .iter()
            .filter(|n| n.id != port)
            .map(|n| CandidateScore { id: n.id, score_m: (dist[&n.id] - d_hat).abs() })
            .collect();
        sort_scores(&mut scores);
        let nearest_node = scores.first().map(|s| s.id);
        scores.retain(|s| s.score_m < cfg.node_threshold_bins * bin);
        let Some(best) = scores.first().copied() else {
            return Err(Error::Localization(format!(
                "no node within {} bins of {d_hat:.1} m; nearest is {nearest_node:?}",
                cfg.node_threshold_bins
            )));
        };
        return Ok(LocalizationReport {
            target: TargetKind::Node,
            chosen: best.id,
            first_node: best.id,
            d_hat_m: d_hat,
            offset_m: None,
            ambiguous: scores.len() > 1,
            scores,
        });
    }

    let mut measured: Vec<f64> = peaks.iter().map(|p| p.position).collect();
    if measured.is_empty() {
        measured.push(d_hat);
    }
    let slack = cfg.interval_slack_bins * bin;
    let mut scores = Vec::new();
    let mut nearest_branch = (f64::INFINITY, None);
    for b in &topo.branches {
        let (d1, d2) = (dist[&b.a].min(dist[&b.b]), dist[&b.a].max(dist[&b.b]));
        let outside = (d1 - d_hat).max(d_hat - d2).max(0.0);
        if outside < nearest_branch.0 {
            nearest_branch = (outside, Some(b.id));
        }
        if outside > slack {
            continue;
        }
        // echoes expected right after the anomaly if it sits on this branch
        let e1 = nearest(&measured, d_hat + (d_hat - d1).abs());
        let e2 = nearest(&measured, d_hat + (d_hat - d2).abs());
        let c = match cfg.score {
            ScoreMode::Mean => 0.5 * (e1 + e2),
            ScoreMode::Min => e1.min(e2),
        };
        scores.push(CandidateScore { id: b.id, score_m: c });
    }
    sort_scores(&mut scores);
    let Some(best) = scores.first().copied() else {
        return Err(Error::Localization(format!(
            "no branch spans {d_hat:.1} m; nearest is {:?}",
            nearest_branch.1
        )));
    };
    let ambiguous = scores.get(1).is_some_and(|s| s.score_m - best.score_m <= cfg.ambiguity_bins * bin);
    let b = topo.branch(best.id).expect("scored branch exists");
    let (near, offset) = if dist[&b.a] <= dist[&b.b] {
        (b.a, d_hat - dist[&b.a])
    } else {
        (b.b, dist[&b.a] - d_hat)
    };
    Ok(LocalizationReport {
        target: TargetKind::Branch,
        chosen: best.id,
        first_node: near,
        d_hat_m: d_hat,
        offset_m: Some(offset.clamp(0.0, b.length_m)),
        scores,
        ambiguous,
    })
}

/// Point on the tree minimizing the squared mismatch between path distances
/// to each sensing port and the measured first-peak distances.
pub fn localize_multi(
    first_peaks: &BTreeMap<NodeId, f64>,
    topo: &Topology,
    cfg: &LocateConfig,
) -> Result<LocalizationReport> {
    if first_peaks.len() < 2 {
        return Err(Error::config("geometric fusion needs at least two sensing ports"));
    }
    let bin = cfg.bin_width_m;
    let step = cfg.grid_step_bins * bin;
    if !(step > 0.0) {
        return Err(Error::config("grid step must be positive"));
    }
    let sensors: Vec<(HashMap<NodeId, f64>, f64)> = first_peaks
        .iter()
        .map(|(&port, &d)| Ok((node_distances(topo, port)?, d)))
        .collect::<Result<_>>()?;
    let rms = |bi: usize, x: f64| -> f64 {
        let b = &topo.branches[bi];
        let sse: f64 = sensors
            .iter()
            .map(|(dist, d)| {
                let p = (x + dist[&b.a]).min(b.length_m - x + dist[&b.b]);
                (p - d).powi(2)
            })
            .sum();
        (sse / sensors.len() as f64).sqrt()
    };
    // best point per branch
    let mut minima: Vec<(usize, f64, f64)> = Vec::new();
    for (bi, b) in topo.branches.iter().enumerate() {
        let n = (b.length_m / step).ceil().max(1.0) as usize;
        let best = (0..=n)
            .map(|i| {
                let x = (i as f64 * step).min(b.length_m);
                (x, rms(bi, x))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one grid point");
        minima.push((bi, best.0, best.1));
    }
    minima.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
    let (bi, x, r) = minima[0];
    if r > cfg.max_residual_bins * bin {
        return Err(Error::Localization(format!("no consistent fix: best residual {r:.1} m")));
    }
    let b = &topo.branches[bi];
    let from_a = node_distances(topo, b.a)?;
    let from_b = node_distances(topo, b.b)?;
    let to_best = |node: NodeId| (x + from_a[&node]).min(b.length_m - x + from_b[&node]);
    let separation = |bj: usize, y: f64| -> f64 {
        if bj == bi {
            return (x - y).abs();
        }
        let o = &topo.branches[bj];
        (y + to_best(o.a)).min(o.length_m - y + to_best(o.b))
    };
    let ambiguous = minima[1..].iter().any(|&(bj, y, rj)| separation(bj, y) > bin && rj - r < bin);
    let near = &sensors[0].0;
    let first_node = if near[&b.a] <= near[&b.b] { b.a } else { b.b };
    let d0 = *first_peaks.values().next().expect("two sensors");
    let scores = minima.iter().map(|&(bj, _, rj)| CandidateScore { id: topo.branches[bj].id, score_m: rj }).collect();
    Ok(LocalizationReport {
        target: TargetKind::Branch,
        chosen: b.id,
        first_node,
        d_hat_m: d0,
        offset_m: Some(x),
        scores,
        ambiguous,
    })
}

/// Branch carrying the anomaly and whether `report` picked it.
pub fn branch_hit(report: &LocalizationReport, truth: BranchId) -> bool {
    report.target == TargetKind::Branch && report.chosen == truth
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{Evidence, PeakMethod};
    use crate::tl::{AdmittanceModel, Branch, Load, Node, Port};
    use crate::topogen::fixture;

    fn peak(position: f64) -> Peak {
        Peak { position, amplitude: 1.0, prominence: 1.0, method: PeakMethod::Classical }
    }

    fn report(class: AnomalyClass, d: f64) -> DetectionReport {
        DetectionReport {
            detected: true,
            class,
            n_max: Some(10),
            entry: (0, 0),
            first_peak_m: Some(d),
            low_confidence: false,
            evidence: Evidence::default(),
        }
    }

    /// Port at the centre of a star with arms of the given lengths.
    fn star(arms: &[f64]) -> Topology {
        let cable = CableSpec::siso();
        let mut nodes = vec![Node { id: 0, x: 0.0, y: 0.0 }];
        let mut branches = vec![];
        let mut loads = BTreeMap::new();
        for (i, &l) in arms.iter().enumerate() {
            let a = std::f64::consts::TAU * i as f64 / arms.len() as f64;
            nodes.push(Node { id: i + 1, x: l * a.cos(), y: l * a.sin() });
            branches.push(Branch { id: i + 1, a: 0, b: i + 1, length_m: l, cable: cable.clone(), inline: vec![] });
            loads.insert(i + 1, Load::shunt(AdmittanceModel::resistor(100.0)));
        }
        Topology { channels: 1, nodes, branches, loads, ports: vec![Port { node: 0, y0: None }] }
    }

    #[test]
    fn single_branch_has_zero_score() {
        let t = star(&[900.0]);
        let r = localize_single(
            &report(AnomalyClass::LocalizedFault, 450.0),
            &[peak(450.0), peak(900.0)],
            &t,
            0,
            &LocateConfig::default(),
        )
        .unwrap();
        assert_eq!(r.chosen, 1);
        assert_eq!(r.scores[0].score_m, 0.0);
        assert_eq!(r.offset_m, Some(450.0));
        assert!(!r.ambiguous);
    }

    #[test]
    fn fixture_branches_separated_by_secondary_peaks() {
        let t = fixture::topology();
        let cfg = LocateConfig::default();
        let rep = report(AnomalyClass::DistributedFault, fixture::DAMAGE_START);
        let b3 = localize_single(&rep, &[peak(11_500.0), peak(12_400.0), peak(15_950.0)], &t, 0, &cfg).unwrap();
        assert_eq!(b3.chosen, fixture::B3);
        assert_eq!(b3.first_node, fixture::JUNCTION);
        let b2 = localize_single(&rep, &[peak(11_500.0), peak(12_950.0)], &t, 0, &cfg).unwrap();
        assert_eq!(b2.chosen, fixture::B2);
        let lit = LocateConfig { score: ScoreMode::Min, ..cfg };
        assert_eq!(localize_single(&rep, &[peak(11_500.0), peak(15_950.0)], &t, 0, &lit).unwrap().chosen, fixture::B3);
    }

    #[test]
    fn symmetric_branches_are_ambiguous() {
        let r = localize_single(
            &report(AnomalyClass::LocalizedFault, 300.0),
            &[peak(300.0), peak(600.0), peak(1000.0)],
            &star(&[1000.0, 1000.0, 2500.0]),
            0,
            &LocateConfig::default(),
        )
        .unwrap();
        assert!(r.ambiguous);
        assert!(r.chosen == 1 || r.chosen == 2);
    }

    #[test]
    fn impedance_variation_picks_node() {
        let t = fixture::topology();
        let cfg = LocateConfig::default();
        let r = localize_single(&report(AnomalyClass::ImpedanceVariation, 12_990.0), &[], &t, 0, &cfg).unwrap();
        assert_eq!((r.target, r.chosen, r.ambiguous), (TargetKind::Node, fixture::END_B2, false));
        assert!(localize_single(&report(AnomalyClass::ImpedanceVariation, 14_000.0), &[], &t, 0, &cfg).is_err());
    }

    #[test]
    fn distance_beyond_tree_names_nearest_branch() {
        let e = localize_single(&report(AnomalyClass::LocalizedFault, 30_000.0), &[], &fixture::topology(), 0, &LocateConfig::default())
            .unwrap_err()
            .to_string();
        assert!(e.contains("Some(3)"), "{e}");
    }

    #[test]
    fn undetected_report_is_rejected() {
        let r = localize_single(&DetectionReport::not_detected(), &[], &fixture::topology(), 0, &LocateConfig::default());
        assert!(r.is_err());
    }

    fn two_port_star() -> Topology {
        let mut t = star(&[1500.0, 2200.0, 3100.0]);
        t.ports = vec![Port { node: 2, y0: None }, Port { node: 3, y0: None }];
        t
    }

    #[test]
    fn two_ports_locate_fault_on_third_arm() {
        let t = two_port_star();
        let cfg = LocateConfig::default();
        let x = 600.0;
        let exact = BTreeMap::from([(2, 2200.0 + x), (3, 3100.0 + x)]);
        let r = localize_multi(&exact, &t, &cfg).unwrap();
        assert_eq!(r.chosen, 1);
        assert!((r.offset_m.unwrap() - x).abs() <= cfg.bin_width_m);
        assert!(!r.ambiguous);
        let bin = cfg.bin_width_m;
        for (e1, e2) in [(-bin, -bin), (-bin, bin), (bin, -bin), (bin, bin)] {
            let noisy = BTreeMap::from([(2, 2200.0 + x + e1), (3, 3100.0 + x + e2)]);
            assert_eq!(localize_multi(&noisy, &t, &cfg).unwrap().chosen, 1);
        }
    }

    #[test]
    fn one_port_or_inconsistent_distances_fail() {
        let t = two_port_star();
        let cfg = LocateConfig::default();
        assert!(localize_multi(&BTreeMap::from([(2, 1000.0)]), &t, &cfg).is_err());
        // farther apart than any point can be from both
        assert!(localize_multi(&BTreeMap::from([(2, 100.0), (3, 100.0)]), &t, &cfg).is_err());
    }

    #[test]
    fn json_round_trip() {
        let r = localize_single(
            &report(AnomalyClass::LocalizedFault, 450.0),
            &[peak(450.0)],
            &star(&[900.0]),
            0,
            &LocateConfig::default(),
        )
        .unwrap();
        assert_eq!(LocalizationReport::from_json(&r.to_json().unwrap()).unwrap(), r);
    }
}
