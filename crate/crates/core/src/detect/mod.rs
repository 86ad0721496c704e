//! Δ traces against a tracked reference, the 3σ detector with confirmation,
//! time-domain analysis and anomaly classification.

mod classify;
mod music;
mod peaks;
mod timedomain;

pub use classify::{classify, delta_peaks, delta_time_trace, AnomalyClass, ClassifyConfig, DetectionReport, Evidence};
pub use music::{root_music_delays, root_music_with_window, MusicResult};
pub use peaks::{find_peaks, Peak, PeakMethod, PeakSearch};
pub use timedomain::{to_time_domain, TimeTrace, TraceMode, Window};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::tl::{FrequencyGrid, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaModel {
    Superposition,
    Chain,
}

impl DeltaModel {
    pub fn name(self) -> &'static str {
        match self {
            DeltaModel::Superposition => "superposition",
            DeltaModel::Chain => "chain",
        }
    }
}

impl std::str::FromStr for DeltaModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "superposition" | "sup" => Ok(DeltaModel::Superposition),
            "chain" | "ch" => Ok(DeltaModel::Chain),
            other => Err(Error::config(format!("unknown delta model '{other}'"))),
        }
    }
}

/// `Δ_sup = A - A_ref` or `Δ_ch = A A_ref^-1` per tone.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTrace {
    pub model: DeltaModel,
    pub grid: FrequencyGrid,
    pub values: Vec<CMat>,
}

impl DeltaTrace {
    /// Departure from "no change": `Δ_sup` itself, or `Δ_ch - I`.
    pub fn deviation(&self) -> Vec<CMat> {
        match self.model {
            DeltaModel::Superposition => self.values.clone(),
            DeltaModel::Chain => {
                let n = self.values.first().map_or(1, |m| m.nrows());
                let id = linalg::identity(n);
                self.values.iter().map(|m| m - &id).collect()
            }
        }
    }

    /// One matrix entry of the deviation across tones.
    pub fn deviation_entry(&self, i: usize, j: usize) -> Vec<C64> {
        self.deviation().iter().map(|m| m[(i, j)]).collect()
    }
}

/// Δ of `estimate` against reference values.
pub fn delta_against(estimate: &Spectrum, reference: &[CMat], model: DeltaModel) -> Result<DeltaTrace> {
    if reference.len() != estimate.values.len() {
        return Err(Error::domain("reference and estimate grids differ"));
    }
    let values = match model {
        DeltaModel::Superposition => estimate.values.iter().zip(reference).map(|(a, r)| a - r).collect(),
        DeltaModel::Chain => {
            let mut bad = Vec::new();
            let mut out = Vec::with_capacity(reference.len());
            for (k, (a, r)) in estimate.values.iter().zip(reference).enumerate() {
                match linalg::inverse(r) {
                    Some(inv) => out.push(a * inv),
                    None => bad.push(k),
                }
            }
            if let Some(&first) = bad.first() {
                return Err(Error::numeric(format!("singular reference in chain model at tones {bad:?}"), first));
            }
            out
        }
    };
    Ok(DeltaTrace { model, grid: estimate.grid, values })
}

pub fn delta(estimate: &Spectrum, state: &ReferenceState, model: DeltaModel) -> Result<DeltaTrace> {
    delta_against(estimate, &state.reference, model)
}

/// Which matrix entries feed the detection statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntrySelection {
    All,
    Entry(usize, usize),
}

impl EntrySelection {
    fn entries(self, n: usize) -> Vec<(usize, usize)> {
        match self {
            EntrySelection::All => (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).collect(),
            EntrySelection::Entry(i, j) => vec![(i, j)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub model: DeltaModel,
    pub entries: EntrySelection,
    /// Threshold in standard deviations.
    pub sigma_factor: f64,
    /// Consecutive exceedances at the same index needed to confirm.
    pub confirmations: usize,
    /// Allowed drift of the exceedance index between confirmations (tones).
    pub index_slack: usize,
    pub ema_alpha: f64,
    pub warmup: usize,
    /// Relative floor on σ so a noiseless stream does not trigger on rounding.
    pub sigma_floor: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            model: DeltaModel::Superposition,
            entries: EntrySelection::All,
            sigma_factor: 3.0,
            confirmations: 5,
            index_slack: 1,
            ema_alpha: 0.05,
            warmup: 50,
            sigma_floor: 1e-9,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_factor > 0.0 && self.confirmations >= 1 && self.warmup >= 1) {
            return Err(Error::config("detector thresholds must be positive"));
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return Err(Error::config("ema_alpha must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pending {
    pub n_max: usize,
    pub hits: usize,
}

/// Running reference `Ã_ref`, its per-entry noise variance and the pending
/// exceedance candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceState {
    pub grid: FrequencyGrid,
    pub reference: Vec<CMat>,
    /// Per tone, per entry (column-major) variance of estimates about the reference.
    pub variance: Vec<Vec<f64>>,
    pub count: usize,
    pub pending: Option<Pending>,
    warm_sum: Vec<CMat>,
    warm_sq: Vec<Vec<f64>>,
}

impl ReferenceState {
    pub fn new(grid: FrequencyGrid, channels: usize) -> Self {
        let zeros = vec![CMat::zeros(channels, channels); grid.count()];
        let zero_var = vec![vec![0.0; channels * channels]; grid.count()];
        Self {
            grid,
            reference: zeros.clone(),
            variance: zero_var.clone(),
            count: 0,
            pending: None,
            warm_sum: zeros,
            warm_sq: zero_var,
        }
    }

    /// State after ingesting `estimates` as warm-up.
    pub fn from_warmup(estimates: &[Spectrum]) -> Result<Self> {
        let first = estimates.first().ok_or_else(|| Error::domain("empty warm-up"))?;
        let mut s = Self::new(first.grid, first.channels());
        for e in estimates {
            s.absorb_warmup(e)?;
        }
        Ok(s)
    }

    pub fn channels(&self) -> usize {
        self.reference.first().map_or(0, |m| m.nrows())
    }

    pub fn std(&self, tone: usize, i: usize, j: usize) -> f64 {
        self.variance[tone][j * self.channels() + i].sqrt()
    }

    fn check(&self, e: &Spectrum) -> Result<()> {
        if e.grid != self.grid || e.channels() != self.channels() {
            return Err(Error::domain("estimate does not match reference grid"));
        }
        Ok(())
    }

    fn absorb_warmup(&mut self, e: &Spectrum) -> Result<()> {
        self.check(e)?;
        self.count += 1;
        let c = self.count as f64;
        for k in 0..self.reference.len() {
            self.warm_sum[k] += &e.values[k];
            for (idx, z) in e.values[k].iter().enumerate() {
                self.warm_sq[k][idx] += z.norm_sqr();
            }
            self.reference[k] = &self.warm_sum[k] / C64::new(c, 0.0);
            for (idx, m) in self.reference[k].iter().enumerate() {
                let var = self.warm_sq[k][idx] / c - m.norm_sqr();
                // unbiased over the warm-up sample
                self.variance[k][idx] = if c > 1.0 { (var * c / (c - 1.0)).max(0.0) } else { 0.0 };
            }
        }
        Ok(())
    }

    fn absorb(&mut self, e: &Spectrum, alpha: f64) {
        self.count += 1;
        for k in 0..self.reference.len() {
            let diff = &e.values[k] - &self.reference[k];
            for (idx, d) in diff.iter().enumerate() {
                self.variance[k][idx] = (1.0 - alpha) * self.variance[k][idx] + alpha * d.norm_sqr();
            }
            self.reference[k] += diff * C64::new(alpha, 0.0);
        }
    }

    /// Standard deviation of each deviation entry, propagated to first order
    /// through `A_ref^-1` for the chain model.
    fn deviation_std(&self, model: DeltaModel, floor: f64) -> Result<Vec<CMat>> {
        let n = self.channels();
        self.reference
            .iter()
            .zip(&self.variance)
            .enumerate()
            .map(|(k, (r, var))| {
                let scale = linalg::norm(r) / n as f64;
                let sd = CMat::from_fn(n, n, |i, j| C64::new(var[j * n + i].sqrt(), 0.0));
                let out = match model {
                    DeltaModel::Superposition => sd.map(|s| C64::new(s.re.max(floor * scale), 0.0)),
                    DeltaModel::Chain => {
                        let inv = linalg::inverse(r).ok_or_else(|| Error::numeric("singular reference", k))?;
                        let inv_scale = linalg::norm(&inv) / n as f64;
                        CMat::from_fn(n, n, |i, j| {
                            let v: f64 = (0..n).map(|m| var[m * n + i] * inv[(m, j)].norm_sqr()).sum();
                            C64::new(v.sqrt().max(floor * scale * inv_scale), 0.0)
                        })
                    }
                };
                Ok(out)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StepOutcome {
    Warmup,
    Normal { statistic: f64 },
    Candidate { n_max: usize, hits: usize, statistic: f64 },
    Detected { n_max: usize, entry: (usize, usize), statistic: f64 },
}

impl StepOutcome {
    pub fn detected(&self) -> bool {
        matches!(self, StepOutcome::Detected { .. })
    }
}

/// Normalized exceedance `|Δ| / σ` maximized over selected entries, per tone,
/// plus the maximizing entry.
pub fn normalized_deviation(
    estimate: &Spectrum,
    state: &ReferenceState,
    config: &DetectConfig,
) -> Result<Vec<(f64, (usize, usize))>> {
    let d = delta(estimate, state, config.model)?.deviation();
    let sd = state.deviation_std(config.model, config.sigma_floor)?;
    let entries = config.entries.entries(state.channels());
    Ok(d.iter()
        .zip(&sd)
        .map(|(dv, s)| {
            entries
                .iter()
                .map(|&(i, j)| (dv[(i, j)].norm() / s[(i, j)].re, (i, j)))
                .fold((0.0, (0, 0)), |a, b| if b.0 > a.0 { b } else { a })
        })
        .collect())
}

/// One step of the detector: warm-up, exceedance bookkeeping, confirmation,
/// or a reference update with the new estimate.
pub fn detect_step(estimate: &Spectrum, state: &mut ReferenceState, config: &DetectConfig) -> Result<StepOutcome> {
    config.validate()?;
    state.check(estimate)?;
    if state.count < config.warmup {
        state.absorb_warmup(estimate)?;
        return Ok(StepOutcome::Warmup);
    }
    let z = normalized_deviation(estimate, state, config)?;
    let (n_max, &(stat, entry)) = z
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .ok_or_else(|| Error::domain("empty grid"))?;
    if stat > config.sigma_factor {
        let hits = match state.pending {
            Some(p) if n_max.abs_diff(p.n_max) <= config.index_slack || z[p.n_max].0 > config.sigma_factor => {
                p.hits + 1
            }
            _ => 1,
        };
        let anchor = state.pending.filter(|_| hits > 1).map_or(n_max, |p| p.n_max);
        if hits >= config.confirmations {
            state.pending = Some(Pending { n_max: anchor, hits });
            return Ok(StepOutcome::Detected { n_max: anchor, entry, statistic: stat });
        }
        state.pending = Some(Pending { n_max: anchor, hits });
        return Ok(StepOutcome::Candidate { n_max: anchor, hits, statistic: stat });
    }
    state.pending = None;
    state.absorb(estimate, config.ema_alpha);
    Ok(StepOutcome::Normal { statistic: stat })
}

/// Outcome of watching a whole stream of estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monitoring {
    /// Index of the confirming estimate.
    pub detected_at: Option<usize>,
    pub report: DetectionReport,
}

/// Feed `stream` through the detector and classify the first confirmed
/// anomaly: the frozen reference against the mean of the confirming run.
pub fn monitor(stream: &[Spectrum], det: &DetectConfig, cls: &ClassifyConfig) -> Result<Monitoring> {
    let first = stream.first().ok_or_else(|| Error::domain("empty estimate stream"))?;
    let mut state = ReferenceState::new(first.grid, first.channels());
    for (i, est) in stream.iter().enumerate() {
        if let StepOutcome::Detected { n_max, entry, .. } = detect_step(est, &mut state, det)? {
            let run = &stream[i + 1 - det.confirmations.min(i + 1)..=i];
            let mut after = run[0].clone();
            for (k, v) in after.values.iter_mut().enumerate() {
                *v = run.iter().map(|s| &s.values[k]).sum::<CMat>() / C64::new(run.len() as f64, 0.0);
            }
            let before = Spectrum { values: state.reference.clone(), ..est.clone() };
            let delta = delta_against(&after, &before.values, det.model)?;
            let report = classify(&before, &after, &delta, Some(n_max), entry, cls)?;
            return Ok(Monitoring { detected_at: Some(i), report });
        }
    }
    Ok(Monitoring { detected_at: None, report: DetectionReport::not_detected() })
}
