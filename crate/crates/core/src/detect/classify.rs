use serde::{Deserialize, Serialize};

use super::peaks::{find_peaks, Peak, PeakSearch};
use super::timedomain::{to_time_domain, TimeTrace, TraceMode, Window};
use super::DeltaTrace;
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::tl::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyClass {
    None,
    ImpedanceVariation,
    LocalizedFault,
    DistributedFault,
}

impl AnomalyClass {
    pub fn name(self) -> &'static str {
        match self {
            AnomalyClass::None => "none",
            AnomalyClass::ImpedanceVariation => "impedance_variation",
            AnomalyClass::LocalizedFault => "localized_fault",
            AnomalyClass::DistributedFault => "distributed_fault",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    /// Delay of an existing echo beyond the anomaly that marks a distributed
    /// fault (distance bins).
    pub thr2_bins: f64,
    /// The largest delay must exceed the largest advance by this factor;
    /// interference shifts peaks both ways, a slower section only delays.
    pub delay_dominance: f64,
    /// First Δ peak to nearest unperturbed echo (distance bins).
    pub thr3_bins: f64,
    /// Largest distance from a perturbed echo to an unperturbed one still
    /// compatible with a load change (bins).
    pub thr4_bins: f64,
    /// Perturbed echoes up to this far past the anomaly are checked for
    /// novelty (bins); echoes before it cannot have changed.
    pub echo_window_bins: f64,
    /// Prominence thresholds relative to the maximum of each curve.
    pub freq_prominence: f64,
    pub time_prominence: f64,
    pub delta_prominence: f64,
    pub min_separation_bins: f64,
    pub window: Window,
    pub padding: usize,
    pub velocity: f64,
    pub mode: TraceMode,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            thr2_bins: 0.15,
            delay_dominance: 2.0,
            thr3_bins: 1.5,
            thr4_bins: 1.5,
            echo_window_bins: 2.0,
            freq_prominence: 0.05,
            time_prominence: 0.02,
            delta_prominence: 0.1,
            min_separation_bins: 1.0,
            window: Window::Hann,
            padding: 4,
            velocity: crate::tl::CableSpec::siso().velocity(),
            mode: TraceMode::Reflectometry,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub freq_peaks_before_hz: Vec<f64>,
    pub freq_peaks_after_hz: Vec<f64>,
    pub max_freq_shift_tones: f64,
    /// Peaks of the Δ time trace, positions in metres.
    pub delta_peaks: Vec<Peak>,
    pub time_peaks_before_m: Vec<f64>,
    pub time_peaks_after_m: Vec<f64>,
    pub first_peak_match_bins: Option<f64>,
    /// Largest distance from a perturbed echo near the anomaly to the nearest
    /// unperturbed echo (bins); large when a new discontinuity appears.
    pub new_echo_gap_bins: f64,
    /// Unperturbed echoes beyond the anomaly with the displacement of their
    /// perturbed counterpart, in metres.
    pub echo_shifts_m: Vec<(f64, f64)>,
    pub max_echo_delay_bins: f64,
    pub max_echo_advance_bins: f64,
    pub bin_width_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub detected: bool,
    pub class: AnomalyClass,
    pub n_max: Option<usize>,
    pub entry: (usize, usize),
    /// Distance of the first Δ peak, the anomaly distance estimate.
    pub first_peak_m: Option<f64>,
    pub low_confidence: bool,
    pub evidence: Evidence,
}

impl DetectionReport {
    pub fn not_detected() -> Self {
        Self {
            detected: false,
            class: AnomalyClass::None,
            n_max: None,
            entry: (0, 0),
            first_peak_m: None,
            low_confidence: false,
            evidence: Evidence::default(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn relative_peaks(y: &[f64], rel: f64, separation: f64) -> Vec<Peak> {
    let top = y.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return vec![];
    }
    find_peaks(y, PeakSearch { min_prominence: rel * top, min_separation: separation })
}

/// Largest distance from any point of `from` to its nearest point in `to`.
fn directed_gap(from: &[f64], to: &[f64]) -> f64 {
    from.iter()
        .map(|a| to.iter().map(|b| (a - b).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Time trace of one entry with its band mean removed, so the direct
/// port-side term does not swamp the echoes.
fn raw_trace(s: &Spectrum, entry: (usize, usize), cfg: &ClassifyConfig) -> Result<TimeTrace> {
    let x = s.entry(entry.0, entry.1);
    let mean = x.iter().sum::<C64>() / x.len() as f64;
    let centred: Vec<C64> = x.iter().map(|v| v - mean).collect();
    to_time_domain(&centred, &s.grid, cfg.window, cfg.velocity, cfg.mode, cfg.padding)
}

/// Time trace of the Δ deviation for one entry.
pub fn delta_time_trace(delta: &DeltaTrace, entry: (usize, usize), cfg: &ClassifyConfig) -> Result<TimeTrace> {
    to_time_domain(&delta.deviation_entry(entry.0, entry.1), &delta.grid, cfg.window, cfg.velocity, cfg.mode, cfg.padding)
}

/// Peaks of a Δ time trace with positions in metres.
pub fn delta_peaks(trace: &TimeTrace, cfg: &ClassifyConfig) -> Vec<Peak> {
    relative_peaks(&trace.magnitude, cfg.delta_prominence, cfg.min_separation_bins * trace.samples_per_bin())
        .into_iter()
        .map(|p| p.scaled(trace.sample_spacing_m))
        .collect()
}

/// Classification of a confirmed anomaly from the estimates before and after
/// it and the Δ between them.
pub fn classify(
    before: &Spectrum,
    after: &Spectrum,
    delta: &DeltaTrace,
    n_max: Option<usize>,
    entry: (usize, usize),
    cfg: &ClassifyConfig,
) -> Result<DetectionReport> {
    if !before.same_shape(after) || delta.values.len() != before.values.len() {
        return Err(Error::domain("classification inputs have different shapes"));
    }
    let grid = before.grid;
    let mut ev = Evidence::default();

    // resonance positions, reported for inspection
    let mag = |s: &Spectrum| -> Vec<f64> { s.entry(entry.0, entry.1).iter().map(|z| z.norm()).collect() };
    let tone_hz = |p: &Peak| grid.delta_f() * (p.position + 1.0);
    let fb: Vec<f64> = relative_peaks(&mag(before), cfg.freq_prominence, 1.0).iter().map(tone_hz).collect();
    let fa: Vec<f64> = relative_peaks(&mag(after), cfg.freq_prominence, 1.0).iter().map(tone_hz).collect();
    ev.max_freq_shift_tones = directed_gap(&fb, &fa) / grid.delta_f();
    ev.freq_peaks_before_hz = fb;
    ev.freq_peaks_after_hz = fa;

    // Δ peaks and the anomaly distance estimate
    let dtrace = delta_time_trace(delta, entry, cfg)?;
    let bin = dtrace.bin_width_m;
    ev.bin_width_m = bin;
    ev.delta_peaks = delta_peaks(&dtrace, cfg);
    let first = ev.delta_peaks.first().map(|p| p.position);

    // echoes of the unperturbed and perturbed responses; the first bin holds
    // the residue of the direct term and is ignored
    let echoes = |t: &TimeTrace| -> Vec<f64> {
        relative_peaks(&t.magnitude, cfg.time_prominence, cfg.min_separation_bins * t.samples_per_bin())
            .iter()
            .map(|p| t.distance(p.position))
            .filter(|&d| d > t.bin_width_m)
            .collect()
    };
    let tb = raw_trace(before, entry, cfg)?;
    let ta = raw_trace(after, entry, cfg)?;
    ev.time_peaks_before_m = echoes(&tb);
    ev.time_peaks_after_m = echoes(&ta);
    let window = first.unwrap_or(0.0) + cfg.echo_window_bins * bin;
    let near: Vec<f64> = ev.time_peaks_after_m.iter().copied().filter(|&q| q <= window).collect();
    ev.new_echo_gap_bins = directed_gap(&near, &ev.time_peaks_before_m) / bin;
    ev.first_peak_match_bins = first.and_then(|d| {
        ev.time_peaks_before_m.iter().map(|p| (p - d).abs() / bin).min_by(f64::total_cmp)
    });

    // (i) echoes travelling through an aged section arrive later; a shunt
    // changes their amplitude but not their delay
    if let Some(d) = first {
        for &e in ev.time_peaks_before_m.iter().filter(|&&e| e > d + bin) {
            let nearest = ev.time_peaks_after_m.iter().map(|q| q - e).min_by(|a, b| a.abs().total_cmp(&b.abs()));
            if let Some(shift) = nearest.filter(|s| s.abs() < bin) {
                ev.echo_shifts_m.push((e, shift));
            }
        }
    }
    ev.max_echo_delay_bins = ev.echo_shifts_m.iter().map(|s| s.1).fold(0.0, f64::max) / bin;
    ev.max_echo_advance_bins = ev.echo_shifts_m.iter().map(|s| -s.1).fold(0.0, f64::max) / bin;

    let mut low_confidence = false;
    let class = if first.is_none() {
        low_confidence = true;
        AnomalyClass::LocalizedFault
    } else if ev.max_echo_delay_bins > cfg.thr2_bins
        && ev.max_echo_delay_bins > cfg.delay_dominance * ev.max_echo_advance_bins
    {
        AnomalyClass::DistributedFault
    } else if ev.first_peak_match_bins.is_some_and(|m| m < cfg.thr3_bins) && ev.new_echo_gap_bins < cfg.thr4_bins {
        AnomalyClass::ImpedanceVariation
    } else {
        AnomalyClass::LocalizedFault
    };
    Ok(DetectionReport { detected: true, class, n_max, entry, first_peak_m: first, low_confidence, evidence: ev })
}
