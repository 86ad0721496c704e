//! Noisy estimation of network quantities.
//!
//! The modem signal chain is not simulated sample by sample; the combined
//! estimation error is applied directly to the estimated quantity as zero-mean
//! circular complex Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::tl::Spectrum;

/// Background network noise, in dB relative to the signal power at `f_ref_hz`,
/// falling by `slope_db_per_decade`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkNoise {
    pub n0_db: f64,
    pub slope_db_per_decade: f64,
    pub f_ref_hz: f64,
}

impl Default for NetworkNoise {
    fn default() -> Self {
        Self { n0_db: -30.0, slope_db_per_decade: 35.0, f_ref_hz: 10e3 }
    }
}

impl NetworkNoise {
    pub fn relative_db(&self, f: f64) -> f64 {
        self.n0_db - self.slope_db_per_decade * (f / self.f_ref_hz).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NoiseModel {
    Physical {
        tx_dbc: f64,
        rx_dbc: f64,
        network: Option<NetworkNoise>,
    },
    /// Quantity-to-noise ratio in dB at every tone; `+inf` is noiseless.
    DirectQnr { qnr_db: f64 },
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::physical()
    }
}

impl NoiseModel {
    pub fn physical() -> Self {
        NoiseModel::Physical { tx_dbc: -50.0, rx_dbc: -60.0, network: Some(NetworkNoise::default()) }
    }

    pub fn noiseless() -> Self {
        NoiseModel::DirectQnr { qnr_db: f64::INFINITY }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Physical { tx_dbc, rx_dbc, network } => {
                if !(tx_dbc < 0.0 && rx_dbc < 0.0) {
                    return Err(Error::config("noise dBc levels must be negative"));
                }
                if let Some(n) = network {
                    if !(n.n0_db.is_finite() && n.slope_db_per_decade.is_finite() && n.f_ref_hz > 0.0) {
                        return Err(Error::config("invalid network noise parameters"));
                    }
                }
                Ok(())
            }
            NoiseModel::DirectQnr { qnr_db } if qnr_db.is_nan() || qnr_db == f64::NEG_INFINITY => {
                Err(Error::config("QNR must be finite or +inf"))
            }
            NoiseModel::DirectQnr { .. } => Ok(()),
        }
    }

    /// Single-estimate noise variance `E|X_N|^2` for every tone and entry.
    pub fn variance(&self, truth: &Spectrum) -> Vec<Vec<f64>> {
        let n = truth.channels();
        let power = |m: &CMat| -> Vec<f64> { m.iter().map(|z| z.norm_sqr()).collect() };
        match *self {
            NoiseModel::DirectQnr { qnr_db } => {
                let scale = 10f64.powf(-qnr_db / 10.0);
                truth.values.iter().map(|m| power(m).into_iter().map(|p| p * scale).collect()).collect()
            }
            NoiseModel::Physical { tx_dbc, rx_dbc, network } => {
                let chain = 10f64.powf(tx_dbc / 10.0) + 10f64.powf(rx_dbc / 10.0);
                let reference = network.map(|nn| {
                    let k = truth.grid.nearest_index(nn.f_ref_hz);
                    power(&truth.values[k])
                });
                truth
                    .grid
                    .tones()
                    .zip(&truth.values)
                    .map(|(f, m)| {
                        let p = power(m);
                        (0..n * n)
                            .map(|e| {
                                let mut v = p[e] * chain;
                                if let (Some(nn), Some(r)) = (network, &reference) {
                                    v += r[e] * 10f64.powf(nn.relative_db(f) / 10.0);
                                }
                                v
                            })
                            .collect()
                    })
                    .collect()
            }
        }
    }
}

/// How often and with how much averaging a quantity is re-estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recurrence", rename_all = "snake_case")]
pub enum MeasurementPlan {
    /// Symbol-level sensing: one noisy estimate per estimation interval.
    Sls { symbols_per_estimate: usize },
    /// Mains-level sensing: `averages` estimates, one per group of
    /// `half_periods` mains half cycles, are averaged.
    Mls { half_periods: usize, averages: usize },
}

impl Default for MeasurementPlan {
    fn default() -> Self {
        MeasurementPlan::Sls { symbols_per_estimate: 1 }
    }
}

impl MeasurementPlan {
    pub fn averages(&self) -> usize {
        match *self {
            MeasurementPlan::Sls { .. } => 1,
            MeasurementPlan::Mls { averages, .. } => averages,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            MeasurementPlan::Sls { symbols_per_estimate } => symbols_per_estimate >= 1,
            MeasurementPlan::Mls { half_periods, averages } => half_periods >= 1 && averages >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config("measurement plan counts must be >= 1"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedSpectrum {
    pub spectrum: Spectrum,
    pub noise: NoiseModel,
    pub averages: usize,
    /// Noise variance actually applied, per tone and entry (column-major).
    pub variance: Vec<Vec<f64>>,
}

impl EstimatedSpectrum {
    /// Wrap an exact spectrum as a noiseless estimate.
    pub fn exact(spectrum: Spectrum) -> Self {
        let n = spectrum.channels();
        let variance = vec![vec![0.0; n * n]; spectrum.values.len()];
        Self { spectrum, noise: NoiseModel::noiseless(), averages: 1, variance }
    }
}

/// Aggregate QNR implied by a per-tone variance: inverse of the mean
/// relative noise power over tones with non-zero truth.
pub fn nominal_qnr_db(truth: &Spectrum, variance: &[Vec<f64>]) -> f64 {
    let mut rel = 0.0;
    let mut count = 0usize;
    for (m, v) in truth.values.iter().zip(variance) {
        let s: f64 = m.iter().map(|z| z.norm_sqr()).sum();
        if s > 0.0 {
            rel += v.iter().sum::<f64>() / s;
            count += 1;
        }
    }
    if count == 0 || rel == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * (rel / count as f64).log10()
    }
}

/// Deterministic mixing of several integers into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    parts.iter().fold(0x5eed_u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Draw one estimate of `truth`. Averaging `M` independent estimates is
/// applied in distribution (variance / M).
pub fn simulate_measurement(
    truth: &Spectrum,
    noise: &NoiseModel,
    plan: &MeasurementPlan,
    seed: u64,
) -> Result<EstimatedSpectrum> {
    noise.validate()?;
    plan.validate()?;
    let m = plan.averages() as f64;
    let n = truth.channels();
    if matches!(noise, NoiseModel::DirectQnr { qnr_db } if *qnr_db == f64::INFINITY) {
        return Ok(EstimatedSpectrum {
            averages: plan.averages(),
            noise: *noise,
            ..EstimatedSpectrum::exact(truth.clone())
        });
    }
    let mut variance = noise.variance(truth);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut est = truth.clone();
    for (value, var) in est.values.iter_mut().zip(variance.iter_mut()) {
        for e in 0..n * n {
            var[e] /= m;
            let s = (var[e] / 2.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            value[(e % n, e / n)] += C64::new(re * s, im * s);
        }
    }
    Ok(EstimatedSpectrum { spectrum: est, noise: *noise, averages: plan.averages(), variance })
}

/// Endless sequence of independent estimates of a (possibly switching) truth.
#[derive(Debug, Clone)]
pub struct SensorStream {
    pub noise: NoiseModel,
    pub plan: MeasurementPlan,
    pub seed: u64,
}

impl SensorStream {
    pub fn new(noise: NoiseModel, plan: MeasurementPlan, seed: u64) -> Self {
        Self { noise, plan, seed }
    }

    pub fn estimate(&self, truth: &Spectrum, step: u64) -> Result<EstimatedSpectrum> {
        simulate_measurement(truth, &self.noise, &self.plan, derive_seed(&[self.seed, step]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QnrReport {
    /// Per tone, dB; `+inf` when no noise was observed, NaN for excluded tones.
    pub per_tone_db: Vec<f64>,
    pub aggregate_db: f64,
    /// Tones where the true quantity vanishes.
    pub excluded: Vec<usize>,
}

/// Empirical QNR `|X_0|^2 / E|X_N|^2` from one or more realizations.
/// Matrix tones use Frobenius norms; the aggregate is the inverse of the mean
/// relative noise power over tones.
pub fn qnr_of(estimates: &[&Spectrum], truth: &Spectrum) -> Result<QnrReport> {
    if estimates.is_empty() {
        return Err(Error::domain("no realizations given"));
    }
    if estimates.iter().any(|e| !e.same_shape(truth)) {
        return Err(Error::domain("estimate and truth grids differ"));
    }
    let r = estimates.len() as f64;
    let mut per_tone = Vec::with_capacity(truth.values.len());
    let mut excluded = Vec::new();
    let mut rel_sum = 0.0;
    let mut counted = 0usize;
    for (k, x0) in truth.values.iter().enumerate() {
        let signal: f64 = x0.iter().map(|z| z.norm_sqr()).sum();
        if signal == 0.0 {
            excluded.push(k);
            per_tone.push(f64::NAN);
            continue;
        }
        let noise = estimates.iter().map(|e| (&e.values[k] - x0).norm_squared()).sum::<f64>() / r;
        let rel = noise / signal;
        rel_sum += rel;
        counted += 1;
        per_tone.push(if rel == 0.0 { f64::INFINITY } else { -10.0 * rel.log10() });
    }
    let aggregate_db = if counted == 0 {
        f64::NAN
    } else if rel_sum == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * (rel_sum / counted as f64).log10()
    };
    Ok(QnrReport { per_tone_db: per_tone, aggregate_db, excluded })
}
