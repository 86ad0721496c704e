use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};
use crate::tl::FrequencyGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    Hann,
}

impl Window {
    /// Weight of tone `k` (0-based) out of `count`; the taper reaches zero
    /// just outside the band, at DC and at `count + 1`.
    pub fn weight(self, k: usize, count: usize) -> f64 {
        match self {
            Window::Rectangular => 1.0,
            Window::Hann => (PI * (k + 1) as f64 / (count + 1) as f64).sin().powi(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    /// Round trip: `d = v t / 2`.
    Reflectometry,
    /// One way: `d = v t`.
    EndToEnd,
}

/// Envelope of the windowed band-limited impulse response on a distance axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    pub magnitude: Vec<f64>,
    /// Distance between consecutive samples (m).
    pub sample_spacing_m: f64,
    /// Resolution cell `v / (2 count Δf)` (reflectometry) or `v / (count Δf)`.
    pub bin_width_m: f64,
    pub velocity: f64,
    pub mode: TraceMode,
}

impl TimeTrace {
    pub fn distance(&self, sample: f64) -> f64 {
        sample * self.sample_spacing_m
    }

    pub fn samples_per_bin(&self) -> f64 {
        self.bin_width_m / self.sample_spacing_m
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("distance_m,magnitude\n");
        for (i, m) in self.magnitude.iter().enumerate() {
            s.push_str(&format!("{},{}\n", self.distance(i as f64), m));
        }
        s
    }
}

/// Inverse transform of per-tone values to a distance-indexed envelope.
///
/// Only positive tones are populated (DC and the conjugate-symmetric tail of
/// the Hermitian extension are left out), which yields the analytic signal of
/// the real impulse response; its magnitude is the echo envelope without the
/// carrier ripple. Amplitudes are normalized so that a single unit echo
/// `exp(-j 2 pi f tau)` produces a peak of height 1.
pub fn to_time_domain(
    values: &[C64],
    grid: &FrequencyGrid,
    window: Window,
    velocity: f64,
    mode: TraceMode,
    padding: usize,
) -> Result<TimeTrace> {
    if !(velocity.is_finite() && velocity > 0.0) {
        return Err(Error::config("velocity must be positive"));
    }
    if values.len() != grid.count() {
        return Err(Error::domain("trace values do not match grid"));
    }
    let count = grid.count();
    let n = padding.max(1) * 2 * (count + 1);
    let mut buf = vec![ZERO; n];
    let mut wsum = 0.0;
    for (k, v) in values.iter().enumerate() {
        let w = window.weight(k, count);
        wsum += w;
        buf[k + 1] = v * w;
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let magnitude = buf.iter().map(|z| z.norm() / wsum).collect();
    let dt = 1.0 / (n as f64 * grid.delta_f());
    let (factor, cell) = match mode {
        TraceMode::Reflectometry => (0.5, velocity / (2.0 * count as f64 * grid.delta_f())),
        TraceMode::EndToEnd => (1.0, velocity / (count as f64 * grid.delta_f())),
    };
    Ok(TimeTrace { magnitude, sample_spacing_m: velocity * dt * factor, bin_width_m: cell, velocity, mode })
}
