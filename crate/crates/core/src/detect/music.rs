use std::f64::consts::PI;

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::peaks::{find_peaks, PeakSearch};
use super::timedomain::{to_time_domain, TraceMode, Window};
use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};
use crate::tl::FrequencyGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicResult {
    /// Ascending delays (s).
    pub delays_s: Vec<f64>,
    pub distances_m: Vec<f64>,
    /// Set when the covariance was rank deficient and classical peak picking
    /// on the time trace was used instead.
    pub fallback: bool,
}

/// Delays of the `model_order` strongest exponentials `exp(-j 2 pi f tau)`
/// in `values`, by root-MUSIC with forward-backward smoothing over
/// sub-bands of `count / 2` tones.
pub fn root_music_delays(
    values: &[C64],
    grid: &FrequencyGrid,
    model_order: usize,
    velocity: f64,
    mode: TraceMode,
) -> Result<MusicResult> {
    root_music_with_window(values, grid, model_order, grid.count() / 2, velocity, mode)
}

pub fn root_music_with_window(
    values: &[C64],
    grid: &FrequencyGrid,
    model_order: usize,
    window: usize,
    velocity: f64,
    mode: TraceMode,
) -> Result<MusicResult> {
    let count = values.len();
    if count != grid.count() {
        return Err(Error::domain("values do not match grid"));
    }
    let to_dist = |tau: f64| match mode {
        TraceMode::Reflectometry => velocity * tau / 2.0,
        TraceMode::EndToEnd => velocity * tau,
    };
    if model_order == 0 {
        return Ok(MusicResult { delays_s: vec![], distances_m: vec![], fallback: false });
    }
    if 2 * model_order >= count {
        return Err(Error::config("model order must be below half the tone count"));
    }
    let l = window.clamp(model_order + 1, count - model_order);
    let snapshots = count - l + 1;
    // forward-backward smoothed covariance
    let mut r = DMatrix::<C64>::zeros(l, l);
    for s in 0..snapshots {
        let x = &values[s..s + l];
        for i in 0..l {
            for j in 0..l {
                r[(i, j)] += x[i] * x[j].conj();
            }
        }
    }
    let jr = DMatrix::from_fn(l, l, |i, j| r[(l - 1 - i, l - 1 - j)].conj());
    let r = (r + jr) / C64::new(2.0 * snapshots as f64, 0.0);
    let eig = SymmetricEigen::new(r);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let weakest_signal = eig.eigenvalues[order[model_order - 1]];
    if !(top > 0.0) || weakest_signal <= 1e-12 * top {
        let delays = fallback_delays(values, grid, model_order)?;
        let distances_m = delays.iter().map(|&t| to_dist(t)).collect();
        return Ok(MusicResult { delays_s: delays, distances_m, fallback: true });
    }
    // C = E_n E_n^H and the polynomial coefficients along its diagonals
    let mut coeffs = vec![ZERO; 2 * l - 1];
    for &idx in &order[model_order..] {
        let e = eig.eigenvectors.column(idx);
        for i in 0..l {
            for j in 0..l {
                coeffs[j + l - 1 - i] += e[i] * e[j].conj();
            }
        }
    }
    let roots = polynomial_roots(&coeffs).ok_or_else(|| Error::numeric("root-MUSIC polynomial rooting", 0))?;
    let mut inside: Vec<C64> = roots.into_iter().filter(|z| z.norm() <= 1.0 + 1e-9).collect();
    inside.sort_by(|a, b| (1.0 - a.norm()).abs().total_cmp(&(1.0 - b.norm()).abs()));
    let period = 1.0 / grid.delta_f();
    let mut chosen: Vec<C64> = Vec::new();
    for z in inside {
        if chosen.len() == model_order {
            break;
        }
        // numerically split double roots of a noiseless input
        if chosen.iter().all(|c| (c.arg() - z.arg()).abs() > 1e-4) {
            chosen.push(z);
        }
    }
    let mut delays: Vec<f64> = chosen
        .iter()
        .map(|z| (-z.arg() / (2.0 * PI * grid.delta_f())).rem_euclid(period))
        .collect();
    delays.sort_by(f64::total_cmp);
    let distances_m = delays.iter().map(|&t| to_dist(t)).collect();
    Ok(MusicResult { delays_s: delays, distances_m, fallback: false })
}

/// Roots of `sum_m c[m] z^m` from the eigenvalues of the companion matrix.
fn polynomial_roots(c: &[C64]) -> Option<Vec<C64>> {
    let mut c = c.to_vec();
    while c.last().is_some_and(|z| z.norm() == 0.0) {
        c.pop();
    }
    let deg = c.len().checked_sub(1)?;
    if deg == 0 {
        return Some(vec![]);
    }
    let lead = c[deg];
    let mut m = DMatrix::<C64>::zeros(deg, deg);
    for i in 1..deg {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..deg {
        m[(i, deg - 1)] = -c[i] / lead;
    }
    Schur::new(m).eigenvalues().map(|v| v.iter().copied().collect())
}

/// Strongest classical peaks of the time trace, as delays.
fn fallback_delays(values: &[C64], grid: &FrequencyGrid, model_order: usize) -> Result<Vec<f64>> {
    // unit velocity in end-to-end mode makes the distance axis a time axis
    let trace = to_time_domain(values, grid, Window::Hann, 1.0, TraceMode::EndToEnd, 4)?;
    let mut peaks = find_peaks(
        &trace.magnitude,
        PeakSearch { min_prominence: 0.0, min_separation: trace.samples_per_bin() },
    );
    peaks.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    peaks.truncate(model_order);
    let mut d: Vec<f64> = peaks.iter().map(|p| trace.distance(p.position)).collect();
    d.sort_by(f64::total_cmp);
    Ok(d)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    fn modes(grid: &FrequencyGrid, taus: &[f64], amps: &[f64]) -> Vec<C64> {
        grid.tones()
            .map(|f| taus.iter().zip(amps).map(|(t, a)| C64::from_polar(*a, -2.0 * PI * f * t)).sum())
            .collect()
    }

    #[test]
    fn single_mode_is_exact() {
        let g = FrequencyGrid::narrowband();
        let x = modes(&g, &[5e-6], &[0.7]);
        for window in [2, 10, 58, 100] {
            let r = root_music_with_window(&x, &g, 1, window, 1.58e8, TraceMode::Reflectometry).unwrap();
            assert!(!r.fallback);
            assert!((r.delays_s[0] - 5e-6).abs() / 5e-6 < 1e-6, "window {window}: {}", r.delays_s[0]);
        }
    }

    #[test]
    fn resolves_below_fourier_limit() {
        let g = FrequencyGrid::narrowband();
        let fourier = 1.0 / (g.count() as f64 * g.delta_f());
        let taus = [20e-6, 20e-6 + 0.5 * fourier];
        let mut x = modes(&g, &taus, &[1.0, 0.8]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let power = x.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64;
        let s = (power * 1e-4 / 2.0).sqrt();
        for z in &mut x {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z += C64::new(re * s, im * s);
        }
        let r = root_music_delays(&x, &g, 2, 1.58e8, TraceMode::Reflectometry).unwrap();
        for (est, t) in r.delays_s.iter().zip(taus) {
            assert!((est - t).abs() / t < 0.05, "{est} vs {t}");
        }
    }

    #[test]
    fn zero_order_is_empty() {
        let g = FrequencyGrid::narrowband();
        let r = root_music_delays(&modes(&g, &[1e-6], &[1.0]), &g, 0, 1.58e8, TraceMode::Reflectometry).unwrap();
        assert!(r.delays_s.is_empty());
    }

    #[test]
    fn rank_deficient_input_falls_back() {
        let g = FrequencyGrid::narrowband();
        let x = modes(&g, &[8e-6], &[1.0]);
        let r = root_music_delays(&x, &g, 3, 1.58e8, TraceMode::Reflectometry).unwrap();
        assert!(r.fallback);
        assert!(r.delays_s.iter().any(|t| (t - 8e-6).abs() < 0.5e-6));
    }
}
