use serde::Serialize;

/// Two-sided 95 % normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rate {
    pub successes: usize,
    pub count: usize,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Rate {
    pub fn of(successes: usize, count: usize) -> Self {
        let (lower, upper) = wilson_interval(successes, count, Z95);
        let rate = if count == 0 { f64::NAN } else { successes as f64 / count as f64 };
        Rate { successes, count, rate, lower, upper }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Half the overlap area of the two empirical densities, `½ ∫ min(p0, p1)`,
/// on a shared Freedman–Diaconis histogram; zero when the sample ranges are
/// disjoint. Infinite values form their own
/// point-mass bins; NaNs are dropped.
pub fn p_failure_overlap(normal: &[f64], anomalous: &[f64]) -> f64 {
    let clean = |v: &[f64]| -> Vec<f64> { v.iter().copied().filter(|x| !x.is_nan()).collect() };
    let (a, b) = (clean(normal), clean(anomalous));
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut overlap = 0.0;
    for inf in [f64::INFINITY, f64::NEG_INFINITY] {
        let ca = a.iter().filter(|&&x| x == inf).count() as f64;
        let cb = b.iter().filter(|&&x| x == inf).count() as f64;
        overlap += (ca / na).min(cb / nb);
    }
    let fa: Vec<f64> = a.iter().copied().filter(|x| x.is_finite()).collect();
    let fb: Vec<f64> = b.iter().copied().filter(|x| x.is_finite()).collect();
    let range = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let ((la, ha), (lb, hb)) = (range(&fa), range(&fb));
    // samples with disjoint ranges do not overlap, however coarse the bins
    if !fa.is_empty() && !fb.is_empty() && la <= hb && lb <= ha {
        let mut pooled: Vec<f64> = fa.iter().chain(&fb).copied().collect();
        pooled.sort_by(f64::total_cmp);
        let (lo, hi) = (pooled[0], pooled[pooled.len() - 1]);
        let n = pooled.len() as f64;
        if hi == lo {
            overlap += (fa.len() as f64 / na).min(fb.len() as f64 / nb);
        } else {
            let iqr = quantile(&pooled, 0.75) - quantile(&pooled, 0.25);
            let mut width = 2.0 * iqr / n.cbrt();
            if !(width > 0.0) {
                width = (hi - lo) / n.sqrt().ceil();
            }
            let bins = (((hi - lo) / width).ceil() as usize).max(1);
            let hist = |v: &[f64]| {
                let mut h = vec![0usize; bins];
                for &x in v {
                    h[(((x - lo) / width) as usize).min(bins - 1)] += 1;
                }
                h
            };
            let (ha, hb) = (hist(&fa), hist(&fb));
            overlap += ha.iter().zip(&hb).map(|(&x, &y)| (x as f64 / na).min(y as f64 / nb)).sum::<f64>();
        }
    }
    0.5 * overlap
}
