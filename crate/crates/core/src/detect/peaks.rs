use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakMethod {
    Classical,
    RootMusic,
}

/// A located maximum. `position` is in samples for raw searches, and in
/// metres or hertz once mapped onto an axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub position: f64,
    pub amplitude: f64,
    pub prominence: f64,
    pub method: PeakMethod,
}

impl Peak {
    pub fn scaled(self, factor: f64) -> Peak {
        Peak { position: self.position * factor, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakSearch {
    /// Absolute prominence threshold.
    pub min_prominence: f64,
    /// Minimum distance between kept peaks, in samples.
    pub min_separation: f64,
}

/// Local maxima of `y` whose prominence reaches the threshold. Among peaks
/// closer than `min_separation` the taller wins. Positions are refined by a
/// parabola through the three samples around each maximum.
pub fn find_peaks(y: &[f64], search: PeakSearch) -> Vec<Peak> {
    let n = y.len();
    let mut cands: Vec<(usize, f64)> = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            // walk across a plateau
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let mid = (i + j) / 2;
                let prom = prominence(y, mid);
                if prom >= search.min_prominence && prom > 0.0 {
                    cands.push((mid, prom));
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    cands.sort_by(|a, b| y[b.0].total_cmp(&y[a.0]).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, f64)> = Vec::new();
    for c in cands {
        if kept.iter().all(|k| (k.0 as f64 - c.0 as f64).abs() >= search.min_separation) {
            kept.push(c);
        }
    }
    kept.sort_by_key(|k| k.0);
    kept.into_iter()
        .map(|(i, prominence)| {
            let (pos, amp) = refine(y, i);
            Peak { position: pos, amplitude: amp, prominence, method: PeakMethod::Classical }
        })
        .collect()
}

/// Height above the higher of the two lowest points reached before meeting a
/// taller sample (or the boundary) on each side.
fn prominence(y: &[f64], i: usize) -> f64 {
    let h = y[i];
    let mut left = h;
    for k in (0..i).rev() {
        if y[k] > h {
            break;
        }
        left = left.min(y[k]);
    }
    let mut right = h;
    for &v in &y[i + 1..] {
        if v > h {
            break;
        }
        right = right.min(v);
    }
    h - left.max(right)
}

fn refine(y: &[f64], i: usize) -> (f64, f64) {
    if i == 0 || i + 1 >= y.len() {
        return (i as f64, y[i]);
    }
    let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
    let den = a - 2.0 * b + c;
    if den >= 0.0 {
        return (i as f64, b);
    }
    let d = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
    (i as f64 + d, b - 0.25 * (a - c) * d)
}
