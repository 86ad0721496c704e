use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform tone grid `f_k = k * delta_f`, `k = 1..=count`. DC is never part of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    delta_f: f64,
    count: usize,
}

impl FrequencyGrid {
    pub fn new(delta_f: f64, count: usize) -> Result<Self> {
        if !(delta_f.is_finite() && delta_f > 0.0) {
            return Err(Error::config(format!("delta_f must be positive, got {delta_f}")));
        }
        if count < 2 {
            return Err(Error::config(format!("need at least 2 tones, got {count}")));
        }
        Ok(Self { delta_f, count })
    }

    /// 4.3 kHz spacing up to ~500 kHz (116 tones).
    pub fn narrowband() -> Self {
        Self {
            delta_f: 4300.0,
            count: 116,
        }
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Frequency of the tone at zero-based `index`.
    pub fn tone(&self, index: usize) -> f64 {
        (index + 1) as f64 * self.delta_f
    }

    pub fn tones(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.tone(i))
    }

    pub fn f_max(&self) -> f64 {
        self.count as f64 * self.delta_f
    }

    /// Index of the tone closest to `f`.
    pub fn nearest_index(&self, f: f64) -> usize {
        let k = (f / self.delta_f).round() as i64 - 1;
        k.clamp(0, self.count as i64 - 1) as usize
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self::narrowband()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn narrowband_grid_matches_defaults() {
        let g = FrequencyGrid::narrowband();
        assert_eq!(g.count(), 116);
        assert!((g.tone(0) - 4300.0).abs() < 1e-9);
        assert!((g.f_max() - 498_800.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(FrequencyGrid::new(0.0, 10).is_err());
        assert!(FrequencyGrid::new(-1.0, 10).is_err());
        assert!(FrequencyGrid::new(1.0, 1).is_err());
        assert!(FrequencyGrid::new(f64::NAN, 10).is_err());
    }
}
