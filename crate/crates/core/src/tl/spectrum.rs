use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::grid::FrequencyGrid;
use super::topology::NodeId;
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    /// Input admittance at a sensing port.
    Yin,
    /// Input reflection coefficient at a sensing port.
    Rho,
    /// End-to-end channel transfer function.
    H,
}

impl Quantity {
    pub fn is_reflectometric(self) -> bool {
        matches!(self, Quantity::Yin | Quantity::Rho)
    }

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Yin => "yin",
            Quantity::Rho => "rho",
            Quantity::H => "h",
        }
    }
}

impl std::str::FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yin" | "y" => Ok(Quantity::Yin),
            "rho" => Ok(Quantity::Rho),
            "h" | "htot" => Ok(Quantity::H),
            other => Err(Error::config(format!("unknown quantity '{other}'"))),
        }
    }
}

/// Where a spectrum was observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Port { node: NodeId },
    Pair { tx: NodeId, rx: NodeId },
    Synthetic,
}

/// Matrix-valued frequency response on a tone grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub quantity: Quantity,
    pub grid: FrequencyGrid,
    pub source: Source,
    pub values: Vec<CMat>,
}

impl Spectrum {
    pub fn new(quantity: Quantity, grid: FrequencyGrid, source: Source, values: Vec<CMat>) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(Error::domain(format!(
                "spectrum has {} values for {} tones",
                values.len(),
                grid.count()
            )));
        }
        let n = values.first().map_or(0, |m| m.nrows());
        if n == 0 || values.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::domain("spectrum values must be square and of equal size"));
        }
        Ok(Self { quantity, grid, source, values })
    }

    /// Scalar spectrum from one complex value per tone.
    pub fn from_scalars(quantity: Quantity, grid: FrequencyGrid, values: &[C64]) -> Result<Self> {
        Self::new(
            quantity,
            grid,
            Source::Synthetic,
            values.iter().map(|&z| CMat::from_element(1, 1, z)).collect(),
        )
    }

    pub fn channels(&self) -> usize {
        self.values[0].nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> Vec<C64> {
        self.values.iter().map(|m| m[(i, j)]).collect()
    }

    pub fn same_shape(&self, other: &Spectrum) -> bool {
        self.grid == other.grid && self.channels() == other.channels()
    }

    pub fn csv_header(channels: usize) -> String {
        let mut h = String::from("f_hz");
        for i in 1..=channels {
            for j in 1..=channels {
                write!(h, ",re_{i}_{j},im_{i}_{j}").unwrap();
            }
        }
        h
    }

    /// One CSV row per tone (no header): `f_hz, re, im` per matrix entry.
    pub fn csv_rows(&self, prefix: &str, out: &mut String) {
        for (k, m) in self.values.iter().enumerate() {
            out.push_str(prefix);
            write!(out, "{}", self.grid.tone(k)).unwrap();
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    write!(out, ",{},{}", m[(i, j)].re, m[(i, j)].im).unwrap();
                }
            }
            out.push('\n');
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = Self::csv_header(self.channels());
        s.push('\n');
        self.csv_rows("", &mut s);
        s
    }

    /// Parse the format written by [`Spectrum::to_csv`]. The grid is
    /// recovered from the first two frequencies.
    pub fn from_csv(quantity: Quantity, source: Source, text: &str) -> Result<Self> {
        let rows = parse_rows(text, 0)?;
        let (freqs, values): (Vec<f64>, Vec<CMat>) = rows.into_iter().map(|(_, f, m)| (f, m)).unzip();
        let grid = grid_from_freqs(&freqs)?;
        Self::new(quantity, grid, source, values)
    }
}

/// Sequence of estimates, one block of tones per step, with a leading `step`
/// column.
pub fn stream_to_csv(items: &[Spectrum]) -> String {
    let n = items.first().map_or(1, Spectrum::channels);
    let mut s = format!("step,{}\n", Spectrum::csv_header(n));
    for (i, item) in items.iter().enumerate() {
        item.csv_rows(&format!("{i},"), &mut s);
    }
    s
}

/// Parse [`stream_to_csv`] output, in step order.
pub fn stream_from_csv(quantity: Quantity, source: Source, text: &str) -> Result<Vec<Spectrum>> {
    let mut steps: std::collections::BTreeMap<u64, (Vec<f64>, Vec<CMat>)> = Default::default();
    for (lead, f, m) in parse_rows(text, 1)? {
        let e = steps.entry(lead[0]).or_default();
        e.0.push(f);
        e.1.push(m);
    }
    steps
        .into_values()
        .map(|(freqs, values)| Spectrum::new(quantity, grid_from_freqs(&freqs)?, source, values))
        .collect()
}

pub(crate) fn grid_from_freqs(freqs: &[f64]) -> Result<FrequencyGrid> {
    if freqs.len() < 2 {
        return Err(Error::domain("need at least two tones"));
    }
    let df = freqs[0];
    let grid = FrequencyGrid::new(df, freqs.len())?;
    for (k, f) in freqs.iter().enumerate() {
        if (grid.tone(k) - f).abs() > 1e-6 * df {
            return Err(Error::domain(format!("tone {k} at {f} Hz is off the uniform grid")));
        }
    }
    Ok(grid)
}

/// Parses CSV rows with `lead` leading integer columns (e.g. a step index)
/// followed by `f_hz` and re/im pairs. Returns `(lead values, f, matrix)`.
pub(crate) fn parse_rows(text: &str, lead: usize) -> Result<Vec<(Vec<u64>, f64, CMat)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::domain("empty CSV"))?;
    let cols = header.split(',').count();
    let pairs = (cols - lead - 1) / 2;
    let n = (pairs as f64).sqrt().round() as usize;
    if n == 0 || n * n != pairs || cols != lead + 1 + 2 * pairs {
        return Err(Error::domain(format!("unexpected CSV header '{header}'")));
    }
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols {
            return Err(Error::domain(format!("CSV row {} has {} fields", ln + 2, fields.len())));
        }
        let bad = |_| Error::domain(format!("bad number on CSV row {}", ln + 2));
        let lead_vals = fields[..lead]
            .iter()
            .map(|s| s.parse::<u64>().map_err(|_| Error::domain(format!("bad index on CSV row {}", ln + 2))))
            .collect::<Result<Vec<_>>>()?;
        let nums = fields[lead..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(bad))
            .collect::<Result<Vec<_>>>()?;
        let m = CMat::from_fn(n, n, |i, j| {
            let p = 1 + 2 * (i * n + j);
            C64::new(nums[p], nums[p + 1])
        });
        out.push((lead_vals, nums[0], m));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let grid = FrequencyGrid::new(4300.0, 3).unwrap();
        let vals = vec![C64::new(0.1, -0.2), C64::new(1.0 / 3.0, 2e-9), C64::new(-5.5, 0.0)];
        let s = Spectrum::from_scalars(Quantity::Rho, grid, &vals).unwrap();
        let text = s.to_csv();
        assert!(text.starts_with("f_hz,re_1_1,im_1_1\n4300,0.1,-0.2\n"));
        let back = Spectrum::from_csv(Quantity::Rho, Source::Synthetic, &text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn stream_round_trip() {
        let grid = FrequencyGrid::new(4300.0, 4).unwrap();
        let items: Vec<Spectrum> = (0..3)
            .map(|i| {
                let v: Vec<C64> = (0..4).map(|k| C64::new(i as f64, k as f64 * 0.1)).collect();
                Spectrum::from_scalars(Quantity::Yin, grid, &v).unwrap()
            })
            .collect();
        let text = stream_to_csv(&items);
        assert!(text.starts_with("step,f_hz,re_1_1,im_1_1\n0,4300,"));
        assert_eq!(stream_from_csv(Quantity::Yin, Source::Synthetic, &text).unwrap(), items);
    }

    #[test]
    fn rejects_wrong_length() {
        let grid = FrequencyGrid::new(1.0, 3).unwrap();
        assert!(Spectrum::from_scalars(Quantity::H, grid, &[C64::new(1.0, 0.0)]).is_err());
    }
}
