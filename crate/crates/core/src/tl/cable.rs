//! Per-unit-length cable constants and the modal line model built from them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::grid::FrequencyGrid;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, J};

pub const DEFAULT_L: f64 = 0.4e-6;
pub const DEFAULT_C: f64 = 0.1e-9;
pub const DEFAULT_R: f64 = 0.05;
pub const DEFAULT_G: f64 = 1e-9;
pub const DEFAULT_F_REF: f64 = 500e3;
pub const DEFAULT_COUPLING: f64 = 0.3;

fn default_f_ref() -> f64 {
    DEFAULT_F_REF
}

/// Per-unit-length matrices of a one- or two-channel line.
///
/// `r` scales with `sqrt(f / f_ref_hz)` (skin effect) and `g` with
/// `f / f_ref_hz`; `l` and `c` are frequency independent. For two channels
/// the matrices are in the conductor domain with the third wire as
/// reference, and `c`/`g` follow the Maxwell sign convention (negative
/// off-diagonal terms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CableSpec {
    pub r: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    #[serde(default = "default_f_ref")]
    pub f_ref_hz: f64,
}

impl Default for CableSpec {
    fn default() -> Self {
        Self::siso()
    }
}

impl CableSpec {
    pub fn scalar(r: f64, l: f64, g: f64, c: f64) -> Self {
        Self {
            r: vec![vec![r]],
            l: vec![vec![l]],
            g: vec![vec![g]],
            c: vec![vec![c]],
            f_ref_hz: DEFAULT_F_REF,
        }
    }

    /// Underground MV-like single channel line, Z_C ~ 63 ohm.
    pub fn siso() -> Self {
        Self::scalar(DEFAULT_R, DEFAULT_L, DEFAULT_G, DEFAULT_C)
    }

    /// Three-conductor line as two channels; mutual terms are `coupling`
    /// times the self terms.
    pub fn mimo(coupling: f64) -> Self {
        let pos = |x: f64| vec![vec![x, coupling * x], vec![coupling * x, x]];
        let neg = |x: f64| vec![vec![x, -coupling * x], vec![-coupling * x, x]];
        Self {
            r: pos(DEFAULT_R),
            l: pos(DEFAULT_L),
            g: neg(DEFAULT_G),
            c: neg(DEFAULT_C),
            f_ref_hz: DEFAULT_F_REF,
        }
    }

    pub fn channels(&self) -> usize {
        self.l.len()
    }

    /// Copy with resistance and capacitance scaled, as used for aged sections.
    pub fn degraded(&self, r_factor: f64, c_factor: f64) -> Self {
        let scale = |m: &Vec<Vec<f64>>, k: f64| -> Vec<Vec<f64>> {
            m.iter().map(|row| row.iter().map(|x| x * k).collect()).collect()
        };
        Self {
            r: scale(&self.r, r_factor),
            l: self.l.clone(),
            g: self.g.clone(),
            c: scale(&self.c, c_factor),
            f_ref_hz: self.f_ref_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.channels();
        if !(1..=2).contains(&n) {
            return Err(Error::domain(format!("cable must have 1 or 2 channels, got {n}")));
        }
        if !(self.f_ref_hz.is_finite() && self.f_ref_hz > 0.0) {
            return Err(Error::domain("cable f_ref_hz must be positive"));
        }
        for (name, m, definite) in [
            ("R", &self.r, false),
            ("L", &self.l, true),
            ("G", &self.g, false),
            ("C", &self.c, true),
        ] {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                return Err(Error::domain(format!("cable {name} must be {n}x{n}")));
            }
            if m.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::domain(format!("cable {name} has non-finite entries")));
            }
            let scale = m.iter().flatten().fold(0.0_f64, |a, x| a.max(x.abs()));
            if n == 2 && (m[0][1] - m[1][0]).abs() > 1e-12 * scale {
                return Err(Error::domain(format!("cable {name} is not symmetric")));
            }
            let det = if n == 1 {
                m[0][0]
            } else {
                m[0][0] * m[1][1] - m[0][1] * m[1][0]
            };
            let diag_ok = (0..n).all(|i| if definite { m[i][i] > 0.0 } else { m[i][i] >= 0.0 });
            let det_ok = if definite {
                det > 0.0
            } else {
                det >= -1e-12 * scale * scale
            };
            if !(diag_ok && det_ok) {
                let kind = if definite { "positive definite" } else { "positive semidefinite" };
                return Err(Error::domain(format!("cable {name} is not {kind}")));
            }
        }
        Ok(())
    }

    /// Series impedance per metre at `f`.
    pub fn impedance(&self, f: f64) -> CMat {
        let w = 2.0 * PI * f;
        let skin = (f / self.f_ref_hz).sqrt();
        linalg::from_real(&self.r) * C64::new(skin, 0.0) + linalg::from_real(&self.l) * (J * w)
    }

    /// Shunt admittance per metre at `f`.
    pub fn admittance(&self, f: f64) -> CMat {
        let w = 2.0 * PI * f;
        linalg::from_real(&self.g) * C64::new(f / self.f_ref_hz, 0.0)
            + linalg::from_real(&self.c) * (J * w)
    }

    /// Propagation velocity of the slowest mode, `1/sqrt(max eig(LC))`.
    pub fn velocity(&self) -> f64 {
        let n = self.channels();
        if n == 1 {
            return 1.0 / (self.l[0][0] * self.c[0][0]).sqrt();
        }
        let p = |i: usize, j: usize| (0..n).map(|k| self.l[i][k] * self.c[k][j]).sum::<f64>();
        let (a, b, c, d) = (p(0, 0), p(0, 1), p(1, 0), p(1, 1));
        let half_tr = 0.5 * (a + d);
        let disc = (0.25 * (a - d).powi(2) + b * c).max(0.0).sqrt();
        1.0 / (half_tr + disc).sqrt()
    }
}

/// Modal description of a cable at one frequency: `Z Y = T diag(mu^2) T^-1`.
#[derive(Debug, Clone)]
pub struct LineModel {
    z: CMat,
    z_inv: CMat,
    t: CMat,
    t_inv: CMat,
    mu: Vec<C64>,
}

impl LineModel {
    pub fn new(cable: &CableSpec, f: f64, tone: usize) -> Result<Self> {
        let z = cable.impedance(f);
        let y = cable.admittance(f);
        let zy = &z * &y;
        let (lambda, t) =
            linalg::eig_small(&zy).ok_or_else(|| Error::numeric("modal decomposition of ZY", tone))?;
        let t_inv = linalg::inverse(&t).ok_or_else(|| Error::numeric("modal matrix inverse", tone))?;
        let z_inv =
            linalg::inverse(&z).ok_or_else(|| Error::numeric("series impedance inverse", tone))?;
        let mu = lambda
            .into_iter()
            .map(|l| {
                let s = l.sqrt();
                if s.re < 0.0 || (s.re == 0.0 && s.im < 0.0) {
                    -s
                } else {
                    s
                }
            })
            .collect();
        Ok(Self {
            z,
            z_inv,
            t,
            t_inv,
            mu,
        })
    }

    fn modal(&self, f: impl Fn(C64) -> C64) -> CMat {
        let vals: Vec<C64> = self.mu.iter().map(|&m| f(m)).collect();
        linalg::reconstruct(&self.t, &self.t_inv, &vals)
    }

    /// Propagation matrix, 1/m.
    pub fn gamma(&self) -> CMat {
        self.modal(|m| m)
    }

    /// Characteristic admittance `Z^-1 Gamma`.
    pub fn characteristic_admittance(&self) -> CMat {
        &self.z_inv * self.gamma()
    }

    /// Chain matrix of a uniform section of `length` metres.
    pub fn section(&self, length: f64) -> Abcd {
        let a = self.modal(|m| (m * length).cosh());
        let b = self.modal(|m| {
            if m.norm() == 0.0 {
                C64::new(length, 0.0)
            } else {
                (m * length).sinh() / m
            }
        }) * &self.z;
        let c = &self.z_inv * self.modal(|m| m * (m * length).sinh());
        let d = &self.z_inv * &a * &self.z;
        Abcd { a, b, c, d }
    }
}

/// Chain (ABCD) matrix relating near-end to far-end voltage/current vectors:
/// `[V0; I0] = [A B; C D] [V1; I1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Abcd {
    pub a: CMat,
    pub b: CMat,
    pub c: CMat,
    pub d: CMat,
}

impl Abcd {
    pub fn identity(n: usize) -> Self {
        Self {
            a: linalg::identity(n),
            b: CMat::zeros(n, n),
            c: CMat::zeros(n, n),
            d: linalg::identity(n),
        }
    }

    /// Shunt admittance stamp `[I 0; Y I]`.
    pub fn shunt(y: &CMat) -> Self {
        let n = y.nrows();
        Self {
            a: linalg::identity(n),
            b: CMat::zeros(n, n),
            c: y.clone(),
            d: linalg::identity(n),
        }
    }

    pub fn channels(&self) -> usize {
        self.a.nrows()
    }

    /// `self` followed by `next` (matrix product).
    pub fn cascade(&self, next: &Abcd) -> Abcd {
        Abcd {
            a: &self.a * &next.a + &self.b * &next.c,
            b: &self.a * &next.b + &self.b * &next.d,
            c: &self.c * &next.a + &self.d * &next.c,
            d: &self.c * &next.b + &self.d * &next.d,
        }
    }

    /// Admittance seen at the near end when the far end is loaded by `y_load`:
    /// `(C + D Y)(A + B Y)^-1`. `None` if the denominator is singular.
    pub fn load_admittance(&self, y_load: &CMat) -> Option<CMat> {
        let num = &self.c + &self.d * y_load;
        let den = &self.a + &self.b * y_load;
        linalg::inverse(&den).map(|inv| num * inv)
    }

    /// Full `2n x 2n` matrix.
    pub fn to_matrix(&self) -> CMat {
        let n = self.channels();
        let mut m = CMat::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.a);
        m.view_mut((0, n), (n, n)).copy_from(&self.b);
        m.view_mut((n, 0), (n, n)).copy_from(&self.c);
        m.view_mut((n, n), (n, n)).copy_from(&self.d);
        m
    }

    pub fn determinant(&self) -> C64 {
        self.to_matrix().determinant()
    }
}

/// Per-tone propagation matrix and characteristic admittance.
#[derive(Debug, Clone)]
pub struct LineParams {
    pub gamma: Vec<CMat>,
    pub characteristic_admittance: Vec<CMat>,
}

pub fn propagation_params(cable: &CableSpec, grid: &FrequencyGrid) -> Result<LineParams> {
    cable.validate()?;
    let mut gamma = Vec::with_capacity(grid.count());
    let mut yc = Vec::with_capacity(grid.count());
    for (k, f) in grid.tones().enumerate() {
        let model = LineModel::new(cable, f, k)?;
        gamma.push(model.gamma());
        yc.push(model.characteristic_admittance());
    }
    Ok(LineParams {
        gamma,
        characteristic_admittance: yc,
    })
}
