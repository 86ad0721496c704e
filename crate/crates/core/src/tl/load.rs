//! Lumped admittance models for terminations, faults and port references.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, ZERO};

/// Two-terminal admittance as a function of frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdmittanceModel {
    /// Frequency independent admittance in siemens.
    Constant { re: f64, im: f64 },
    /// `Z = R + jwL + 1/(jwC)`; missing `l`/`c` mean no inductor / shorted capacitor.
    SeriesRlc {
        r: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
    /// `Y = 1/R + 1/(jwL) + jwC`; missing elements are absent branches.
    ParallelRlc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
    Open,
}

impl AdmittanceModel {
    pub fn conductance(g: f64) -> Self {
        AdmittanceModel::Constant { re: g, im: 0.0 }
    }

    pub fn resistor(r: f64) -> Self {
        AdmittanceModel::SeriesRlc { r, l: None, c: None }
    }

    pub fn admittance(&self, f: f64) -> C64 {
        let w = 2.0 * PI * f;
        match *self {
            AdmittanceModel::Constant { re, im } => C64::new(re, im),
            AdmittanceModel::SeriesRlc { r, l, c } => {
                let mut z = C64::new(r, 0.0);
                if let Some(l) = l {
                    z += C64::new(0.0, w * l);
                }
                if let Some(c) = c {
                    z += C64::new(0.0, -1.0 / (w * c));
                }
                if z.norm() == 0.0 {
                    C64::new(f64::INFINITY, 0.0)
                } else {
                    z.inv()
                }
            }
            AdmittanceModel::ParallelRlc { r, l, c } => {
                let mut y = ZERO;
                if let Some(r) = r {
                    y += C64::new(1.0 / r, 0.0);
                }
                if let Some(l) = l {
                    y += C64::new(0.0, -1.0 / (w * l));
                }
                if let Some(c) = c {
                    y += C64::new(0.0, w * c);
                }
                y
            }
            AdmittanceModel::Open => ZERO,
        }
    }

    pub fn is_passive(&self) -> bool {
        match *self {
            AdmittanceModel::Constant { re, .. } => re >= 0.0,
            AdmittanceModel::SeriesRlc { r, l, c } => {
                r >= 0.0 && l.is_none_or(|x| x >= 0.0) && c.is_none_or(|x| x > 0.0)
            }
            AdmittanceModel::ParallelRlc { r, l, c } => {
                r.is_none_or(|x| x > 0.0)
                    && l.is_none_or(|x| x > 0.0)
                    && c.is_none_or(|x| x >= 0.0)
            }
            AdmittanceModel::Open => true,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = match *self {
            AdmittanceModel::Constant { re, im } => re.is_finite() && im.is_finite(),
            AdmittanceModel::SeriesRlc { r, l, c } => {
                r.is_finite() && l.is_none_or(f64::is_finite) && c.is_none_or(f64::is_finite)
            }
            AdmittanceModel::ParallelRlc { r, l, c } => [r, l, c]
                .iter()
                .all(|x| x.is_none_or(f64::is_finite)),
            AdmittanceModel::Open => true,
        };
        if finite {
            Ok(())
        } else {
            Err(Error::domain("admittance model has non-finite parameters"))
        }
    }
}

/// One two-terminal element of a load: between conductor `from` and
/// conductor `to`, or the reference conductor when `to` is `None`.
/// Conductors are the zero-based channel indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadElement {
    pub from: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<usize>,
    pub model: AdmittanceModel,
}

/// Multi-terminal lumped load: its nodal admittance matrix is the sum of the
/// element stamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub elements: Vec<LoadElement>,
}

impl Load {
    /// Single element from conductor 0 to reference.
    pub fn shunt(model: AdmittanceModel) -> Self {
        Self {
            elements: vec![LoadElement {
                from: 0,
                to: None,
                model,
            }],
        }
    }

    /// The same element from every conductor to reference.
    pub fn per_channel(model: AdmittanceModel, channels: usize) -> Self {
        Self {
            elements: (0..channels)
                .map(|i| LoadElement {
                    from: i,
                    to: None,
                    model: model.clone(),
                })
                .collect(),
        }
    }

    pub fn between(from: usize, to: Option<usize>, model: AdmittanceModel) -> Self {
        Self {
            elements: vec![LoadElement { from, to, model }],
        }
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        for e in &self.elements {
            e.model.validate()?;
            let bad = e.from >= channels || e.to.is_some_and(|t| t >= channels || t == e.from);
            if bad {
                return Err(Error::domain(format!(
                    "load element {}-{:?} invalid for {channels} channel(s)",
                    e.from, e.to
                )));
            }
        }
        Ok(())
    }

    pub fn is_passive(&self) -> bool {
        self.elements.iter().all(|e| e.model.is_passive())
    }

    pub fn matrix(&self, channels: usize, f: f64) -> CMat {
        let mut m = CMat::zeros(channels, channels);
        for e in &self.elements {
            let y = e.model.admittance(f);
            m[(e.from, e.from)] += y;
            if let Some(t) = e.to {
                m[(t, t)] += y;
                m[(e.from, t)] -= y;
                m[(t, e.from)] -= y;
            }
        }
        m
    }
}
