use std::path::PathBuf;

use crate::detect::DeltaModel;
use crate::error::{Error, Result};
use crate::sensing::{MeasurementPlan, NoiseModel};
use crate::tl::{CableSpec, Quantity, DEFAULT_COUPLING};
use crate::topogen::{AnomalyKind, TopologyConfig};

/// Environment variable overriding the master seed.
pub const SEED_ENV: &str = "GRIDSENSE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMode {
    Siso,
    /// Three conductors, two channels; the fault sits between the second
    /// conductor and the reference.
    Mimo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    Physical,
    Qnr(f64),
}

impl NoiseLevel {
    pub fn model(self) -> NoiseModel {
        match self {
            NoiseLevel::Physical => NoiseModel::physical(),
            NoiseLevel::Qnr(q) => NoiseModel::DirectQnr { qnr_db: q },
        }
    }

    pub fn label(self) -> String {
        match self {
            NoiseLevel::Physical => "physical".into(),
            NoiseLevel::Qnr(q) => format!("qnr{q}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Quantity,
    Model,
    Entry,
    Nodes,
    Noise,
    Anomaly,
    DistanceKm,
}

impl std::str::FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "quantity" => GroupKey::Quantity,
            "model" => GroupKey::Model,
            "entry" | "channel" => GroupKey::Entry,
            "nodes" => GroupKey::Nodes,
            "noise" | "qnr" => GroupKey::Noise,
            "anomaly" => GroupKey::Anomaly,
            "distance_km" => GroupKey::DistanceKm,
            other => return Err(Error::config(format!("unknown group key '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub quantities: Vec<Quantity>,
    pub models: Vec<DeltaModel>,
    pub channels: ChannelMode,
    /// Matrix entries observed in MIMO mode, 0-based.
    pub mimo_entries: Vec<(usize, usize)>,
    /// Anomaly kinds; each trial draws one uniformly.
    pub anomalies: Vec<AnomalyKind>,
    pub nodes: Vec<usize>,
    pub noise: Vec<NoiseLevel>,
    pub plan: MeasurementPlan,
    pub trials: usize,
    pub seed: u64,
    pub warmup: usize,
    /// Post-anomaly estimates offered to the detector.
    pub post_steps: usize,
    pub sigma_factor: f64,
    pub confirmations: usize,
    pub avg_branch_length: f64,
    pub max_node_degree: usize,
    pub fault_r_ohm: (f64, f64),
    /// 0 uses all available cores.
    pub workers: usize,
    pub group_by: Vec<GroupKey>,
    pub records_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            quantities: vec![Quantity::Yin, Quantity::Rho, Quantity::H],
            models: vec![DeltaModel::Superposition],
            channels: ChannelMode::Siso,
            mimo_entries: vec![(0, 0), (0, 1)],
            anomalies: vec![AnomalyKind::LocalizedFault],
            nodes: vec![10],
            noise: vec![NoiseLevel::Physical],
            plan: MeasurementPlan::Mls { half_periods: 1, averages: 16 },
            trials: 200,
            seed: 1,
            warmup: 50,
            post_steps: 10,
            sigma_factor: 3.0,
            confirmations: 5,
            avg_branch_length: 900.0,
            max_node_degree: 4,
            fault_r_ohm: (10.0, 1000.0),
            workers: 0,
            group_by: vec![GroupKey::Quantity, GroupKey::Model, GroupKey::Entry, GroupKey::Nodes, GroupKey::Noise],
            records_path: None,
            summary_path: None,
        }
    }
}

fn list<T>(v: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::config(format!("bad value for {key}: '{v}'")))
}

fn entry(v: &str) -> Result<(usize, usize)> {
    let (i, j) = v.split_once('-').ok_or_else(|| Error::config(format!("entry '{v}' is not of the form i-j")))?;
    let (i, j): (usize, usize) = (num("entry", i)?, num("entry", j)?);
    if i == 0 || j == 0 {
        return Err(Error::config("entries are 1-based"));
    }
    Ok((i - 1, j - 1))
}

impl ExperimentConfig {
    /// Parse `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut symbols = 1;
        let mut half_periods = 1;
        let mut averages = None;
        let mut recurrence = "mls".to_string();
        let mut noise_mode = "physical".to_string();
        let mut qnr = vec![];
        let mut entries_set = false;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "quantities" => c.quantities = list(v, str::parse)?,
                "models" => c.models = list(v, str::parse)?,
                "channels" => {
                    c.channels = match v {
                        "siso" => ChannelMode::Siso,
                        "mimo" => ChannelMode::Mimo,
                        _ => return Err(Error::config(format!("channels must be siso or mimo, got '{v}'"))),
                    }
                }
                "entries" => {
                    c.mimo_entries = list(v, entry)?;
                    entries_set = true;
                }
                "anomalies" => c.anomalies = list(v, str::parse)?,
                "nodes" => c.nodes = list(v, |s| num(k, s))?,
                "noise" => noise_mode = v.to_string(),
                "qnr_db" => qnr = list(v, |s| num(k, s))?,
                "recurrence" => recurrence = v.to_string(),
                "symbols_per_estimate" => symbols = num(k, v)?,
                "half_periods" => half_periods = num(k, v)?,
                "averages" => averages = Some(num(k, v)?),
                "trials" => c.trials = num(k, v)?,
                "seed" => c.seed = num(k, v)?,
                "warmup" => c.warmup = num(k, v)?,
                "post_steps" => c.post_steps = num(k, v)?,
                "sigma_factor" => c.sigma_factor = num(k, v)?,
                "confirmations" => c.confirmations = num(k, v)?,
                "avg_branch_length" => c.avg_branch_length = num(k, v)?,
                "max_node_degree" => c.max_node_degree = num(k, v)?,
                "fault_r_min" => c.fault_r_ohm.0 = num(k, v)?,
                "fault_r_max" => c.fault_r_ohm.1 = num(k, v)?,
                "workers" => c.workers = num(k, v)?,
                "group_by" => c.group_by = list(v, str::parse)?,
                "records" => c.records_path = Some(PathBuf::from(v)),
                "summary" => c.summary_path = Some(PathBuf::from(v)),
                other => return Err(Error::config(format!("line {}: unknown key '{other}'", no + 1))),
            }
        }
        c.noise = match noise_mode.as_str() {
            "physical" => vec![NoiseLevel::Physical],
            "qnr" if !qnr.is_empty() => qnr.into_iter().map(NoiseLevel::Qnr).collect(),
            "qnr" => return Err(Error::config("noise = qnr needs qnr_db")),
            other => return Err(Error::config(format!("noise must be physical or qnr, got '{other}'"))),
        };
        c.plan = match recurrence.as_str() {
            "sls" => MeasurementPlan::Sls { symbols_per_estimate: symbols },
            "mls" => MeasurementPlan::Mls { half_periods, averages: averages.unwrap_or(16) },
            other => return Err(Error::config(format!("recurrence must be sls or mls, got '{other}'"))),
        };
        if entries_set && c.channels == ChannelMode::Siso && c.mimo_entries.iter().any(|&e| e != (0, 0)) {
            return Err(Error::config("siso has only the 1-1 entry"));
        }
        c.validate()?;
        Ok(c)
    }

    /// Replace the seed with `GRIDSENSE_SEED` when it is set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = num(SEED_ENV, &v)?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials must be >= 1"));
        }
        if self.quantities.is_empty() || self.models.is_empty() || self.anomalies.is_empty() {
            return Err(Error::config("quantities, models and anomalies must be non-empty"));
        }
        if self.nodes.is_empty() || self.noise.is_empty() || self.entries().is_empty() {
            return Err(Error::config("sweep lists must be non-empty"));
        }
        if self.nodes.iter().any(|&n| n < 2) {
            return Err(Error::config("networks need at least two nodes"));
        }
        if self.post_steps == 0 || self.warmup < 2 {
            return Err(Error::config("need post_steps >= 1 and warmup >= 2"));
        }
        let n = self.channel_count();
        if self.entries().iter().any(|&(i, j)| i >= n || j >= n) {
            return Err(Error::config("entry outside the channel matrix"));
        }
        if !(0.0 < self.fault_r_ohm.0 && self.fault_r_ohm.0 <= self.fault_r_ohm.1) {
            return Err(Error::config("fault resistance range must be positive and ordered"));
        }
        self.plan.validate()?;
        for level in &self.noise {
            level.model().validate()?;
        }
        Ok(())
    }

    pub fn channel_count(&self) -> usize {
        match self.channels {
            ChannelMode::Siso => 1,
            ChannelMode::Mimo => 2,
        }
    }

    pub fn entries(&self) -> Vec<(usize, usize)> {
        match self.channels {
            ChannelMode::Siso => vec![(0, 0)],
            ChannelMode::Mimo => self.mimo_entries.clone(),
        }
    }

    pub fn topology(&self, n_nodes: usize) -> TopologyConfig {
        let cable = match self.channels {
            ChannelMode::Siso => CableSpec::siso(),
            ChannelMode::Mimo => CableSpec::mimo(DEFAULT_COUPLING),
        };
        TopologyConfig {
            n_nodes,
            avg_branch_length: self.avg_branch_length,
            max_node_degree: self.max_node_degree,
            cable,
            ..TopologyConfig::default()
        }
    }

    /// Scenarios share networks, anomalies and noise draws across the
    /// quantity, model and entry cells that observe them.
    pub fn scenario_count(&self) -> usize {
        self.nodes.len() * self.noise.len()
    }

    pub fn scenario(&self, idx: usize) -> (usize, NoiseLevel) {
        (self.nodes[idx / self.noise.len()], self.noise[idx % self.noise.len()])
    }

    pub fn cell_index(&self, scenario: usize, quantity: usize, model: usize, entry: usize) -> usize {
        ((scenario * self.quantities.len() + quantity) * self.models.len() + model) * self.entries().len() + entry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_key_values() {
        let c = ExperimentConfig::parse(
            "# sweep\nquantities = yin, rho\nmodels = superposition,chain\nnodes = 5,10 # sizes\n\
             noise = qnr\nqnr_db = 60, 0\ntrials = 7\nseed = 99\nchannels = mimo\nentries = 1-1,1-2\n",
        )
        .unwrap();
        assert_eq!(c.quantities, vec![Quantity::Yin, Quantity::Rho]);
        assert_eq!(c.models.len(), 2);
        assert_eq!(c.nodes, vec![5, 10]);
        assert_eq!(c.noise, vec![NoiseLevel::Qnr(60.0), NoiseLevel::Qnr(0.0)]);
        assert_eq!((c.trials, c.seed), (7, 99));
        assert_eq!(c.entries(), vec![(0, 0), (0, 1)]);
        assert_eq!(c.scenario_count(), 4);
        assert_eq!(c.scenario(3), (10, NoiseLevel::Qnr(0.0)));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("trials = 0").is_err());
        assert!(ExperimentConfig::parse("trials").is_err());
        assert!(ExperimentConfig::parse("nodes = ").is_err());
        assert!(ExperimentConfig::parse("noise = qnr").is_err());
        assert!(ExperimentConfig::parse("entries = 1-2").is_err(), "siso has no 1-2 entry");
    }

    #[test]
    fn cell_indices_are_dense() {
        let c = ExperimentConfig {
            models: vec![DeltaModel::Superposition, DeltaModel::Chain],
            nodes: vec![5, 10],
            ..ExperimentConfig::default()
        };
        let mut seen = vec![];
        for s in 0..c.scenario_count() {
            for q in 0..3 {
                for m in 0..2 {
                    seen.push(c.cell_index(s, q, m, 0));
                }
            }
        }
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
    }
}
