use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gridsense::detect::{monitor, ClassifyConfig, DeltaModel, DetectConfig, DetectionReport, TraceMode};
use gridsense::harness::{
    farthest_leaf, records_csv, run_monte_carlo, summarize, summary_csv, summary_json, true_spectrum,
    ExperimentConfig, SEED_ENV,
};
use gridsense::locate::{localize_multi, localize_single, LocateConfig, ScoreMode};
use gridsense::sensing::{MeasurementPlan, NoiseModel, SensorStream};
use gridsense::tl::{
    stream_from_csv, stream_to_csv, CableSpec, FrequencyGrid, NodeId, Quantity, Source, Spectrum, Topology,
    DEFAULT_COUPLING,
};
use gridsense::topogen::{
    fixture, generate_topology, inject_anomaly, sample_anomaly, Anomaly, AnomalyKind, AnomalySampler, PortChoice,
    TopologyConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "gridsense", version, about = "Power-line network sensing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Random network (or the reference fixture) as topology JSON.
    Generate(GenerateArgs),
    /// Apply an anomaly to a topology.
    Inject(InjectArgs),
    /// Spectra seen at a port: exact, or a noisy estimate stream.
    Respond(RespondArgs),
    /// Run detection and classification over an estimate stream.
    Detect(DetectArgs),
    /// Localize a detected anomaly on the topology.
    Locate(LocateArgs),
    /// Monte-Carlo experiment from a key = value config file.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 20)]
    nodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 900.0)]
    avg_length: f64,
    #[arg(long, default_value_t = 4)]
    max_degree: usize,
    /// Three-conductor cable (two channels).
    #[arg(long)]
    mimo: bool,
    /// Pick the sensing port uniformly instead of the highest-degree node.
    #[arg(long)]
    random_port: bool,
    /// Emit the 11 km trunk / two-branch reference network instead.
    #[arg(long, conflicts_with_all = ["nodes", "mimo"])]
    fixture: bool,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    LoadChange,
    LocalizedFault,
    DistributedFault,
}

impl From<KindArg> for AnomalyKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::LoadChange => AnomalyKind::LoadChange,
            KindArg::LocalizedFault => AnomalyKind::LocalizedFault,
            KindArg::DistributedFault => AnomalyKind::DistributedFault,
        }
    }
}

#[derive(Args)]
struct InjectArgs {
    #[arg(short, long)]
    topology: PathBuf,
    /// Anomaly JSON to apply.
    #[arg(short, long, required_unless_present_any = ["sample", "fixture_damage"])]
    anomaly: Option<PathBuf>,
    /// Draw a random anomaly of this kind instead.
    #[arg(long, conflicts_with = "anomaly")]
    sample: Option<KindArg>,
    /// The reference aged-cable section on branch 2 or 3 of the fixture.
    #[arg(long, conflicts_with_all = ["anomaly", "sample"], value_parser = clap::value_parser!(u64).range(2..=3))]
    fixture_damage: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the sampled anomaly.
    #[arg(long)]
    anomaly_out: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum QuantityArg {
    Yin,
    Rho,
    H,
}

impl From<QuantityArg> for Quantity {
    fn from(q: QuantityArg) -> Self {
        match q {
            QuantityArg::Yin => Quantity::Yin,
            QuantityArg::Rho => Quantity::Rho,
            QuantityArg::H => Quantity::H,
        }
    }
}

#[derive(Args)]
struct RespondArgs {
    #[arg(short, long)]
    topology: PathBuf,
    #[arg(short, long, value_enum, default_value = "yin")]
    quantity: QuantityArg,
    /// Sensing port; defaults to the first port of the topology.
    #[arg(long)]
    port: Option<NodeId>,
    /// Receiver for H; defaults to the leaf farthest from the port.
    #[arg(long)]
    rx: Option<NodeId>,
    /// none, physical, or qnr:<dB>.
    #[arg(long, default_value = "none")]
    noise: String,
    /// sls, or mls:<half periods>x<averages>.
    #[arg(long, default_value = "mls:1x16")]
    plan: String,
    /// Number of estimates; more than one writes a step-indexed stream.
    #[arg(long, default_value_t = 1)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Anomaly that appears at step `onset`.
    #[arg(long, requires = "onset")]
    anomaly: Option<PathBuf>,
    #[arg(long)]
    onset: Option<usize>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Estimate stream CSV written by `respond`.
    #[arg(short, long)]
    stream: PathBuf,
    #[arg(short, long, value_enum, default_value = "yin")]
    quantity: QuantityArg,
    #[arg(long, default_value = "superposition")]
    model: DeltaModel,
    #[arg(long, default_value_t = 50)]
    warmup: usize,
    #[arg(long, default_value_t = 3.0)]
    sigma: f64,
    #[arg(long, default_value_t = 5)]
    confirmations: usize,
    /// Propagation velocity for the distance axis (m/s).
    #[arg(long)]
    velocity: Option<f64>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreArg {
    Mean,
    Min,
}

#[derive(Args)]
struct LocateArgs {
    /// DetectionReport JSON from `detect`.
    #[arg(short, long, required_unless_present = "sensor")]
    report: Option<PathBuf>,
    #[arg(short, long)]
    topology: PathBuf,
    #[arg(long)]
    port: Option<NodeId>,
    #[arg(long, value_enum, default_value = "mean")]
    score: ScoreArg,
    /// Fuse first-peak distances from several ports instead: NODE=METRES.
    #[arg(long, value_parser = parse_sensor, conflicts_with = "report")]
    sensor: Vec<(NodeId, f64)>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    config: PathBuf,
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    summary_json: Option<PathBuf>,
    /// Worker threads (0 = all cores); never changes the results.
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_sensor(s: &str) -> Result<(NodeId, f64), String> {
    let (n, d) = s.split_once('=').ok_or("expected NODE=METRES")?;
    Ok((n.trim().parse().map_err(|_| "bad node id")?, d.trim().parse().map_err(|_| "bad distance")?))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn load_topology(path: &Path) -> Result<Topology> {
    Ok(Topology::from_json(&read(path)?)?)
}

fn default_port(topo: &Topology, port: Option<NodeId>) -> Result<NodeId> {
    match port.or_else(|| topo.ports.first().map(|p| p.node)) {
        Some(p) => Ok(p),
        None => bail!("topology has no sensing port; pass --port"),
    }
}

fn parse_noise(s: &str) -> Result<NoiseModel> {
    Ok(match s {
        "none" => NoiseModel::noiseless(),
        "physical" => NoiseModel::physical(),
        _ => match s.strip_prefix("qnr:") {
            Some(db) => NoiseModel::DirectQnr { qnr_db: db.parse().context("QNR in dB")? },
            None => bail!("noise must be none, physical or qnr:<dB>"),
        },
    })
}

fn parse_plan(s: &str) -> Result<MeasurementPlan> {
    if s == "sls" {
        return Ok(MeasurementPlan::Sls { symbols_per_estimate: 1 });
    }
    let spec = s.strip_prefix("mls:").context("plan must be sls or mls:<T>x<M>")?;
    let (t, m) = spec.split_once('x').context("plan must be mls:<T>x<M>")?;
    Ok(MeasurementPlan::Mls { half_periods: t.parse()?, averages: m.parse()? })
}

fn generate(a: GenerateArgs) -> Result<()> {
    let topo = if a.fixture {
        fixture::topology()
    } else {
        let cfg = TopologyConfig {
            n_nodes: a.nodes,
            avg_branch_length: a.avg_length,
            max_node_degree: a.max_degree,
            cable: if a.mimo { CableSpec::mimo(DEFAULT_COUPLING) } else { CableSpec::siso() },
            port: if a.random_port { PortChoice::Random } else { PortChoice::HighestDegree },
            ..TopologyConfig::default()
        };
        generate_topology(&cfg, a.seed)?
    };
    emit(a.out.as_deref(), &topo.to_json()?)
}

fn inject(a: InjectArgs) -> Result<()> {
    let topo = load_topology(&a.topology)?;
    let anomaly: Anomaly = match (&a.anomaly, a.sample) {
        _ if a.fixture_damage.is_some() => {
            fixture::damage(if a.fixture_damage == Some(2) { fixture::B2 } else { fixture::B3 })
        }
        (Some(p), _) => serde_json::from_str(&read(p)?).context("parsing anomaly JSON")?,
        (None, Some(kind)) => {
            let port = default_port(&topo, None)?;
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            sample_anomaly(&topo, port, kind.into(), &AnomalySampler::default(), &mut rng)?
        }
        (None, None) => bail!("pass --anomaly or --sample"),
    };
    if let Some(p) = &a.anomaly_out {
        fs::write(p, serde_json::to_string_pretty(&anomaly)?)?;
    }
    emit(a.out.as_deref(), &inject_anomaly(&topo, &anomaly)?.to_json()?)
}

fn respond(a: RespondArgs) -> Result<()> {
    let topo = load_topology(&a.topology)?;
    let port = default_port(&topo, a.port)?;
    let quantity: Quantity = a.quantity.into();
    let grid = FrequencyGrid::narrowband();
    let spectrum_of = |t: &Topology| -> Result<Spectrum> {
        Ok(match (quantity, a.rx) {
            (Quantity::H, Some(rx)) => gridsense::tl::transfer_function(
                t,
                port,
                rx,
                &grid,
                gridsense::harness::TX_IMPEDANCE,
                gridsense::harness::RX_IMPEDANCE,
            )?,
            _ => true_spectrum(t, port, quantity, &grid)?,
        })
    };
    if quantity == Quantity::H && a.rx.is_none() {
        eprintln!("receiver: node {}", farthest_leaf(&topo, port)?);
    }
    let truth = spectrum_of(&topo)?;
    let faulty = match &a.anomaly {
        Some(p) => {
            let anomaly: Anomaly = serde_json::from_str(&read(p)?).context("parsing anomaly JSON")?;
            Some(spectrum_of(&inject_anomaly(&topo, &anomaly)?)?)
        }
        None => None,
    };
    let onset = a.onset.unwrap_or(usize::MAX);
    let stream = SensorStream::new(parse_noise(&a.noise)?, parse_plan(&a.plan)?, a.seed);
    let estimates: Vec<Spectrum> = (0..a.steps.max(1))
        .map(|s| {
            let t = match &faulty {
                Some(f) if s >= onset => f,
                _ => &truth,
            };
            Ok(stream.estimate(t, s as u64)?.spectrum)
        })
        .collect::<Result<_>>()?;
    let text = if a.steps > 1 { stream_to_csv(&estimates) } else { estimates[0].to_csv() };
    emit(a.out.as_deref(), &text)
}

fn detect(a: DetectArgs) -> Result<()> {
    let quantity: Quantity = a.quantity.into();
    let text = read(&a.stream)?;
    let stream = if text.starts_with("step,") {
        stream_from_csv(quantity, Source::Synthetic, &text)?
    } else {
        vec![Spectrum::from_csv(quantity, Source::Synthetic, &text)?]
    };
    let det = DetectConfig {
        model: a.model,
        warmup: a.warmup,
        sigma_factor: a.sigma,
        confirmations: a.confirmations,
        ..DetectConfig::default()
    };
    let mode = if quantity.is_reflectometric() { TraceMode::Reflectometry } else { TraceMode::EndToEnd };
    let mut cls = ClassifyConfig { mode, ..ClassifyConfig::default() };
    if let Some(v) = a.velocity {
        cls.velocity = v;
    }
    let m = monitor(&stream, &det, &cls)?;
    match m.detected_at {
        Some(i) => eprintln!("anomaly confirmed at step {i}: {}", m.report.class.name()),
        None => eprintln!("no anomaly in {} estimates", stream.len()),
    }
    emit(a.out.as_deref(), &m.report.to_json()?)
}

fn locate(a: LocateArgs) -> Result<()> {
    let topo = load_topology(&a.topology)?;
    let velocity = topo.branches.first().map_or(CableSpec::siso().velocity(), |b| b.cable.velocity());
    let cfg = LocateConfig {
        score: match a.score {
            ScoreArg::Mean => ScoreMode::Mean,
            ScoreArg::Min => ScoreMode::Min,
        },
        ..LocateConfig::for_grid(&FrequencyGrid::narrowband(), velocity)
    };
    let report = match &a.report {
        Some(path) => {
            let det = DetectionReport::from_json(&read(path)?)?;
            let port = default_port(&topo, a.port)?;
            localize_single(&det, &det.evidence.delta_peaks, &topo, port, &cfg)?
        }
        None => localize_multi(&a.sensor.iter().copied().collect::<BTreeMap<_, _>>(), &topo, &cfg)?,
    };
    emit(a.out.as_deref(), &report.to_json()?)
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::parse(&read(&a.config)?)?
        .with_env_seed()
        .with_context(|| format!("reading {SEED_ENV}"))?;
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    let records = run_monte_carlo(&cfg)?;
    let rows = summarize(&records, &cfg.group_by);
    if let Some(p) = a.records.as_ref().or(cfg.records_path.as_ref()) {
        fs::write(p, records_csv(&records)?).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.summary_json {
        fs::write(p, summary_json(&rows)?).with_context(|| format!("writing {}", p.display()))?;
    }
    emit(a.summary.as_deref().or(cfg.summary_path.as_deref()), &summary_csv(&rows)?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(a) => generate(a),
        Command::Inject(a) => inject(a),
        Command::Respond(a) => respond(a),
        Command::Detect(a) => detect(a),
        Command::Locate(a) => locate(a),
        Command::Experiment(a) => experiment(a),
    }
}
