//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints its pass/fail line; exits non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use gridsense::detect::*;
use gridsense::harness::*;
use gridsense::linalg::{self, C64};
use gridsense::locate::{localize_single, LocateConfig};
use gridsense::sensing::{MeasurementPlan, NoiseModel, SensorStream};
use gridsense::tl::*;
use gridsense::topogen::{fixture, generate_topology, inject_anomaly, TopologyConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = (bool, String);

fn near(x: f64, target: f64, bin: f64) -> bool {
    (x - target).abs() <= bin
}

fn fixture_scenario() -> Check {
    let t0 = Instant::now();
    let grid = FrequencyGrid::narrowband();
    let topo = fixture::topology();
    let before = input_admittance(&topo, fixture::PORT, &grid).unwrap();
    let ccfg = ClassifyConfig::default();
    let lcfg = LocateConfig::for_grid(&grid, CableSpec::siso().velocity());
    let mut ok = true;
    let mut notes = Vec::new();
    for (branch, name) in [(fixture::B3, "B3"), (fixture::B2, "B2")] {
        let faulty = inject_anomaly(&topo, &fixture::damage(branch)).unwrap();
        let after = input_admittance(&faulty, fixture::PORT, &grid).unwrap();
        let d = delta_against(&after, &before.values, DeltaModel::Superposition).unwrap();
        let report = classify(&before, &after, &d, None, (0, 0), &ccfg).unwrap();
        let peaks = &report.evidence.delta_peaks;
        let bin = report.evidence.bin_width_m;
        let peaks_ok = if branch == fixture::B3 {
            [12_400.0, 15_950.0].iter().all(|&t| peaks.iter().any(|p| near(p.position, t, bin)))
        } else {
            let top = peaks.iter().max_by(|a, b| a.amplitude.total_cmp(&b.amplitude)).unwrap();
            near(top.position, 12_950.0, bin)
        };
        let class_ok = report.class == AnomalyClass::DistributedFault;
        let loc = localize_single(&report, peaks, &topo, fixture::PORT, &lcfg).unwrap();
        let loc_ok = loc.chosen == branch;
        ok &= peaks_ok && class_ok && loc_ok;
        let pos: Vec<String> = peaks.iter().map(|p| format!("{:.0}", p.position)).collect();
        notes.push(format!("{name}: peaks [{}] class {} branch {}", pos.join(" "), report.class.name(), loc.chosen));
    }
    let secs = t0.elapsed().as_secs_f64();
    ok &= secs < 5.0;
    (ok, format!("{}; {secs:.2} s", notes.join("; ")))
}

fn oracle_equivalence() -> Check {
    let t0 = Instant::now();
    let grid = FrequencyGrid::narrowband();
    let (mut worst_y, mut worst_h) = (0.0f64, 0.0f64);
    for seed in 0..20u64 {
        let topo = generate_topology(&TopologyConfig { n_nodes: 5, ..Default::default() }, seed).unwrap();
        let port = topo.ports[0].node;
        let rx = farthest_leaf(&topo, port).unwrap();
        let req = TransferRequest { tx: port, rx, zs: TX_IMPEDANCE, zl: RX_IMPEDANCE };
        let o = nodal_oracle_extrapolated(&topo, &grid, 10.0, port, Some(req)).unwrap();
        let y = input_admittance(&topo, port, &grid).unwrap();
        let h = transfer_function(&topo, port, rx, &grid, TX_IMPEDANCE, RX_IMPEDANCE).unwrap();
        let err = |a: &Spectrum, b: &Spectrum| {
            a.values.iter().zip(&b.values).map(|(x, y)| linalg::rel_diff(x, y)).fold(0.0, f64::max)
        };
        worst_y = worst_y.max(err(&y, &o.yin));
        worst_h = worst_h.max(err(&h, o.h.as_ref().unwrap()));
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = worst_y < 0.01 && worst_h < 0.01 && secs < 60.0;
    (ok, format!("worst relative error Y_in {worst_y:.2e}, H {worst_h:.2e}; {secs:.1} s"))
}

fn pf_of(rows: &[SummaryRow], quantity: &str, model: &str) -> f64 {
    let key_q = format!("quantity={quantity}");
    let key_m = format!("model={model}");
    rows.iter().find(|r| r.group.contains(&key_q) && r.group.contains(&key_m)).unwrap().p_failure
}

fn quantity_ordering() -> Check {
    let cfg = ExperimentConfig {
        models: vec![DeltaModel::Superposition, DeltaModel::Chain],
        group_by: vec![GroupKey::Quantity, GroupKey::Model],
        ..ExperimentConfig::default()
    };
    let rows = summarize(&run_monte_carlo(&cfg).unwrap(), &cfg.group_by);
    let mut ok = true;
    let mut notes = Vec::new();
    for model in ["superposition", "chain"] {
        let (h, r, y) = (pf_of(&rows, "h", model), pf_of(&rows, "rho", model), pf_of(&rows, "yin", model));
        ok &= h <= r && r <= y;
        notes.push(format!("{model}: H {h:.4} rho {r:.4} Y {y:.4}"));
    }
    for q in ["yin", "rho", "h"] {
        ok &= pf_of(&rows, q, "chain") <= pf_of(&rows, q, "superposition") + 0.02;
    }
    (ok, notes.join("; "))
}

fn mimo_benefit() -> Check {
    let cfg = ExperimentConfig {
        quantities: vec![Quantity::Yin],
        channels: ChannelMode::Mimo,
        mimo_entries: vec![(0, 0), (0, 1)],
        group_by: vec![GroupKey::Entry],
        ..ExperimentConfig::default()
    };
    let rows = summarize(&run_monte_carlo(&cfg).unwrap(), &cfg.group_by);
    let pf = |e: &str| rows.iter().find(|r| r.group == format!("entry={e}")).unwrap().p_failure;
    let (co, cross) = (pf("1-1"), pf("1-2"));
    (cross <= co, format!("p_failure 1-1 {co:.4}, 1-2 {cross:.4}"))
}

fn qnr_degradation() -> Check {
    let levels = [60.0, 40.0, 20.0, 0.0];
    let cfg = ExperimentConfig {
        quantities: vec![Quantity::Yin],
        noise: levels.iter().map(|&q| NoiseLevel::Qnr(q)).collect(),
        group_by: vec![GroupKey::Noise],
        ..ExperimentConfig::default()
    };
    let rows = summarize(&run_monte_carlo(&cfg).unwrap(), &cfg.group_by);
    let rates: Vec<f64> = rows.iter().map(|r| r.detect_rate).collect();
    let ok = rows.len() == levels.len() && rates.windows(2).all(|w| w[1] <= w[0] + 0.03);
    let shown: Vec<String> = levels.iter().zip(&rates).map(|(q, r)| format!("{q} dB {r:.3}")).collect();
    (ok, format!("detection p_success {}", shown.join(", ")))
}

fn size_degradation() -> Check {
    let sizes = [5, 10, 15, 20];
    let cfg = ExperimentConfig {
        quantities: vec![Quantity::Yin],
        nodes: sizes.to_vec(),
        group_by: vec![GroupKey::Nodes],
        ..ExperimentConfig::default()
    };
    let records = run_monte_carlo(&cfg).unwrap();
    let rows = summarize(&records, &cfg.group_by);
    let branch: Vec<f64> = rows.iter().map(|r| r.branch_rate).collect();
    let monotone = rows.len() == sizes.len() && branch.windows(2).all(|w| w[1] <= w[0] + 0.03);
    let contained = rows.iter().all(|r| r.first_node_rate >= r.branch_rate)
        && records.iter().all(|r| !r.branch_hit || r.first_node_hit);
    let shown: Vec<String> = rows
        .iter()
        .zip(sizes)
        .map(|(r, n)| format!("{n}: branch {:.3} first-node {:.3}", r.branch_rate, r.first_node_rate))
        .collect();
    (monotone && contained, shown.join(", "))
}

fn property_suites() -> Check {
    let grid = FrequencyGrid::narrowband();
    let mut failures = Vec::new();

    // passivity and the reflection round trip on SISO and MIMO networks
    let (mut passive, mut round_trip) = (true, 0.0f64);
    for seed in 0..20u64 {
        for cable in [CableSpec::siso(), CableSpec::mimo(DEFAULT_COUPLING)] {
            let topo = generate_topology(&TopologyConfig { n_nodes: 10, cable, ..Default::default() }, seed).unwrap();
            let port = topo.ports[0].node;
            let y = input_admittance(&topo, port, &grid).unwrap();
            passive &= y.values.iter().all(|m| m.trace().re >= 0.0);
            let y0 = port_reference(&topo, port, &grid).unwrap();
            let back = admittance_from_reflection(&reflection_coefficient(&y, &y0).unwrap(), &y0).unwrap();
            for (a, b) in y.values.iter().zip(&back.values) {
                round_trip = round_trip.max(linalg::rel_diff(a, b));
            }
        }
    }
    if !passive {
        failures.push("passivity".to_string());
    }
    if round_trip > 1e-10 {
        failures.push(format!("round trip {round_trip:.1e}"));
    }

    // unperturbed noiseless stream: Δ_sup = 0, Δ_ch = I after warm-up
    let topo = generate_topology(&TopologyConfig { n_nodes: 10, ..Default::default() }, 3).unwrap();
    let truth = input_admittance(&topo, topo.ports[0].node, &grid).unwrap();
    let dcfg = DetectConfig::default();
    let mut st = ReferenceState::new(grid, 1);
    let scale = truth.values.iter().map(linalg::norm).fold(0.0, f64::max);
    let mut null_delta = true;
    for step in 0..dcfg.warmup + 20 {
        null_delta &= !detect_step(&truth, &mut st, &dcfg).unwrap().detected();
        if step >= dcfg.warmup {
            let sup = delta(&truth, &st, DeltaModel::Superposition).unwrap();
            let ch = delta(&truth, &st, DeltaModel::Chain).unwrap();
            null_delta &= sup.values.iter().all(|m| linalg::norm(m) <= 1e-12 * scale);
            null_delta &= ch.values.iter().all(|m| linalg::norm(&(m - linalg::identity(1))) <= 1e-12);
        }
    }
    if !null_delta {
        failures.push("null delta".to_string());
    }

    // confirmed false detections over 10^4 stationary steps with K = 5
    let stream = SensorStream::new(NoiseModel::DirectQnr { qnr_db: 30.0 }, MeasurementPlan::Sls { symbols_per_estimate: 1 }, 4);
    let mut st = ReferenceState::new(grid, 1);
    let steps = 10_000u64;
    let mut confirmed = 0;
    for step in 0..dcfg.warmup as u64 + steps {
        let est = stream.estimate(&truth, step).unwrap().spectrum;
        confirmed += detect_step(&est, &mut st, &dcfg).unwrap().detected() as usize;
    }
    if confirmed as f64 / steps as f64 > 1e-4 {
        failures.push(format!("{confirmed} false confirmations"));
    }

    // root-MUSIC: two echoes half a Fourier cell apart at QNR 40 dB
    let fourier = 1.0 / (grid.count() as f64 * grid.delta_f());
    let taus = [30e-6, 30e-6 + 0.5 * fourier];
    let clean: Vec<C64> = grid
        .tones()
        .map(|f| C64::from_polar(1.0, -2.0 * PI * f * taus[0]) + C64::from_polar(0.8, -2.0 * PI * f * taus[1]))
        .collect();
    let power = clean.iter().map(|z| z.norm_sqr()).sum::<f64>() / clean.len() as f64;
    let sd = (power * 1e-4 / 2.0).sqrt();
    let mut resolved = 0;
    let trials = 20;
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy: Vec<C64> = clean
            .iter()
            .map(|z| {
                let (re, im): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                z + C64::new(re * sd, im * sd)
            })
            .collect();
        let r = root_music_delays(&noisy, &grid, 2, 1.58e8, TraceMode::Reflectometry).unwrap();
        let sep = taus[1] - taus[0];
        if r.delays_s.len() == 2 && r.delays_s.iter().zip(taus).all(|(e, t)| (e - t).abs() < 0.25 * sep) {
            resolved += 1;
        }
    }
    if resolved < trials {
        failures.push(format!("root-MUSIC resolved {resolved}/{trials}"));
    }

    // Monte-Carlo output independent of worker count
    let base = ExperimentConfig { trials: 8, nodes: vec![8], ..ExperimentConfig::default() };
    let outputs: Vec<String> = [1, 2, 7]
        .iter()
        .map(|&w| records_csv(&run_monte_carlo(&ExperimentConfig { workers: w, ..base.clone() }).unwrap()).unwrap())
        .collect();
    if outputs.windows(2).any(|w| w[0] != w[1]) {
        failures.push("worker-count dependence".to_string());
    }

    let summary = format!(
        "round trip {round_trip:.1e}, false confirmations {confirmed}/{steps}, root-MUSIC {resolved}/{trials}"
    );
    if failures.is_empty() {
        (true, summary)
    } else {
        (false, format!("{summary}; failed: {}", failures.join(", ")))
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 7] = [
        ("fixture scenario", fixture_scenario),
        ("oracle equivalence", oracle_equivalence),
        ("detection-quantity ordering", quantity_ordering),
        ("MIMO benefit", mimo_benefit),
        ("QNR degradation", qnr_degradation),
        ("size degradation", size_degradation),
        ("property suites", property_suites),
    ];
    let mut all = true;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check();
        all &= ok;
        println!("criterion {} {name}: {} — {detail}", i + 1, if ok { "PASS" } else { "FAIL" });
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
