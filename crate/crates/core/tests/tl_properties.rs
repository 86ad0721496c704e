use std::collections::BTreeMap;

use gridsense::linalg::{self, C64};
use gridsense::tl::cable::{DEFAULT_C, DEFAULT_L};
use gridsense::tl::*;
use gridsense::topogen::{generate_topology, TopologyConfig};
use proptest::prelude::*;

fn random_topology(n: usize, seed: u64, mimo: bool) -> Topology {
    let cable = if mimo { CableSpec::mimo(DEFAULT_COUPLING) } else { CableSpec::siso() };
    let cfg = TopologyConfig { n_nodes: n, cable, ..Default::default() };
    generate_topology(&cfg, seed).unwrap()
}

/// Port — lossy feeder — junction, with a lossless matched arm of variable
/// length and a resistive arm.
fn matched_arm(arm_len: f64) -> Topology {
    let lossless = CableSpec::scalar(0.0, DEFAULT_L, 0.0, DEFAULT_C);
    let node = |id, x| Node { id, x, y: 0.0 };
    let mut loads = BTreeMap::new();
    loads.insert(2, Load::shunt(AdmittanceModel::conductance((DEFAULT_C / DEFAULT_L).sqrt())));
    loads.insert(3, Load::shunt(AdmittanceModel::resistor(200.0)));
    Topology {
        channels: 1,
        nodes: vec![node(0, 0.0), node(1, 700.0), node(2, 1400.0), node(3, 1000.0)],
        branches: vec![
            Branch { id: 0, a: 0, b: 1, length_m: 700.0, cable: CableSpec::siso(), inline: vec![] },
            Branch { id: 1, a: 1, b: 2, length_m: arm_len, cable: lossless, inline: vec![] },
            Branch { id: 2, a: 1, b: 3, length_m: 300.0, cable: CableSpec::siso(), inline: vec![] },
        ],
        loads,
        ports: vec![Port { node: 0, y0: None }, Port { node: 1, y0: None }],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn input_admittance_is_passive(n in 2usize..14, seed in any::<u64>(), mimo in any::<bool>()) {
        let t = random_topology(n, seed, mimo);
        let grid = FrequencyGrid::narrowband();
        let y = input_admittance(&t, t.ports[0].node, &grid).unwrap();
        for (k, m) in y.values.iter().enumerate() {
            prop_assert!(m.trace().re >= 0.0, "tone {k}: {}", m.trace());
        }
    }

    #[test]
    fn matched_arm_length_is_invisible(a in 10.0f64..5000.0, b in 10.0f64..5000.0) {
        let grid = FrequencyGrid::narrowband();
        for port in [0, 1] {
            let ya = input_admittance(&matched_arm(a), port, &grid).unwrap();
            let yb = input_admittance(&matched_arm(b), port, &grid).unwrap();
            for (x, y) in ya.values.iter().zip(&yb.values) {
                prop_assert!(linalg::rel_diff(x, y) < 1e-9);
            }
        }
    }

    #[test]
    fn reflection_round_trip(n in 2usize..14, seed in any::<u64>(), mimo in any::<bool>()) {
        let t = random_topology(n, seed, mimo);
        let grid = FrequencyGrid::narrowband();
        let port = t.ports[0].node;
        let y = input_admittance(&t, port, &grid).unwrap();
        let y0 = port_reference(&t, port, &grid).unwrap();
        let back = admittance_from_reflection(&reflection_coefficient(&y, &y0).unwrap(), &y0).unwrap();
        for (a, b) in y.values.iter().zip(&back.values) {
            prop_assert!(linalg::rel_diff(a, b) < 1e-10);
        }
    }

    #[test]
    fn uniform_sections_are_reciprocal(len in 0.0f64..5000.0, k in 0usize..116) {
        let grid = FrequencyGrid::narrowband();
        let s = LineModel::new(&CableSpec::siso(), grid.tone(k), k).unwrap().section(len);
        prop_assert!((s.determinant() - C64::new(1.0, 0.0)).norm() < 1e-12);
    }
}
