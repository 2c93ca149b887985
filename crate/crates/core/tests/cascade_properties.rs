use approx::assert_abs_diff_eq;
use cascade_squeeze::cascade::{
    analytic_chain_ratio, build_network, full_difference, pairwise_ratio, run_scenario,
    CascadeSpec, PlanSpec,
};
use cascade_squeeze::sweep::linear_grid;

fn ratio(spec: &CascadeSpec, plan: PlanSpec) -> f64 {
    run_scenario(&spec.clone().with_plans(vec![plan]))
        .unwrap()
        .reports[0]
        .report
        .ratio
}

// Closed forms from the conserved differences N_Pr1 - N_C1 = N_seed and
// N_Pr2 - N_C2 = N_Pr1, per unit seed intensity.
fn conjugate_pair_ratio(g1: f64, g2: f64) -> f64 {
    let var = (g2 - 1.0) * g1 * (g2 + (g2 - 1.0) * (2.0 * g1 - 1.0))
        + (g1 - 1.0) * (2.0 * g1 - 1.0)
        - 4.0 * (g2 - 1.0) * g1 * (g1 - 1.0);
    var / ((g2 - 1.0) * g1 + g1 - 1.0)
}

fn probe_first_conjugate_ratio(g1: f64, g2: f64) -> f64 {
    let var = 1.0 + (g2 - 1.0) * g1 * (g2 + (g2 - 1.0) * (2.0 * g1 - 1.0)) + 2.0 * (g2 - 1.0) * g1;
    var / (g1 * g2 + g1 - 1.0)
}

fn triple_with_interstage_loss(g1: f64, g2: f64, eta: f64) -> f64 {
    let var = eta * eta + (1.0 - eta).powi(2) * (g1 - 1.0) * (2.0 * g1 - 1.0)
        - 2.0 * eta * (1.0 - eta) * (g1 - 1.0)
        + eta * (1.0 - eta) * g1;
    var / ((2.0 * g2 - 1.0) * eta * g1 + g1 - 1.0)
}

#[test]
fn tripartite_grid() {
    let grid = linear_grid(1.1, 5.0, 12);
    let mut squeezed_i3_i1 = 0;
    for &g1 in &grid {
        for &g2 in &grid {
            let spec = CascadeSpec::lossless(5.0, &[g1, g2]);
            let i2_i1 = ratio(&spec, PlanSpec::new("i2-i1", &[("C2", 1.0), ("C1", -1.0)]));
            let i3_i1 = ratio(&spec, PlanSpec::new("i3-i1", &[("Pr", 1.0), ("C1", -1.0)]));
            let i3_i2 = ratio(&spec, PlanSpec::new("i3-i2", &[("Pr", 1.0), ("C2", -1.0)]));
            assert_abs_diff_eq!(i2_i1, conjugate_pair_ratio(g1, g2), epsilon = 1e-9);
            assert_abs_diff_eq!(i3_i1, probe_first_conjugate_ratio(g1, g2), epsilon = 1e-9);
            assert_abs_diff_eq!(i3_i2, pairwise_ratio(g1, g2).unwrap(), epsilon = 1e-9);
            assert!(i2_i1 >= 1.0, "({g1}, {g2}): {i2_i1}");
            assert!(ratio(&spec, full_difference("full", 2)) < 1.0);
            if i3_i1 < 1.0 {
                squeezed_i3_i1 += 1;
                // only when the second stage is weak does Pr - C1 keep stage-1 twin correlations
                assert!(g2 < g1, "({g1}, {g2})");
            }
        }
    }
    assert!(squeezed_i3_i1 > 0);
    assert!(probe_first_conjugate_ratio(2.9, 2.1) > 1.0);
    assert_abs_diff_eq!(pairwise_ratio(1.5, 3.0).unwrap(), 0.4, epsilon = 1e-12);
    assert_abs_diff_eq!(pairwise_ratio(2.0, 2.0).unwrap(), 1.0, epsilon = 1e-12);
}

#[test]
fn triple_ratio_never_improves_with_conjugate_or_detector_loss() {
    for base in [
        CascadeSpec::lossless(20.0, &[2.9, 2.1]),
        CascadeSpec::two_cell_experiment(),
    ] {
        let etas = linear_grid(1.0, 0.5, 11);
        type Knob = fn(&mut CascadeSpec, f64);
        let knobs: [(&str, Knob); 3] = [
            ("C1 path", |s, v| s.path_transmissions[0] = v),
            ("C2 path", |s, v| s.path_transmissions[1] = v),
            ("detectors", |s, v| s.detector_efficiency = v),
        ];
        for (name, knob) in knobs {
            let mut last = 0.0;
            for &eta in &etas {
                let mut spec = base.clone();
                knob(&mut spec, eta);
                let r = ratio(&spec, full_difference("full", 2));
                assert!(r >= last - 1e-12, "{name}: {r} after {last} at eta {eta}");
                last = r;
            }
        }
    }
}

#[test]
fn interstage_loss_is_not_monotone() {
    // Loss on the probe between the cells partially rebalances the triple
    // difference, so a little of it helps.
    let (g1, g2) = (2.9, 2.1);
    for eta in linear_grid(1.0, 0.5, 11) {
        let mut spec = CascadeSpec::lossless(20.0, &[g1, g2]);
        spec.stages[1].pre_stage_transmission = eta;
        let engine = ratio(&spec, full_difference("full", 2));
        assert_abs_diff_eq!(
            engine,
            triple_with_interstage_loss(g1, g2, eta),
            epsilon = 1e-9
        );
    }
    assert!(triple_with_interstage_loss(g1, g2, 0.9) < triple_with_interstage_loss(g1, g2, 1.0));
    assert!(triple_with_interstage_loss(g1, g2, 0.5) > triple_with_interstage_loss(g1, g2, 0.9));
}

#[test]
fn probe_path_loss_is_not_monotone() {
    // With one stage, a probe-path loss is the same rebalancing as above with G2 = 1.
    let g = 2.9;
    for eta in linear_grid(1.0, 0.5, 11) {
        let mut spec = CascadeSpec::lossless(20.0, &[g]);
        spec.path_transmissions[1] = eta;
        let engine = ratio(&spec, full_difference("twin", 1));
        assert_abs_diff_eq!(
            engine,
            triple_with_interstage_loss(g, 1.0, eta),
            epsilon = 1e-9
        );
    }
    let mut spec = CascadeSpec::lossless(20.0, &[2.9, 2.1]);
    let lossless = ratio(&spec, full_difference("full", 2));
    spec.path_transmissions[2] = 0.95;
    assert!(ratio(&spec, full_difference("full", 2)) < lossless);
}

#[test]
fn chain_squeezing_deepens_with_length() {
    for g in [1.05, 1.5, 3.0] {
        let mut last = f64::INFINITY;
        for n in 1..=10 {
            let gains = vec![g; n];
            let engine = ratio(
                &CascadeSpec::lossless(2.0, &gains),
                full_difference("full", n),
            );
            let analytic = analytic_chain_ratio(&gains).unwrap();
            assert_abs_diff_eq!(engine, analytic, epsilon = 1e-9);
            assert!(analytic < last);
            last = analytic;
        }
    }
}

#[test]
fn network_shapes() {
    let twin = build_network(&CascadeSpec::lossless(1.0, &[2.0])).unwrap();
    assert_eq!(twin.beams.len(), 2);
    let triple = build_network(&CascadeSpec::lossless(1.0, &[2.0, 2.0])).unwrap();
    let labels: Vec<&str> = triple
        .beams
        .iter()
        .map(|&b| triple.registry.labels()[b].as_str())
        .collect();
    assert_eq!(labels, ["C1", "C2", "Pr"]);

    let five = run_scenario(&CascadeSpec::lossless(3.0, &[2.0; 5])).unwrap();
    assert_eq!(five.network.beams.len(), 6);
    assert!(five.network.transform.check_symplectic().valid);
    // probe 2^5 I0 plus spontaneous emission 2^5 - 1
    assert_abs_diff_eq!(
        five.mean.intensity(five.network.probe()),
        32.0 * 3.0,
        epsilon = 1e-9
    );
}

#[test]
fn two_cell_trace_set() {
    let lossless = run_scenario(&CascadeSpec::lossless(20.0, &[2.9, 2.1])).unwrap();
    // A = C1, B = C2, C = Pr, D = Pr - C2, G = triple
    let expect = [
        ("A", 4.8),
        ("B", 2.0 * 2.9 * 2.1 - 2.0 * 2.9 + 1.0),
        ("C", 11.18),
        ("D", 1.5),
        ("G", 1.0 / 11.18),
    ];
    for (name, value) in expect {
        assert_abs_diff_eq!(lossless.report(name).unwrap().ratio, value, epsilon = 1e-9);
    }
    for r in &lossless.reports {
        let snl: f64 = r.report.mean_powers.iter().sum();
        assert_abs_diff_eq!(r.report.snl, snl, epsilon = 1e-10 * snl);
    }

    let lossy = run_scenario(&CascadeSpec::two_cell_experiment()).unwrap();
    let g = lossy.report("G").unwrap().ratio;
    assert!(g > lossless.report("G").unwrap().ratio && g < 1.0);

    let idle = run_scenario(&CascadeSpec::lossless(4.0, &[1.0, 1.0])).unwrap();
    assert_eq!(idle.skipped, ["A", "B", "F"]);
    for r in &idle.reports {
        assert_abs_diff_eq!(r.report.ratio, 1.0, epsilon = 1e-12);
    }
}

#[test]
fn config_files_round_trip_to_presets() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios");
    let lossless = CascadeSpec::from_file(format!("{dir}/two_cell_lossless.toml")).unwrap();
    assert_eq!(lossless, CascadeSpec::lossless(20.0, &[2.9, 2.1]));
    let template = CascadeSpec::from_file(format!("{dir}/fit_template.toml")).unwrap();
    assert_eq!(template, CascadeSpec::two_cell_experiment());
    let twin = CascadeSpec::from_file(format!("{dir}/twin_beams.toml")).unwrap();
    assert_abs_diff_eq!(
        run_scenario(&twin).unwrap().reports[0].report.ratio,
        1.0 / 4.8,
        epsilon = 1e-12
    );
}
