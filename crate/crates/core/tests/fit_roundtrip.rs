use cascade_squeeze::cascade::CascadeSpec;
use cascade_squeeze::fit::{
    fit_losses, reference_db, FitError, FitOptions, FreeParam, MeasuredSqueezing,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn measured_from(spec: &CascadeSpec) -> MeasuredSqueezing {
    let [a, b, c] = reference_db(spec).unwrap();
    MeasuredSqueezing::new(a, b, c)
}

fn max_error(x: &[f64], planted: &[f64]) -> f64 {
    x.iter()
        .zip(planted)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[test]
fn recovers_twenty_planted_settings() {
    // Three dB values can have two exact preimages on either side of a fold in
    // the loss map, so the planted setting must be the reported solution or
    // one of the listed alternatives, and every alternative must be exact too.
    let template = CascadeSpec::two_cell_experiment();
    let free = FreeParam::detector_paths();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut unique = 0;
    for trial in 0..20 {
        let planted: Vec<f64> = (0..3).map(|_| rng.random_range(0.6..1.0)).collect();
        let mut truth = template.clone();
        truth.path_transmissions = planted.clone();
        let measured = measured_from(&truth);
        let fit = fit_losses(measured, &template, &free, &FitOptions::default()).unwrap();
        assert!(
            fit.residual < 1e-8,
            "trial {trial}: residual {:e}",
            fit.residual
        );
        assert!(!fit.flagged);
        let reported: Vec<f64> = fit.params.iter().map(|(_, v)| *v).collect();
        let best = std::iter::once(&reported)
            .chain(&fit.alternatives)
            .map(|x| max_error(x, &planted))
            .fold(f64::INFINITY, f64::min);
        assert!(
            best < 1e-3,
            "trial {trial}: planted {planted:?}, got {reported:?} and {:?}",
            fit.alternatives
        );
        for alt in &fit.alternatives {
            let mut spec = template.clone();
            spec.path_transmissions = alt.clone();
            let db = reference_db(&spec).unwrap();
            assert!(
                max_error(&db, &measured.as_array()) < 1e-4,
                "trial {trial}: alternative {alt:?} gives {db:?}"
            );
        }
        if fit.alternatives.is_empty() {
            assert!(max_error(&reported, &planted) < 1e-3);
            unique += 1;
        }
    }
    assert!(
        unique >= 10,
        "only {unique} of 20 settings were identifiable"
    );
}

#[test]
fn fold_yields_two_exact_solutions() {
    let template = CascadeSpec::two_cell_experiment();
    let mut truth = template.clone();
    truth.path_transmissions = vec![0.88, 0.816, 0.919];
    let fit = fit_losses(
        measured_from(&truth),
        &template,
        &FreeParam::detector_paths(),
        &FitOptions::default(),
    )
    .unwrap();
    assert_eq!(fit.alternatives.len(), 1, "{:?}", fit.alternatives);
    let reported: Vec<f64> = fit.params.iter().map(|(_, v)| *v).collect();
    assert!(max_error(&reported, &fit.alternatives[0]) > 0.01);
}

#[test]
fn ideal_targets_give_unit_transmissions() {
    let mut lossless = CascadeSpec::lossless(20.0, &[2.9, 2.1]);
    let measured = measured_from(&lossless);
    lossless.path_transmissions = vec![0.9; 3];
    let fit = fit_losses(
        measured,
        &lossless,
        &FreeParam::detector_paths(),
        &FitOptions::default(),
    )
    .unwrap();
    for (p, v) in &fit.params {
        assert!((v - 1.0).abs() < 1e-3, "{p} = {v}");
    }
}

#[test]
fn unreachable_targets_are_flagged_not_thrown() {
    let fit = fit_losses(
        MeasuredSqueezing::new(-5.5, -4.5, -20.0),
        &CascadeSpec::two_cell_experiment(),
        &FreeParam::detector_paths(),
        &FitOptions::default(),
    )
    .unwrap();
    assert!(fit.flagged);
    assert!(fit.max_abs_error_db > 1.0);
}

#[test]
fn deterministic_and_validated() {
    let template = CascadeSpec::two_cell_experiment();
    let free = FreeParam::detector_paths();
    let a = fit_losses(
        MeasuredSqueezing::direct_minima(),
        &template,
        &free,
        &FitOptions::default(),
    )
    .unwrap();
    let b = fit_losses(
        MeasuredSqueezing::direct_minima(),
        &template,
        &free,
        &FitOptions::default(),
    )
    .unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.model_db, b.model_db);

    let bad_bounds = FitOptions {
        lower: 0.9,
        upper: 0.8,
        ..FitOptions::default()
    };
    assert!(matches!(
        fit_losses(
            MeasuredSqueezing::slope_derived(),
            &template,
            &free,
            &bad_bounds
        ),
        Err(FitError::InfeasibleBounds { .. })
    ));
    assert!(matches!(
        fit_losses(
            MeasuredSqueezing::slope_derived(),
            &template,
            &[],
            &FitOptions::default()
        ),
        Err(FitError::ParameterCount(0))
    ));
    assert!(matches!(
        fit_losses(
            MeasuredSqueezing::new(f64::NAN, -4.5, -7.0),
            &template,
            &free,
            &FitOptions::default()
        ),
        Err(FitError::NonFiniteTarget(_))
    ));
    assert!("c3".parse::<FreeParam>().is_ok_and(|p| fit_losses(
        MeasuredSqueezing::slope_derived(),
        &template,
        &[p],
        &FitOptions::default()
    )
    .is_err()));
}
