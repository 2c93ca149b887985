use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cascade-squeeze"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn csv_field(text: &str, row_key: &str, column: &str) -> f64 {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == column).unwrap();
    let row = lines
        .find(|l| l.split(',').next() == Some(row_key))
        .unwrap();
    row.split(',').nth(col).unwrap().parse().unwrap()
}

#[test]
fn run_reports_trace_table() {
    let out = run(&[
        "run",
        "--config",
        scenario("two_cell_lossless.toml").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("plan_name,variance,snl,ratio,db\n"));
    assert!((csv_field(&text, "G", "ratio") - 1.0 / 11.18).abs() < 1e-9);

    let out = run(&[
        "run",
        "--config",
        scenario("twin_beams.toml").to_str().unwrap(),
        "--format",
        "csv",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!((csv_field(&text, "twin", "ratio") - 1.0 / 4.8).abs() < 1e-9);
}

#[test]
fn invalid_config_exits_1_with_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "seed_intensity = 1.0\n\n[[stages]]\ngain = 0.5\n").unwrap();
    let out = run(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("stages[0].gain") && err.contains("line 4"),
        "{err}"
    );

    std::fs::write(
        &path,
        "seed_intensity = 1.0\nbogus = 2\n[[stages]]\ngain = 2.0\n",
    )
    .unwrap();
    assert_eq!(
        run(&["run", "--config", path.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["run", "--config", "/nonexistent.toml"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["run"]).status.code(), Some(1));
    assert_eq!(
        run(&[
            "run",
            "--config",
            path.to_str().unwrap(),
            "--format",
            "json"
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = scenario("two_cell_experiment.toml");
    let mut files = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("run{i}.csv"));
        let status = run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status;
        assert!(status.success());
        files.push(std::fs::read(out).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn sweep_power_slope_ratios_match_run() {
    let dir = tempfile::tempdir().unwrap();
    let fits = dir.path().join("fits.csv");
    let points = dir.path().join("points.csv");
    let config = scenario("two_cell_lossless.toml");
    let out = run(&[
        "sweep-power",
        "--config",
        config.to_str().unwrap(),
        "--out",
        fits.to_str().unwrap(),
        "--points",
        points.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let fits = std::fs::read_to_string(fits).unwrap();
    let direct =
        String::from_utf8(run(&["run", "--config", config.to_str().unwrap()]).stdout).unwrap();
    assert!((csv_field(&fits, "A", "ratio") - csv_field(&direct, "G", "ratio")).abs() < 1e-9);
    assert!((csv_field(&fits, "B", "ratio") - 1.0 / 4.8).abs() < 1e-9);
    assert!((csv_field(&fits, "C", "ratio") - 1.0 / 3.2).abs() < 1e-9);
    assert!((csv_field(&fits, "D", "slope") - 1.0).abs() < 1e-12);
    assert_eq!(
        std::fs::read_to_string(points).unwrap().lines().count(),
        1 + 4 * 10
    );

    let degenerate = run(&[
        "sweep-power",
        "--config",
        config.to_str().unwrap(),
        "--seeds",
        "1,2",
    ]);
    assert_eq!(degenerate.status.code(), Some(1));
}

#[test]
fn fit_losses_status_codes() {
    let config = scenario("fit_template.toml");
    let ok = run(&["fit-losses", "--config", config.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8(ok.stdout).unwrap();
    for p in ["c1", "c2", "probe"] {
        let v = csv_field(&text, p, "value");
        assert!((0.8..=1.0).contains(&v), "{p} = {v}");
    }

    let flagged = run(&[
        "fit-losses",
        "--config",
        config.to_str().unwrap(),
        "--measured=-5.5,-4.5,-20",
    ]);
    assert_eq!(flagged.status.code(), Some(2));
    let bad = run(&[
        "fit-losses",
        "--config",
        config.to_str().unwrap(),
        "--free",
        "c9",
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn oracle_check_status_codes() {
    let ok = run(&["oracle-check", "--gains", "1.5", "--seed-intensity", "4"]);
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8(ok.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let variance: f64 = row[2].parse().unwrap();
    assert!((variance - 4.0).abs() < 1e-8);

    let leaky = run(&[
        "oracle-check",
        "--gains",
        "1.5",
        "--seed-intensity",
        "9",
        "--cutoffs",
        "20,10",
    ]);
    assert_eq!(leaky.status.code(), Some(2));
    let three = run(&[
        "oracle-check",
        "--gains",
        "1.5,1.5,1.5",
        "--seed-intensity",
        "1",
    ]);
    assert_eq!(three.status.code(), Some(1));
}

#[test]
fn spectra_are_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = scenario("two_cell_experiment.toml");
    let spectra = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let status = run(&[
            "spectra",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "--rbw-hz",
            "30000",
            "--avg",
            "300",
            "--fs-hz",
            "4000000",
            "--tone",
            "500000:100000",
        ])
        .status;
        assert!(status.success());
        (
            std::fs::read(out.join("summary.csv")).unwrap(),
            std::fs::read(out.join("G.csv")).unwrap(),
        )
    };
    let a = spectra("a", "7");
    let b = spectra("b", "7");
    let c = spectra("c", "8");
    assert_eq!(a, b);
    assert_ne!(a.1, c.1);
    let summary = String::from_utf8(a.0).unwrap();
    let measured = csv_field(&summary, "G", "measured_db");
    let analytic = csv_field(&summary, "G", "analytic_db");
    assert!(
        (measured - analytic).abs() < 0.3,
        "{measured} vs {analytic}"
    );

    let short = run(&[
        "spectra",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("short").to_str().unwrap(),
        "--duration-s",
        "0.001",
    ]);
    assert_eq!(short.status.code(), Some(1));
}
