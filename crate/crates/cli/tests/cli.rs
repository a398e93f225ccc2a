use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vibronic_cli::exit_code;
use vibronic_core::estimator::from_csv;
use vibronic_core::Trace;

fn vibronic(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vibronic")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = vibronic(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn trace(path: &Path) -> Trace {
    Trace::from_csv(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn toy_exact_run_writes_normalised_trace_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["run", "--preset", "toy", "--output", "toy.csv"]);
    let tr = trace(&dir.path().join("toy.csv"));
    assert_eq!(tr.times.len(), 40);
    assert_eq!(*tr.times.last().unwrap(), 400.0);
    for p in &tr.populations {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    }
    let meta = fs::read_to_string(dir.path().join("toy.meta.toml")).unwrap();
    assert!(meta.contains("cutoffs = [8, 8]"), "{meta}");
    assert!(meta.contains("cost_note"));
}

#[test]
fn default_output_name_follows_backend() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["compile", "--preset", "toy", "--steps", "10"]);
    let text = fs::read_to_string(dir.path().join("vibronic-compile.txt")).unwrap();
    assert!(text.lines().count() > 20);
    assert!(dir.path().join("vibronic-compile.meta.toml").exists());
}

#[test]
fn estimate_reports_strong_coupling_run_time() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["estimate", "--preset", "toy", "--lambda-over-delta", "1,5,10,20,30", "--modes", "5", "-o", "est.csv"]);
    let rows = from_csv(&fs::read_to_string(dir.path().join("est.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 5);
    let last = rows.iter().find(|r| r.lambda_over_delta == 30.0).unwrap();
    assert!((last.max_run_operation_ms / 57.0 - 1.0).abs() < 0.25);
    assert!(stdout.contains("N=5: operation time"), "{stdout}");
}

#[test]
fn ideal_emulation_and_exact_agree_through_compare() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["run", "--preset", "toy", "-o", "exact.csv"]);
    ok(dir.path(), &["run", "--preset", "toy", "--backend", "ion-ideal", "-o", "ion.csv"]);
    let report = ok(dir.path(), &["compare", "exact.csv", "ion.csv"]);
    assert!(report.starts_with("state,max_abs_deviation,integrated_abs_deviation_fs"));
    let worst = report
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!(worst <= 0.01, "{report}");
    assert!(!report.contains("FLAG"));
    let meta = fs::read_to_string(dir.path().join("ion.meta.toml")).unwrap();
    assert!(meta.contains("[hardware]") && meta.contains("encoding = \"compact\""), "{meta}");
}

#[test]
fn compare_flags_large_deviations() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["run", "--preset", "toy", "-o", "exact.csv"]);
    ok(dir.path(), &["run", "--preset", "toy", "--backend", "ehrenfest", "--trajectories", "100", "-o", "eh.csv"]);
    assert!(ok(dir.path(), &["compare", "exact.csv", "eh.csv"]).contains("FLAG"));
    assert!(!ok(dir.path(), &["compare", "exact.csv", "eh.csv", "--flag-above", "0.9"]).contains("FLAG"));
}

#[test]
fn sweep_writes_one_file_per_point() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["sweep", "--preset", "toy", "--backend", "compile", "--lambda-over-delta", "1,5", "--modes", "2,3", "--steps", "5", "--output-dir", "out"],
    );
    for (l, n) in [(1, 2), (1, 3), (5, 2), (5, 3)] {
        let p = dir.path().join(format!("out/compile_lambda{l}_N{n}.txt"));
        assert!(p.exists(), "{}", p.display());
    }
    let out = vibronic(dir.path(), &["sweep", "--preset", "toy", "--backend", "estimate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn parse_errors_exit_with_2_and_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[model]\npreset = \"toy\"\nmodes = 2\n\n[run]\ntau_fs = -1.0\n").unwrap();
    let out = vibronic(dir.path(), &["run", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 6") && err.contains("tau_fs"), "{err}");

    for args in [
        &["run"][..],
        &["run", "--preset", "toy", "--backend", "dmrg"],
        &["run", "--preset", "ci", "--modes", "3"],
        &["run", "--preset", "toy", "--lambda-over-delta", "1,5"],
        &["run", "--preset", "toy", "--frame-mode", "sideways"],
        &["run", "--bogus"],
    ] {
        assert_eq!(vibronic(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn failure_classes_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), "[model]\npreset = \"toy\"\nmodes = 2\nlambda_over_delta = 5.0\n\n[exact]\ndimension_limit = 40\n").unwrap();
    let out = vibronic(dir.path(), &["run", "--config", "tiny.toml"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("last cutoffs"));

    // Seven modes need five ions; durations are calibrated up to four.
    let out = vibronic(dir.path(), &["compile", "--preset", "toy", "--modes", "7"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(exit_code(&vibronic_core::Error::InfeasibleSchedule("x".into())), 4);
    assert_eq!(exit_code(&vibronic_core::Error::InvalidArgument("x".into())), 1);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["run", "--preset", "toy", "--cutoffs", "6,6", "-o", "a.csv"]);
    ok(dir.path(), &["run", "--config", "a.meta.toml", "--grid-points", "11", "--tau-fs", "100", "-o", "b.csv"]);
    let b = trace(&dir.path().join("b.csv"));
    assert_eq!((b.times.len(), *b.times.last().unwrap()), (11, 100.0));
    let meta = fs::read_to_string(dir.path().join("b.meta.toml")).unwrap();
    assert!(meta.contains("grid_points = 11") && meta.contains("output = \"b.csv\""), "{meta}");
}
