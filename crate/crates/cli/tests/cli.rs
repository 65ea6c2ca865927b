use std::path::Path;
use std::process::{Command, Output};

fn gaugekit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaugekit"))
        .args(args)
        .current_dir(dir)
        .env_remove("GAUGEKIT_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn metric(report: &str, key: &str) -> f64 {
    let prefix = format!("metric.{key} = ");
    report
        .lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no metric {key} in\n{report}"))
        .parse()
        .unwrap()
}

fn series(report: &str, key: &str) -> Vec<f64> {
    let prefix = format!("series.{key} = ");
    let line = report.lines().find_map(|l| l.strip_prefix(&prefix)).expect("series present");
    line.split(',').map(|v| v.parse().unwrap()).collect()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn generated_field_has_flux_pi() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = gaugekit(d, &["field", "gen", "--name", "gaussian2d", "--out", "b.grid", "--export"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = gaugekit(d, &["field", "flux", "--input", "b.grid"]);
    assert_eq!(code(&o), 0);
    let flux = metric(&String::from_utf8(o.stdout).unwrap(), "flux");
    assert!((flux - std::f64::consts::PI).abs() <= 1e-6, "{flux}");
    assert_eq!(metric(&read(d, "flux.report.txt"), "flux"), flux);
    assert!(read(d, "b.grid").starts_with("GRID v1 2 1\n"));
    assert!(read(d, "b.grid.pgm").starts_with("P2\n# gaugekit-pgm v1\n"));
    assert!(read(d, "b.grid.csv").starts_with("# gaugekit-csv v1\n"));
    assert!(read(d, "b.grid.cfg").starts_with("# gaugekit-config v1\n"));
    assert!(read(d, "b.grid.report.txt").starts_with("# gaugekit-report v1\n"));
}

#[test]
fn potential_pipeline_reconstructs_b() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let steps: [&[&str]; 3] = [
        &["gauge", "compute", "--gauge", "transversal", "--field", "gaussian2d", "--grid", "128:12", "--out", "a.grid"],
        &["xray", "forward", "--input", "a.grid", "--out", "s.sino"],
        &["recon", "b", "--input", "s.sino", "--field", "gaussian2d", "--out", "b.grid"],
    ];
    for s in steps {
        let o = gaugekit(d, s);
        assert_eq!(code(&o), 0, "{s:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(read(d, "s.sino").starts_with("SINO v1 180 257\n"));
    let report = read(d, "b.grid.report.txt");
    let err = metric(&report, "relative_l2_error");
    assert!(err <= 0.05, "{err}");
    assert!(report.contains("result = pass"));
}

#[test]
fn zero_field_study_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = gaugekit(dir.path(), &["scatter", "study", "--field", "zero", "--u", "4,8,16"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = String::from_utf8(o.stdout).unwrap();
    let errors = series(&report, "error");
    assert_eq!(errors.len(), 3);
    assert!(errors.iter().all(|e| *e <= 1e-7), "{errors:?}");
    assert!(read(dir.path(), "study.report.csv").starts_with("# gaugekit-report-csv v1\nu,error\n"));
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases: [&[&str]; 6] = [
        &["field", "gen", "--name", "nope"],
        &["field", "gen", "--name", "gaussian2d", "--grid", "12"],
        &["field", "gen", "--name", "gaussian2d", "--noise", "1"],
        &["field", "flux"],
        &["xray", "forward", "--input", "missing.grid"],
        &["field", "melt"],
    ];
    for args in cases {
        let o = gaugekit(d, args);
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    std::fs::write(d.join("bad.cfg"), "command = field gen\nfield = gaussian2d\ncolour = red\n").unwrap();
    let o = gaugekit(d, &["field", "gen", "--config", "bad.cfg"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key `colour`"));
    std::fs::write(d.join("other.cfg"), "command = field flux\nfield = gaussian2d\n").unwrap();
    assert_eq!(code(&gaugekit(d, &["field", "gen", "--config", "other.cfg"])), 2);
}

#[test]
fn numeric_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = gaugekit(
        d,
        &["gauge", "lambda", "--field", "pc_counterexample2d", "--gauge", "transversal", "--gauge2", "coulomb", "--directions", "8"],
    );
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no radial limit"));
    let o = gaugekit(d, &["gauge", "compute", "--gauge", "transversal", "--field", "gaussian2d", "--grid", "33:8", "--tol", "1e-9"]);
    assert_eq!(code(&o), 3);
    assert!(read(d, "a.grid.report.txt").contains("verdict.curl_error_within_tol = fail"));
}

#[test]
fn config_file_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["scatter", "phase", "--field", "solenoid2d", "--gauge", "coulomb", "--theta", "0.3", "--offsets", "11", "--out", "p1"];
    assert_eq!(code(&gaugekit(d, &args)), 0);
    let first = read(d, "p1.report.txt");
    // the saved configuration names `p1` as output; override it
    let o = gaugekit(d, &["scatter", "phase", "--config", "p1.cfg", "--out", "p2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let second = read(d, "p2.report.txt");
    let strip = |s: &str| s.lines().filter(|l| !l.contains("out") && !l.starts_with("config_hash")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&first), strip(&second));
    assert_eq!(read(d, "p1.cfg").replace("out = p1", "out = p2"), read(d, "p2.cfg"));
    assert_eq!(read(d, "p1"), read(d, "p2"));
}

#[test]
fn reports_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["recon", "a0", "--field", "gaussian2d", "--grid", "21:8", "--angles", "8", "--offsets", "21", "--width", "3"];
    let a = gaugekit(d, &args);
    assert_eq!(code(&a), 3, "few directions miss the 5% target: {}", String::from_utf8_lossy(&a.stderr));
    let single = Command::new(env!("CARGO_BIN_EXE_gaugekit")).args(args).current_dir(d).env("GAUGEKIT_THREADS", "1").output().unwrap();
    assert_eq!(a.stdout, single.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_gaugekit")).args(args).current_dir(d).env("GAUGEKIT_THREADS", "0").output().unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn noisy_sinogram_follows_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&gaugekit(d, &["field", "gen", "--name", "gaussian2d", "--grid", "33:8", "--out", "f.grid"])), 0);
    let run = |seed: &str, out: &str| {
        let o = gaugekit(
            d,
            &["xray", "forward", "--input", "f.grid", "--angles", "4", "--offsets", "9", "--noise", "0.01", "--seed", seed, "--out", out],
        );
        assert_eq!(code(&o), 0);
        read(d, out)
    };
    let (a, b, c) = (run("5", "a.sino"), run("5", "b.sino"), run("6", "c.sino"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn help_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = gaugekit(dir.path(), &["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for group in ["field", "gauge", "xray", "recon", "scatter"] {
        assert!(text.contains(group));
    }
}
