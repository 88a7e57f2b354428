use std::path::Path;
use std::process::{Command, Output};

use dipcert::model::load_network;
use dipcert::operators::load_operator;

fn dipcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dipcert"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn value(report: &str, key: &str) -> String {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("{key} missing from\n{report}"))
        .to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_writes_trace_networks_and_operator() {
    let dir = tempfile::tempdir().unwrap();
    let out = dipcert(&[
        "train", "--n", "4", "--k", "300", "--d", "6", "--gate", "--seed", "2", "--trace-stride", "5",
        "--out", path(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert_eq!(value(&summary, "converged"), "true");
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,loss,sigma_min_J,theta_drift,signal_err,obs_err"));
    let init = load_network(dir.path().join("initial_network.bin")).unwrap();
    let fin = load_network(dir.path().join("final_network.bin")).unwrap();
    assert_eq!((init.k(), init.d(), init.n()), (300, 6, 4));
    assert_ne!(init.params(), fin.params());
    let (op, _) = load_operator(dir.path().join("operator.bin")).unwrap();
    assert_eq!((op.rows(), op.cols()), (4, 4));
}

#[test]
fn non_convergent_training_still_exits_successfully() {
    let dir = tempfile::tempdir().unwrap();
    let out = dipcert(&[
        "train", "--n", "6", "--k", "10", "--d", "3", "--max-iters", "5", "--out", path(dir.path()),
    ]);
    assert!(out.status.success());
    assert_eq!(value(&stdout(&out), "converged"), "false");
    assert_eq!(value(&stdout(&out), "iterations"), "5");
}

#[test]
fn certify_reports_gate_and_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cert.txt");
    let out = dipcert(&[
        "certify", "--n", "4", "--k", "2000", "--d", "20", "--gate", "--variant", "continuous", "--out",
        path(&file),
    ]);
    assert!(out.status.success());
    let report = stdout(&out);
    assert_eq!(std::fs::read_to_string(&file).unwrap(), report);
    assert_eq!(value(&report, "variant"), "continuous");
    assert_eq!(value(&report, "gate"), "true");
    let r: f64 = value(&report, "r").parse().unwrap();
    let r_prime: f64 = value(&report, "r_prime").parse().unwrap();
    assert!(r_prime < r);
    let scale: f64 = value(&report, "target_scale").parse().unwrap();
    assert!(scale > 0.0 && scale <= 1.0);
}

#[test]
fn instance_config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("problem.toml");
    std::fs::write(&cfg, "n = 3\nk = 50\nd = 4\nlayers = \"both\"\nactivation = \"tanh\"\n").unwrap();
    let out = dipcert(&["certify", "--config", path(&cfg), "--k", "80"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout(&out);
    assert_eq!(value(&report, "n"), "3");
    assert_eq!(value(&report, "k"), "80");
    assert_eq!(value(&report, "layers"), "both");
    assert_eq!(value(&report, "activation_lipschitz_b"), "1e0");
}

#[test]
fn bad_configs_fail_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "n = 3\nwidth = 10\n").unwrap();
    let out = dipcert(&["certify", "--config", path(&unknown)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let wrong_kind = dir.path().join("exp.toml");
    std::fs::write(&wrong_kind, "experiment = \"p_sweep\"\n").unwrap();
    assert!(!dipcert(&["noise-sweep", "--config", path(&wrong_kind)]).status.success());

    let invalid = dir.path().join("invalid.toml");
    std::fs::write(&invalid, "experiment = \"noise_sweep\"\nk = [10, 20]\n").unwrap();
    assert!(!dipcert(&["noise-sweep", "--config", path(&invalid)]).status.success());

    assert!(!dipcert(&["certify", "--config", path(&dir.path().join("missing.toml"))]).status.success());
    assert!(!dipcert(&["certify", "--safety", "1.5"]).status.success());
}

#[test]
fn phase_heatmap_from_config_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("phase.toml");
    std::fs::write(
        &cfg,
        "preset = \"reduced\"\nk = [10, 40, 120]\nn = [3, 4, 5]\nd = [5]\nmax_iters = 1500\n",
    )
    .unwrap();
    let out_dir = dir.path().join("phase");
    let out = dipcert(&[
        "phase-heatmap", "--config", path(&cfg), "--trials", "2", "--threads", "2", "--out", path(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["runs.csv", "heatmap.csv", "boundary.txt", "heatmap.svg", "config.toml"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let heat = std::fs::read_to_string(out_dir.join("heatmap.csv")).unwrap();
    assert_eq!(heat.lines().count(), 1 + 9);
    let runs = std::fs::read_to_string(out_dir.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 18);
}

#[test]
fn experiment_outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        let out_dir = dir.path().join(format!("t{threads}"));
        let cfg = dir.path().join("p.toml");
        std::fs::write(&cfg, "k = [60]\nn = [6]\nd = [5]\np = [0.0, 1.0]\nmax_iters = 2000\n").unwrap();
        let out = dipcert(&[
            "p-sweep", "--config", path(&cfg), "--trials", "3", "--threads", threads, "--out", path(&out_dir),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        ["runs.csv", "curves.csv", "summary.csv"].map(|f| std::fs::read(out_dir.join(f)).unwrap())
    };
    assert_eq!(run("1"), run("3"));
}
