//! Behavioral tests of the `repcap` binary: exit codes, artifact layout,
//! caching, config-file override semantics, and byte-level determinism.

use std::path::Path;
use std::process::{Command, Output};

fn repcap() -> Command {
    Command::new(env!("CARGO_BIN_EXE_repcap"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    repcap()
        .args(args)
        .current_dir(dir)
        .env("REPCAP_THREADS", "2")
        .output()
        .expect("spawn repcap")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Small but complete pipeline invocation used across tests.
fn mini_pipeline_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "pipeline",
        "--synth",
        "default",
        "--synth-classes",
        "12",
        "--synth-samples",
        "8",
        "--synth-latent-dim",
        "2",
        "--synth-ambient-dim",
        "8",
        "--proj-width",
        "16",
        "--proj-blocks",
        "1",
        "--student-width",
        "16",
        "--student-blocks",
        "1",
        "--epochs",
        "2",
        "--student-epochs",
        "4",
        "--mc-passes",
        "12",
        "--far",
        "0.01",
        "--far",
        "0.1",
        "--min-samples",
        "5",
        "--seed",
        "7",
        "--out-dir",
        "out",
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn toy_is_byte_deterministic_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_in(
        dir.path(),
        &[
            "toy",
            "--seed",
            "7",
            "--classes",
            "20",
            "--samples-per-class",
            "30",
        ],
    );
    let b = run_in(
        dir.path(),
        &[
            "toy",
            "--seed",
            "7",
            "--classes",
            "20",
            "--samples-per-class",
            "30",
        ],
    );
    assert_exit(&a, 0);
    assert_eq!(a.stdout, b.stdout);
    let c = run_in(
        dir.path(),
        &[
            "toy",
            "--seed",
            "8",
            "--classes",
            "20",
            "--samples-per-class",
            "30",
        ],
    );
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn toy_default_prints_reference_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["toy"]);
    assert_exit(&out, 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("ground-truth capacity   2.2703"),
        "stdout: {text}"
    );
}

#[test]
fn toy_rejects_single_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["toy", "--classes", "1"]);
    assert_exit(&out, 2);
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["toy", "--no-such-flag"]);
    assert_exit(&out, 2);
}

#[test]
fn pipeline_missing_input_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["pipeline", "--input", "missing.csv"]);
    assert_exit(&out, 2);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("missing.csv"), "stderr: {msg}");
}

#[test]
fn pipeline_requires_exactly_one_source() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["pipeline"]);
    assert_exit(&out, 2);
}

#[test]
fn pipeline_defaults_match_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let help = run_in(dir.path(), &["pipeline", "--help"]);
    assert_exit(&help, 0);
    let text = String::from_utf8_lossy(&help.stdout);
    // Monte-Carlo pass count and population fraction defaults.
    assert!(text.contains("--mc-passes"), "{text}");
    let mc_section = text.split("--mc-passes").nth(1).unwrap();
    assert!(mc_section.contains("default: 1000"), "{mc_section}");
    let frac_section = text.split("--population-fraction").nth(1).unwrap();
    assert!(frac_section.contains("default: 0.99"), "{frac_section}");

    // Omitting --far evaluates the 1% operating point.
    let mut args = mini_pipeline_args(&[]);
    let far_pos = args.iter().position(|a| *a == "--far").unwrap();
    args.drain(far_pos..far_pos + 4); // two --far flags with values
    let out = run_in(dir.path(), &args);
    assert_exit(&out, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    let reports = report["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["far"].as_f64().unwrap(), 0.01);
}

#[test]
fn pipeline_rejects_out_of_range_knobs() {
    let dir = tempfile::tempdir().unwrap();
    for extra in [
        ["--dropout", "1.0"],
        ["--proj-width", "0"],
        ["--mc-passes", "0"],
        ["--far", "1.5"],
        ["--lr", "0"],
    ] {
        let mut args = vec!["pipeline", "--synth", "default"];
        args.extend_from_slice(&extra);
        let out = run_in(dir.path(), &args);
        assert_exit(&out, 2);
    }
}

#[test]
fn pipeline_writes_artifacts_and_sweep_reuses_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &mini_pipeline_args(&[]));
    assert_exit(&out, 0);
    for file in [
        "out/embeddings.csv",
        "out/ground_truth.json",
        "out/projector.ckpt",
        "out/student.ckpt",
        "out/statistics.json",
        "out/report.json",
        "out/sweep.csv",
    ] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["provenance"]["seed"], 7);
    assert_eq!(report["reports"].as_array().unwrap().len(), 2);
    assert!(report["oracle"].as_array().is_some());

    // Sweep over the cached statistics, all selectors, two parameterizations.
    let sweep = run_in(
        dir.path(),
        &[
            "sweep",
            "--out-dir",
            "out",
            "--far",
            "0.001",
            "--far",
            "0.01",
            "--far",
            "0.1",
            "--param",
            "full",
            "--param",
            "sphere",
        ],
    );
    assert_exit(&sweep, 0);
    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "far,r_y,r_z,log10_capacity,parameterization,selector"
    );
    // 2 params x 4 selectors x 3 fars.
    assert_eq!(lines.len(), 1 + 2 * 4 * 3);
}

#[test]
fn sweep_curves_increase_and_selectors_nest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &mini_pipeline_args(&[]));
    assert_exit(&out, 0);
    let sweep = run_in(
        dir.path(),
        &[
            "sweep",
            "--out-dir",
            "out",
            "--far",
            "1e-4",
            "--far",
            "1e-3",
            "--far",
            "1e-2",
            "--far",
            "1e-1",
        ],
    );
    assert_exit(&sweep, 0);
    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let mut curves: std::collections::HashMap<String, Vec<(f64, f64)>> =
        std::collections::HashMap::new();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let far: f64 = cols[0].parse().unwrap();
        let log10: f64 = cols[3].parse().unwrap();
        curves
            .entry(format!("{}/{}", cols[4], cols[5]))
            .or_default()
            .push((far, log10));
    }
    assert_eq!(curves.len(), 4);
    for (curve, rows) in &curves {
        for w in rows.windows(2) {
            assert!(
                w[1].1 > w[0].1,
                "{curve}: capacity not increasing at FAR {}",
                w[1].0
            );
        }
    }
    // The loosest class (max) bounds the tightest (min) from below.
    let min_curve = &curves["full/min"];
    let max_curve = &curves["full/max"];
    for (a, b) in min_curve.iter().zip(max_curve) {
        assert!(
            a.1 >= b.1 - 1e-9,
            "min {} < max {} at FAR {}",
            a.1,
            b.1,
            a.0
        );
    }
}

#[test]
fn pipeline_never_mutates_its_input_file() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_in(dir.path(), &mini_pipeline_args(&[]));
    assert_exit(&first, 0);
    let input = dir.path().join("out/embeddings.csv");
    let before = std::fs::read(&input).unwrap();
    let second = run_in(
        dir.path(),
        &[
            "pipeline",
            "--input",
            "out/embeddings.csv",
            "--proj-dim",
            "2",
            "--proj-width",
            "16",
            "--proj-blocks",
            "1",
            "--student-width",
            "16",
            "--student-blocks",
            "1",
            "--epochs",
            "2",
            "--student-epochs",
            "4",
            "--mc-passes",
            "12",
            "--far",
            "0.01",
            "--min-samples",
            "5",
            "--seed",
            "7",
            "--out-dir",
            "out2",
        ],
    );
    assert_exit(&second, 0);
    assert_eq!(std::fs::read(&input).unwrap(), before);
    assert!(dir.path().join("out2/report.json").exists());
}

#[test]
fn sweep_without_cache_instructs_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["sweep", "--out-dir", "nowhere", "--far", "0.01"],
    );
    assert_exit(&out, 2);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("repcap pipeline"), "stderr: {msg}");
}

#[test]
fn sweep_requires_fars() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["sweep", "--out-dir", "out"]);
    assert_exit(&out, 2);
}

#[test]
fn pipeline_reports_are_byte_identical_across_reruns() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let out_a = run_in(dir_a.path(), &mini_pipeline_args(&[]));
    let out_b = run_in(dir_b.path(), &mini_pipeline_args(&[]));
    assert_exit(&out_a, 0);
    assert_exit(&out_b, 0);
    assert_eq!(out_a.stdout, out_b.stdout);
    for file in ["out/report.json", "out/statistics.json", "out/sweep.csv"] {
        let a = std::fs::read(dir_a.path().join(file)).unwrap();
        let b = std::fs::read(dir_b.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let run_with_threads = |dir: &Path, threads: &str| {
        let out = repcap()
            .args(mini_pipeline_args(&[]))
            .current_dir(dir)
            .env("REPCAP_THREADS", threads)
            .output()
            .expect("spawn repcap");
        assert_exit(&out, 0);
    };
    run_with_threads(dir_a.path(), "1");
    run_with_threads(dir_b.path(), "2");
    for file in ["out/report.json", "out/statistics.json"] {
        let a = std::fs::read(dir_a.path().join(file)).unwrap();
        let b = std::fs::read(dir_b.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} depends on the thread count");
    }
}

#[test]
fn eval_runs_on_pipeline_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &mini_pipeline_args(&[]));
    assert_exit(&out, 0);
    let eval = run_in(
        dir.path(),
        &[
            "eval",
            "--input",
            "out/embeddings.csv",
            "--projector",
            "out/projector.ckpt",
            "--student",
            "out/student.ckpt",
            "--pairs",
            "200",
            "--mc-passes",
            "16",
            "--out-dir",
            "out",
        ],
    );
    assert_exit(&eval, 0);
    let text = String::from_utf8_lossy(&eval.stdout);
    assert!(text.contains("spearman"), "stdout: {text}");
    assert!(text.contains("config:"), "stdout: {text}");
    assert!(dir.path().join("out/roc.csv").exists());
    assert!(dir.path().join("out/eval.json").exists());
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &mini_pipeline_args(&[]));
    assert_exit(&out, 0);
    // Student checkpoint where a projector is expected.
    let eval = run_in(
        dir.path(),
        &[
            "eval",
            "--input",
            "out/embeddings.csv",
            "--projector",
            "out/student.ckpt",
            "--student",
            "out/student.ckpt",
            "--pairs",
            "50",
            "--mc-passes",
            "4",
        ],
    );
    assert_exit(&eval, 2);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"seed": 3, "classes": 15, "samples-per-class": 25}"#,
    )
    .unwrap();
    let from_file = run_in(dir.path(), &["toy", "--config", "run.json"]);
    assert_exit(&from_file, 0);
    let direct = run_in(
        dir.path(),
        &[
            "toy",
            "--seed",
            "3",
            "--classes",
            "15",
            "--samples-per-class",
            "25",
        ],
    );
    assert_eq!(from_file.stdout, direct.stdout);

    // An explicit flag wins over the file value.
    let overridden = run_in(dir.path(), &["toy", "--config", "run.json", "--seed", "4"]);
    let direct4 = run_in(
        dir.path(),
        &[
            "toy",
            "--seed",
            "4",
            "--classes",
            "15",
            "--samples-per-class",
            "25",
        ],
    );
    assert_eq!(overridden.stdout, direct4.stdout);
    assert_ne!(overridden.stdout, from_file.stdout);
}

#[test]
fn pipeline_pca_and_skip_projection_paths() {
    let dir = tempfile::tempdir().unwrap();
    let pca = run_in(dir.path(), &{
        let mut a = mini_pipeline_args(&["--pca"]);
        let pos = a.iter().position(|s| *s == "out").unwrap();
        a[pos] = "out-pca";
        a
    });
    assert_exit(&pca, 0);
    assert!(dir.path().join("out-pca/pca.json").exists());
    assert!(!dir.path().join("out-pca/projector.ckpt").exists());

    let skip = run_in(dir.path(), &{
        let mut a = mini_pipeline_args(&["--skip-projection"]);
        let pos = a.iter().position(|s| *s == "out").unwrap();
        a[pos] = "out-skip";
        a
    });
    assert_exit(&skip, 0);
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out-skip/report.json")).unwrap(),
    )
    .unwrap();
    // Without projection the statistics live in the ambient dimension.
    assert_eq!(report["proj_dim"], 8);
}

#[test]
fn shannon_pairing_equalizes_radii() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &mini_pipeline_args(&["--shannon-pairing"]));
    assert_exit(&out, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    for rep in report["reports"].as_array().unwrap() {
        let r_y = rep["r_y"].as_f64().unwrap();
        let r_z = rep["r_z"].as_f64().unwrap();
        assert!((r_y - r_z).abs() < 1e-12);
        let far = rep["far"].as_f64().unwrap();
        let frac = rep["population_fraction"].as_f64().unwrap();
        assert!((frac - (1.0 - far)).abs() < 1e-12);
    }
}
