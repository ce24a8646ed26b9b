//! End-to-end checks of the installed binary: exit codes, artifact
//! determinism, the analytic behavior of the built-in linear scenario, and
//! the round trip between simulated and file-driven observations.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn koopman(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_koopman"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("the binary must spawn")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("missing output {}: {e}", dir.join(name).display()))
}

/// Parses a versioned CSV: banner and header are skipped, every remaining
/// field must be a float.
fn data_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(2)
        .map(|line| {
            line.split(',')
                .map(|f| f.parse::<f64>().unwrap_or_else(|_| panic!("bad field `{f}` in `{line}`")))
                .collect()
        })
        .collect()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn invalid_scenarios_exit_one_without_writing_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = koopman(
        &["propagate", "--scenario", "/no/such/orbit.toml", "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("unknown scenario"));
    assert!(!dir.path().join("moments.csv").exists());
}

#[test]
fn the_filter_requires_exactly_one_observation_source() {
    let dir = tempfile::tempdir().unwrap();
    let out_arg = dir.path().to_str().unwrap();
    let none = koopman(&["filter", "--scenario", "linear-test", "--out", out_arg], &[]);
    assert_eq!(none.status.code(), Some(1));
    assert!(stderr_of(&none).contains("--obs"));

    let obs = dir.path().join("obs.csv");
    fs::write(&obs, "0.25,1.0,2.0\n").unwrap();
    let both = koopman(
        &[
            "filter", "--scenario", "linear-test", "--obs", obs.to_str().unwrap(), "--simulate",
            "--out", out_arg,
        ],
        &[],
    );
    assert_eq!(both.status.code(), Some(1));
}

#[test]
fn a_missing_observation_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = koopman(
        &[
            "filter", "--scenario", "linear-test", "--obs", "/no/such/obs.csv", "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr_of(&out));
    assert!(!dir.path().join("filter.csv").exists());
}

#[test]
fn repeated_builds_write_byte_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = koopman(
            &["build", "--scenario", "linear-test", "--out", dir.path().to_str().unwrap()],
            &[],
        );
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    }
    assert_eq!(read(a.path(), "model.json"), read(b.path(), "model.json"));
    assert_eq!(read(a.path(), "build-diagnostics.json"), read(b.path(), "build-diagnostics.json"));
}

#[test]
fn propagation_on_the_linear_scenario_matches_the_analytic_decay() {
    let dir = tempfile::tempdir().unwrap();
    let out = koopman(
        &["propagate", "--scenario", "linear-test", "--psi", "4", "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    let text = read(dir.path(), "moments.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "# koopman-cli propagate v1");
    assert_eq!(
        lines.next().unwrap(),
        "t,mean_x1,mean_x2,sigma_x1,sigma_x2,sigma_skew_x1,sigma_skew_x2,sigma_kurt_x1,sigma_kurt_x2"
    );

    // dx_i/dt = -x_i from (1, -0.5) with isotropic sigma 0.1: the mean decays
    // as e^{-t}, the density stays Gaussian, so sigma decays identically,
    // skewness stays zero, and the fourth moment stays 3 sigma^4.
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 9);
    for row in &rows {
        let (t, decay) = (row[0], (-row[0]).exp());
        for (i, &m0) in [1.0f64, -0.5].iter().enumerate() {
            assert!((row[1 + i] - m0 * decay).abs() < 1e-8, "mean at t = {t}");
            assert!((row[3 + i] - 0.1 * decay).abs() < 1e-8, "sigma at t = {t}");
            // the cube root turns third-moment rounding noise (~1e-19) into
            // ~1e-6, so "zero" is bounded relative to sigma, not absolutely
            assert!(row[5 + i].abs() < 1e-4 * row[3 + i], "skew at t = {t}");
            let kurt = 3.0f64.powf(0.25) * 0.1 * decay;
            assert!((row[7 + i] - kurt).abs() < 1e-8, "kurt at t = {t}");
        }
    }
}

#[test]
fn zero_noise_simulated_filtering_converges_to_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = koopman(
        &[
            "filter", "--scenario", "linear-test", "--simulate", "--noise-scale", "0", "--seed",
            "3", "--out", dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    let truth = data_rows(&read(dir.path(), "truth.csv"));
    let filter = data_rows(&read(dir.path(), "filter.csv"));
    assert_eq!(truth.len(), 9);
    assert_eq!(filter.len(), 8);
    // with exact full-state measurements the estimate locks onto the truth
    for (est, tru) in filter.iter().zip(&truth[1..]).skip(4) {
        assert_eq!(est[0], tru[0], "epoch mismatch");
        let err = ((est[1] - tru[1]).powi(2) + (est[2] - tru[2]).powi(2)).sqrt();
        assert!(err < 1e-6, "estimate error {err:.3e} at t = {}", est[0]);
    }
}

#[test]
fn observation_files_reproduce_the_simulated_run() {
    let sim = tempfile::tempdir().unwrap();
    let fed = tempfile::tempdir().unwrap();
    let run = koopman(
        &[
            "filter", "--scenario", "linear-test", "--simulate", "--seed", "11", "--out",
            sim.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(run.status.code(), Some(0), "stderr: {}", stderr_of(&run));

    // the written measurements, fed back through --obs, drive an identical run
    let obs = sim.path().join("measurements.csv");
    let rerun = koopman(
        &[
            "filter", "--scenario", "linear-test", "--obs", obs.to_str().unwrap(), "--out",
            fed.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(rerun.status.code(), Some(0), "stderr: {}", stderr_of(&rerun));
    assert_eq!(read(sim.path(), "filter.csv"), read(fed.path(), "filter.csv"));
}

#[test]
fn seeds_pin_simulated_runs_and_distinguish_them() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    for (dir, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let out = koopman(
            &[
                "filter", "--scenario", "linear-test", "--simulate", "--seed", seed, "--out",
                dir.path().to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    }
    assert_eq!(read(a.path(), "filter.csv"), read(b.path(), "filter.csv"));
    assert_ne!(read(a.path(), "filter.csv"), read(c.path(), "filter.csv"));
}

#[test]
fn the_output_directory_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let out = koopman(
        &["propagate", "--scenario", "linear-test"],
        &[("KOOPMAN_OUT_DIR", dir.path().to_str().unwrap())],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert!(dir.path().join("moments.csv").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn manifests_pin_the_run_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = koopman(
        &[
            "propagate", "--scenario", "linear-test", "--psi", "3", "--max-degree", "2", "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["tool"], "koopman-cli");
    assert_eq!(manifest["command"], "propagate");
    assert_eq!(manifest["scenario"], "linear-test");
    assert_eq!(manifest["parameters"]["psi"], "3");
    assert_eq!(manifest["parameters"]["max_degree"], "2");
    assert!(!manifest["version"].as_str().unwrap().is_empty());
}

#[test]
fn single_run_comparisons_emit_nan_spread_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let out = koopman(
        &[
            "compare", "--scenario", "linear-test", "--runs", "1", "--methods", "kof,ekf",
            "--out", dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("single run"));

    let text = read(dir.path(), "compare.csv");
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 16, "two methods over eight epochs");
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert!(matches!(fields[1], "kof" | "ekf"));
        for pred in &fields[2..4] {
            assert!(pred.parse::<f64>().unwrap().is_finite());
        }
        for eff in &fields[4..6] {
            assert!(eff.parse::<f64>().unwrap().is_nan());
        }
    }
}

#[test]
fn unknown_comparison_methods_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = koopman(
        &[
            "compare", "--scenario", "linear-test", "--methods", "kof,wrong", "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
}
