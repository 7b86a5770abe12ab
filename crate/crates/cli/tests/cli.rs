use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_excess-noise");

const CAVITY: &str = "[basis]\nn_modes = 2\nq0 = 200\ngrid_points = 4096\n\
    [[gain_profile]]\nx_min = 0.0\nx_max = 0.5\ndensity = 0.02\n\
    [[loss_profile]]\nx_min = 0.5\nx_max = 1.0\ndensity = 0.02\n";

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("EXCESS_NOISE_OUT");
    if let Some(dir) = out {
        cmd.arg("--out").arg(dir);
    }
    cmd.output().unwrap()
}

fn stdout_files(o: &Output) -> Vec<PathBuf> {
    String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(PathBuf::from)
        .collect()
}

#[test]
fn help_documents_exit_codes_and_environment() {
    let o = run(&["simulate", "--help"], None);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(
        text.contains("Exit codes") && text.contains("EXCESS_NOISE_OUT"),
        "{text}"
    );
    for flag in ["--config", "--out", "--force", "--seed", "--threads"] {
        assert!(text.contains(flag), "missing {flag}");
    }
}

#[test]
fn quasimodes_writes_hashed_outputs_and_refuses_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CAVITY);
    let out = tmp.path().join("out");
    let args = ["quasimodes", "--config", config.to_str().unwrap()];
    let first = run(&args, Some(&out));
    assert_eq!(
        first.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let files = stdout_files(&first);
    assert_eq!(files.len(), 3);
    let stem = files[0]
        .file_name()
        .unwrap()
        .to_string_lossy()
        .replace("-manifest.json", "");
    assert!(stem.starts_with("quasimodes-") && stem.len() == "quasimodes-".len() + 12);
    assert!(files
        .iter()
        .all(|f| f.file_name().unwrap().to_string_lossy().starts_with(&stem)));

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&files[0]).unwrap()).unwrap();
    assert!(manifest["scenario_hash"]
        .as_str()
        .unwrap()
        .starts_with(&stem["quasimodes-".len()..]));
    assert!(manifest["versions"]["excess-noise"].is_string());
    assert_eq!(manifest["config"]["basis"]["q0"], 200);

    let second = run(&args, Some(&out));
    assert_eq!(second.status.code(), Some(5));
    let forced = run(&[&args[..], &["--force"]].concat(), Some(&out));
    assert_eq!(forced.status.code(), Some(0));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        &format!("{CAVITY}[outputs]\ndirectory = \"ignored\"\n"),
    );
    let env_dir = tmp.path().join("from-env");
    let o = Command::new(BIN)
        .args(["quasimodes", "--config", config.to_str().unwrap()])
        .env("EXCESS_NOISE_OUT", &env_dir)
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout_files(&o).iter().all(|f| f.starts_with(&env_dir)));
    assert!(!tmp.path().join("ignored").exists());
}

#[test]
fn config_failures_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = run(
        &["validate", "--config", "/nonexistent/scenario.toml"],
        None,
    );
    assert_eq!(missing.status.code(), Some(3));

    let bad_toml = write_config(tmp.path(), "[basis\nn_modes = 2\n");
    let o = run(&["validate", "--config", bad_toml.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));

    let invalid = write_config(
        tmp.path(),
        &format!("mode = \"simulate\"\n{CAVITY}[run]\nn_traj = 0\n"),
    );
    let o = run(&["validate", "--config", invalid.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("2 validation error(s)") && err.contains("run.seed"),
        "{err}"
    );

    let o = run(
        &[
            "quasimodes",
            "--threads",
            "0",
            "--config",
            invalid.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_reports_quasi_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CAVITY);
    let o = run(&["validate", "--config", config.to_str().unwrap()], None);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(
        text.contains("K = 2.6099") && text.contains("is valid"),
        "{text}"
    );
}

#[test]
fn simulate_summary_reports_fitted_k() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        &format!("{CAVITY}[run]\nt_final = 3.0\ndt = 1e-3\nn_traj = 10000\nn_samples = 10\n"),
    );
    let o = run(
        &[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "20240917",
            "--threads",
            "2",
        ],
        Some(tmp.path()),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary_path = stdout_files(&o)
        .into_iter()
        .find(|f| f.to_string_lossy().ends_with("summary.json"))
        .unwrap();
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(summary_path).unwrap()).unwrap();
    let k = summary["fitted_k"].as_f64().unwrap();
    let se = summary["fitted_k_se"].as_f64().unwrap();
    let k_coeff = summary["k_coeff"].as_f64().unwrap();
    assert_eq!(summary["seed"], 20240917);
    assert!(se > 0.0 && se < 0.05 * k);
    assert!(
        ((k - k_coeff) / k_coeff).abs() < 0.05,
        "{k} ± {se} vs {k_coeff}"
    );
}

#[test]
fn paraxial_emits_slices_and_k_table() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "[paraxial]\nside = 32\nspacing = 0.25\nomega_bar = 8.0\ndz = 0.05\nz_final = 1.0\nn_slices = 4\n\
         gain = { kind = \"half_plane\", left = 0.8, right = 0.0 }\n\
         loss = { kind = \"half_plane\", left = 0.0, right = 0.8 }\n",
    );
    let o = run(
        &["paraxial", "--config", config.to_str().unwrap()],
        Some(tmp.path()),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = stdout_files(&o);
    let find = |suffix: &str| {
        files
            .iter()
            .find(|f| f.to_string_lossy().ends_with(suffix))
            .unwrap()
    };
    let intensity = std::fs::read_to_string(find("intensity.csv")).unwrap();
    assert_eq!(intensity.lines().count(), 1 + 5 * 32);
    let table = std::fs::read_to_string(find("transverse-k.csv")).unwrap();
    assert!(table.starts_with("index,mu_re,mu_im,frequency,petermann_k,ix,iy"));
    assert_eq!(table.lines().count(), 11);
}
