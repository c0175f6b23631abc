use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn parareal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parareal"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

/// Decay problem with explicit solvers on both levels and no charts.
fn linear_config(eta: f64, extra: &str) -> String {
    format!(
        r#"
seed = 3

[problem]
name = "linear"
params = {{ lambda = -1.0, u0 = 1.0 }}

[partition]
t_end = 2.0
intervals = 4

[schedule]
eta = {eta:e}
eps_g = 1e-2

[solvers.coarse]
method = "explicit_rk54"

[solvers.fine]
method = "explicit_rk54"
{extra}
"#
    )
}

fn run_cmd(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    parareal(&args)
}

fn csv_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn missing_problem_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = linear_config(1e-6, "").replace("name = \"linear\"", "");
    let cfg = write_config(dir.path(), &body);
    let out = run_cmd("run", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_flag_is_a_config_error() {
    let out = parareal(&["run", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_chart_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = linear_config(1e-6, "chart = \"absent.txt\"");
    let cfg = write_config(dir.path(), &body);
    let out = run_cmd("run", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn calibrate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "tolerances = [1e-2, 1e-4, 1e-6, 1e-8]";
    let body = linear_config(1e-6, extra).replace(
        "[solvers.fine]",
        "tolerances = [1e-1, 1e-3, 1e-5, 1e-7]\n\n[solvers.fine]",
    );
    let cfg = write_config(dir.path(), &body);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run_cmd("calibrate", &cfg, out, &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for role in ["coarse", "fine"] {
        let name = format!("{role}_chart.txt");
        let x = std::fs::read(a.join(&name)).unwrap();
        let y = std::fs::read(b.join(&name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs between runs");
    }
}

#[test]
fn calibrated_charts_feed_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let body = linear_config(1e-6, "chart = \"fine_chart.txt\"\ntolerances = [1e-2, 1e-4, 1e-6, 1e-8, 1e-10]");
    let cfg = write_config(dir.path(), &body);
    let o = run_cmd("calibrate", &cfg, dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("fine_chart.txt").is_file());
    let o = run_cmd("run", &cfg, &dir.path().join("out"), &["--algorithm", "classical"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn loose_target_converges_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &linear_config(1.0, ""));
    let out = dir.path().join("out");
    let o = run_cmd("run", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    for alg in ["classical", "adaptive"] {
        assert_eq!(summary["runs"][alg]["converged_at"], 0, "{alg}");
    }
    assert_eq!(csv_lines(&out.join("history_classical.csv")).len(), 2);
}

#[test]
fn run_both_writes_histories_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &linear_config(1e-6, ""));
    let out = dir.path().join("out");
    let o = run_cmd("run", &cfg, &out, &["--algorithm", "both"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    for alg in ["classical", "adaptive"] {
        let lines = csv_lines(&out.join(format!("history_{alg}.csv")));
        assert_eq!(lines[0], "k,max_error,zeta_k,fine_cost,coarse_cost");
        let k = summary["runs"][alg]["converged_at"].as_u64().unwrap() as usize;
        assert_eq!(lines.len(), k + 2, "{alg}");
    }
    assert!(summary["speedup"]["with_coarse"]["speedup_adaptive"].as_f64().unwrap() > 0.0);
}

#[test]
fn serial_and_parallel_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &linear_config(1e-6, ""));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_cmd("run", &cfg, &a, &["--serial"]).status.success());
    assert!(run_cmd("run", &cfg, &b, &[]).status.success());
    for f in ["history_classical.csv", "history_adaptive.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn single_point_sweep_has_one_row_per_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &linear_config(1e-6, ""));
    let out = dir.path().join("out");
    let o = run_cmd("sweep", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = csv_lines(&out.join("sweep.csv"));
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains(",classical,") && lines[1].ends_with(",converged"));
    assert!(lines[2].contains(",adaptive,") && lines[2].ends_with(",converged"));
}

#[test]
fn sweep_covers_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let body = linear_config(1e-6, "")
        .replace("intervals = 4", "intervals = 4\nsweep_intervals = [2, 4]")
        .replace("eps_g = 1e-2", "eps_g = 1e-2\nsweep_eta = [1e-4, 1e-6]");
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let o = run_cmd("sweep", &cfg, &out, &["--algorithm", "adaptive"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_lines(&out.join("sweep.csv")).len(), 5);
}

#[test]
fn diverging_run_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let body = linear_config(1e-10, "").replace("eps_g = 1e-2", "eps_g = 1e-2\nk_max = 1");
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let o = run_cmd("run", &cfg, &out, &["--algorithm", "classical"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("history_classical.csv").is_file());
}

#[test]
fn bounds_rows_follow_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let body = linear_config(1e-6, "").replace("[schedule]", "[schedule]\nmode = \"theoretical\"");
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let o = run_cmd("bounds", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ideal efficiency"));
    let info: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("bounds.json")).unwrap()).unwrap();
    let k = info["converged_at"].as_u64().unwrap() as usize;
    let lines = csv_lines(&out.join("bounds.csv"));
    assert_eq!(lines[0], "k,E_k,ideal,perturbed");
    assert_eq!(lines.len(), k + 2);
}
