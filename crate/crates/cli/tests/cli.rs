use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seeds = [1, 2]
reference = [0.0, 0.0]

[problem]
kind = "inclusion"
dim = 2
a = "l1"
b = "skew_rotation"
x0 = [1.0, 0.0]

[solver]
epsilon = 0.1
max_iters = 300

[noise.a]
kind = "gaussian_geometric"
sigma = 0.1
rho = 0.9
"#;

fn sfbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfbf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let res = sfbf(&[
        "run",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--dump-iterates",
        "--jobs",
        "2",
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for f in [
        "trace_seed_1.csv",
        "trace_seed_2.csv",
        "iterates_seed_1.csv",
        "summary.json",
        "diagnostics.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let trace = fs::read_to_string(out.join("trace_seed_1.csv")).unwrap();
    assert!(trace.starts_with("n,gamma,res_primal,res_yq,dist_ref,metric_dist,moment_a,moment_b,moment_c\n"));
}

#[test]
fn seed_override_replaces_config_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("seeds = [1, 2]\n", ""));
    let out = dir.path().join("out");
    let res = sfbf(&["run", &cfg, "--seeds", "5..=6", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("trace_seed_5.csv").is_file());
    assert!(out.join("trace_seed_6.csv").is_file());
    assert!(!out.join("trace_seed_1.csv").exists());
}

#[test]
fn invalid_config_exits_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("epsilon = 0.1", "epsilon = 0.7"));
    let res = sfbf(&["run", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("solver.epsilon"));
}

#[test]
fn understated_lipschitz_constant_trips_the_divergence_guard() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONFIG
        .replace(
            r#"b = "skew_rotation""#,
            r#"b = { name = "skew_rotation", scale = 100.0 }"#,
        )
        .replace("epsilon = 0.1", "epsilon = 0.1\nbeta = 0.01");
    let cfg = write_config(dir.path(), &text);
    let res = sfbf(&["run", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("divergence"));
}

#[test]
fn missing_command_is_a_usage_error() {
    assert_eq!(sfbf(&[]).status.code(), Some(1));
}
