//! End-to-end checks of the binary: exit codes, file layout, reproducibility,
//! and the oracle LDP config.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spde-ldp"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spde-ldp-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn kernel_check_passes_and_writes_reports() {
    let dir = scratch("kernel");
    let cfg = write_config(
        &dir,
        r#"
[kernel]
tol = 1e-12
t_switch = 0.05
n_time = 16
n_space = 16
decay_a = 0.125
decay_b = 0.125
decay_d = 0.125
dim_d = 1.0
gamma = 2.0
alpha = 0.2
ck_nx = 128
cross_form_samples = 12

[output]
dir = "OUT"
"#
        .replace("OUT", dir.join("out").to_str().unwrap())
        .as_str(),
    );
    let out = run(&["kernel-check", "--config", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = fs::read_to_string(dir.join("out/results.csv")).unwrap();
    assert!(results.starts_with("estimate_id,"));
    assert_eq!(results.matches("true").count(), 4, "{results}");
    let identities = fs::read_to_string(dir.join("out/identities.csv")).unwrap();
    assert!(!identities.contains("false"), "{identities}");
    assert!(dir.join("out/manifest.jsonl").exists());
}

#[test]
fn simulate_with_mismatched_eta_exits_one_with_only_manifest() {
    let dir = scratch("mismatch");
    fs::write(dir.join("eta.csv"), "0.1\n0.2\n0.3\n").unwrap();
    let cfg = write_config(
        &dir,
        &format!(
            r#"
[grid]
nx = 16
nt = 10
t_horizon = 0.5

[solve]
epsilon = 0.0

[initial]
kind = "file"
path = "{}"

[output]
dir = "{}"
"#,
            dir.join("eta.csv").display(),
            dir.join("out").display()
        ),
    );
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.join("out/manifest.jsonl").exists());
    assert!(!dir.join("out/results.csv").exists());
    let manifest = fs::read_to_string(dir.join("out/manifest.jsonl")).unwrap();
    assert!(manifest.contains("\"status\":\"error\""));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = scratch("unknown");
    let cfg = write_config(
        &dir,
        "[grid]\nnx = 16\nnt = 10\nt_horizon = 1.0\nbogus = 3\n",
    );
    let out = run(&["skeleton", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus") || err.contains("unknown"), "{err}");
}

#[test]
fn same_seed_reproduces_identical_outputs() {
    let dir = scratch("repro");
    let body = format!(
        r#"
[grid]
nx = 31
nt = 50
t_horizon = 1.0

[solve]
epsilon = 0.5

[initial]
kind = "zero"

[event]
kind = "terminal_l2_geq"
level = 0.05

[mc]
n = 400
master_seed = 7
tilt = "none"

[output]
dir = "{}"
"#,
        dir.join("out_a").display()
    );
    let cfg = write_config(&dir, &body);
    let out = run(&["mc", "--config", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let a = fs::read(dir.join("out_a/results.csv")).unwrap();

    let out_b = dir.join("out_b");
    let out = run(&[
        "mc",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    assert!(out.status.success());
    let b = fs::read(out_b.join("results.csv")).unwrap();
    assert_eq!(a, b, "same seed must reproduce byte-identical CSV");

    let out_c = dir.join("out_c");
    let out = run(&[
        "mc",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_c.to_str().unwrap(),
        "--seed",
        "8",
    ]);
    assert!(out.status.success());
    let c = fs::read(out_c.join("results.csv")).unwrap();
    assert_ne!(a, c, "different seed must change the estimate");
}

#[test]
fn rate_min_writes_value_and_control() {
    let dir = scratch("ratemin");
    let body = format!(
        r#"
[grid]
nx = 31
nt = 100
t_horizon = 1.0

[initial]
kind = "zero"

[target]
kind = "terminal_projection"
level = 1.0
profile_mode = 1
mu = 10.0
tolerance = 0.005

[output]
dir = "{}"
"#,
        dir.join("out").display()
    );
    let cfg = write_config(&dir, &body);
    let out = run(&["rate-min", "--config", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = fs::read_to_string(dir.join("out/results.csv")).unwrap();
    let row = results.lines().nth(1).unwrap();
    let value: f64 = row.split(',').next().unwrap().parse().unwrap();
    assert!((value - 9.87).abs() / 9.87 < 0.05, "value {value}");
    assert!(results.trim_end().ends_with("true"), "{results}");
    assert!(dir.join("out/control.csv").exists());
}

#[test]
fn rate_eval_round_trips_the_control() {
    let dir = scratch("rateeval");
    let body = format!(
        r#"
[grid]
nx = 31
nt = 50
t_horizon = 1.0

[coefficients]
preset = "burgers"

[initial]
kind = "sine"

[control]
kind = "sine_space"
amplitude = 0.8
mode = 1

[output]
dir = "{}"
"#,
        dir.join("out").display()
    );
    let cfg = write_config(&dir, &body);
    let out = run(&["rate-eval", "--config", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = fs::read_to_string(dir.join("out/results.csv")).unwrap();
    let value: f64 = results
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    // 0.5 ||v||^2 with v = 0.8 sin(pi y): 0.5 * 0.64 * 0.5 = 0.16.
    assert!((value - 0.16).abs() < 1e-6, "value {value}");
}

#[test]
fn ldp_oracle_config_last_row_within_five_percent() {
    let dir = scratch("ldp");
    let body = format!(
        r#"
[grid]
nx = 63
nt = 400
t_horizon = 1.0

[initial]
kind = "zero"

[event]
kind = "terminal_projection_geq"
level = 0.3
profile_mode = 1

[ldp]
epsilons = [0.05, 0.02, 0.01]
n = 4000
tilt = "tilted"
auto_threshold = 0.1

[mc]
master_seed = 91

[output]
dir = "{}"
"#,
        dir.join("out").display()
    );
    let cfg = write_config(&dir, &body);
    let out = run(&["ldp", "--config", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = fs::read_to_string(dir.join("out/results.csv")).unwrap();
    let header: Vec<&str> = results.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let last: Vec<&str> = results.lines().last().unwrap().split(',').collect();
    let measured: f64 = last[col("minus_eps_log_p")].parse().unwrap();
    let oracle: f64 = last[col("oracle_minus_eps_log_p")].parse().unwrap();
    assert!(
        (measured - oracle).abs() / oracle < 0.05,
        "measured {measured} vs oracle {oracle}"
    );
}

#[test]
fn epsilon_and_n_flags_override_the_config() {
    let dir = scratch("overrides");
    let body = format!(
        r#"
[grid]
nx = 15
nt = 20
t_horizon = 0.5

[solve]
epsilon = 0.1

[initial]
kind = "zero"

[event]
kind = "terminal_l2_geq"
level = -1.0

[mc]
n = 50
master_seed = 3

[output]
dir = "{}"
"#,
        dir.join("out").display()
    );
    let cfg = write_config(&dir, &body);
    let out = run(&[
        "mc",
        "--config",
        cfg.to_str().unwrap(),
        "--epsilon",
        "0.25",
        "--n",
        "200",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = fs::read_to_string(dir.join("out/results.csv")).unwrap();
    let row = results.lines().nth(1).unwrap();
    assert!(row.starts_with("0.25,plain,200,"), "{row}");
}

#[test]
fn simulate_writes_a_noisy_trajectory() {
    let dir = scratch("simulate");
    let body = format!(
        r#"
[grid]
nx = 15
nt = 20
t_horizon = 0.5

[solve]
epsilon = 0.5

[initial]
kind = "sine"

[mc]
master_seed = 9

[output]
dir = "{}"
"#,
        dir.join("out").display()
    );
    let cfg = write_config(&dir, &body);
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = fs::read_to_string(dir.join("out/results.csv")).unwrap();
    assert!(results.starts_with("t,x,value\n"));
    assert_eq!(results.lines().count(), 1 + 21 * 15);
}

#[test]
fn a1_distances_decrease() {
    let dir = scratch("a1");
    let body = format!(
        r#"
[grid]
nx = 31
nt = 512
t_horizon = 1.0

[initial]
kind = "zero"

[control]
kind = "sine_space"
amplitude = 1.0
mode = 1

[a1]
n_list = [4, 8, 16]
amplitude = 1.0

[output]
dir = "{}"
"#,
        dir.join("out").display()
    );
    let cfg = write_config(&dir, &body);
    let out = run(&["a1", "--config", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = fs::read_to_string(dir.join("out/results.csv")).unwrap();
    let d: Vec<f64> = results
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
}
