use memheat::config::parse_str;
use memheat::formats::Checkpoint;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

const SMALL: &str = "\
[domain]
length = 1.0

[space]
n_modes = 4

[kernel]
spec = \"exp(1,1)\"
n_nodes = 64

[f]
coeffs = [1.0, 0.0, -1.0, 0.0]

[a]
kind = \"constant\"
value = 1.0

[g]
forcing = \"one\"

[initial]
u0 = [0.5, 0.0, 0.1, 0.0]
past = [[[0.5, 1.0]], [], [[0.1, 2.0]]]

[time]
dt = 1e-3
horizon = 0.2
";

fn memheat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memheat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_on_zero_data_writes_versioned_outputs() {
    let dir = TempDir::new().unwrap();
    let text = "[space]\nn_modes = 3\n[kernel]\nspec = \"exp(1,1)\"\nn_nodes = 32\n[f]\ncoeffs = []\n\
                [initial]\nu0 = \"zero\"\n[time]\ndt = 0.01\nhorizon = 0.5\n";
    let cfg = write_config(dir.path(), "zero.toml", text);
    let out = dir.path().join("out");
    let o = memheat(&["simulate", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for csv in ["trajectory.csv", "history.csv"] {
        let body = fs::read_to_string(out.join(csv)).unwrap();
        assert!(body.starts_with("# format_version: 1\n"), "{csv}");
    }
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["format_version"], 1);
    assert_eq!(summary["kind"], "simulation");
    assert_eq!(summary["steps"], 50);
}

#[test]
fn compare_oracle_reports_a_small_deviation_on_linear_memory() {
    let dir = TempDir::new().unwrap();
    let text = "[space]\nn_modes = 2\n[kernel]\nspec = \"exp(1,1)\"\nn_nodes = 128\n[f]\ncoeffs = []\n\
                [initial]\nu0 = [1.0, 0.0]\npast = [[[1.0, 1.0]]]\n[time]\ndt = 1e-4\nhorizon = 0.5\n";
    let cfg = write_config(dir.path(), "linear.toml", text);
    let out = dir.path().join("out");
    let o = memheat(&["compare-oracle", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("max deviation"));
    assert_eq!(read_json(&out.join("oracle.json"))["kind"], "compare_oracle");
}

#[test]
fn decay_report_fails_with_corrupted_constants() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    let o = memheat(&["decay-report", s(&cfg), "--out", s(&out), "--k1", "1e-6", "--k2", "0"]);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("margin"));
    assert!(text.contains("envelope: FAIL"), "{text}");

    let honest = memheat(&["decay-report", s(&cfg), "--out", s(&out)]);
    assert_eq!(honest.status.code(), Some(0), "{}", stdout(&honest));
}

#[test]
fn failed_kernel_check_is_refused_unless_allowed() {
    let dir = TempDir::new().unwrap();
    let text = SMALL.replace("n_nodes = 64", "n_nodes = 64\ndelta_test = 1.5");
    let cfg = write_config(dir.path(), "bad.toml", &text);
    let out = dir.path().join("out");
    let refused = memheat(&["simulate", s(&cfg), "--out", s(&out)]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(stderr(&refused).contains("--allow-unverified"), "{}", stderr(&refused));

    let allowed = memheat(&["simulate", s(&cfg), "--out", s(&out), "--allow-unverified"]);
    assert_eq!(allowed.status.code(), Some(0), "{}", stderr(&allowed));

    let report = memheat(&["validate-kernel", s(&cfg), "--out", s(&out)]);
    assert_eq!(report.status.code(), Some(1));
    assert_eq!(read_json(&out.join("kernel_report.json"))["kind"], "kernel_report");
}

#[test]
fn validate_kernel_passes_on_a_valid_kernel() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    let o = memheat(&["validate-kernel", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(read_json(&out.join("kernel_report.json"))["format_version"], 1);
}

#[test]
fn same_config_and_seed_give_identical_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = memheat(&["simulate", s(&cfg), "--out", s(out), "--seed", "3"]);
        assert_eq!(o.status.code(), Some(0));
    }
    for name in ["trajectory.csv", "history.csv", "checkpoint.mhck", "summary.json", "config.toml"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn random_sweep_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = memheat(&["sweep", s(&cfg), "--random", "2", "--seed", "5", "--out", s(out), "--T", "0.5"]);
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
    }
    let first = fs::read_to_string(a.join("summary.csv")).unwrap();
    assert_eq!(first, fs::read_to_string(b.join("summary.csv")).unwrap());
    assert!(first.starts_with("# format_version: 1\n"));
    assert_eq!(first.lines().count(), 4);
}

#[test]
fn vary_sweep_runs_one_config_per_value() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    let o = memheat(&["sweep", s(&cfg), "--vary", "a.value=0.5;1;2", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let body = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(body.lines().count(), 5);
}

#[test]
fn checkpoint_holds_the_final_state() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    assert_eq!(memheat(&["simulate", s(&cfg), "--out", s(&out)]).status.code(), Some(0));
    let bytes = fs::read(out.join("checkpoint.mhck")).unwrap();
    let ck = Checkpoint::read(bytes.as_slice()).unwrap();
    assert!((ck.t - 0.2).abs() < 1e-12);
    assert_eq!(ck.n_modes(), 4);
    assert_eq!(ck.n_nodes(), 64);
    assert_eq!(ck.eta.len(), 4 * 64);

    let mut again = Vec::new();
    ck.write(&mut again).unwrap();
    assert_eq!(again, bytes);

    // the last trajectory row carries the same coefficients
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let last: Vec<f64> = traj.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(&last[1..5], ck.u.as_slice());

    assert!(Checkpoint::read(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn echoed_config_parses_back_to_itself() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    assert_eq!(memheat(&["simulate", s(&cfg), "--out", s(&out)]).status.code(), Some(0));
    let echo = fs::read_to_string(out.join("config.toml")).unwrap();
    let parsed = parse_str(&echo).unwrap();
    let mut original = parse_str(SMALL).unwrap();
    original.output.dir = parsed.output.dir.clone();
    assert_eq!(parsed, original);
    assert_eq!(parsed.echo(), echo);
}

#[test]
fn unknown_key_is_an_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "typo.toml", &SMALL.replace("dt = 1e-3", "dt = 1e-3\nhorizn = 2.0"));
    let o = memheat(&["simulate", s(&cfg), "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("horizn"), "{}", stderr(&o));
}

#[test]
fn separation_and_probe_write_valid_json() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");

    let o = memheat(&["separation", s(&cfg), "--ensemble", "3", "--T", "2", "--out", s(&out)]);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
    let sep = read_json(&out.join("separation.json"));
    assert_eq!(sep["kind"], "separation");
    assert_eq!(sep["pairs"].as_array().unwrap().len(), 3);

    let o = memheat(&[
        "attractor-probe",
        s(&cfg),
        "--ensemble",
        "3",
        "--transient",
        "2",
        "--sample",
        "0.5",
        "--out",
        s(&out),
    ]);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
    assert_eq!(read_json(&out.join("probe.json"))["kind"], "attractor_probe");
}

#[test]
fn missing_config_file_exits_with_two() {
    let o = memheat(&["simulate", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
}
