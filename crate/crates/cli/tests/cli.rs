use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use credtrack_cli::RunManifest;

fn credtrack(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_credtrack")).arg("--out").arg(out).args(args).output().unwrap()
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_single_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = credtrack(dir.path(), &["verify", "--suite", "gate"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("gate") && text.contains("PASS"));
    for other in ["memory", "scan", "metrics", "gradients"] {
        assert!(!text.contains(other), "{other} ran:\n{text}");
    }
}

#[test]
fn mutated_gate_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let o = credtrack(dir.path(), &["verify", "--suite", "gate,metrics", "--mutate", "gate-window"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("failed suites: gate\n"), "{text}");
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["mutation"], "gate-window");
}

#[test]
fn simulate_writes_scored_outputs_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = credtrack(dir.path(), &["simulate", "--policy", "dlm"]);
    assert!(o.status.success());
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let header: Vec<&str> = summary.lines().next().unwrap().split(',').collect();
    for col in ["j", "f", "jf"] {
        assert!(header.contains(&col));
    }
    let frames = fs::read_to_string(dir.path().join("frames.csv")).unwrap();
    assert_eq!(frames.lines().count(), 501);
    assert!(!frames.contains('\r'));
    let manifest = RunManifest::load(&dir.path().join("simulate-manifest.json")).unwrap();
    assert_eq!(manifest.command, "simulate");
    assert_eq!(manifest.seeds, vec![0]);
    assert_eq!(manifest.outputs.len(), 3);
    assert!(manifest.outputs.iter().all(|f| !f.timed && f.sha256.len() == 64));
}

#[test]
fn interval_span_follows_the_sampling_stride() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("steady.toml");
    fs::write(&config, "[scene]\nlength = 120\n").unwrap();
    let o = credtrack(dir.path(), &["--config", config.to_str().unwrap(), "simulate", "--policy", "interval"]);
    assert!(o.status.success());
    let frames = fs::read_to_string(dir.path().join("frames.csv")).unwrap();
    let spans: Vec<u64> = frames
        .lines()
        .skip(1)
        .filter(|l| l.contains(",tracking,"))
        .map(|l| l.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    // keep 3 samples taken every 5 frames: the span cycles through 5 values
    let tail = &spans[spans.len() - 20..];
    let (lo, hi) = (*tail.iter().min().unwrap(), *tail.iter().max().unwrap());
    assert_eq!(hi - lo, 4, "{tail:?}");
    assert_eq!(lo, 11);
    assert!(tail.windows(2).all(|w| w[1] == w[0] + 1 || w[1] + 4 == w[0]));
}

#[test]
fn compare_row_accounting() {
    let dir = tempfile::tempdir().unwrap();
    let o = credtrack(dir.path(), &["compare", "--seeds", "20"]);
    assert!(o.status.success());
    let rows = fs::read_to_string(dir.path().join("compare_runs.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 80);
    let agg = fs::read_to_string(dir.path().join("compare_summary.csv")).unwrap();
    let labels: Vec<&str> = agg.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["vanilla", "extended", "interval", "dlm"]);
    let best = agg
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[0].to_string(), c[8].parse::<f64>().unwrap())
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert_eq!(best.0, "dlm");
}

#[test]
fn static_scene_flags_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = credtrack(dir.path(), &["--config", scenario("static").to_str().unwrap(), "compare", "--seeds", "5"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("no significant differences"));
}

#[test]
fn gradcheck_single_op_and_eps_warning() {
    let dir = tempfile::tempdir().unwrap();
    let o = credtrack(dir.path(), &["gradcheck", "--ops", "selective_scan", "--seeds", "2"]);
    assert!(o.status.success());
    let table = stdout(&o);
    assert!(table.contains("selective_scan") && !table.contains("layer_norm"));

    let o = credtrack(dir.path(), &["gradcheck", "--ops", "layer_norm", "--seeds", "1", "--eps", "1e-2"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside the validated range"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 6] = [
        &["simulate", "--policy", "lru"],
        &["gradcheck", "--ops", "conv3d"],
        &["bench", "--frames", "999"],
        &["compare", "--policies", "dlm"],
        &["--config", "/nonexistent/run.toml", "simulate"],
        &["verify", "--mutate", "everything"],
    ];
    for args in cases {
        assert_eq!(credtrack(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[tracker]\nn_w = 0\n").unwrap();
    assert_eq!(credtrack(dir.path(), &["--config", bad.to_str().unwrap(), "simulate"]).status.code(), Some(2));
}

#[test]
fn bench_reports_positions_version_and_machine() {
    let dir = tempfile::tempdir().unwrap();
    let o = credtrack(dir.path(), &["bench", "--frames", "2000", "--policy", "vanilla,dlm", "--repeats", "2"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("bench.json")).unwrap()).unwrap();
    assert_eq!(report["positions"], serde_json::json!([100, 1000, 2000]));
    assert_eq!(report["version"], credtrack_core::VERSION);
    assert!(report["machine"]["arch"].is_string());
    assert_eq!(report["policies"].as_array().unwrap().len(), 2);
    let manifest = RunManifest::load(&dir.path().join("bench-manifest.json")).unwrap();
    assert!(manifest.outputs.iter().all(|f| f.timed));
}

#[test]
fn replay_detects_tampering_and_config_changes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "[scene]\nlength = 60\n").unwrap();
    let out = dir.path().join("run");
    assert!(credtrack(&out, &["--config", config.to_str().unwrap(), "simulate"]).status.success());
    let manifest = out.join("simulate-manifest.json");

    let replay = |into: &str| {
        Command::new(env!("CARGO_BIN_EXE_credtrack"))
            .args(["replay", manifest.to_str().unwrap(), "--into"])
            .arg(dir.path().join(into))
            .output()
            .unwrap()
    };
    assert_eq!(replay("r1").status.code(), Some(0));

    let mut m: RunManifest = RunManifest::load(&manifest).unwrap();
    m.outputs[0].sha256 = "0".repeat(64);
    fs::write(&manifest, serde_json::to_vec_pretty(&m).unwrap()).unwrap();
    let o = replay("r2");
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("DIFFERS"));

    fs::write(&config, "[scene]\nlength = 61\n").unwrap();
    assert_eq!(replay("r3").status.code(), Some(2));
}
