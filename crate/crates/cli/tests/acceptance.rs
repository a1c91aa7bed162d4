//! End-to-end acceptance run.
//!
//! Criteria are evaluated one after another so that the timing checks do not
//! compete with other tests for the CPU. Each prints a single `PASS`/`FAIL`
//! line and the process exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use credtrack_core::sim::{compare_policies, CompareOptions, SceneScript, Variant};
use credtrack_core::tracker::{profile_overhead, SteadyBackend};
use credtrack_core::verify::{run_suite, Suite, VerifyOptions, GATE_TRIALS, GRADIENT_SEEDS, POOL_TRIALS};
use credtrack_core::{Embedding, FrameIndex, GateMode, MemoryPolicy, Tracker, TrackerConfig};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn suite_verdict(suite: Suite) -> (bool, String, Duration) {
    let start = Instant::now();
    let r = run_suite(suite, &VerifyOptions::default());
    let elapsed = start.elapsed();
    let mut detail = format!("{} checks", r.checks);
    if let Some(first) = r.failures.first() {
        detail.push_str(&format!(", {} failed, first: {first}", r.failure_count));
    }
    (r.passed(), detail, elapsed)
}

fn gate_equivalence() -> Verdict {
    let (ok, detail, elapsed) = suite_verdict(Suite::Gate);
    let fast = elapsed < Duration::from_secs(10);
    verdict(ok && fast, format!("{GATE_TRIALS} random streams, {detail}, {:.2}s (limit 10s)", elapsed.as_secs_f64()))
}

fn dlm_correctness() -> Verdict {
    let (ok, detail, _) = suite_verdict(Suite::Memory);
    verdict(ok, format!("{POOL_TRIALS} pools, ≥10000 update steps, {detail}"))
}

/// Memory span at every frame of a steady stream under `policy`.
fn steady_spans(policy: MemoryPolicy, frames: u64) -> Vec<u64> {
    let backend = Arc::new(SteadyBackend { angle_step: 0.0, ..SteadyBackend::default() });
    let config = TrackerConfig::default().with_policy(policy);
    let mut tracker = Tracker::new(config, backend, Embedding::new(vec![1.0]).unwrap()).unwrap();
    (0..frames).map(|f| tracker.step(FrameIndex(f), &()).unwrap().mem_span).collect()
}

fn temporal_coverage() -> Verdict {
    let c = TrackerConfig::default();
    let bound = ((c.n_l - 1) * c.n_p) as u64;
    let dlm = steady_spans(MemoryPolicy::Dlm, 500);
    let vanilla = steady_spans(MemoryPolicy::Vanilla, 500);
    let (d_last, v_last) = (*dlm.last().unwrap(), *vanilla.last().unwrap());
    // once the long-term queue has filled, the span never drops below the bound
    let d_min = dlm[100..].iter().copied().min().unwrap();
    let v_max = vanilla[100..].iter().copied().max().unwrap();
    let ok = d_last == bound && d_min == bound && v_last == c.short_term_capacity as u64 && d_min > v_max;
    verdict(
        ok,
        format!("DLM span at frame 499 = {d_last}, steady-state min {d_min} (bound {bound}); vanilla span {v_last}, max {v_max}"),
    )
}

fn memory_ordering() -> Verdict {
    let start = Instant::now();
    let variants = Variant::all_policies(&TrackerConfig::default());
    let report = compare_policies(&SceneScript::drifting(500), &variants, &CompareOptions::seeds(20)).unwrap();
    let elapsed = start.elapsed();
    let jf = |label: &str| report.summary(label).unwrap().jf.mean;
    let (v, e, i, d) = (jf("vanilla"), jf("extended"), jf("interval"), jf("dlm"));
    let ok = d > i && i > v && elapsed < Duration::from_secs(120);
    verdict(
        ok,
        format!(
            "J&F over 20 seeds: dlm {d:.4} > interval {i:.4} > vanilla {v:.4} (extended {e:.4}), {:.1}s (limit 120s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn gate_ablation() -> Verdict {
    let base = TrackerConfig::default().with_policy(MemoryPolicy::Vanilla);
    let variants =
        [Variant::from_config(base.clone()), Variant::from_config(base.with_gate(GateMode::FirstDetection))];
    let report = compare_policies(&SceneScript::early_low_quality(300), &variants, &CompareOptions::seeds(20)).unwrap();
    let windowed = report.summary(&variants[0].label).unwrap().jf.mean;
    let first = report.summary(&variants[1].label).unwrap().jf.mean;
    verdict(windowed >= first, format!("J&F over 20 seeds: windowed gate {windowed:.4}, first-detection gate {first:.4}"))
}

fn kernel_numerics() -> Verdict {
    let (scan_ok, scan_detail, _) = suite_verdict(Suite::Scan);
    let (grad_ok, grad_detail, _) = suite_verdict(Suite::Gradients);
    verdict(
        scan_ok && grad_ok,
        format!(
            "scan vs unrolled ≤1e-10, causality, doubling ratio ≤2.5: {scan_detail}; \
             {GRADIENT_SEEDS} seeds per op < 1e-5, attention rows within 1e-12: {grad_detail}"
        ),
    )
}

fn metric_oracles() -> Verdict {
    let (ok, detail, _) = suite_verdict(Suite::Metrics);
    verdict(ok, format!("12 hand-counted J pairs, 500 random matching pairs: {detail}"))
}

fn credtrack() -> Command {
    Command::new(env!("CARGO_BIN_EXE_credtrack"))
}

fn performance() -> Verdict {
    let mut worst = (MemoryPolicy::Vanilla, 0.0f64);
    for policy in MemoryPolicy::ALL {
        let profile =
            profile_overhead(&TrackerConfig::default().with_policy(policy), 10_000, 5, &[100, 10_000], 50).unwrap();
        let ratio = profile.ratio(10_000, 100).unwrap();
        if ratio > worst.1 {
            worst = (policy, ratio);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let status = credtrack().arg("--out").arg(dir.path()).arg("verify").output().unwrap().status;
    let elapsed = start.elapsed();
    let ok = worst.1 < 2.0 && status.success() && elapsed < Duration::from_secs(300);
    verdict(
        ok,
        format!(
            "worst overhead ratio @10000/@100 = {:.2} ({}), full verify exit {:?} in {:.1}s (limit 300s)",
            worst.1,
            worst.0,
            status.code(),
            elapsed.as_secs_f64()
        ),
    )
}

fn run_cmd(out: &Path, args: &[&str]) -> bool {
    credtrack().arg("--out").arg(out).args(args).output().unwrap().status.success()
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/early_low_quality.toml");
    let scenario = scenario.to_str().unwrap();
    let runs: [(&str, Vec<&str>); 5] = [
        ("simulate", vec!["--seed", "3", "simulate", "--policy", "interval"]),
        ("compare", vec!["--config", scenario, "compare", "--policies", "vanilla,dlm", "--seeds", "3"]),
        ("verify", vec!["verify", "--suite", "gate,metrics"]),
        ("gradcheck", vec!["gradcheck", "--ops", "selective_scan,layer_norm", "--seeds", "3"]),
        ("bench", vec!["bench", "--frames", "1000", "--policy", "dlm", "--repeats", "1"]),
    ];
    let mut failures = Vec::new();
    for (name, args) in &runs {
        let out = dir.path().join(name);
        if !run_cmd(&out, args) {
            failures.push(format!("{name} failed"));
            continue;
        }
        let manifest = out.join(format!("{name}-manifest.json"));
        let replay = credtrack().arg("replay").arg(&manifest).output().unwrap();
        if !replay.status.success() {
            failures.push(format!("{name} replay: {}", String::from_utf8_lossy(&replay.stdout).trim()));
        }
    }
    // the same invocation twice, compared directly
    let (a, b) = (dir.path().join("twice-a"), dir.path().join("twice-b"));
    let args = ["simulate", "--policy", "dlm"];
    if run_cmd(&a, &args) && run_cmd(&b, &args) {
        for f in ["records.jsonl", "frames.csv", "summary.csv"] {
            if std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap() {
                failures.push(format!("{f} differs between identical runs"));
            }
        }
    } else {
        failures.push("repeated simulate failed".into());
    }
    let detail = if failures.is_empty() {
        "simulate, compare, verify, gradcheck and bench replayed byte-identically (bench timings exempt)".to_string()
    } else {
        failures.join("; ")
    };
    verdict(failures.is_empty(), detail)
}

fn main() -> std::process::ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("gate oracle equivalence", gate_equivalence),
        ("DLM correctness", dlm_correctness),
        ("temporal coverage", temporal_coverage),
        ("memory policy ordering", memory_ordering),
        ("windowed gate vs first detection", gate_ablation),
        ("kernel numerics", kernel_numerics),
        ("metrics", metric_oracles),
        ("performance contract", performance),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        println!("criterion {} {} {name}: {}", i + 1, if v.passed { "PASS" } else { "FAIL" }, v.detail);
        if !v.passed {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
        std::process::ExitCode::SUCCESS
    } else {
        println!("acceptance: criteria failed: {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
