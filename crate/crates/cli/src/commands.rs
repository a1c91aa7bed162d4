use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use credtrack_core::kernels::{grad_check, FeatureGrid, KernelOp, NeuralBackend, VALIDATED_EPS};
use credtrack_core::sim::{
    compare_policies, frame_f, frame_j, generate_stream, run_variant, CompareOptions, Variant, DEFAULT_BOUNDARY_RADIUS,
};
use credtrack_core::tracker::{profile_overhead, write_frame_csv, write_records};
use credtrack_core::verify::{run_suite, Suite, VerifyOptions, GRADIENT_TOLERANCE};
use credtrack_core::{Embedding, FrameIndex, Tracker, VERSION};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::{BenchArgs, Cli, Command, CompareArgs, GradcheckArgs, ReplayArgs, SimulateArgs, VerifyArgs};
use crate::config::RunConfig;
use crate::manifest::{sha256_file, Outputs, RunManifest};
use crate::CliError;

/// Executes one command. `Ok(false)` means the command ran but a check failed.
pub fn run(cli: &Cli, argv: Vec<String>) -> Result<bool, CliError> {
    if let Command::Replay(a) = &cli.command {
        return replay(a);
    }
    let config = RunConfig::load(cli.config.as_deref())?;
    let mut outputs = Outputs::create(&cli.out)?;
    let (passed, seeds) = match &cli.command {
        Command::Verify(a) => verify(cli, a, &mut outputs)?,
        Command::Simulate(a) => simulate(cli, a, &config, &mut outputs)?,
        Command::Compare(a) => compare(cli, a, &config, &mut outputs)?,
        Command::Gradcheck(a) => gradcheck(cli, a, &mut outputs)?,
        Command::Bench(a) => bench(cli, a, &config, &mut outputs)?,
        Command::Replay(_) => unreachable!("handled above"),
    };

    let command = cli.command.name();
    let manifest = RunManifest {
        command: command.to_string(),
        argv,
        invocation: cli.clone(),
        config_path: cli.config.as_ref().map(|p| std::fs::canonicalize(p).unwrap_or_else(|_| p.clone())),
        config_sha256: config.digest(),
        seeds,
        out_dir: cli.out.clone(),
        version: VERSION.to_string(),
        outputs: outputs.into_files(),
    };
    let path = cli.out.join(RunManifest::file_name(command));
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(credtrack_core::Error::from)?;
    json.push(b'\n');
    std::fs::write(&path, json)?;
    println!("manifest: {}", path.display());
    Ok(passed)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_vec_pretty(value).map_err(credtrack_core::Error::from)?;
    v.push(b'\n');
    Ok(v)
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    seed: u64,
    mutation: Option<&'a str>,
    suites: Vec<credtrack_core::verify::SuiteReport>,
}

fn verify(cli: &Cli, a: &VerifyArgs, out: &mut Outputs) -> Result<(bool, Vec<u64>), CliError> {
    let suites = if a.suites.is_empty() { Suite::ALL.to_vec() } else { a.suites.clone() };
    let options = VerifyOptions { seed: cli.seed, mutation: a.mutate };
    if let Some(m) = a.mutate {
        println!("mutation `{}` active", m.name());
    }
    let mut reports = Vec::new();
    for suite in suites {
        let start = Instant::now();
        let r = run_suite(suite, &options);
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        println!("{:<10} {verdict}  {} checks, {:.2}s", suite.name(), r.checks, start.elapsed().as_secs_f64());
        for f in &r.failures {
            println!("    {f}");
        }
        if r.failure_count > r.failures.len() {
            println!("    and {} more", r.failure_count - r.failures.len());
        }
        reports.push(r);
    }
    let passed = reports.iter().all(|r| r.passed());
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.suite.name()).collect();
    if !failed.is_empty() {
        println!("failed suites: {}", failed.join(", "));
    }
    let doc = VerifyOutput { seed: cli.seed, mutation: a.mutate.map(|m| m.name()), suites: reports };
    out.write("verify.json", &json_bytes(&doc)?, false)?;
    Ok((passed, vec![cli.seed]))
}

pub const SUMMARY_CSV_HEADER: &str = "policy,gate,seed,frames,j,f,jf,initial_found,selected_frame,decided_at,tracking_frames,mean_mem_size,mean_mem_span,max_mem_span";

fn simulate(cli: &Cli, a: &SimulateArgs, config: &RunConfig, out: &mut Outputs) -> Result<(bool, Vec<u64>), CliError> {
    let mut tracker = config.tracker.clone();
    if let Some(p) = a.policy {
        tracker.policy = p;
    }
    if let Some(g) = a.gate {
        tracker.gate = g;
    }
    tracker.validate()?;
    let script = config.scene.clone().with_seed(cli.seed);
    let stream = generate_stream(&script)?;
    let (record, j, f) = run_variant(&stream, &tracker, DEFAULT_BOUNDARY_RADIUS)?;

    let gt = stream.ground_truth();
    let scores = record
        .steps
        .iter()
        .zip(&gt)
        .map(|(s, g)| Ok((frame_j(&s.report.mask, g)?, frame_f(&s.report.mask, g, DEFAULT_BOUNDARY_RADIUS)?)))
        .collect::<credtrack_core::Result<Vec<_>>>()?;

    let mut records = Vec::new();
    write_records(&mut records, &record.steps, a.record_timing)?;
    out.write("records.jsonl", &records, a.record_timing)?;
    let mut frames = Vec::new();
    write_frame_csv(&mut frames, &record.steps, a.record_timing, Some(&scores))?;
    out.write("frames.csv", &frames, a.record_timing)?;

    let s = &record.summary;
    let variant = Variant::from_config(tracker.clone());
    let opt = |v: Option<FrameIndex>| v.map_or(String::new(), |f| f.to_string());
    let mut summary = String::new();
    writeln!(summary, "{SUMMARY_CSV_HEADER}").unwrap();
    writeln!(
        summary,
        "{},{},{},{},{j:.6},{f:.6},{:.6},{},{},{},{},{:.6},{:.6},{}",
        tracker.policy,
        gate_name(tracker.gate),
        cli.seed,
        s.frames,
        (j + f) / 2.0,
        s.initial_found,
        opt(s.selected_frame),
        opt(s.decided_at),
        s.tracking_frames,
        s.mean_mem_size,
        s.mean_mem_span,
        s.max_mem_span,
    )
    .unwrap();
    out.write("summary.csv", summary.as_bytes(), false)?;

    println!("{} seed {}: J {j:.4}  F {f:.4}  J&F {:.4}", variant.label, cli.seed, (j + f) / 2.0);
    match (s.selected_frame, s.decided_at) {
        (Some(sel), Some(at)) => println!("initial frame {sel} (decided at {at}), mean memory span {:.1}", s.mean_mem_span),
        _ => println!("no initial frame: the gate never fired"),
    }
    Ok((true, vec![cli.seed]))
}

fn gate_name(g: credtrack_core::GateMode) -> &'static str {
    match g {
        credtrack_core::GateMode::Windowed => "windowed",
        credtrack_core::GateMode::FirstDetection => "first-detection",
    }
}

pub const COMPARE_SUMMARY_HEADER: &str =
    "label,policy,gate,n,j_mean,j_std,f_mean,f_std,jf_mean,jf_std,jf_se,mem_span_mean";

fn compare(cli: &Cli, a: &CompareArgs, config: &RunConfig, out: &mut Outputs) -> Result<(bool, Vec<u64>), CliError> {
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let mut variants = Vec::new();
    for &gate in &a.gates {
        for &policy in &a.policies {
            variants.push(Variant::from_config(config.tracker.clone().with_policy(policy).with_gate(gate)));
        }
    }
    if variants.len() < 2 {
        return Err(CliError::Usage("a comparison needs at least two policy/gate combinations".into()));
    }
    let options = CompareOptions {
        seeds: (cli.seed..cli.seed + a.seeds).collect(),
        record_timing: a.record_timing,
        ..CompareOptions::seeds(0)
    };
    let report = compare_policies(&config.scene, &variants, &options)?;

    let mut rows = Vec::new();
    report.write_csv(&mut rows)?;
    out.write("compare_runs.csv", &rows, a.record_timing)?;

    let mut summary = String::new();
    writeln!(summary, "{COMPARE_SUMMARY_HEADER}").unwrap();
    println!("{:<28} {:>8} {:>8} {:>8} {:>8}", "configuration", "J", "F", "J&F", "± se");
    for (v, s) in variants.iter().zip(&report.summaries) {
        writeln!(
            summary,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.label,
            v.config.policy,
            gate_name(v.config.gate),
            s.jf.n,
            s.j.mean,
            s.j.std,
            s.f.mean,
            s.f.std,
            s.jf.mean,
            s.jf.std,
            s.jf.standard_error(),
            s.mem_span.mean,
        )
        .unwrap();
        println!(
            "{:<28} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            s.label,
            s.j.mean,
            s.f.mean,
            s.jf.mean,
            s.jf.standard_error()
        );
    }
    out.write("compare_summary.csv", summary.as_bytes(), a.record_timing)?;
    out.write("compare.json", &json_bytes(&report)?, a.record_timing)?;

    let significant: Vec<_> = report.deltas.iter().filter(|d| d.significant).collect();
    if significant.is_empty() {
        println!("no significant differences (|Δ| ≤ 2 se) over {} seeds", a.seeds);
    }
    for d in significant {
        println!("{} vs {}: Δ J&F {:+.4} ± {:.4}", d.a, d.b, d.mean, d.standard_error);
    }
    Ok((true, options.seeds))
}

fn gradcheck(cli: &Cli, a: &GradcheckArgs, out: &mut Outputs) -> Result<(bool, Vec<u64>), CliError> {
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    if !(a.eps > 0.0 && a.eps.is_finite()) {
        return Err(CliError::Usage(format!("--eps must be positive, got {}", a.eps)));
    }
    let (lo, hi) = VALIDATED_EPS;
    if !(lo..=hi).contains(&a.eps) {
        eprintln!(
            "warning: eps {:e} is outside the validated range [{lo:e}, {hi:e}]; reported errors may reflect \
             truncation or round-off rather than the gradients",
            a.eps
        );
    }
    let ops = if a.ops.is_empty() { KernelOp::ALL.to_vec() } else { a.ops.clone() };
    let seeds: Vec<u64> = (cli.seed..cli.seed + a.seeds).collect();
    let mut csv = String::from("op,seed,eps,elements,max_rel_error\n");
    let mut passed = true;
    println!("{:<16} {:>6} {:>14} {:>10}", "op", "seeds", "max rel error", "result");
    for op in ops {
        let mut worst = 0.0f64;
        let mut failures = 0;
        for &seed in &seeds {
            match grad_check(op, seed, a.eps) {
                Ok(r) => {
                    writeln!(csv, "{},{seed},{:e},{},{:e}", op.name(), a.eps, r.elements, r.max_rel_error).unwrap();
                    worst = worst.max(r.max_rel_error);
                    if r.max_rel_error >= GRADIENT_TOLERANCE {
                        failures += 1;
                    }
                }
                Err(e) => {
                    writeln!(csv, "{},{seed},{:e},0,NaN", op.name(), a.eps).unwrap();
                    eprintln!("{} seed {seed}: {e}", op.name());
                    failures += 1;
                }
            }
        }
        passed &= failures == 0;
        let verdict = if failures == 0 { "ok".to_string() } else { format!("{failures} over") };
        println!("{:<16} {:>6} {:>14.3e} {:>10}", op.name(), seeds.len(), worst, verdict);
    }
    out.write("gradcheck.csv", csv.as_bytes(), false)?;
    Ok((passed, seeds))
}

#[derive(Serialize)]
struct Machine {
    os: &'static str,
    arch: &'static str,
    cpus: usize,
    cpu_model: Option<String>,
}

fn machine() -> Machine {
    let cpu_model = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|t| {
        t.lines().find(|l| l.starts_with("model name")).and_then(|l| l.split(':').nth(1)).map(|s| s.trim().to_string())
    });
    Machine {
        os: std::env::consts::OS,
        arch: std::env::consts::ARCH,
        cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
        cpu_model,
    }
}

#[derive(Serialize)]
struct PolicyBench {
    policy: credtrack_core::MemoryPolicy,
    points: Vec<credtrack_core::tracker::OverheadPoint>,
    ratio: f64,
    passed: bool,
}

#[derive(Serialize)]
struct BenchReport {
    version: &'static str,
    machine: Machine,
    frames: usize,
    repeats: usize,
    positions: Vec<u64>,
    bound: f64,
    policies: Vec<PolicyBench>,
    toy_fps: f64,
}

/// Late-position overhead must stay under this multiple of the early one.
pub const OVERHEAD_BOUND: f64 = 2.0;

fn bench(cli: &Cli, a: &BenchArgs, config: &RunConfig, out: &mut Outputs) -> Result<(bool, Vec<u64>), CliError> {
    if a.frames < 1000 {
        return Err(CliError::Usage(format!("--frames must be at least 1000, got {}", a.frames)));
    }
    if a.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let mut positions = vec![100, 1000, a.frames as u64];
    positions.dedup();
    let policies = if a.policy.is_empty() { credtrack_core::MemoryPolicy::ALL.to_vec() } else { a.policy.clone() };

    let mut results = Vec::new();
    println!("{:<10} {}", "policy", positions.iter().map(|p| format!("{:>12}", format!("@{p} ns"))).collect::<String>());
    for policy in policies {
        let profile = profile_overhead(&config.tracker.clone().with_policy(policy), a.frames, a.repeats, &positions, 50)?;
        let ratio = profile.ratio(a.frames as u64, 100).unwrap_or(f64::INFINITY);
        let passed = ratio < OVERHEAD_BOUND;
        println!(
            "{:<10} {}  ratio {ratio:.2} {}",
            policy.name(),
            profile.points.iter().map(|p| format!("{:>12.0}", p.median_ns)).collect::<String>(),
            if passed { "ok" } else { "OVER" }
        );
        results.push(PolicyBench { policy, points: profile.points, ratio, passed });
    }

    let toy_fps = toy_fps(cli.seed, a.fps_frames)?;
    println!("toy backend: {toy_fps:.1} frames/s over {} frames (reference only)", a.fps_frames);
    let passed = results.iter().all(|r| r.passed);
    let report = BenchReport {
        version: VERSION,
        machine: machine(),
        frames: a.frames,
        repeats: a.repeats,
        positions,
        bound: OVERHEAD_BOUND,
        policies: results,
        toy_fps,
    };
    out.write("bench.json", &json_bytes(&report)?, true)?;
    Ok((passed, vec![cli.seed]))
}

/// End-to-end frame rate of the untrained neural backend on random features.
fn toy_fps(seed: u64, frames: usize) -> Result<f64, CliError> {
    if frames == 0 {
        return Ok(0.0);
    }
    let backend = Arc::new(NeuralBackend::seeded(8, 4, 2, seed, 16, 16)?);
    let text = Embedding::new((0..8).map(|i| if i % 2 == 0 { 0.5 } else { -0.25 }).collect())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grids: Vec<FeatureGrid> = (0..frames).map(|_| FeatureGrid::uniform(8, 8, 8, 1.0, &mut rng)).collect();
    let mut tracker = Tracker::new(credtrack_core::TrackerConfig::default(), backend, text)?;
    let start = Instant::now();
    for (i, g) in grids.iter().enumerate() {
        tracker.step(FrameIndex(i as u64), g)?;
    }
    Ok(frames as f64 / start.elapsed().as_secs_f64().max(1e-9))
}

fn replay(a: &ReplayArgs) -> Result<bool, CliError> {
    let manifest = RunManifest::load(&a.manifest)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let into = a.into.clone().unwrap_or_else(|| base.join("replay"));
    let mut cli = manifest.invocation.clone();
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Usage("a replay manifest cannot itself be replayed".into()));
    }
    cli.out = into.clone();
    cli.config = manifest.config_path.clone();
    let config = RunConfig::load(cli.config.as_deref())?;
    if config.digest() != manifest.config_sha256 {
        return Err(CliError::Usage(format!(
            "configuration {} changed since the recorded run",
            cli.config.as_ref().map_or("<default>".into(), |p| p.display().to_string())
        )));
    }
    if manifest.version != VERSION {
        eprintln!("warning: manifest written by version {}, replaying with {VERSION}", manifest.version);
    }
    println!("replaying `{}` into {}", manifest.command, into.display());
    run(&cli, manifest.argv.clone())?;

    let mut identical = true;
    for file in &manifest.outputs {
        let status = if file.timed {
            "skipped (timed)".to_string()
        } else {
            match sha256_file(&into.join(&file.path)) {
                Ok(h) if h == file.sha256 => "identical".to_string(),
                Ok(_) => {
                    identical = false;
                    "DIFFERS".to_string()
                }
                Err(e) => {
                    identical = false;
                    format!("missing ({e})")
                }
            }
        };
        println!("  {:<22} {status}", file.path);
    }
    println!("{}", if identical { "replay reproduced every output" } else { "replay did not reproduce the outputs" });
    Ok(identical)
}
