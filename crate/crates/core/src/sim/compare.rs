use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_f, evaluate_j, jf_mean, DEFAULT_BOUNDARY_RADIUS};
use super::oracle::OracleBackend;
use super::scene::{generate_stream, SceneScript, SimStream, EMBED_DIM};
use crate::config::{GateMode, MemoryPolicy, TrackerConfig};
use crate::error::{Error, Result};
use crate::tracker::{RunRecord, Tracker};
use crate::types::{Embedding, MaskGrid};

/// A named tracker configuration taking part in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub config: TrackerConfig,
}

impl Variant {
    pub fn new(label: impl Into<String>, config: TrackerConfig) -> Self {
        Variant { label: label.into(), config }
    }

    /// Labelled by policy, with the gate appended when it is not the default.
    pub fn from_config(config: TrackerConfig) -> Self {
        let label = match config.gate {
            GateMode::Windowed => config.policy.name().to_string(),
            GateMode::FirstDetection => format!("{}+first-detection", config.policy.name()),
        };
        Variant { label, config }
    }

    /// One variant per memory policy on top of `base`.
    pub fn all_policies(base: &TrackerConfig) -> Vec<Variant> {
        MemoryPolicy::ALL.iter().map(|&p| Variant::from_config(base.clone().with_policy(p))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub seeds: Vec<u64>,
    pub boundary_radius: f64,
    /// Keep per-frame policy timings; off by default so reports reproduce
    /// byte for byte.
    pub record_timing: bool,
}

impl CompareOptions {
    pub fn seeds(n: u64) -> Self {
        CompareOptions { seeds: (0..n).collect(), boundary_radius: DEFAULT_BOUNDARY_RADIUS, record_timing: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub label: String,
    pub policy: MemoryPolicy,
    pub gate: GateMode,
    pub seed: u64,
    pub j: f64,
    pub f: f64,
    pub jf: f64,
    pub initial_found: bool,
    pub selected_frame: Option<u64>,
    pub mean_mem_span: f64,
    pub mean_policy_time_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for fewer than two values.
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat { mean: 0.0, std: 0.0, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Stat { mean, std, n }
    }

    pub fn standard_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.std / (self.n as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub label: String,
    pub j: Stat,
    pub f: Stat,
    pub jf: Stat,
    pub mem_span: Stat,
    pub policy_time_ns: Stat,
}

/// Seed-paired difference in J&F between two variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDelta {
    pub a: String,
    pub b: String,
    /// Mean of `jf(a) − jf(b)` over seeds.
    pub mean: f64,
    pub standard_error: f64,
    /// `|mean| > 2 · standard_error`.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub script: SceneScript,
    pub seeds: Vec<u64>,
    pub rows: Vec<RunRow>,
    pub summaries: Vec<VariantSummary>,
    pub deltas: Vec<PairedDelta>,
}

pub const COMPARE_CSV_HEADER: &str =
    "label,policy,gate,seed,j,f,jf,initial_found,selected_frame,mean_mem_span,mean_policy_time_ns";

impl ComparisonReport {
    pub fn summary(&self, label: &str) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.label == label)
    }

    pub fn delta(&self, a: &str, b: &str) -> Option<&PairedDelta> {
        self.deltas.iter().find(|d| d.a == a && d.b == b)
    }

    /// One row per variant × seed.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{COMPARE_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{:.6},{:.6},{:.6},{},{},{:.6},{:.1}",
                r.label,
                r.policy.name(),
                gate_name(r.gate),
                r.seed,
                r.j,
                r.f,
                r.jf,
                r.initial_found,
                r.selected_frame.map_or(String::new(), |f| f.to_string()),
                r.mean_mem_span,
                r.mean_policy_time_ns,
            )?;
        }
        Ok(())
    }
}

fn gate_name(g: GateMode) -> &'static str {
    match g {
        GateMode::Windowed => "windowed",
        GateMode::FirstDetection => "first-detection",
    }
}

/// Runs one tracker over a simulated stream and scores it.
pub fn run_variant(stream: &SimStream, config: &TrackerConfig, radius: f64) -> Result<(RunRecord, f64, f64)> {
    let backend = Arc::new(OracleBackend::for_script(&stream.script));
    let text = Embedding::new(vec![1.0; EMBED_DIM])?;
    let mut tracker = Tracker::new(config.clone(), backend, text)?;
    let record = tracker.run_stream(stream.iter())?;
    if record.steps.is_empty() {
        return Ok((record, 1.0, 1.0));
    }
    let pred: Vec<MaskGrid> = record.steps.iter().map(|s| s.report.mask.clone()).collect();
    let gt = stream.ground_truth();
    let j = evaluate_j(&pred, &gt)?;
    let f = evaluate_f(&pred, &gt, radius)?;
    Ok((record, j, f))
}

/// Runs every variant on the same simulated stream for each seed.
pub fn compare_policies(script: &SceneScript, variants: &[Variant], options: &CompareOptions) -> Result<ComparisonReport> {
    if variants.len() < 2 {
        return Err(Error::InvalidConfig("a comparison needs at least two configurations".into()));
    }
    for (i, v) in variants.iter().enumerate() {
        v.config.validate()?;
        if variants[..i].iter().any(|o| o.label == v.label) {
            return Err(Error::InvalidConfig(format!("duplicate variant label `{}`", v.label)));
        }
    }
    if options.seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is needed".into()));
    }
    script.validate()?;

    let per_seed: Vec<Vec<RunRow>> = options
        .seeds
        .par_iter()
        .map(|&seed| {
            let stream = generate_stream(&script.clone().with_seed(seed))?;
            variants
                .iter()
                .map(|v| {
                    let (record, j, f) = run_variant(&stream, &v.config, options.boundary_radius)?;
                    Ok(RunRow {
                        label: v.label.clone(),
                        policy: v.config.policy,
                        gate: v.config.gate,
                        seed,
                        j,
                        f,
                        jf: jf_mean(j, f),
                        initial_found: record.summary.initial_found,
                        selected_frame: record.summary.selected_frame.map(|f| f.value()),
                        mean_mem_span: record.summary.mean_mem_span,
                        mean_policy_time_ns: if options.record_timing { record.mean_policy_time_ns() } else { 0.0 },
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<RunRow> = per_seed.into_iter().flatten().collect();

    let column = |label: &str, f: &dyn Fn(&RunRow) -> f64| -> Vec<f64> {
        rows.iter().filter(|r| r.label == label).map(f).collect()
    };
    let summaries = variants
        .iter()
        .map(|v| VariantSummary {
            label: v.label.clone(),
            j: Stat::of(&column(&v.label, &|r| r.j)),
            f: Stat::of(&column(&v.label, &|r| r.f)),
            jf: Stat::of(&column(&v.label, &|r| r.jf)),
            mem_span: Stat::of(&column(&v.label, &|r| r.mean_mem_span)),
            policy_time_ns: Stat::of(&column(&v.label, &|r| r.mean_policy_time_ns)),
        })
        .collect();

    let mut deltas = Vec::new();
    for (i, a) in variants.iter().enumerate() {
        for b in &variants[i + 1..] {
            let (ja, jb) = (column(&a.label, &|r| r.jf), column(&b.label, &|r| r.jf));
            let diffs: Vec<f64> = ja.iter().zip(&jb).map(|(x, y)| x - y).collect();
            let s = Stat::of(&diffs);
            let se = s.standard_error();
            deltas.push(PairedDelta {
                a: a.label.clone(),
                b: b.label.clone(),
                mean: s.mean,
                standard_error: se,
                significant: s.mean.abs() > 2.0 * se,
            });
        }
    }

    Ok(ComparisonReport { script: script.clone(), seeds: options.seeds.clone(), rows, summaries, deltas })
}
