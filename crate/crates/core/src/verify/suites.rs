use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracle::{
    brute_force_gate, certified_matching, exhaustive_cosine_argmin, exhaustive_matching, hand_j, naive_boundary,
    naive_edges, unrolled_scan,
};
use crate::config::{MemoryPolicy, TrackerConfig};
use crate::error::{Error, Result};
use crate::gate::GateState;
use crate::kernels::{
    cross_attention_cached, grad_check, grad_check_dwconv_inputs, selective_scan, AttentionParams, KernelOp, Matrix,
    ScanParams,
};
use crate::memory::{CandidatePool, EntryKind, MemoryBank, MemoryEntry};
use crate::sim::{boundary_adjacency, boundary_pixels, frame_f, frame_j, max_matching};
use crate::types::{Embedding, FrameIndex, MaskGrid, ScoreReport};

pub const GATE_TRIALS: usize = 1000;
pub const POOL_TRIALS: usize = 1000;
pub const MEMORY_STEPS_PER_POLICY: usize = 3000;
pub const SCAN_TRIALS: usize = 300;
pub const MATCHING_TRIALS: usize = 500;
pub const GRADIENT_SEEDS: u64 = 50;
pub const GRADIENT_EPS: f64 = 1e-6;
pub const GRADIENT_TOLERANCE: f64 = 1e-5;
/// Failures kept verbatim in a report; the rest are only counted.
const MAX_LISTED: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Gate,
    Memory,
    Scan,
    Metrics,
    Gradients,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Gate, Suite::Memory, Suite::Scan, Suite::Metrics, Suite::Gradients];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Gate => "gate",
            Suite::Memory => "memory",
            Suite::Scan => "scan",
            Suite::Metrics => "metrics",
            Suite::Gradients => "gradients",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown suite `{s}`")))
    }
}

/// Deliberate defects used to check that the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// The streaming gate runs with a window one frame shorter than configured.
    GateWindow,
}

impl Mutation {
    pub fn name(self) -> &'static str {
        match self {
            Mutation::GateWindow => "gate-window",
        }
    }
}

impl FromStr for Mutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gate-window" => Ok(Mutation::GateWindow),
            other => Err(Error::InvalidConfig(format!("unknown mutation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    pub mutation: Option<Mutation>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: 0, mutation: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: usize,
    pub failure_count: usize,
    /// The first few failures, described.
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failure_count == 0
    }
}

struct Tally {
    checks: usize,
    failure_count: usize,
    failures: Vec<String>,
}

impl Tally {
    fn new() -> Self {
        Tally { checks: 0, failure_count: 0, failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failure_count += 1;
            if self.failures.len() < MAX_LISTED {
                self.failures.push(describe());
            }
        }
    }

    fn error(&mut self, context: &str, e: Error) {
        self.check(false, || format!("{context}: {e}"));
    }

    fn finish(self, suite: Suite) -> SuiteReport {
        SuiteReport { suite, checks: self.checks, failure_count: self.failure_count, failures: self.failures }
    }
}

/// Runs one suite. Suite outcomes are reported, not returned as errors.
pub fn run_suite(suite: Suite, options: &VerifyOptions) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ (suite as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut t = Tally::new();
    match suite {
        Suite::Gate => gate_suite(&mut rng, options.mutation, &mut t),
        Suite::Memory => memory_suite(&mut rng, &mut t),
        Suite::Scan => scan_suite(&mut rng, &mut t),
        Suite::Metrics => metrics_suite(&mut rng, &mut t),
        Suite::Gradients => gradient_suite(options.seed, &mut rng, &mut t),
    }
    t.finish(suite)
}

pub fn run_suites(suites: &[Suite], options: &VerifyOptions) -> Vec<SuiteReport> {
    suites.iter().map(|&s| run_suite(s, options)).collect()
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn gate_suite(rng: &mut ChaCha8Rng, mutation: Option<Mutation>, t: &mut Tally) {
    let mut fired = 0;
    for trial in 0..GATE_TRIALS {
        let len = rng.random_range(1..=200usize);
        let n_w = rng.random_range(1..=8usize);
        let config = TrackerConfig {
            delta_iou: rng.random_range(0.3..0.95),
            delta_o: rng.random_range(0.5..0.99),
            n_w,
            ..TrackerConfig::default()
        };
        let p_good = rng.random_range(0.5..1.0);
        // Coarse scores produce many exact ties inside a window.
        let coarse = rng.random_bool(0.3);
        let start = rng.random_range(0..1000u64);
        let threshold_logit = logit(config.delta_o);
        let reports: Vec<ScoreReport> = (0..len)
            .map(|i| {
                let (mut iou, logit) = if rng.random_bool(p_good) {
                    (rng.random_range(config.delta_iou..=1.0), rng.random_range(threshold_logit + 0.01..8.0))
                } else {
                    (rng.random_range(0.0..=1.0), rng.random_range(-6.0..6.0))
                };
                if coarse {
                    iou = (iou * 20.0).round() / 20.0;
                }
                ScoreReport::new(FrameIndex(start + i as u64), iou, logit, None, MaskGrid::empty(1, 1))
            })
            .collect::<Result<_>>()
            .expect("generated scores are in range");

        let expected = brute_force_gate(&reports, config.delta_iou, config.delta_o, n_w);
        let window = match mutation {
            Some(Mutation::GateWindow) => n_w.saturating_sub(1).max(1),
            None => n_w,
        };
        let mut gate = match GateState::new(window) {
            Ok(g) => g,
            Err(e) => return t.error("gate construction", e),
        };
        let mut got = None;
        for (i, r) in reports.iter().enumerate() {
            match gate.observe(r.clone(), &config) {
                Ok(Some(sel)) => {
                    got = Some((sel.frame, sel.decided_at));
                    if let Some(next) = reports.get(i + 1) {
                        let inert = matches!(gate.observe(next.clone(), &config), Err(Error::GateInert));
                        t.check(inert, || format!("trial {trial}: gate accepted a frame after firing"));
                    }
                    break;
                }
                Ok(None) => {}
                Err(e) => return t.error(&format!("trial {trial}"), e),
            }
        }
        let want = expected.map(|d| (FrameIndex(start + d.selected as u64), FrameIndex(start + d.decided as u64)));
        fired += usize::from(want.is_some());
        t.check(got == want, || {
            let show = |d: Option<(FrameIndex, FrameIndex)>| {
                d.map_or("no decision".to_string(), |(sel, at)| format!("frame {sel} decided at {at}"))
            };
            format!("trial {trial} (n_w={n_w}, len={len}): streaming gate {}, brute force {}", show(got), show(want))
        });
    }
    // Guard against a generator that never lets the gate fire.
    t.check(fired * 4 >= GATE_TRIALS, || format!("only {fired} of {GATE_TRIALS} streams reached a decision"));
}

fn memory_suite(rng: &mut ChaCha8Rng, t: &mut Tally) {
    pool_selection_trials(rng, t);
    let mut steps = 0;
    for policy in MemoryPolicy::ALL {
        steps += bank_update_trials(rng, policy, t);
    }
    t.check(steps >= 10_000, || format!("only {steps} update steps exercised"));
}

fn pool_selection_trials(rng: &mut ChaCha8Rng, t: &mut Tally) {
    for trial in 0..POOL_TRIALS {
        let capacity = rng.random_range(1..=8usize);
        let dim = rng.random_range(2..=8usize);
        let gamma = rng.random_range(0.5..0.99);
        let mut pool = CandidatePool::new(capacity).expect("positive capacity");
        let mut vectors: Vec<Vec<f64>> = Vec::new();
        for i in 0..capacity {
            let v = if i > 0 && rng.random_bool(0.25) {
                vectors[rng.random_range(0..i)].clone()
            } else {
                random_vector(rng, dim)
            };
            vectors.push(v.clone());
            let iou = gamma + (1.0 - gamma) * rng.random_range(0.01..=1.0);
            let entry = MemoryEntry::new(FrameIndex(i as u64), Embedding::new(v).unwrap(), iou, EntryKind::ShortTerm)
                .expect("non-zero embedding");
            if i == 0 {
                let at_threshold = entry.clone();
                let rejected = !pool.offer(MemoryEntry { iou_score: gamma, ..at_threshold }, gamma).unwrap_or(true);
                t.check(rejected && pool.is_empty(), || format!("pool trial {trial}: score equal to γ was admitted"));
            }
            if let Err(e) = pool.offer(entry, gamma) {
                return t.error(&format!("pool trial {trial}"), e);
            }
        }
        let reference_vec =
            if rng.random_bool(0.2) { vectors[rng.random_range(0..capacity)].clone() } else { random_vector(rng, dim) };
        let reference =
            MemoryEntry::new(FrameIndex(1000), Embedding::new(reference_vec).unwrap(), 1.0, EntryKind::LongTerm).unwrap();
        let snapshot = pool.entries().to_vec();
        let expected = exhaustive_cosine_argmin(&snapshot, &reference).map(|i| snapshot[i].frame);
        match pool.select_diverse(&reference) {
            Ok(selected) => {
                t.check(Some(selected.frame) == expected, || {
                    format!("pool trial {trial}: selected {}, exhaustive argmin {expected:?}", selected.frame)
                });
                t.check(pool.is_empty(), || format!("pool trial {trial}: pool not empty after selection"));
                t.check(selected.kind == EntryKind::LongTerm, || format!("pool trial {trial}: kind {:?}", selected.kind));
            }
            Err(e) => t.error(&format!("pool trial {trial}"), e),
        }
    }
}

fn random_bank_config(rng: &mut ChaCha8Rng, policy: MemoryPolicy) -> TrackerConfig {
    let n_l = rng.random_range(2..=6usize);
    TrackerConfig {
        gamma_iou: rng.random_range(0.5..0.99),
        n_p: rng.random_range(1..=6),
        n_l,
        short_term_capacity: rng.random_range(1..=8),
        interval_every: rng.random_range(1..=7),
        interval_keep: rng.random_range(1..n_l),
        policy,
        ..TrackerConfig::default()
    }
}

/// Random tracking-stage updates with every invariant checked after each
/// step. Returns the number of steps taken.
fn bank_update_trials(rng: &mut ChaCha8Rng, policy: MemoryPolicy, t: &mut Tally) -> usize {
    const DIM: usize = 4;
    const STEPS: usize = 100;
    let mut taken = 0;
    for bank_no in 0..MEMORY_STEPS_PER_POLICY / STEPS {
        let config = random_bank_config(rng, policy);
        let mut frame = rng.random_range(0..500u64);
        let initial_frame = FrameIndex(frame);
        let report = |rng: &mut ChaCha8Rng, frame: u64| {
            let iou = if rng.random_bool(0.6) {
                config.gamma_iou + (1.0 - config.gamma_iou) * rng.random_range(0.01..=1.0)
            } else {
                rng.random_range(0.0..=config.gamma_iou)
            };
            let emb = Embedding::new(random_vector(rng, DIM)).unwrap();
            ScoreReport::new(FrameIndex(frame), iou, 3.0, Some(emb), MaskGrid::empty(1, 1)).unwrap()
        };
        let first = report(rng, frame);
        let mut bank = match MemoryBank::new(&first, &config) {
            Ok(b) => b,
            Err(e) => {
                t.error(&format!("{policy} bank {bank_no}"), e);
                return taken;
            }
        };
        for step in 0..STEPS {
            frame += rng.random_range(1..=3);
            let r = report(rng, frame);
            let before: Vec<MemoryEntry> = bank.pool().entries().to_vec();
            let latest = bank.long_term().latest().clone();
            let outcome = match bank.update(&r) {
                Ok(o) => o,
                Err(e) => {
                    t.error(&format!("{policy} bank {bank_no} step {step}"), e);
                    return taken;
                }
            };
            taken += 1;
            let at = || format!("{policy} bank {bank_no} step {step}");

            let context = bank.assemble_context();
            let initials = context.iter().filter(|e| e.kind == EntryKind::Initial).count();
            t.check(initials == 1 && context[0].frame == initial_frame, || format!("{}: initial entry missing", at()));
            t.check(bank.short_term().len() <= config.effective_short_capacity(), || {
                format!("{}: short-term holds {}", at(), bank.short_term().len())
            });
            t.check(bank.long_term().queue().len() <= config.long_queue_capacity(), || {
                format!("{}: long-term queue holds {}", at(), bank.long_term().queue().len())
            });
            t.check(context.len() <= config.max_context_len(), || format!("{}: context of {}", at(), context.len()));
            t.check(bank.pool().len() < config.n_p, || format!("{}: pool holds {}", at(), bank.pool().len()));

            let expected = match policy {
                MemoryPolicy::Vanilla | MemoryPolicy::Extended => None,
                MemoryPolicy::Interval => {
                    ((frame - initial_frame.0) % config.interval_every == 0).then_some(FrameIndex(frame))
                }
                MemoryPolicy::Dlm => {
                    let mut candidates = before;
                    if r.iou_score > config.gamma_iou {
                        candidates.push(MemoryEntry::from_report(&r, EntryKind::ShortTerm).unwrap());
                    }
                    if candidates.len() == config.n_p {
                        exhaustive_cosine_argmin(&candidates, &latest).map(|i| candidates[i].frame)
                    } else {
                        None
                    }
                }
            };
            t.check(outcome.promoted == expected, || {
                format!("{}: promoted {:?}, expected {expected:?}", at(), outcome.promoted)
            });
            if outcome.promoted.is_some() && policy == MemoryPolicy::Dlm {
                t.check(bank.pool().is_empty(), || format!("{}: pool not cleared", at()));
            }
        }
    }
    taken
}

fn scan_suite(rng: &mut ChaCha8Rng, t: &mut Tally) {
    for trial in 0..SCAN_TRIALS {
        let len = rng.random_range(1..=16usize);
        let dims = rng.random_range(1..=6usize);
        let state = rng.random_range(1..=8usize);
        let mut p = ScanParams::init(dims, state, rng);
        p.a_log = Matrix::uniform(dims, state, 1.5, rng);
        let x = Matrix::uniform(len, dims, 1.0, rng);
        match selective_scan(&x, &p) {
            Ok(y) => {
                let reference = unrolled_scan(&x, &p);
                let err = y
                    .data()
                    .iter()
                    .zip(reference.data())
                    .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
                    .fold(0.0, f64::max);
                t.check(err <= 1e-10, || format!("scan trial {trial} (L={len}, D={dims}, N={state}): error {err:e}"));
            }
            Err(e) => t.error(&format!("scan trial {trial}"), e),
        }
    }

    for trial in 0..100 {
        let len = rng.random_range(2..=32usize);
        let dims = rng.random_range(1..=4usize);
        let p = ScanParams::init(dims, rng.random_range(1..=8), rng);
        let x = Matrix::uniform(len, dims, 1.0, rng);
        let at = rng.random_range(1..len);
        let mut x2 = x.clone();
        for d in 0..dims {
            x2.set(at, d, rng.random_range(-1.0..1.0));
        }
        let (Ok(a), Ok(b)) = (selective_scan(&x, &p), selective_scan(&x2, &p)) else {
            t.check(false, || format!("causality trial {trial}: scan failed"));
            continue;
        };
        let same_prefix = (0..at).all(|r| a.row(r).iter().zip(b.row(r)).all(|(u, v)| u.to_bits() == v.to_bits()));
        t.check(same_prefix, || format!("causality trial {trial}: output before position {at} changed"));
    }

    let ratio = scan_doubling_ratio(rng, 2048);
    t.check(ratio <= 2.5, || format!("doubling the sequence length multiplied scan time by {ratio:.2}"));
}

/// Median wall time at `2·len` divided by median wall time at `len`.
pub fn scan_doubling_ratio(rng: &mut impl Rng, len: usize) -> f64 {
    let p = ScanParams::init(16, 8, rng);
    let short = Matrix::uniform(len, 16, 1.0, rng);
    let long = Matrix::uniform(2 * len, 16, 1.0, rng);
    let median = |x: &Matrix| {
        let _ = selective_scan(x, &p);
        let mut times: Vec<f64> = (0..9)
            .map(|_| {
                let start = Instant::now();
                let y = selective_scan(x, &p);
                let el = start.elapsed().as_secs_f64();
                std::hint::black_box(y).ok();
                el
            })
            .collect();
        times.sort_by(f64::total_cmp);
        times[times.len() / 2]
    };
    median(&long) / median(&short)
}

/// Small mask pairs whose overlap was counted by hand.
fn hand_counted_pairs() -> Vec<(Vec<&'static str>, Vec<&'static str>, f64)> {
    vec![
        (vec!["##", "##"], vec!["##", "##"], 1.0),
        (vec!["#.", ".."], vec![".#", ".."], 0.0),
        (vec!["..", ".."], vec!["..", ".."], 1.0),
        (vec!["..", ".."], vec!["#.", ".."], 0.0),
        (vec!["###", "...", "..."], vec!["#..", "#..", "#.."], 1.0 / 5.0),
        (vec!["##.", "##.", "..."], vec![".##", ".##", "..."], 2.0 / 6.0),
        (vec!["####", "####", "....", "...."], vec!["##..", "##..", "##..", "##.."], 4.0 / 12.0),
        (vec!["#...", ".#..", "..#.", "...#"], vec!["#...", "....", "....", "...#"], 2.0 / 4.0),
        (vec!["###", "###", "###"], vec!["...", ".#.", "..."], 1.0 / 9.0),
        (vec!["###.", "###.", "###.", "...."], vec!["....", ".###", ".###", ".###"], 4.0 / 14.0),
        (vec!["#.#.#"], vec!["##..#"], 2.0 / 4.0),
        (vec!["#"], vec!["#"], 1.0),
    ]
}

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> MaskGrid {
    match rng.random_range(0..3) {
        0 => {
            let density = rng.random_range(0.05..0.7);
            MaskGrid::from_fn(h, w, |_, _| rng.random_bool(density))
        }
        1 => {
            let (cy, cx) = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
            let (ry, rx) = (rng.random_range(0.5..=h as f64), rng.random_range(0.5..=w as f64));
            MaskGrid::from_fn(h, w, |y, x| {
                let (dy, dx) = ((y as f64 - cy) / ry, (x as f64 - cx) / rx);
                dy * dy + dx * dx <= 1.0
            })
        }
        _ => {
            let (y0, x0) = (rng.random_range(0..h), rng.random_range(0..w));
            let (y1, x1) = (rng.random_range(y0..h), rng.random_range(x0..w));
            MaskGrid::from_fn(h, w, |y, x| (y0..=y1).contains(&y) && (x0..=x1).contains(&x))
        }
    }
}

/// Shifts a mask by at most one cell and flips a few cells, giving a nearby
/// boundary with non-trivial matchings.
fn perturbed(rng: &mut ChaCha8Rng, m: &MaskGrid) -> MaskGrid {
    let (h, w) = m.dims();
    let (sy, sx) = (rng.random_range(-1..=1i32) as isize, rng.random_range(-1..=1i32) as isize);
    let flip = rng.random_range(0.0..0.15);
    MaskGrid::from_fn(h, w, |y, x| {
        let (oy, ox) = (y as isize - sy, x as isize - sx);
        let v = oy >= 0 && ox >= 0 && (oy as usize) < h && (ox as usize) < w && m.get(oy as usize, ox as usize);
        v ^ rng.random_bool(flip)
    })
}

fn metrics_suite(rng: &mut ChaCha8Rng, t: &mut Tally) {
    for (i, (a, b, want)) in hand_counted_pairs().into_iter().enumerate() {
        let (a, b) = (MaskGrid::from_ascii(&a).unwrap(), MaskGrid::from_ascii(&b).unwrap());
        match frame_j(&a, &b) {
            Ok(j) => t.check(j == want, || format!("fixed pair {i}: J={j}, hand count {want}")),
            Err(e) => t.error(&format!("fixed pair {i}"), e),
        }
    }

    let mut exhaustive_checked = 0;
    for trial in 0..MATCHING_TRIALS {
        let (h, w) = if rng.random_bool(0.3) {
            (rng.random_range(1..=4usize), rng.random_range(1..=4usize))
        } else {
            (rng.random_range(1..=16usize), rng.random_range(1..=16usize))
        };
        let a = random_mask(rng, h, w);
        let b = if rng.random_bool(0.6) { perturbed(rng, &a) } else { random_mask(rng, h, w) };

        let j = frame_j(&a, &b).unwrap();
        let hj = hand_j(&a, &b);
        t.check(j == hj, || format!("matching trial {trial}: J={j}, cell count {hj}"));

        let (ba, bb) = (boundary_pixels(&a), boundary_pixels(&b));
        t.check(ba == naive_boundary(&a) && bb == naive_boundary(&b), || {
            format!("matching trial {trial}: boundary extraction disagrees")
        });
        let fast = if ba.is_empty() || bb.is_empty() {
            0
        } else {
            max_matching(&boundary_adjacency(&ba, &bb, 1.0), bb.len())
        };
        let edges = naive_edges(&ba, &bb, 1);
        let (reference, certified) = certified_matching(&edges, bb.len());
        t.check(certified, || format!("matching trial {trial}: reference matching lacks a cover certificate"));
        t.check(fast == reference, || format!("matching trial {trial} ({h}x{w}): matcher {fast}, reference {reference}"));
        if ba.len() <= 8 {
            let brute = exhaustive_matching(&edges, bb.len());
            exhaustive_checked += 1;
            t.check(fast == brute, || format!("matching trial {trial}: matcher {fast}, exhaustive {brute}"));
        }

        let f = frame_f(&a, &b, 1.0).unwrap();
        let want = match (ba.len(), bb.len()) {
            (0, 0) => 1.0,
            (0, _) | (_, 0) => 0.0,
            (p, g) => 2.0 * reference as f64 / (p + g) as f64,
        };
        t.check((f - want).abs() <= 1e-12, || format!("matching trial {trial}: F={f}, expected {want}"));
    }
    t.check(exhaustive_checked >= 50, || format!("only {exhaustive_checked} pairs small enough for enumeration"));
}

fn gradient_suite(seed: u64, rng: &mut ChaCha8Rng, t: &mut Tally) {
    let jobs: Vec<(KernelOp, u64)> =
        KernelOp::ALL.iter().flat_map(|&op| (0..GRADIENT_SEEDS).map(move |s| (op, seed.wrapping_add(s)))).collect();
    let results: Vec<_> = jobs.par_iter().map(|&(op, s)| (op, s, grad_check(op, s, GRADIENT_EPS))).collect();
    for (op, s, r) in results {
        match r {
            Ok(r) => t.check(r.max_rel_error < GRADIENT_TOLERANCE, || {
                format!("{op} seed {s}: max relative error {:e}", r.max_rel_error)
            }),
            Err(e) => t.error(&format!("{op} seed {s}"), e),
        }
    }
    for s in 0..10 {
        match grad_check_dwconv_inputs(seed.wrapping_add(s), 1e-3) {
            Ok(err) => t.check(err < 1e-10, || format!("dwconv input seed {s}: {err:e}")),
            Err(e) => t.error("dwconv input", e),
        }
    }

    for trial in 0..200 {
        let heads = rng.random_range(1..=3usize);
        let dim = heads * rng.random_range(1..=4usize);
        let p = AttentionParams::init(dim, heads, rng);
        let scale = rng.random_range(0.1..20.0);
        let q = Matrix::uniform(rng.random_range(1..=8), dim, scale, rng);
        let k = Matrix::uniform(rng.random_range(1..=12), dim, scale, rng);
        match cross_attention_cached(&q, &k, &p) {
            Ok((_, cache)) => {
                let worst = cache
                    .probabilities()
                    .iter()
                    .flat_map(|m| (0..m.rows()).map(move |r| (m.row(r).iter().sum::<f64>() - 1.0).abs()))
                    .fold(0.0, f64::max);
                t.check(worst <= 1e-12, || format!("attention trial {trial}: row sum off by {worst:e}"));
            }
            Err(e) => t.error(&format!("attention trial {trial}"), e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("everything".parse::<Suite>().is_err());
        assert_eq!("gate-window".parse::<Mutation>().unwrap(), Mutation::GateWindow);
    }

    #[test]
    fn hand_counts_match_cell_counts() {
        for (a, b, want) in hand_counted_pairs() {
            let (a, b) = (MaskGrid::from_ascii(&a).unwrap(), MaskGrid::from_ascii(&b).unwrap());
            assert_eq!(hand_j(&a, &b), want);
        }
    }

    #[test]
    fn gate_suite_passes_and_mutant_fails() {
        let clean = run_suite(Suite::Gate, &VerifyOptions::default());
        assert!(clean.passed(), "{:?}", clean.failures);
        assert!(clean.checks >= GATE_TRIALS);
        let mutant = run_suite(Suite::Gate, &VerifyOptions { seed: 0, mutation: Some(Mutation::GateWindow) });
        assert!(!mutant.passed());
    }

    #[test]
    fn memory_suite_passes() {
        let r = run_suite(Suite::Memory, &VerifyOptions::default());
        assert!(r.passed(), "{:?}", r.failures);
    }

    #[test]
    fn metrics_suite_passes() {
        let r = run_suite(Suite::Metrics, &VerifyOptions::default());
        assert!(r.passed(), "{:?}", r.failures);
    }
}
