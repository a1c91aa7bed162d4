use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use credtrack_core::tracker::SteadyBackend;
use credtrack_core::{Embedding, FrameIndex, GateState, MaskGrid, MemoryBank, MemoryPolicy, ScoreReport, Tracker, TrackerConfig};

fn report(frame: u64, iou: f64) -> ScoreReport {
    let angle = frame as f64 * 0.37;
    let emb = Embedding::new(vec![angle.cos(), angle.sin(), 0.1, 0.2]).unwrap();
    ScoreReport::new(FrameIndex(frame), iou, 5.0, Some(emb), MaskGrid::empty(4, 4)).unwrap()
}

fn memory_update(c: &mut Criterion) {
    let ring: Vec<ScoreReport> = (0..64).map(|i| report(i, if i % 3 == 0 { 0.9 } else { 0.97 })).collect();
    let mut group = c.benchmark_group("memory_update");
    for policy in MemoryPolicy::ALL {
        let config = TrackerConfig::default().with_policy(policy);
        group.bench_function(BenchmarkId::from_parameter(policy), |b| {
            let mut bank = MemoryBank::new(&report(0, 0.99), &config).unwrap();
            let mut frame = 0u64;
            b.iter(|| {
                frame += 1;
                let mut r = ring[(frame % 64) as usize].clone();
                r.frame = FrameIndex(frame);
                black_box(bank.update(&r).unwrap());
                black_box(bank.assemble_context().len())
            })
        });
    }
    group.finish();
}

fn gate(c: &mut Criterion) {
    let config = TrackerConfig::default();
    c.bench_function("gate/observe_unqualified", |b| {
        let mut gate = GateState::for_config(&config).unwrap();
        let mut frame = 0u64;
        b.iter(|| {
            frame += 1;
            black_box(gate.observe(report(frame, 0.5), &config).unwrap())
        })
    });
    c.bench_function("gate/fill_and_fire", |b| {
        let window: Vec<ScoreReport> = (0..config.n_w as u64).map(|i| report(i, 0.8 + 0.01 * i as f64)).collect();
        b.iter(|| {
            let mut gate = GateState::for_config(&config).unwrap();
            let mut fired = None;
            for r in &window {
                fired = gate.observe(r.clone(), &config).unwrap();
            }
            black_box(fired)
        })
    });
}

fn tracker_step(c: &mut Criterion) {
    let backend = Arc::new(SteadyBackend::default());
    let text = Embedding::new(vec![1.0]).unwrap();
    let mut group = c.benchmark_group("tracker_step");
    for policy in MemoryPolicy::ALL {
        group.bench_function(BenchmarkId::from_parameter(policy), |b| {
            let mut tracker = Tracker::new(TrackerConfig::default().with_policy(policy), backend.clone(), text.clone()).unwrap();
            let mut frame = 0u64;
            b.iter(|| {
                let out = tracker.step(FrameIndex(frame), &()).unwrap();
                frame += 1;
                black_box(out.mem_size)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, memory_update, gate, tracker_step);
criterion_main!(benches);
