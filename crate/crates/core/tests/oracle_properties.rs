//! Production components against the reference implementations in
//! `verify::oracle`, on proptest-generated inputs.

use credtrack_core::kernels::{selective_scan, Matrix, ScanParams};
use credtrack_core::sim::{boundary_adjacency, boundary_pixels, max_matching};
use credtrack_core::verify::oracle::{
    brute_force_gate, certified_matching, exhaustive_cosine_argmin, exhaustive_matching, naive_boundary, naive_edges,
    unrolled_scan,
};
use credtrack_core::{
    CandidatePool, Embedding, EntryKind, FrameIndex, GateState, MaskGrid, MemoryEntry, ScoreReport, TrackerConfig,
};
use proptest::prelude::*;

fn reports_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    // iou on a coarse grid so windows often contain ties
    prop::collection::vec(((0u32..=20).prop_map(|k| k as f64 / 20.0), -4.0f64..8.0), 1..120)
}

fn mask_strategy(h: usize, w: usize) -> impl Strategy<Value = MaskGrid> {
    prop::collection::vec(any::<bool>(), h * w).prop_map(move |cells| MaskGrid::from_cells(h, w, cells).unwrap())
}

fn mask_pair() -> impl Strategy<Value = (MaskGrid, MaskGrid)> {
    (1usize..=10, 1usize..=10).prop_flat_map(|(h, w)| (mask_strategy(h, w), mask_strategy(h, w)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gate_matches_brute_force(
        scores in reports_strategy(),
        n_w in 1usize..=7,
        delta_iou in 0.3f64..0.9,
        delta_o in 0.5f64..0.99,
    ) {
        let config = TrackerConfig { delta_iou, delta_o, n_w, ..TrackerConfig::default() };
        let reports: Vec<ScoreReport> = scores
            .iter()
            .enumerate()
            .map(|(i, &(iou, logit))| ScoreReport::new(FrameIndex(i as u64), iou, logit, None, MaskGrid::empty(1, 1)).unwrap())
            .collect();
        let expected = brute_force_gate(&reports, delta_iou, delta_o, n_w)
            .map(|d| (FrameIndex(d.selected as u64), FrameIndex(d.decided as u64)));
        let mut gate = GateState::for_config(&config).unwrap();
        let mut got = None;
        for r in &reports {
            if let Some(sel) = gate.observe(r.clone(), &config).unwrap() {
                got = Some((sel.frame, sel.decided_at));
                break;
            }
        }
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn diverse_selection_is_the_cosine_argmin(
        vectors in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..8),
        reference in prop::collection::vec(-1.0f64..1.0, 3),
        duplicate in any::<bool>(),
    ) {
        prop_assume!(reference.iter().any(|v| v.abs() > 1e-6));
        prop_assume!(vectors.iter().all(|v| v.iter().any(|x| x.abs() > 1e-6)));
        let mut vectors = vectors;
        if duplicate && vectors.len() > 1 {
            vectors[1] = vectors[0].clone();
        }
        let mut pool = CandidatePool::new(vectors.len()).unwrap();
        for (i, v) in vectors.iter().enumerate() {
            let e = MemoryEntry::new(FrameIndex(i as u64), Embedding::new(v.clone()).unwrap(), 0.99, EntryKind::ShortTerm).unwrap();
            prop_assert!(pool.offer(e, 0.95).unwrap());
        }
        let reference = MemoryEntry::new(FrameIndex(100), Embedding::new(reference).unwrap(), 1.0, EntryKind::LongTerm).unwrap();
        let snapshot = pool.entries().to_vec();
        let expected = exhaustive_cosine_argmin(&snapshot, &reference).map(|i| snapshot[i].frame);
        let selected = pool.select_diverse(&reference).unwrap();
        prop_assert_eq!(Some(selected.frame), expected);
        prop_assert!(pool.is_empty());
    }

    #[test]
    fn scan_matches_unrolled_form(len in 1usize..=12, dims in 1usize..=4, state in 1usize..=6, seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = ScanParams::init(dims, state, &mut rng);
        let x = Matrix::uniform(len, dims, 1.0, &mut rng);
        let y = selective_scan(&x, &p).unwrap();
        let r = unrolled_scan(&x, &p);
        for (a, b) in y.data().iter().zip(r.data()) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn boundary_matching_agrees_with_references((a, b) in mask_pair()) {
        let (ba, bb) = (boundary_pixels(&a), boundary_pixels(&b));
        prop_assert_eq!(&ba, &naive_boundary(&a));
        prop_assert_eq!(&bb, &naive_boundary(&b));
        let fast = max_matching(&boundary_adjacency(&ba, &bb, 1.0), bb.len());
        let edges = naive_edges(&ba, &bb, 1);
        let (reference, certified) = certified_matching(&edges, bb.len());
        prop_assert!(certified);
        prop_assert_eq!(fast, reference);
        if ba.len() <= 7 {
            prop_assert_eq!(fast, exhaustive_matching(&edges, bb.len()));
        }
    }
}
