//! Slow, obviously-correct reference implementations.
//!
//! Each function here recomputes from scratch what the streaming code keeps
//! incrementally, so the two can be compared on random inputs.

use crate::kernels::{Matrix, ScanParams};
use crate::memory::MemoryEntry;
use crate::types::{MaskGrid, ScoreReport};

/// Gate decision found by re-examining every full window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateDecision {
    /// Position (in `reports`) of the selected frame.
    pub selected: usize,
    /// Position at which the decision is made.
    pub decided: usize,
}

/// For each `t`, looks at positions `t+1-n_w ..= t` and fires at the first `t`
/// where every one qualifies, choosing the highest IoU score (earliest wins
/// ties).
pub fn brute_force_gate(reports: &[ScoreReport], delta_iou: f64, delta_o: f64, n_w: usize) -> Option<GateDecision> {
    if n_w == 0 {
        return None;
    }
    let good = |r: &ScoreReport| r.iou_score > delta_iou && r.presence_probability() > delta_o;
    for t in 0..reports.len() {
        if t + 1 < n_w {
            continue;
        }
        let window = (t + 1 - n_w)..=t;
        if !window.clone().all(|i| good(&reports[i])) {
            continue;
        }
        let mut selected = t + 1 - n_w;
        for i in window {
            if reports[i].iou_score > reports[selected].iou_score {
                selected = i;
            }
        }
        return Some(GateDecision { selected, decided: t });
    }
    None
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Index of the candidate least similar to `reference`; first index on ties.
pub fn exhaustive_cosine_argmin(candidates: &[MemoryEntry], reference: &MemoryEntry) -> Option<usize> {
    let sims: Vec<f64> =
        candidates.iter().map(|c| cosine(c.embedding.values(), reference.embedding.values())).collect();
    let lowest = sims.iter().cloned().fold(f64::INFINITY, f64::min);
    sims.iter().position(|&s| s == lowest)
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        (1.0 + z.exp()).ln()
    }
}

/// Selective scan written as an explicit sum over source positions:
///
/// `y_t[d] = Σ_{s≤t} Σ_n C_t[n] · (Π_{k=s+1..t} exp(Δ_k[d]·A[d,n])) · Δ_s[d] · B_s[n] · x_s[d]`
///
/// Quadratic in sequence length; only meant for short inputs.
pub fn unrolled_scan(x: &Matrix, p: &ScanParams) -> Matrix {
    let (len, dims) = x.shape();
    let state = p.a_log.cols();
    let project = |w: &Matrix, b: &Matrix, t: usize, col: usize| -> f64 {
        b.get(0, col) + (0..dims).map(|i| x.get(t, i) * w.get(i, col)).sum::<f64>()
    };
    let delta = Matrix::from_fn(len, dims, |t, d| softplus(project(&p.w_delta, &p.b_delta, t, d)));
    let bmat = Matrix::from_fn(len, state, |t, n| project(&p.w_b, &p.b_b, t, n));
    let cmat = Matrix::from_fn(len, state, |t, n| project(&p.w_c, &p.b_c, t, n));

    Matrix::from_fn(len, dims, |t, d| {
        let mut y = 0.0;
        for s in 0..=t {
            for n in 0..state {
                let a = -p.a_log.get(d, n).exp();
                let mut transition = 1.0;
                for k in s + 1..=t {
                    transition *= (delta.get(k, d) * a).exp();
                }
                y += cmat.get(t, n) * transition * delta.get(s, d) * bmat.get(s, n) * x.get(s, d);
            }
        }
        y
    })
}

/// Region similarity counted cell by cell.
pub fn hand_j(pred: &MaskGrid, gt: &MaskGrid) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.cells().iter().zip(gt.cells()) {
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Boundary cells found by scanning each cell's 4-neighbourhood, treating
/// off-grid cells as background.
pub fn naive_boundary(mask: &MaskGrid) -> Vec<(usize, usize)> {
    let (h, w) = (mask.height() as isize, mask.width() as isize);
    let on = |y: isize, x: isize| y >= 0 && x >= 0 && y < h && x < w && mask.get(y as usize, x as usize);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if on(y, x) && [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|&(dy, dx)| !on(y + dy, x + dx)) {
                out.push((y as usize, x as usize));
            }
        }
    }
    out
}

/// Pairs within integer squared distance `r2`.
pub fn naive_edges(left: &[(usize, usize)], right: &[(usize, usize)], r2: usize) -> Vec<Vec<usize>> {
    left.iter()
        .map(|&(ly, lx)| {
            (0..right.len())
                .filter(|&j| {
                    let (ry, rx) = right[j];
                    ly.abs_diff(ry).pow(2) + lx.abs_diff(rx).pow(2) <= r2
                })
                .collect()
        })
        .collect()
}

/// Maximum matching by single-path augmentation (Kuhn), together with a
/// König vertex cover of the same size that certifies optimality.
pub fn certified_matching(adj: &[Vec<usize>], right_len: usize) -> (usize, bool) {
    let mut owner: Vec<Option<usize>> = vec![None; right_len];
    fn try_augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].map_or(true, |w| try_augment(w, adj, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }
    let mut size = 0;
    for u in 0..adj.len() {
        let mut seen = vec![false; right_len];
        if try_augment(u, adj, &mut seen, &mut owner) {
            size += 1;
        }
    }

    // König: Z = vertices reachable from free left vertices by alternating
    // paths; the cover is (L \ Z) ∪ (R ∩ Z).
    let mut matched_left = vec![None; adj.len()];
    for (v, o) in owner.iter().enumerate() {
        if let Some(u) = *o {
            matched_left[u] = Some(v);
        }
    }
    let mut left_z = vec![false; adj.len()];
    let mut right_z = vec![false; right_len];
    let mut stack: Vec<usize> = (0..adj.len()).filter(|&u| matched_left[u].is_none()).collect();
    for &u in &stack {
        left_z[u] = true;
    }
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if matched_left[u] == Some(v) || right_z[v] {
                continue;
            }
            right_z[v] = true;
            if let Some(w) = owner[v] {
                if !left_z[w] {
                    left_z[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    let cover_size = left_z.iter().filter(|&&z| !z).count() + right_z.iter().filter(|&&z| z).count();
    let covers = adj.iter().enumerate().all(|(u, vs)| vs.iter().all(|&v| !left_z[u] || right_z[v]));
    (size, covers && cover_size == size)
}

/// Maximum matching by trying every assignment. Exponential; only for a
/// handful of left vertices.
pub fn exhaustive_matching(adj: &[Vec<usize>], right_len: usize) -> usize {
    fn best(u: usize, adj: &[Vec<usize>], used: &mut [bool]) -> usize {
        if u == adj.len() {
            return 0;
        }
        let mut top = best(u + 1, adj, used);
        for &v in &adj[u] {
            if !used[v] {
                used[v] = true;
                top = top.max(1 + best(u + 1, adj, used));
                used[v] = false;
            }
        }
        top
    }
    best(0, adj, &mut vec![false; right_len])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::FrameIndex;

    fn report(iou: f64, logit: f64) -> ScoreReport {
        ScoreReport::new(FrameIndex(0), iou, logit, None, MaskGrid::empty(1, 1)).unwrap()
    }

    #[test]
    fn gate_fires_on_first_full_window() {
        let r: Vec<_> = [0.9, 0.5, 0.8, 0.95, 0.85].iter().map(|&i| report(i, 5.0)).collect();
        assert_eq!(brute_force_gate(&r, 0.7, 0.9, 3), Some(GateDecision { selected: 3, decided: 4 }));
        assert_eq!(brute_force_gate(&r, 0.7, 0.9, 4), None);
        assert_eq!(brute_force_gate(&r, 0.7, 0.9, 1), Some(GateDecision { selected: 0, decided: 0 }));
    }

    #[test]
    fn matchers_agree_on_a_small_graph() {
        let adj = vec![vec![0, 1], vec![0], vec![1, 2], vec![2]];
        assert_eq!(certified_matching(&adj, 3), (3, true));
        assert_eq!(exhaustive_matching(&adj, 3), 3);
    }

    #[test]
    fn boundary_of_a_plus() {
        let m = MaskGrid::from_ascii(&[".#.", "###", ".#."]).unwrap();
        assert_eq!(naive_boundary(&m).len(), 4);
    }
}
