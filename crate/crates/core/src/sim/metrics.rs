//! Region (J) and boundary (F) similarity between predicted and reference
//! mask sequences.
//!
//! Both use the same empty-frame convention: a frame where both masks are
//! empty scores 1, a frame where exactly one is empty scores 0.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::types::MaskGrid;

pub const DEFAULT_BOUNDARY_RADIUS: f64 = 1.0;

fn check_pair(pred: &MaskGrid, gt: &MaskGrid) -> Result<()> {
    if pred.dims() != gt.dims() {
        return Err(Error::Shape(format!("prediction {:?} vs reference {:?}", pred.dims(), gt.dims())));
    }
    Ok(())
}

fn check_sequences(pred: &[MaskGrid], gt: &[MaskGrid]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch { expected: gt.len(), found: pred.len() });
    }
    if pred.is_empty() {
        return Err(Error::Shape("no frames to evaluate".into()));
    }
    Ok(())
}

pub fn frame_j(pred: &MaskGrid, gt: &MaskGrid) -> Result<f64> {
    check_pair(pred, gt)?;
    let (inter, union) = pred.overlap(gt)?;
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

pub fn evaluate_j(pred: &[MaskGrid], gt: &[MaskGrid]) -> Result<f64> {
    check_sequences(pred, gt)?;
    let mut total = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        total += frame_j(p, g)?;
    }
    Ok(total / pred.len() as f64)
}

/// Mask pixels with a background 4-neighbour or lying on the image border,
/// as `(y, x)` in row-major order.
pub fn boundary_pixels(mask: &MaskGrid) -> Vec<(usize, usize)> {
    let (h, w) = mask.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(y, x) {
                continue;
            }
            let edge = y == 0
                || x == 0
                || y + 1 == h
                || x + 1 == w
                || !mask.get(y - 1, x)
                || !mask.get(y + 1, x)
                || !mask.get(y, x - 1)
                || !mask.get(y, x + 1);
            if edge {
                out.push((y, x));
            }
        }
    }
    out
}

/// Candidate partners for each left pixel within Euclidean `radius`.
pub fn boundary_adjacency(left: &[(usize, usize)], right: &[(usize, usize)], radius: f64) -> Vec<Vec<usize>> {
    let r2 = radius * radius;
    left.iter()
        .map(|&(ly, lx)| {
            right
                .iter()
                .enumerate()
                .filter(|(_, &(ry, rx))| {
                    let dy = ly as f64 - ry as f64;
                    let dx = lx as f64 - rx as f64;
                    dy * dy + dx * dx <= r2
                })
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

/// Maximum bipartite matching size (Hopcroft–Karp).
pub fn max_matching(adj: &[Vec<usize>], right_len: usize) -> usize {
    const FREE: usize = usize::MAX;
    let n = adj.len();
    let mut match_l = vec![FREE; n];
    let mut match_r = vec![FREE; right_len];
    let mut dist = vec![0usize; n];
    let mut size = 0;

    loop {
        // layer the free left vertices
        let mut queue = VecDeque::new();
        for u in 0..n {
            if match_l[u] == FREE {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let m = match_r[v];
                if m == FREE {
                    found = true;
                } else if dist[m] == usize::MAX {
                    dist[m] = dist[u] + 1;
                    queue.push_back(m);
                }
            }
        }
        if !found {
            return size;
        }
        for u in 0..n {
            if match_l[u] == FREE && augment(u, adj, &mut match_l, &mut match_r, &mut dist) {
                size += 1;
            }
        }
    }
}

fn augment(u: usize, adj: &[Vec<usize>], match_l: &mut [usize], match_r: &mut [usize], dist: &mut [usize]) -> bool {
    for &v in &adj[u] {
        let m = match_r[v];
        let ok = m == usize::MAX || (dist[m] == dist[u] + 1 && augment(m, adj, match_l, match_r, dist));
        if ok {
            match_l[u] = v;
            match_r[v] = u;
            return true;
        }
    }
    dist[u] = usize::MAX;
    false
}

/// F from boundary sizes and matched-pair count.
pub fn f_from_counts(pred_boundary: usize, gt_boundary: usize, matched: usize) -> f64 {
    match (pred_boundary, gt_boundary) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        (p, g) => {
            let precision = matched as f64 / p as f64;
            let recall = matched as f64 / g as f64;
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        }
    }
}

pub fn frame_f(pred: &MaskGrid, gt: &MaskGrid, radius: f64) -> Result<f64> {
    check_pair(pred, gt)?;
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::InvalidConfig(format!("boundary radius must be non-negative, got {radius}")));
    }
    let bp = boundary_pixels(pred);
    let bg = boundary_pixels(gt);
    let matched = if bp.is_empty() || bg.is_empty() { 0 } else { max_matching(&boundary_adjacency(&bp, &bg, radius), bg.len()) };
    Ok(f_from_counts(bp.len(), bg.len(), matched))
}

pub fn evaluate_f(pred: &[MaskGrid], gt: &[MaskGrid], radius: f64) -> Result<f64> {
    check_sequences(pred, gt)?;
    let mut total = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        total += frame_f(p, g, radius)?;
    }
    Ok(total / pred.len() as f64)
}

pub fn jf_mean(j: f64, f: f64) -> f64 {
    (j + f) / 2.0
}
