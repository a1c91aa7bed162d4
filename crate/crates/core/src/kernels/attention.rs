//! Multi-head cross-attention: queries from one token set, keys and values
//! from another. Projections carry no bias.

use rand::Rng;

use super::params::Parameters;
use super::tensor::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub heads: usize,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
}

impl AttentionParams {
    pub fn zeros(dim: usize, heads: usize) -> Self {
        let z = || Matrix::zeros(dim, dim);
        AttentionParams { heads, wq: z(), wk: z(), wv: z(), wo: z() }
    }

    pub fn init(dim: usize, heads: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        AttentionParams {
            heads,
            wq: Matrix::uniform(dim, dim, bound, rng),
            wk: Matrix::uniform(dim, dim, bound, rng),
            wv: Matrix::uniform(dim, dim, bound, rng),
            wo: Matrix::uniform(dim, dim, bound, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.wq.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.dim() / self.heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.heads == 0 || d % self.heads != 0 {
            return Err(Error::Shape(format!("{} heads do not divide model width {d}", self.heads)));
        }
        for (name, m) in [("wq", &self.wq), ("wk", &self.wk), ("wv", &self.wv), ("wo", &self.wo)] {
            if m.shape() != (d, d) {
                return Err(Error::Shape(format!("attention {name} is {:?}, expected ({d}, {d})", m.shape())));
            }
        }
        if !self.all_finite() {
            return Err(Error::NonFinite("attention parameter"));
        }
        Ok(())
    }
}

impl Parameters for AttentionParams {
    fn visit(&self, f: &mut dyn FnMut(&Matrix)) {
        for m in [&self.wq, &self.wk, &self.wv, &self.wo] {
            f(m);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Matrix)) {
        for m in [&mut self.wq, &mut self.wk, &mut self.wv, &mut self.wo] {
            f(m);
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    xq: Matrix,
    xkv: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// One `m × n` row-stochastic matrix per head.
    probs: Vec<Matrix>,
    concat: Matrix,
}

impl AttentionCache {
    pub fn probabilities(&self) -> &[Matrix] {
        &self.probs
    }
}

fn softmax_rows(s: &mut Matrix) {
    for r in 0..s.rows() {
        let row = s.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

pub fn cross_attention(queries: &Matrix, keys: &Matrix, p: &AttentionParams) -> Result<Matrix> {
    Ok(cross_attention_cached(queries, keys, p)?.0)
}

pub fn cross_attention_cached(queries: &Matrix, keys: &Matrix, p: &AttentionParams) -> Result<(Matrix, AttentionCache)> {
    p.validate()?;
    let d = p.dim();
    for x in [queries, keys] {
        if x.cols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.cols() });
        }
    }
    if keys.rows() == 0 {
        return Err(Error::Shape("cross-attention needs at least one key".into()));
    }
    let q = queries.matmul(&p.wq)?;
    let k = keys.matmul(&p.wk)?;
    let v = keys.matmul(&p.wv)?;
    let dk = p.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    let (m, n) = (queries.rows(), keys.rows());
    let mut concat = Matrix::zeros(m, d);
    let mut probs = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let off = h * dk;
        let mut s = Matrix::from_fn(m, n, |i, j| (0..dk).map(|c| q.get(i, off + c) * k.get(j, off + c)).sum::<f64>() * scale);
        softmax_rows(&mut s);
        for i in 0..m {
            for c in 0..dk {
                let o = (0..n).map(|j| s.get(i, j) * v.get(j, off + c)).sum();
                concat.set(i, off + c, o);
            }
        }
        probs.push(s);
    }
    let out = concat.matmul(&p.wo)?;
    Ok((out, AttentionCache { xq: queries.clone(), xkv: keys.clone(), q, k, v, probs, concat }))
}

/// Returns `(d_queries, d_keys, d_params)`.
pub fn cross_attention_backward(
    cache: &AttentionCache,
    p: &AttentionParams,
    dout: &Matrix,
) -> Result<(Matrix, Matrix, AttentionParams)> {
    let d = p.dim();
    let (m, n) = (cache.xq.rows(), cache.xkv.rows());
    if dout.shape() != (m, d) {
        return Err(Error::Shape(format!("attention upstream gradient {:?}, expected {:?}", dout.shape(), (m, d))));
    }
    let dk = p.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    let d_concat = dout.matmul_t(&p.wo)?;
    let mut dq = Matrix::zeros(m, d);
    let mut dkm = Matrix::zeros(n, d);
    let mut dv = Matrix::zeros(n, d);
    for (h, pr) in cache.probs.iter().enumerate() {
        let off = h * dk;
        // dP = dO_h · V_hᵀ, then the softmax Jacobian per row
        let mut ds: Matrix = Matrix::from_fn(m, n, |i, j| (0..dk).map(|c| d_concat.get(i, off + c) * cache.v.get(j, off + c)).sum::<f64>());
        for i in 0..m {
            let dot: f64 = (0..n).map(|j| ds.get(i, j) * pr.get(i, j)).sum();
            for j in 0..n {
                ds.set(i, j, pr.get(i, j) * (ds.get(i, j) - dot) * scale);
            }
        }
        for c in 0..dk {
            for j in 0..n {
                let mut acc_v = 0.0;
                let mut acc_k = 0.0;
                for i in 0..m {
                    acc_v += pr.get(i, j) * d_concat.get(i, off + c);
                    acc_k += ds.get(i, j) * cache.q.get(i, off + c);
                }
                dv.add_at(j, off + c, acc_v);
                dkm.add_at(j, off + c, acc_k);
            }
            for i in 0..m {
                let acc: f64 = (0..n).map(|j| ds.get(i, j) * cache.k.get(j, off + c)).sum();
                dq.add_at(i, off + c, acc);
            }
        }
    }
    let grads = AttentionParams {
        heads: p.heads,
        wq: cache.xq.t_matmul(&dq)?,
        wk: cache.xkv.t_matmul(&dkm)?,
        wv: cache.xkv.t_matmul(&dv)?,
        wo: cache.concat.t_matmul(dout)?,
    };
    let d_queries = dq.matmul_t(&p.wq)?;
    let mut d_keys = dkm.matmul_t(&p.wk)?;
    d_keys.add_assign(&dv.matmul_t(&p.wv)?);
    Ok((d_queries, d_keys, grads))
}
