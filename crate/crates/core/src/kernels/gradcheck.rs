//! Central finite-difference checks for every analytic backward pass.
//!
//! Each op is wrapped as a set of variables (parameters and inputs together)
//! with a scalar loss equal to the sum of its outputs.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::attention::{cross_attention_backward, cross_attention_cached, AttentionParams};
use super::block::{block_backward, block_forward, StBlockParams, TextTokens};
use super::dwconv::{dwconv7x7, dwconv7x7_backward, DwConvParams};
use super::mlp::{inverted_mlp_backward, inverted_mlp_cached, MlpParams};
use super::norm::{layer_norm_backward, layer_norm_cached, LayerNormParams};
use super::params::Parameters;
use super::scan::{selective_scan_backward, selective_scan_cached, ScanParams};
use super::tensor::{FeatureGrid, Matrix};
use crate::error::{Error, Result};

/// Finite-difference step sizes the checks are calibrated for.
pub const VALIDATED_EPS: (f64, f64) = (1e-6, 1e-3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelOp {
    SelectiveScan,
    Dwconv7x7,
    InvertedMlp,
    CrossAttention,
    LayerNorm,
    StBlock,
}

impl KernelOp {
    pub const ALL: [KernelOp; 6] = [
        KernelOp::SelectiveScan,
        KernelOp::Dwconv7x7,
        KernelOp::InvertedMlp,
        KernelOp::CrossAttention,
        KernelOp::LayerNorm,
        KernelOp::StBlock,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelOp::SelectiveScan => "selective_scan",
            KernelOp::Dwconv7x7 => "dwconv7x7",
            KernelOp::InvertedMlp => "inverted_mlp",
            KernelOp::CrossAttention => "cross_attention",
            KernelOp::LayerNorm => "layer_norm",
            KernelOp::StBlock => "st_block",
        }
    }
}

impl fmt::Display for KernelOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelOp::ALL.into_iter().find(|op| op.name() == s).ok_or_else(|| Error::UnknownOp(s.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub op: KernelOp,
    pub seed: u64,
    pub eps: f64,
    pub elements: usize,
    /// `max |analytic − numeric| / max(1, |numeric|)`.
    pub max_rel_error: f64,
}

/// Compares `grad(vars)` with central differences of `loss` around `vars`.
pub fn compare_gradients<P, L, G>(vars: &P, loss: L, grad: G, eps: f64) -> Result<(f64, usize)>
where
    P: Parameters + Clone + Sync,
    L: Fn(&P) -> Result<f64> + Sync,
    G: Fn(&P) -> Result<P>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {eps}")));
    }
    let analytic = grad(vars)?.flatten();
    if let Some(i) = analytic.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(i));
    }
    let base = vars.flatten();
    let numeric: Vec<f64> = (0..base.len())
        .into_par_iter()
        .map(|i| {
            let mut probe = vars.clone();
            let mut v = base.clone();
            v[i] = base[i] + eps;
            probe.assign(&v);
            let up = loss(&probe)?;
            v[i] = base[i] - eps;
            probe.assign(&v);
            let down = loss(&probe)?;
            Ok((up - down) / (2.0 * eps))
        })
        .collect::<Result<_>>()?;
    if let Some(i) = numeric.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(i));
    }
    let err = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).abs() / n.abs().max(1.0)).fold(0.0, f64::max);
    Ok((err, base.len()))
}

/// Builds a random toy problem for `op` from `seed` and checks its gradients.
pub fn grad_check(op: KernelOp, seed: u64, eps: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (max_rel_error, elements) = match op {
        KernelOp::SelectiveScan => check_scan(&mut rng, eps)?,
        KernelOp::Dwconv7x7 => check_dwconv(&mut rng, eps, true)?,
        KernelOp::InvertedMlp => check_mlp(&mut rng, eps)?,
        KernelOp::CrossAttention => check_attention(&mut rng, eps)?,
        KernelOp::LayerNorm => check_norm(&mut rng, eps)?,
        KernelOp::StBlock => check_block(&mut rng, eps)?,
    };
    Ok(GradCheckReport { op, seed, eps, elements, max_rel_error })
}

/// Input-only check of the depthwise convolution with a fixed random kernel.
pub fn grad_check_dwconv_inputs(seed: u64, eps: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(check_dwconv(&mut rng, eps, false)?.0)
}

fn sum_of(m: &Matrix) -> f64 {
    m.sum()
}

fn ones_like(m: &Matrix) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |_, _| 1.0)
}

#[derive(Clone)]
struct With<P> {
    params: P,
    inputs: Vec<Matrix>,
}

impl<P: Parameters> Parameters for With<P> {
    fn visit(&self, f: &mut dyn FnMut(&Matrix)) {
        self.params.visit(f);
        self.inputs.iter().for_each(|m| f(m));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Matrix)) {
        self.params.visit_mut(f);
        self.inputs.iter_mut().for_each(|m| f(m));
    }
}

/// Inputs only; the parameters stay fixed.
#[derive(Clone)]
struct InputsOnly(Vec<Matrix>);

impl Parameters for InputsOnly {
    fn visit(&self, f: &mut dyn FnMut(&Matrix)) {
        self.0.iter().for_each(|m| f(m));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Matrix)) {
        self.0.iter_mut().for_each(|m| f(m));
    }
}

fn check_scan(rng: &mut ChaCha8Rng, eps: f64) -> Result<(f64, usize)> {
    let (len, state, dims) = (rng.random_range(1..=8), rng.random_range(1..=4), rng.random_range(1..=4));
    let vars = With { params: ScanParams::init(dims, state, rng), inputs: vec![Matrix::uniform(len, dims, 1.0, rng)] };
    compare_gradients(
        &vars,
        |v| Ok(sum_of(&selective_scan_cached(&v.inputs[0], &v.params)?.0)),
        |v| {
            let (y, cache) = selective_scan_cached(&v.inputs[0], &v.params)?;
            let (dx, g) = selective_scan_backward(&cache, &v.params, &ones_like(&y))?;
            Ok(With { params: g, inputs: vec![dx] })
        },
        eps,
    )
}

fn grid_of(m: &Matrix, h: usize, w: usize) -> Result<FeatureGrid> {
    FeatureGrid::from_tokens(h, w, m.clone())
}

fn check_dwconv(rng: &mut ChaCha8Rng, eps: f64, with_params: bool) -> Result<(f64, usize)> {
    let (h, w, c) = (rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(1..=3));
    let params = DwConvParams::init(c, rng);
    let x = Matrix::uniform(h * w, c, 1.0, rng);
    let forward = |p: &DwConvParams, x: &Matrix| -> Result<f64> { Ok(dwconv7x7(&grid_of(x, h, w)?, p)?.data().iter().sum()) };
    let backward = |p: &DwConvParams, x: &Matrix| -> Result<(Matrix, DwConvParams)> {
        let g = grid_of(x, h, w)?;
        let ones = FeatureGrid::from_vec(h, w, c, vec![1.0; h * w * c])?;
        let (dx, gp) = dwconv7x7_backward(&g, p, &ones)?;
        Ok((dx.to_tokens(), gp))
    };
    if with_params {
        let vars = With { params, inputs: vec![x] };
        compare_gradients(
            &vars,
            |v| forward(&v.params, &v.inputs[0]),
            |v| {
                let (dx, gp) = backward(&v.params, &v.inputs[0])?;
                Ok(With { params: gp, inputs: vec![dx] })
            },
            eps,
        )
    } else {
        compare_gradients(
            &InputsOnly(vec![x]),
            |v| forward(&params, &v.0[0]),
            |v| Ok(InputsOnly(vec![backward(&params, &v.0[0])?.0])),
            eps,
        )
    }
}

fn check_mlp(rng: &mut ChaCha8Rng, eps: f64) -> Result<(f64, usize)> {
    let (t, c) = (rng.random_range(1..=5), rng.random_range(1..=4));
    let vars = With { params: MlpParams::init(c, rng), inputs: vec![Matrix::uniform(t, c, 1.5, rng)] };
    compare_gradients(
        &vars,
        |v| Ok(sum_of(&inverted_mlp_cached(&v.inputs[0], &v.params)?.0)),
        |v| {
            let (y, cache) = inverted_mlp_cached(&v.inputs[0], &v.params)?;
            let (dx, g) = inverted_mlp_backward(&cache, &v.params, &ones_like(&y))?;
            Ok(With { params: g, inputs: vec![dx] })
        },
        eps,
    )
}

fn check_attention(rng: &mut ChaCha8Rng, eps: f64) -> Result<(f64, usize)> {
    let (m, n) = (rng.random_range(1..=5), rng.random_range(1..=5));
    let heads = rng.random_range(1..=2);
    let dim = heads * rng.random_range(1..=3);
    let vars = With {
        params: AttentionParams::init(dim, heads, rng),
        inputs: vec![Matrix::uniform(m, dim, 1.0, rng), Matrix::uniform(n, dim, 1.0, rng)],
    };
    compare_gradients(
        &vars,
        |v| Ok(sum_of(&cross_attention_cached(&v.inputs[0], &v.inputs[1], &v.params)?.0)),
        |v| {
            let (y, cache) = cross_attention_cached(&v.inputs[0], &v.inputs[1], &v.params)?;
            let (dq, dk, g) = cross_attention_backward(&cache, &v.params, &ones_like(&y))?;
            Ok(With { params: g, inputs: vec![dq, dk] })
        },
        eps,
    )
}

fn check_norm(rng: &mut ChaCha8Rng, eps: f64) -> Result<(f64, usize)> {
    let (t, c) = (rng.random_range(1..=5), rng.random_range(2..=6));
    let mut params = LayerNormParams::identity(c);
    params.gain = Matrix::uniform(1, c, 1.0, rng);
    params.bias = Matrix::uniform(1, c, 1.0, rng);
    // a sum-of-outputs loss is flat in x for a plain layer norm, so weight it
    let weights = Matrix::uniform(t, c, 1.0, rng);
    let vars = With { params, inputs: vec![Matrix::uniform(t, c, 2.0, rng)] };
    let weighted = |y: &Matrix| y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum::<f64>();
    compare_gradients(
        &vars,
        |v| Ok(weighted(&layer_norm_cached(&v.inputs[0], &v.params)?.0)),
        |v| {
            let (_, cache) = layer_norm_cached(&v.inputs[0], &v.params)?;
            let (dx, g) = layer_norm_backward(&cache, &v.params, &weights)?;
            Ok(With { params: g, inputs: vec![dx] })
        },
        eps,
    )
}

fn check_block(rng: &mut ChaCha8Rng, eps: f64) -> Result<(f64, usize)> {
    let heads = rng.random_range(1..=2);
    let c = 2 * heads;
    let (h, w) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let state = rng.random_range(1..=3);
    let n_text = rng.random_range(1..=3);
    let cls = rng.random_range(0..n_text);
    let mut params = StBlockParams::init(c, state, heads, rng);
    // move the norms off identity so their gradients are exercised
    for ln in [&mut params.ln_visual, &mut params.ln_mix, &mut params.ln_mlp, &mut params.ln_context] {
        ln.gain = Matrix::from_fn(1, c, |_, _| rng.random_range(0.5..1.5));
        ln.bias = Matrix::uniform(1, c, 0.3, rng);
    }
    let mut inputs: Vec<Matrix> = (0..3).map(|_| Matrix::uniform(h * w, c, 1.0, rng)).collect();
    inputs.push(Matrix::uniform(n_text, c, 1.0, rng));
    let vars = With { params, inputs };

    let run = |v: &With<StBlockParams>| {
        let grids = v.inputs[..3].iter().map(|m| grid_of(m, h, w)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&FeatureGrid> = grids.iter().collect();
        let text = TextTokens::new(v.inputs[3].clone(), cls)?;
        block_forward(&refs, &text, &v.params)
    };
    compare_gradients(
        &vars,
        |v| {
            let (out, _) = run(v)?;
            Ok(out.fused_grid.data().iter().sum::<f64>() + out.fused_cls.iter().sum::<f64>())
        },
        |v| {
            let (out, cache) = run(v)?;
            let ones = FeatureGrid::from_vec(h, w, c, vec![1.0; out.fused_grid.data().len()])?;
            let g = block_backward(&cache, &v.params, &ones, &vec![1.0; c])?;
            let mut inputs: Vec<Matrix> = g.frames.iter().map(FeatureGrid::to_tokens).collect();
            inputs.push(g.text);
            Ok(With { params: g.params, inputs })
        },
        eps,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes_on_a_few_seeds() {
        for op in KernelOp::ALL {
            for seed in 0..5 {
                let r = grad_check(op, seed, 1e-4).unwrap();
                assert!(r.max_rel_error < 1e-5, "{op} seed {seed}: {}", r.max_rel_error);
                assert!(r.elements > 0);
            }
        }
    }

    #[test]
    fn dwconv_input_gradient_is_exact() {
        for seed in 0..10 {
            assert!(grad_check_dwconv_inputs(seed, 1e-3).unwrap() < 1e-10);
        }
    }

    #[test]
    fn op_names_round_trip() {
        for op in KernelOp::ALL {
            assert_eq!(op.name().parse::<KernelOp>().unwrap(), op);
        }
        assert!(matches!("conv3d".parse::<KernelOp>(), Err(Error::UnknownOp(_))));
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let vars = InputsOnly(vec![Matrix::from_vec(1, 2, vec![0.3, -0.4]).unwrap()]);
        let (err, _) = compare_gradients(
            &vars,
            |v| Ok(v.0[0].data().iter().map(|x| x * x).sum()),
            |v| Ok(InputsOnly(vec![v.0[0].clone()])),
            1e-5,
        )
        .unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn rejects_non_positive_eps() {
        assert!(grad_check(KernelOp::LayerNorm, 0, 0.0).is_err());
    }
}
