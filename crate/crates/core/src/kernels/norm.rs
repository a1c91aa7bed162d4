//! Per-token layer normalisation with learned gain and bias.

use super::params::Parameters;
use super::tensor::Matrix;
use crate::error::{Error, Result};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gain: Matrix,
    pub bias: Matrix,
}

impl LayerNormParams {
    /// Identity-initialised: unit gain, zero bias.
    pub fn identity(channels: usize) -> Self {
        LayerNormParams { gain: Matrix::from_fn(1, channels, |_, _| 1.0), bias: Matrix::zeros(1, channels) }
    }

    pub fn channels(&self) -> usize {
        self.gain.cols()
    }
}

impl Parameters for LayerNormParams {
    fn visit(&self, f: &mut dyn FnMut(&Matrix)) {
        f(&self.gain);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Matrix)) {
        f(&mut self.gain);
        f(&mut self.bias);
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Matrix, p: &LayerNormParams) -> Result<Matrix> {
    Ok(layer_norm_cached(x, p)?.0)
}

pub fn layer_norm_cached(x: &Matrix, p: &LayerNormParams) -> Result<(Matrix, LayerNormCache)> {
    let c = p.channels();
    if p.bias.shape() != (1, c) || p.gain.rows() != 1 || c == 0 {
        return Err(Error::Shape(format!("layer norm gain {:?} / bias {:?}", p.gain.shape(), p.bias.shape())));
    }
    if x.cols() != c {
        return Err(Error::DimensionMismatch { expected: c, found: x.cols() });
    }
    let mut xhat = Matrix::zeros(x.rows(), c);
    let mut inv_std = Vec::with_capacity(x.rows());
    let mut y = Matrix::zeros(x.rows(), c);
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(is);
        for k in 0..c {
            let n = (row[k] - mean) * is;
            xhat.set(r, k, n);
            y.set(r, k, n * p.gain.get(0, k) + p.bias.get(0, k));
        }
    }
    Ok((y, LayerNormCache { xhat, inv_std }))
}

pub fn layer_norm_backward(cache: &LayerNormCache, p: &LayerNormParams, dy: &Matrix) -> Result<(Matrix, LayerNormParams)> {
    let c = p.channels();
    if dy.shape() != cache.xhat.shape() {
        return Err(Error::Shape(format!("layer norm upstream gradient {:?}", dy.shape())));
    }
    let mut g = LayerNormParams { gain: Matrix::zeros(1, c), bias: Matrix::zeros(1, c) };
    let mut dx = Matrix::zeros(dy.rows(), c);
    let mut dxhat = vec![0.0; c];
    for r in 0..dy.rows() {
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in 0..c {
            let gy = dy.get(r, k);
            let xh = cache.xhat.get(r, k);
            g.gain.add_at(0, k, gy * xh);
            g.bias.add_at(0, k, gy);
            dxhat[k] = gy * p.gain.get(0, k);
            m1 += dxhat[k];
            m2 += dxhat[k] * xh;
        }
        m1 /= c as f64;
        m2 /= c as f64;
        for k in 0..c {
            dx.set(r, k, cache.inv_std[r] * (dxhat[k] - m1 - cache.xhat.get(r, k) * m2));
        }
    }
    Ok((dx, g))
}
