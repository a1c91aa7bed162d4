//! Depthwise 7×7 convolution with zero padding of 3 on each side, so the
//! spatial size is preserved and channels never mix.

use num_traits::Float;
use rand::Rng;

use super::params::Parameters;
use super::tensor::{FeatureGrid, Matrix};
use crate::error::{Error, Result};

pub const KERNEL: usize = 7;
const PAD: isize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DwConvParams<T = f64> {
    /// `channels × 49`, row-major over `(ky, kx)`.
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
}

impl<T: Float> DwConvParams<T> {
    pub fn zeros(channels: usize) -> Self {
        DwConvParams { weight: Matrix::zeros(channels, KERNEL * KERNEL), bias: Matrix::zeros(1, channels) }
    }

    pub fn channels(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    pub fn tap(&self, c: usize, ky: usize, kx: usize) -> T {
        self.weight.get(c, ky * KERNEL + kx)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.weight.rows();
        if c == 0 || self.weight.cols() != KERNEL * KERNEL {
            return Err(Error::Shape(format!(
                "depthwise kernel is {:?}, expected (channels, {})",
                self.weight.shape(),
                KERNEL * KERNEL
            )));
        }
        if self.bias.shape() != (1, c) {
            return Err(Error::Shape(format!("depthwise bias is {:?}, expected (1, {c})", self.bias.shape())));
        }
        if !self.weight.is_finite() || !self.bias.is_finite() {
            return Err(Error::NonFinite("depthwise parameter"));
        }
        Ok(())
    }

    pub fn cast<U: Float>(&self) -> DwConvParams<U> {
        let c = |m: &Matrix<T>| Matrix::from_fn(m.rows(), m.cols(), |r, k| U::from(m.get(r, k)).unwrap_or_else(U::nan));
        DwConvParams { weight: c(&self.weight), bias: c(&self.bias) }
    }
}

impl DwConvParams<f64> {
    pub fn init(channels: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / KERNEL as f64;
        DwConvParams {
            weight: Matrix::uniform(channels, KERNEL * KERNEL, bound, rng),
            bias: Matrix::uniform(1, channels, bound, rng),
        }
    }
}

impl Parameters for DwConvParams<f64> {
    fn visit(&self, f: &mut dyn FnMut(&Matrix)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Matrix)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// Source coordinate for output `o` and tap `k`, or `None` in the padding.
#[inline]
fn source(o: usize, k: usize, extent: usize) -> Option<usize> {
    let s = o as isize + k as isize - PAD;
    (s >= 0 && (s as usize) < extent).then_some(s as usize)
}

fn check<T: Float>(grid: &FeatureGrid<T>, p: &DwConvParams<T>) -> Result<()> {
    p.validate()?;
    if grid.channels() != p.channels() {
        return Err(Error::DimensionMismatch { expected: p.channels(), found: grid.channels() });
    }
    if !grid.data().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("depthwise input"));
    }
    Ok(())
}

pub fn dwconv7x7<T: Float>(grid: &FeatureGrid<T>, p: &DwConvParams<T>) -> Result<FeatureGrid<T>> {
    check(grid, p)?;
    let (h, w, ch) = grid.dims();
    let mut out = FeatureGrid::zeros(h, w, ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = p.bias.get(0, c);
                for ky in 0..KERNEL {
                    let Some(sy) = source(y, ky, h) else { continue };
                    for kx in 0..KERNEL {
                        if let Some(sx) = source(x, kx, w) {
                            acc = acc + p.tap(c, ky, kx) * grid.get(sy, sx, c);
                        }
                    }
                }
                out.set(y, x, c, acc);
            }
        }
    }
    Ok(out)
}

/// Returns `(d_input, d_params)` for upstream gradient `dout`.
pub fn dwconv7x7_backward(
    grid: &FeatureGrid,
    p: &DwConvParams,
    dout: &FeatureGrid,
) -> Result<(FeatureGrid, DwConvParams)> {
    check(grid, p)?;
    if dout.dims() != grid.dims() {
        return Err(Error::Shape(format!("depthwise upstream gradient {:?}, expected {:?}", dout.dims(), grid.dims())));
    }
    let (h, w, ch) = grid.dims();
    let mut din = FeatureGrid::zeros(h, w, ch);
    let mut g = DwConvParams::zeros(ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let go = dout.get(y, x, c);
                g.bias.add_at(0, c, go);
                for ky in 0..KERNEL {
                    let Some(sy) = source(y, ky, h) else { continue };
                    for kx in 0..KERNEL {
                        if let Some(sx) = source(x, kx, w) {
                            g.weight.add_at(c, ky * KERNEL + kx, go * grid.get(sy, sx, c));
                            let v = din.get(sy, sx, c) + go * p.tap(c, ky, kx);
                            din.set(sy, sx, c, v);
                        }
                    }
                }
            }
        }
    }
    Ok((din, g))
}
