//! Inverted bottleneck MLP: `channels → 4·channels → channels` with a GELU
//! (tanh approximation) in between.

use rand::Rng;

use super::params::Parameters;
use super::tensor::Matrix;
use crate::error::{Error, Result};

pub const EXPANSION: usize = 4;
const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl MlpParams {
    pub fn zeros(channels: usize) -> Self {
        let hidden = EXPANSION * channels;
        MlpParams {
            w1: Matrix::zeros(channels, hidden),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::zeros(hidden, channels),
            b2: Matrix::zeros(1, channels),
        }
    }

    pub fn init(channels: usize, rng: &mut impl Rng) -> Self {
        let hidden = EXPANSION * channels;
        let (b_in, b_out) = (1.0 / (channels as f64).sqrt(), 1.0 / (hidden as f64).sqrt());
        MlpParams {
            w1: Matrix::uniform(channels, hidden, b_in, rng),
            b1: Matrix::uniform(1, hidden, b_in, rng),
            w2: Matrix::uniform(hidden, channels, b_out, rng),
            b2: Matrix::uniform(1, channels, b_out, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.w1.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.w1.rows();
        let h = EXPANSION * c;
        let expect = [
            ("w1", self.w1.shape(), (c, h)),
            ("b1", self.b1.shape(), (1, h)),
            ("w2", self.w2.shape(), (h, c)),
            ("b2", self.b2.shape(), (1, c)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Shape(format!("mlp {name} is {got:?}, expected {want:?}")));
            }
        }
        if c == 0 {
            return Err(Error::Shape("mlp needs at least one channel".into()));
        }
        if !self.all_finite() {
            return Err(Error::NonFinite("mlp parameter"));
        }
        Ok(())
    }
}

impl Parameters for MlpParams {
    fn visit(&self, f: &mut dyn FnMut(&Matrix)) {
        for m in [&self.w1, &self.b1, &self.w2, &self.b2] {
            f(m);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Matrix)) {
        for m in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            f(m);
        }
    }
}

pub fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + (GELU_K * (z + GELU_C * z * z * z)).tanh())
}

pub fn gelu_grad(z: f64) -> f64 {
    let t = (GELU_K * (z + GELU_C * z * z * z)).tanh();
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * z * z)
}

fn add_row_bias(m: &mut Matrix, bias: &Matrix) {
    for r in 0..m.rows() {
        for (v, b) in m.row_mut(r).iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
}

fn column_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            out.add_at(0, c, *v);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    x: Matrix,
    pre: Matrix,
    act: Matrix,
}

pub fn inverted_mlp(x: &Matrix, p: &MlpParams) -> Result<Matrix> {
    Ok(inverted_mlp_cached(x, p)?.0)
}

pub fn inverted_mlp_cached(x: &Matrix, p: &MlpParams) -> Result<(Matrix, MlpCache)> {
    p.validate()?;
    if x.cols() != p.channels() {
        return Err(Error::DimensionMismatch { expected: p.channels(), found: x.cols() });
    }
    let mut pre = x.matmul(&p.w1)?;
    add_row_bias(&mut pre, &p.b1);
    let act = Matrix::from_fn(pre.rows(), pre.cols(), |r, c| gelu(pre.get(r, c)));
    let mut y = act.matmul(&p.w2)?;
    add_row_bias(&mut y, &p.b2);
    Ok((y, MlpCache { x: x.clone(), pre, act }))
}

pub fn inverted_mlp_backward(cache: &MlpCache, p: &MlpParams, dy: &Matrix) -> Result<(Matrix, MlpParams)> {
    if dy.shape() != (cache.x.rows(), p.channels()) {
        return Err(Error::Shape(format!("mlp upstream gradient {:?}", dy.shape())));
    }
    let d_act = dy.matmul_t(&p.w2)?;
    let d_pre = Matrix::from_fn(d_act.rows(), d_act.cols(), |r, c| d_act.get(r, c) * gelu_grad(cache.pre.get(r, c)));
    let grads = MlpParams {
        w1: cache.x.t_matmul(&d_pre)?,
        b1: column_sums(&d_pre),
        w2: cache.act.t_matmul(dy)?,
        b2: column_sums(dy),
    };
    Ok((d_pre.matmul_t(&p.w1)?, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_191_990_607_477_2).abs() < 1e-12);
        assert!((gelu(-1.0) + 0.158_808_009_392_522_8).abs() < 1e-12);
        assert!((gelu(10.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for z in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let fd = (gelu(z + 1e-6) - gelu(z - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(z)).abs() < 1e-8);
        }
    }

    #[test]
    fn output_shape_and_bias_only() {
        let mut p = MlpParams::zeros(3);
        p.b2.set(0, 1, 2.0);
        let y = inverted_mlp(&Matrix::zeros(5, 3), &p).unwrap();
        assert_eq!(y.shape(), (5, 3));
        assert!((0..5).all(|r| y.row(r) == [0.0, 2.0, 0.0]));
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = MlpParams::init(2, &mut rng);
        assert!(inverted_mlp(&Matrix::zeros(2, 3), &p).is_err());
        let mut bad = p.clone();
        bad.w2 = Matrix::zeros(6, 2);
        assert!(matches!(inverted_mlp(&Matrix::zeros(2, 2), &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn scalar_toy_by_hand() {
        let p = MlpParams {
            w1: Matrix::from_vec(1, 4, vec![1.0, -1.0, 0.5, 2.0]).unwrap(),
            b1: Matrix::from_vec(1, 4, vec![0.0, 0.5, -1.0, 0.0]).unwrap(),
            w2: Matrix::from_vec(4, 1, vec![1.0, 2.0, -1.0, 0.5]).unwrap(),
            b2: Matrix::from_vec(1, 1, vec![0.1]).unwrap(),
        };
        let x = 0.7;
        let g = |z: f64| 0.5 * z * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (z + 0.044715 * z.powi(3))).tanh());
        let expect = g(x) + 2.0 * g(-x + 0.5) - g(0.5 * x - 1.0) + 0.5 * g(2.0 * x) + 0.1;
        let y = inverted_mlp(&Matrix::from_vec(1, 1, vec![x]).unwrap(), &p).unwrap();
        assert!((y.get(0, 0) - expect).abs() < 1e-12);
    }

    #[test]
    fn wide_shape_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = MlpParams::init(8, &mut rng);
        assert_eq!(p.w1.shape(), (8, 32));
        assert_eq!(inverted_mlp(&Matrix::uniform(10, 8, 1.0, &mut rng), &p).unwrap().shape(), (10, 8));
    }
}
