//! Selective state-space scan.
//!
//! Per channel `d` and state `n`, with zero-order-hold discretisation:
//!
//! ```text
//! Δ_t = softplus(x_t · W_Δ + b_Δ)          (per channel)
//! B_t = x_t · W_B + b_B,  C_t = x_t · W_C + b_C   (shared across channels)
//! h_t[d,n] = exp(Δ_t[d] · A[d,n]) · h_{t-1}[d,n] + Δ_t[d] · B_t[n] · x_t[d]
//! y_t[d]   = Σ_n C_t[n] · h_t[d,n]
//! ```
//!
//! with `A = -exp(a_log)` and `h_0 = 0`. Cost is linear in sequence length.

use num_traits::Float;
use rand::Rng;

use super::params::Parameters;
use super::tensor::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScanParams<T = f64> {
    /// `channels × state`; the transition rate is `-exp(a_log)`.
    pub a_log: Matrix<T>,
    pub w_delta: Matrix<T>,
    pub b_delta: Matrix<T>,
    pub w_b: Matrix<T>,
    pub b_b: Matrix<T>,
    pub w_c: Matrix<T>,
    pub b_c: Matrix<T>,
}

impl<T: Float> ScanParams<T> {
    pub fn zeros(channels: usize, state: usize) -> Self {
        ScanParams {
            a_log: Matrix::zeros(channels, state),
            w_delta: Matrix::zeros(channels, channels),
            b_delta: Matrix::zeros(1, channels),
            w_b: Matrix::zeros(channels, state),
            b_b: Matrix::zeros(1, state),
            w_c: Matrix::zeros(channels, state),
            b_c: Matrix::zeros(1, state),
        }
    }

    pub fn channels(&self) -> usize {
        self.a_log.rows()
    }

    pub fn state(&self) -> usize {
        self.a_log.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, n) = self.a_log.shape();
        if d == 0 || n == 0 {
            return Err(Error::Shape("scan needs at least one channel and one state".into()));
        }
        let expect = [
            ("w_delta", self.w_delta.shape(), (d, d)),
            ("b_delta", self.b_delta.shape(), (1, d)),
            ("w_b", self.w_b.shape(), (d, n)),
            ("b_b", self.b_b.shape(), (1, n)),
            ("w_c", self.w_c.shape(), (d, n)),
            ("b_c", self.b_c.shape(), (1, n)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Shape(format!("scan {name} is {got:?}, expected {want:?}")));
            }
        }
        let all = [&self.a_log, &self.w_delta, &self.b_delta, &self.w_b, &self.b_b, &self.w_c, &self.b_c];
        if !all.iter().all(|m| m.is_finite()) {
            return Err(Error::NonFinite("scan parameter"));
        }
        Ok(())
    }

    /// Transition rate `A[d, n]`.
    #[inline]
    pub fn rate(&self, d: usize, n: usize) -> T {
        -self.a_log.get(d, n).exp()
    }

    pub fn cast<U: Float>(&self) -> ScanParams<U> {
        let c = |m: &Matrix<T>| {
            Matrix::from_fn(m.rows(), m.cols(), |r, k| U::from(m.get(r, k)).unwrap_or_else(U::nan))
        };
        ScanParams {
            a_log: c(&self.a_log),
            w_delta: c(&self.w_delta),
            b_delta: c(&self.b_delta),
            w_b: c(&self.w_b),
            b_b: c(&self.b_b),
            w_c: c(&self.w_c),
            b_c: c(&self.b_c),
        }
    }
}

impl ScanParams<f64> {
    /// Seeded initialisation: projections uniform in ±1/√channels, rates
    /// `1..=state` per channel.
    pub fn init(channels: usize, state: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (channels as f64).sqrt();
        ScanParams {
            a_log: Matrix::from_fn(channels, state, |_, n| ((n + 1) as f64).ln()),
            w_delta: Matrix::uniform(channels, channels, bound, rng),
            b_delta: Matrix::uniform(1, channels, bound, rng),
            w_b: Matrix::uniform(channels, state, bound, rng),
            b_b: Matrix::uniform(1, state, bound, rng),
            w_c: Matrix::uniform(channels, state, bound, rng),
            b_c: Matrix::uniform(1, state, bound, rng),
        }
    }
}

impl Parameters for ScanParams<f64> {
    fn visit(&self, f: &mut dyn FnMut(&Matrix)) {
        for m in [&self.a_log, &self.w_delta, &self.b_delta, &self.w_b, &self.b_b, &self.w_c, &self.b_c] {
            f(m);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Matrix)) {
        for m in [
            &mut self.a_log,
            &mut self.w_delta,
            &mut self.b_delta,
            &mut self.w_b,
            &mut self.b_b,
            &mut self.w_c,
            &mut self.b_c,
        ] {
            f(m);
        }
    }
}

#[inline]
pub(crate) fn softplus<T: Float>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

#[inline]
fn logistic<T: Float>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// Input-dependent gates for one token.
#[inline]
fn gates<T: Float>(x: &[T], p: &ScanParams<T>, pre: &mut [T], delta: &mut [T], b: &mut [T], c: &mut [T]) {
    let (dims, state) = p.a_log.shape();
    for d in 0..dims {
        let mut z = p.b_delta.get(0, d);
        for (i, &xi) in x.iter().enumerate() {
            z = z + xi * p.w_delta.get(i, d);
        }
        pre[d] = z;
        delta[d] = softplus(z);
    }
    for n in 0..state {
        let (mut bn, mut cn) = (p.b_b.get(0, n), p.b_c.get(0, n));
        for (i, &xi) in x.iter().enumerate() {
            bn = bn + xi * p.w_b.get(i, n);
            cn = cn + xi * p.w_c.get(i, n);
        }
        b[n] = bn;
        c[n] = cn;
    }
}

fn check_input<T: Float>(x: &Matrix<T>, p: &ScanParams<T>) -> Result<()> {
    p.validate()?;
    if x.rows() == 0 {
        return Err(Error::Shape("scan needs a non-empty sequence".into()));
    }
    if x.cols() != p.channels() {
        return Err(Error::DimensionMismatch { expected: p.channels(), found: x.cols() });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("scan input"));
    }
    Ok(())
}

/// Streaming scan holding only the current `channels × state` hidden state.
pub fn selective_scan<T: Float>(x: &Matrix<T>, p: &ScanParams<T>) -> Result<Matrix<T>> {
    check_input(x, p)?;
    let (dims, state) = p.a_log.shape();
    let rates: Vec<T> = (0..dims * state).map(|i| p.rate(i / state, i % state)).collect();
    let mut h = vec![T::zero(); dims * state];
    let (mut pre, mut delta) = (vec![T::zero(); dims], vec![T::zero(); dims]);
    let (mut b, mut c) = (vec![T::zero(); state], vec![T::zero(); state]);
    let mut y = Matrix::zeros(x.rows(), dims);
    for t in 0..x.rows() {
        let xt = x.row(t);
        gates(xt, p, &mut pre, &mut delta, &mut b, &mut c);
        let yt = y.row_mut(t);
        for d in 0..dims {
            let mut acc = T::zero();
            let drive = delta[d] * xt[d];
            for n in 0..state {
                let k = d * state + n;
                h[k] = (delta[d] * rates[k]).exp() * h[k] + drive * b[n];
                acc = acc + c[n] * h[k];
            }
            yt[d] = acc;
        }
    }
    Ok(y)
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ScanCache {
    x: Matrix,
    pre: Matrix,
    delta: Matrix,
    b: Matrix,
    c: Matrix,
    /// `L × (channels·state)` hidden states after each step.
    h: Matrix,
}

pub fn selective_scan_cached(x: &Matrix, p: &ScanParams) -> Result<(Matrix, ScanCache)> {
    check_input(x, p)?;
    let (dims, state) = p.a_log.shape();
    let len = x.rows();
    let mut cache = ScanCache {
        x: x.clone(),
        pre: Matrix::zeros(len, dims),
        delta: Matrix::zeros(len, dims),
        b: Matrix::zeros(len, state),
        c: Matrix::zeros(len, state),
        h: Matrix::zeros(len, dims * state),
    };
    let mut y = Matrix::zeros(len, dims);
    let mut h = vec![0.0; dims * state];
    let (mut pre, mut delta) = (vec![0.0; dims], vec![0.0; dims]);
    let (mut b, mut c) = (vec![0.0; state], vec![0.0; state]);
    for t in 0..len {
        let xt = x.row(t);
        gates(xt, p, &mut pre, &mut delta, &mut b, &mut c);
        for d in 0..dims {
            let mut acc = 0.0;
            for n in 0..state {
                let k = d * state + n;
                h[k] = (delta[d] * p.rate(d, n)).exp() * h[k] + delta[d] * xt[d] * b[n];
                acc += c[n] * h[k];
            }
            y.set(t, d, acc);
        }
        cache.pre.row_mut(t).copy_from_slice(&pre);
        cache.delta.row_mut(t).copy_from_slice(&delta);
        cache.b.row_mut(t).copy_from_slice(&b);
        cache.c.row_mut(t).copy_from_slice(&c);
        cache.h.row_mut(t).copy_from_slice(&h);
    }
    Ok((y, cache))
}

/// Gradients of `Σ dy ⊙ y` with respect to the input and every parameter.
pub fn selective_scan_backward(cache: &ScanCache, p: &ScanParams, dy: &Matrix) -> Result<(Matrix, ScanParams)> {
    let (dims, state) = p.a_log.shape();
    let len = cache.x.rows();
    if dy.shape() != (len, dims) {
        return Err(Error::Shape(format!("scan upstream gradient {:?}, expected {:?}", dy.shape(), (len, dims))));
    }
    let mut g = ScanParams::zeros(dims, state);
    let mut dx = Matrix::zeros(len, dims);
    let mut d_rate = Matrix::zeros(dims, state);
    let mut carry = vec![0.0; dims * state];
    let zero_state = vec![0.0; dims * state];

    for t in (0..len).rev() {
        let xt = cache.x.row(t);
        let h_t = cache.h.row(t);
        let h_prev = if t > 0 { cache.h.row(t - 1) } else { &zero_state[..] };
        let (delta, b, c) = (cache.delta.row(t), cache.b.row(t), cache.c.row(t));
        let mut d_delta = vec![0.0; dims];
        let mut d_b = vec![0.0; state];
        let mut d_c = vec![0.0; state];

        for d in 0..dims {
            let gy = dy.get(t, d);
            for n in 0..state {
                let k = d * state + n;
                d_c[n] += gy * h_t[k];
                let dh = gy * c[n] + carry[k];
                let rate = p.rate(d, n);
                let decay = (delta[d] * rate).exp();
                // h_t = decay · h_{t-1} + Δ·B·x
                let d_decay = dh * h_prev[k];
                d_delta[d] += d_decay * decay * rate + dh * b[n] * xt[d];
                d_rate.add_at(d, n, d_decay * decay * delta[d]);
                d_b[n] += dh * delta[d] * xt[d];
                dx.add_at(t, d, dh * delta[d] * b[n]);
                carry[k] = dh * decay;
            }
        }

        // Δ = softplus(pre), pre = x·W_Δ + b_Δ
        let d_pre: Vec<f64> = (0..dims).map(|d| d_delta[d] * logistic(cache.pre.get(t, d))).collect();
        for d in 0..dims {
            g.b_delta.add_at(0, d, d_pre[d]);
        }
        for n in 0..state {
            g.b_b.add_at(0, n, d_b[n]);
            g.b_c.add_at(0, n, d_c[n]);
        }
        for (i, &xi) in xt.iter().enumerate() {
            let mut back = 0.0;
            for d in 0..dims {
                g.w_delta.add_at(i, d, xi * d_pre[d]);
                back += p.w_delta.get(i, d) * d_pre[d];
            }
            for n in 0..state {
                g.w_b.add_at(i, n, xi * d_b[n]);
                g.w_c.add_at(i, n, xi * d_c[n]);
                back += p.w_b.get(i, n) * d_b[n] + p.w_c.get(i, n) * d_c[n];
            }
            dx.add_at(t, i, back);
        }
    }
    // A = -exp(a_log) ⇒ dA/da_log = A
    for d in 0..dims {
        for n in 0..state {
            g.a_log.set(d, n, d_rate.get(d, n) * p.rate(d, n));
        }
    }
    Ok((dx, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_params(a_log: f64, delta_bias: f64, b: f64, c: f64) -> ScanParams {
        let mut p = ScanParams::zeros(1, 1);
        p.a_log.set(0, 0, a_log);
        p.b_delta.set(0, 0, delta_bias);
        p.b_b.set(0, 0, b);
        p.b_c.set(0, 0, c);
        p
    }

    #[test]
    fn scalar_three_step_unrolling() {
        // Δ = softplus(0.3), A = -exp(-0.5), constant B and C
        let p = scalar_params(-0.5, 0.3, 0.7, -1.3);
        let x = Matrix::from_vec(3, 1, vec![1.0, -2.0, 0.5]).unwrap();
        let y = selective_scan(&x, &p).unwrap();

        let delta = (1.0 + 0.3f64.exp()).ln();
        let a = (-(-0.5f64).exp() * delta).exp();
        let (b, c) = (0.7, -1.3);
        let h1 = delta * b * 1.0;
        let h2 = a * h1 + delta * b * -2.0;
        let h3 = a * h2 + delta * b * 0.5;
        for (t, h) in [h1, h2, h3].into_iter().enumerate() {
            assert!((y.get(t, 0) - c * h).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn strong_decay_is_memoryless() {
        let p = scalar_params(60.0, 0.0, 1.0, 1.0);
        let x = Matrix::from_vec(4, 1, vec![3.0, -1.0, 2.0, 5.0]).unwrap();
        let y = selective_scan(&x, &p).unwrap();
        let delta = 2f64.ln();
        for t in 0..4 {
            assert!((y.get(t, 0) - delta * x.get(t, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ScanParams::init(3, 4, &mut rng);
        let y = selective_scan(&Matrix::zeros(6, 3), &p).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cached_and_streaming_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ScanParams::init(3, 2, &mut rng);
        let x = Matrix::uniform(7, 3, 1.0, &mut rng);
        let a = selective_scan(&x, &p).unwrap();
        let (b, _) = selective_scan_cached(&x, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn f32_mode_tracks_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ScanParams::init(4, 4, &mut rng);
        let x = Matrix::uniform(32, 4, 1.0, &mut rng);
        let y64 = selective_scan(&x, &p).unwrap();
        let x32 = Matrix::from_fn(32, 4, |r, c| x.get(r, c) as f32);
        let y32 = selective_scan(&x32, &p.cast::<f32>()).unwrap();
        for (a, b) in y64.data().iter().zip(y32.data()) {
            assert!((a - f64::from(*b)).abs() < 1e-4);
        }
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let p = ScanParams::<f64>::zeros(2, 2);
        assert!(selective_scan(&Matrix::zeros(3, 3), &p).is_err());
        assert!(selective_scan(&Matrix::zeros(0, 2), &p).is_err());
        let mut bad = p.clone();
        bad.a_log.set(0, 0, f64::NAN);
        assert!(matches!(selective_scan(&Matrix::zeros(3, 2), &bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = ScanParams::init(2, 3, &mut rng);
        let x = Matrix::uniform(8, 2, 1.0, &mut rng);
        let base = selective_scan(&x, &p).unwrap();
        for t in 0..8 {
            let mut xp = x.clone();
            xp.add_at(t, 1, 0.5);
            let y = selective_scan(&xp, &p).unwrap();
            for s in 0..t {
                assert_eq!(y.row(s), base.row(s));
            }
        }
    }
}
