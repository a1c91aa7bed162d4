//! The cross-modal spatial-temporal block.
//!
//! Visual tokens of the current frame and its two predecessors are stacked
//! frame-major (oldest first). Every sub-layer is pre-normalised and
//! residual:
//!
//! 1. text-to-visual cross-attention (visual queries, text keys),
//! 2. per-frame depthwise 7×7 convolution followed by a selective scan over
//!    the whole stacked sequence,
//! 3. inverted MLP,
//! 4. visual-to-text cross-attention updating the text CLS token.
//!
//! Output is the current frame's slice of the visual tokens plus the fused
//! CLS vector. With all parameters zero every sub-layer contributes nothing,
//! so the block passes its inputs through unchanged.

use rand::Rng;

use super::attention::{cross_attention_backward, cross_attention_cached, AttentionCache, AttentionParams};
use super::dwconv::{dwconv7x7, dwconv7x7_backward, DwConvParams};
use super::mlp::{inverted_mlp_backward, inverted_mlp_cached, MlpCache, MlpParams};
use super::norm::{layer_norm_backward, layer_norm_cached, LayerNormCache, LayerNormParams};
use super::params::Parameters;
use super::scan::{selective_scan_backward, selective_scan_cached, ScanCache, ScanParams};
use super::sensory::SensoryMemory;
use super::tensor::{FeatureGrid, Matrix};
use crate::error::{Error, Result};

/// Text token matrix with the position of the sentence-level CLS token.
#[derive(Debug, Clone, PartialEq)]
pub struct TextTokens {
    pub tokens: Matrix,
    pub cls: usize,
}

impl TextTokens {
    pub fn new(tokens: Matrix, cls: usize) -> Result<Self> {
        if tokens.rows() == 0 {
            return Err(Error::Shape("text needs at least one token".into()));
        }
        if cls >= tokens.rows() {
            return Err(Error::Shape(format!("cls index {cls} outside {} tokens", tokens.rows())));
        }
        if !tokens.is_finite() {
            return Err(Error::NonFinite("text token"));
        }
        Ok(TextTokens { tokens, cls })
    }

    /// A single-token sentence.
    pub fn single(values: &[f64]) -> Result<Self> {
        TextTokens::new(Matrix::from_vec(1, values.len(), values.to_vec())?, 0)
    }

    pub fn dim(&self) -> usize {
        self.tokens.cols()
    }

    pub fn cls_row(&self) -> Matrix {
        Matrix::from_fn(1, self.tokens.cols(), |_, c| self.tokens.get(self.cls, c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StBlockParams {
    pub ln_visual: LayerNormParams,
    pub ln_text: LayerNormParams,
    pub text_to_visual: AttentionParams,
    pub ln_mix: LayerNormParams,
    pub dwconv: DwConvParams,
    pub scan: ScanParams,
    pub ln_mlp: LayerNormParams,
    pub mlp: MlpParams,
    pub ln_cls: LayerNormParams,
    pub ln_context: LayerNormParams,
    pub visual_to_text: AttentionParams,
}

impl StBlockParams {
    pub fn zeros(channels: usize, state: usize, heads: usize) -> Self {
        let mut p = StBlockParams::identity_norms(channels, state, heads);
        p.fill(0.0);
        p
    }

    fn identity_norms(channels: usize, state: usize, heads: usize) -> Self {
        let ln = || LayerNormParams::identity(channels);
        StBlockParams {
            ln_visual: ln(),
            ln_text: ln(),
            text_to_visual: AttentionParams::zeros(channels, heads),
            ln_mix: ln(),
            dwconv: DwConvParams::zeros(channels),
            scan: ScanParams::zeros(channels, state),
            ln_mlp: ln(),
            mlp: MlpParams::zeros(channels),
            ln_cls: ln(),
            ln_context: ln(),
            visual_to_text: AttentionParams::zeros(channels, heads),
        }
    }

    /// Seeded random initialisation; layer norms start as identity.
    pub fn init(channels: usize, state: usize, heads: usize, rng: &mut impl Rng) -> Self {
        let mut p = StBlockParams::identity_norms(channels, state, heads);
        p.text_to_visual = AttentionParams::init(channels, heads, rng);
        p.dwconv = DwConvParams::init(channels, rng);
        p.scan = ScanParams::init(channels, state, rng);
        p.mlp = MlpParams::init(channels, rng);
        p.visual_to_text = AttentionParams::init(channels, heads, rng);
        p
    }

    pub fn channels(&self) -> usize {
        self.scan.channels()
    }

    pub fn state(&self) -> usize {
        self.scan.state()
    }

    pub fn heads(&self) -> usize {
        self.text_to_visual.heads
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        self.scan.validate()?;
        self.dwconv.validate()?;
        self.mlp.validate()?;
        self.text_to_visual.validate()?;
        self.visual_to_text.validate()?;
        for ln in [&self.ln_visual, &self.ln_text, &self.ln_mix, &self.ln_mlp, &self.ln_cls, &self.ln_context] {
            if ln.channels() != c {
                return Err(Error::DimensionMismatch { expected: c, found: ln.channels() });
            }
        }
        for w in [self.dwconv.channels(), self.mlp.channels(), self.text_to_visual.dim(), self.visual_to_text.dim()] {
            if w != c {
                return Err(Error::DimensionMismatch { expected: c, found: w });
            }
        }
        if !self.all_finite() {
            return Err(Error::NonFinite("block parameter"));
        }
        Ok(())
    }
}

impl Parameters for StBlockParams {
    fn visit(&self, f: &mut dyn FnMut(&Matrix)) {
        self.ln_visual.visit(f);
        self.ln_text.visit(f);
        self.text_to_visual.visit(f);
        self.ln_mix.visit(f);
        self.dwconv.visit(f);
        self.scan.visit(f);
        self.ln_mlp.visit(f);
        self.mlp.visit(f);
        self.ln_cls.visit(f);
        self.ln_context.visit(f);
        self.visual_to_text.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Matrix)) {
        self.ln_visual.visit_mut(f);
        self.ln_text.visit_mut(f);
        self.text_to_visual.visit_mut(f);
        self.ln_mix.visit_mut(f);
        self.dwconv.visit_mut(f);
        self.scan.visit_mut(f);
        self.ln_mlp.visit_mut(f);
        self.mlp.visit_mut(f);
        self.ln_cls.visit_mut(f);
        self.ln_context.visit_mut(f);
        self.visual_to_text.visit_mut(f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutput {
    pub fused_grid: FeatureGrid,
    pub fused_cls: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    frames: usize,
    height: usize,
    width: usize,
    cls: usize,
    text_rows: usize,
    ln_visual: LayerNormCache,
    ln_text: LayerNormCache,
    t2v: AttentionCache,
    ln_mix: LayerNormCache,
    mixed: Vec<FeatureGrid>,
    scan: ScanCache,
    ln_mlp: LayerNormCache,
    mlp: MlpCache,
    ln_cls: LayerNormCache,
    ln_context: LayerNormCache,
    v2t: AttentionCache,
}

fn stack(frames: &[&FeatureGrid]) -> Result<Matrix> {
    let first = frames.first().ok_or_else(|| Error::Shape("block needs at least one frame".into()))?;
    let (h, w, c) = first.dims();
    let mut data = Vec::with_capacity(frames.len() * h * w * c);
    for f in frames {
        if f.dims() != (h, w, c) {
            return Err(Error::Shape(format!("frame dims {:?} differ from {:?}", f.dims(), (h, w, c))));
        }
        if !f.data().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("visual feature"));
        }
        data.extend_from_slice(f.data());
    }
    Matrix::from_vec(frames.len() * h * w, c, data)
}

fn slice_frame(m: &Matrix, index: usize, h: usize, w: usize) -> Result<FeatureGrid> {
    let per = h * w * m.cols();
    FeatureGrid::from_vec(h, w, m.cols(), m.data()[index * per..(index + 1) * per].to_vec())
}

/// Runs the block over `frames` (oldest first; the last is the current frame).
pub fn block_forward(frames: &[&FeatureGrid], text: &TextTokens, p: &StBlockParams) -> Result<(BlockOutput, BlockCache)> {
    p.validate()?;
    let x0 = stack(frames)?;
    let (h, w, c) = frames[0].dims();
    if c != p.channels() {
        return Err(Error::DimensionMismatch { expected: p.channels(), found: c });
    }
    if text.dim() != c {
        return Err(Error::DimensionMismatch { expected: c, found: text.dim() });
    }

    let (vq, ln_visual) = layer_norm_cached(&x0, &p.ln_visual)?;
    let (tk, ln_text) = layer_norm_cached(&text.tokens, &p.ln_text)?;
    let (att, t2v) = cross_attention_cached(&vq, &tk, &p.text_to_visual)?;
    let mut a = x0;
    a.add_assign(&att);

    let (u, ln_mix) = layer_norm_cached(&a, &p.ln_mix)?;
    let mut mixed = Vec::with_capacity(frames.len());
    let mut z = Vec::with_capacity(u.data().len());
    for i in 0..frames.len() {
        let g = slice_frame(&u, i, h, w)?;
        z.extend_from_slice(dwconv7x7(&g, &p.dwconv)?.data());
        mixed.push(g);
    }
    let z = Matrix::from_vec(u.rows(), c, z)?;
    let (s, scan) = selective_scan_cached(&z, &p.scan)?;
    let mut b = a;
    b.add_assign(&s);

    let (bn, ln_mlp) = layer_norm_cached(&b, &p.ln_mlp)?;
    let (m, mlp) = inverted_mlp_cached(&bn, &p.mlp)?;
    let mut out = b;
    out.add_assign(&m);

    let cls = text.cls_row();
    let (cq, ln_cls) = layer_norm_cached(&cls, &p.ln_cls)?;
    let (ctx, ln_context) = layer_norm_cached(&out, &p.ln_context)?;
    let (upd, v2t) = cross_attention_cached(&cq, &ctx, &p.visual_to_text)?;
    let fused_cls: Vec<f64> = cls.data().iter().zip(upd.data()).map(|(a, b)| a + b).collect();

    let fused_grid = slice_frame(&out, frames.len() - 1, h, w)?;
    let cache = BlockCache {
        frames: frames.len(),
        height: h,
        width: w,
        cls: text.cls,
        text_rows: text.tokens.rows(),
        ln_visual,
        ln_text,
        t2v,
        ln_mix,
        mixed,
        scan,
        ln_mlp,
        mlp,
        ln_cls,
        ln_context,
        v2t,
    };
    Ok((BlockOutput { fused_grid, fused_cls }, cache))
}

/// Gradients of `Σ d_grid ⊙ fused_grid + Σ d_cls ⊙ fused_cls`.
#[derive(Debug, Clone)]
pub struct BlockGradients {
    pub frames: Vec<FeatureGrid>,
    pub text: Matrix,
    pub params: StBlockParams,
}

pub fn block_backward(cache: &BlockCache, p: &StBlockParams, d_grid: &FeatureGrid, d_cls: &[f64]) -> Result<BlockGradients> {
    let (h, w, c) = (cache.height, cache.width, p.channels());
    if d_grid.dims() != (h, w, c) || d_cls.len() != c {
        return Err(Error::Shape("block upstream gradient has the wrong shape".into()));
    }
    let per = h * w * c;
    let rows = cache.frames * h * w;
    let mut g = StBlockParams::zeros(c, p.state(), p.heads());
    let mut d_text = Matrix::zeros(cache.text_rows, c);

    let mut d_out = Matrix::zeros(rows, c);
    d_out.data_mut()[(cache.frames - 1) * per..].copy_from_slice(d_grid.data());

    // 4. fused_cls = cls + attn(LN(cls), LN(out))
    let d_upd = Matrix::from_vec(1, c, d_cls.to_vec())?;
    let (d_cq, d_ctx, g_v2t) = cross_attention_backward(&cache.v2t, &p.visual_to_text, &d_upd)?;
    g.visual_to_text = g_v2t;
    let (d_cls_ln, g_ln) = layer_norm_backward(&cache.ln_cls, &p.ln_cls, &d_cq)?;
    g.ln_cls = g_ln;
    for k in 0..c {
        d_text.add_at(cache.cls, k, d_cls[k] + d_cls_ln.get(0, k));
    }
    let (d_out_ctx, g_ln) = layer_norm_backward(&cache.ln_context, &p.ln_context, &d_ctx)?;
    g.ln_context = g_ln;
    d_out.add_assign(&d_out_ctx);

    // 3. out = b + mlp(LN(b))
    let (d_bn, g_mlp) = inverted_mlp_backward(&cache.mlp, &p.mlp, &d_out)?;
    g.mlp = g_mlp;
    let (d_b_ln, g_ln) = layer_norm_backward(&cache.ln_mlp, &p.ln_mlp, &d_bn)?;
    g.ln_mlp = g_ln;
    let mut d_b = d_out;
    d_b.add_assign(&d_b_ln);

    // 2. b = a + scan(dwconv(LN(a)))
    let (d_z, g_scan) = selective_scan_backward(&cache.scan, &p.scan, &d_b)?;
    g.scan = g_scan;
    let mut d_u = Vec::with_capacity(rows * c);
    for (i, grid) in cache.mixed.iter().enumerate() {
        let dz = slice_frame(&d_z, i, h, w)?;
        let (du, g_dw) = dwconv7x7_backward(grid, &p.dwconv, &dz)?;
        g.dwconv.weight.add_assign(&g_dw.weight);
        g.dwconv.bias.add_assign(&g_dw.bias);
        d_u.extend_from_slice(du.data());
    }
    let d_u = Matrix::from_vec(rows, c, d_u)?;
    let (d_a_ln, g_ln) = layer_norm_backward(&cache.ln_mix, &p.ln_mix, &d_u)?;
    g.ln_mix = g_ln;
    let mut d_a = d_b;
    d_a.add_assign(&d_a_ln);

    // 1. a = x0 + attn(LN(x0), LN(text))
    let (d_vq, d_tk, g_t2v) = cross_attention_backward(&cache.t2v, &p.text_to_visual, &d_a)?;
    g.text_to_visual = g_t2v;
    let (d_x_ln, g_ln) = layer_norm_backward(&cache.ln_visual, &p.ln_visual, &d_vq)?;
    g.ln_visual = g_ln;
    let (d_t_ln, g_ln) = layer_norm_backward(&cache.ln_text, &p.ln_text, &d_tk)?;
    g.ln_text = g_ln;
    d_text.add_assign(&d_t_ln);
    let mut d_x0 = d_a;
    d_x0.add_assign(&d_x_ln);

    let frames = (0..cache.frames).map(|i| slice_frame(&d_x0, i, h, w)).collect::<Result<_>>()?;
    Ok(BlockGradients { frames, text: d_text, params: g })
}

/// Fuses the current frame with its sensory history and the text.
///
/// Missing history slots (the first two frames of a stream) are filled with
/// the current frame.
pub fn st_block_forward(
    current: &FeatureGrid,
    sensory: &SensoryMemory,
    text: &TextTokens,
    params: &StBlockParams,
) -> Result<BlockOutput> {
    let older = sensory.lagged(2).unwrap_or(current);
    let newer = sensory.lagged(1).unwrap_or(current);
    for f in [older, newer] {
        if f.dims() != current.dims() {
            return Err(Error::Shape(format!("sensory frame {:?} differs from current {:?}", f.dims(), current.dims())));
        }
    }
    Ok(block_forward(&[older, newer, current], text, params)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::FrameIndex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn text(c: usize, rng: &mut ChaCha8Rng) -> TextTokens {
        TextTokens::new(Matrix::uniform(3, c, 1.0, rng), 0).unwrap()
    }

    #[test]
    fn zero_params_pass_inputs_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = StBlockParams::zeros(4, 2, 2);
        let cur = FeatureGrid::uniform(3, 3, 4, 1.0, &mut rng);
        let t = text(4, &mut rng);
        let out = st_block_forward(&cur, &SensoryMemory::new(), &t, &p).unwrap();
        assert_eq!(out.fused_grid, cur);
        assert_eq!(out.fused_cls, t.tokens.row(0));
    }

    #[test]
    fn zero_params_zero_inputs_give_zero() {
        let p = StBlockParams::zeros(2, 2, 1);
        let cur = FeatureGrid::zeros(2, 2, 2);
        let t = TextTokens::single(&[0.0, 0.0]).unwrap();
        let out = st_block_forward(&cur, &SensoryMemory::new(), &t, &p).unwrap();
        assert!(out.fused_grid.data().iter().all(|&v| v == 0.0));
        assert!(out.fused_cls.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = StBlockParams::init(4, 3, 2, &mut rng);
        let mut sensory = SensoryMemory::new();
        for f in 0..2 {
            sensory.update(FrameIndex(f), FeatureGrid::uniform(4, 5, 4, 1.0, &mut rng)).unwrap();
        }
        let cur = FeatureGrid::uniform(4, 5, 4, 1.0, &mut rng);
        let out = st_block_forward(&cur, &sensory, &text(4, &mut rng), &p).unwrap();
        assert_eq!(out.fused_grid.dims(), (4, 5, 4));
        assert_eq!(out.fused_cls.len(), 4);
        assert!(out.fused_grid.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn history_changes_the_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = StBlockParams::init(2, 2, 1, &mut rng);
        let cur = FeatureGrid::uniform(3, 3, 2, 1.0, &mut rng);
        let t = text(2, &mut rng);
        let alone = st_block_forward(&cur, &SensoryMemory::new(), &t, &p).unwrap();
        let mut sensory = SensoryMemory::new();
        sensory.update(FrameIndex(0), FeatureGrid::uniform(3, 3, 2, 1.0, &mut rng)).unwrap();
        let with = st_block_forward(&cur, &sensory, &t, &p).unwrap();
        assert_ne!(alone.fused_grid, with.fused_grid);
    }

    #[test]
    fn mismatched_text_width_is_rejected() {
        let p = StBlockParams::zeros(2, 1, 1);
        let t = TextTokens::single(&[1.0, 2.0, 3.0]).unwrap();
        let err = st_block_forward(&FeatureGrid::zeros(2, 2, 2), &SensoryMemory::new(), &t, &p);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }
}
