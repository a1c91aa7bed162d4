use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::block::{block_forward, st_block_forward, BlockOutput, StBlockParams, TextTokens};
use super::tensor::FeatureGrid;
use crate::error::{Error, Result};
use crate::tracker::{BackendDescriptor, PredictMode, PredictRequest, Prediction, SegmentationBackend};
use crate::types::{sigmoid, Embedding, MaskGrid, ScoreReport};

/// Untrained segmentation head over the block.
///
/// Detection fuses the frame with its sensory history and the text; tracking
/// first reads the memory context by attention and then runs the block on the
/// current frame alone. Per-pixel logits are the dot product of the fused
/// grid with the fused CLS vector, and the mask is their sign pattern upsampled
/// by nearest neighbour. Scores are confidence proxies, not calibrated IoU.
#[derive(Debug, Clone)]
pub struct NeuralBackend {
    params: StBlockParams,
    descriptor: BackendDescriptor,
}

impl NeuralBackend {
    pub fn new(params: StBlockParams, mask_height: usize, mask_width: usize) -> Result<Self> {
        params.validate()?;
        if mask_height == 0 || mask_width == 0 {
            return Err(Error::Shape("mask dims must be positive".into()));
        }
        let descriptor = BackendDescriptor { embedding_dim: params.channels(), mask_height, mask_width };
        Ok(NeuralBackend { params, descriptor })
    }

    pub fn seeded(channels: usize, state: usize, heads: usize, seed: u64, mask_height: usize, mask_width: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NeuralBackend::new(StBlockParams::init(channels, state, heads, &mut rng), mask_height, mask_width)
    }

    pub fn params(&self) -> &StBlockParams {
        &self.params
    }

    fn read_memory(&self, current: &FeatureGrid, context: &[&crate::memory::MemoryEntry]) -> Result<FeatureGrid> {
        let c = current.channels();
        let keys: Vec<&[f64]> = context.iter().map(|e| e.embedding.values()).collect();
        if let Some(k) = keys.iter().find(|k| k.len() != c) {
            return Err(Error::DimensionMismatch { expected: c, found: k.len() });
        }
        let scale = 1.0 / (c as f64).sqrt();
        let mut out = current.clone();
        let mut weights = vec![0.0; keys.len()];
        for px in out.data_mut().chunks_mut(c) {
            let logits: Vec<f64> = keys.iter().map(|k| k.iter().zip(px.iter()).map(|(a, b)| a * b).sum::<f64>() * scale).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (w, l) in weights.iter_mut().zip(&logits) {
                *w = (l - max).exp();
                total += *w;
            }
            for ch in 0..c {
                px[ch] += keys.iter().zip(&weights).map(|(k, w)| k[ch] * w / total).sum::<f64>();
            }
        }
        Ok(out)
    }

    fn head(&self, frame: crate::types::FrameIndex, out: &BlockOutput) -> Result<ScoreReport> {
        let (h, w, c) = out.fused_grid.dims();
        let scale = 1.0 / (c as f64).sqrt();
        let logits: Vec<f64> = out
            .fused_grid
            .data()
            .chunks(c)
            .map(|px| px.iter().zip(&out.fused_cls).map(|(a, b)| a * b).sum::<f64>() * scale)
            .collect();
        let (mh, mw) = (self.descriptor.mask_height, self.descriptor.mask_width);
        let mask = MaskGrid::from_fn(mh, mw, |y, x| logits[(y * h / mh) * w + x * w / mw] > 0.0);
        let mut confidence = 0.0;
        for &l in &logits {
            confidence += sigmoid(l.abs())?;
        }
        let iou_score = (confidence / logits.len() as f64).clamp(0.0, 1.0);
        let occlusion_logit = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut pooled = vec![0.0; c];
        for px in out.fused_grid.data().chunks(c) {
            for (p, v) in pooled.iter_mut().zip(px) {
                *p += v / (h * w) as f64;
            }
        }
        ScoreReport::new(frame, iou_score, occlusion_logit, Some(Embedding::new(pooled)?), mask)
    }
}

impl SegmentationBackend for NeuralBackend {
    type Frame = FeatureGrid;

    fn descriptor(&self) -> BackendDescriptor {
        self.descriptor
    }

    fn predict(&self, request: PredictRequest<'_, FeatureGrid>) -> Result<Prediction> {
        let current = request.payload;
        let text = TextTokens::single(request.text.values())?;
        let out = match request.mode {
            PredictMode::Detection { sensory } => st_block_forward(current, sensory, &text, &self.params)?,
            PredictMode::Tracking { context } => {
                if context.is_empty() {
                    return Err(Error::EmptyContext);
                }
                let read = self.read_memory(current, context)?;
                block_forward(&[&read], &text, &self.params)?.0
            }
        };
        Ok(Prediction { report: self.head(request.frame, &out)?, features: Some(current.clone()) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrackerConfig;
    use crate::tracker::Tracker;
    use crate::types::FrameIndex;
    use std::sync::Arc;

    #[test]
    fn runs_a_short_stream_deterministically() {
        let backend = Arc::new(NeuralBackend::seeded(4, 2, 1, 7, 8, 8).unwrap());
        let text = Embedding::new(vec![0.5, -0.2, 0.1, 0.9]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<FeatureGrid> = (0..6).map(|_| FeatureGrid::uniform(4, 4, 4, 1.0, &mut rng)).collect();
        let run = || {
            let mut t = Tracker::new(TrackerConfig::default(), backend.clone(), text.clone()).unwrap();
            frames.iter().enumerate().map(|(i, f)| t.step(FrameIndex(i as u64), f).unwrap().report).collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        for r in &a {
            assert_eq!(r.mask.dims(), (8, 8));
            assert!((0.0..=1.0).contains(&r.iou_score));
        }
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let backend = NeuralBackend::seeded(4, 2, 1, 7, 4, 4).unwrap();
        let text = Embedding::new(vec![1.0; 3]).unwrap();
        let sensory = crate::kernels::SensoryMemory::new();
        let req = PredictRequest {
            frame: FrameIndex(0),
            payload: &FeatureGrid::zeros(2, 2, 4),
            text: &text,
            mode: PredictMode::Detection { sensory: &sensory },
        };
        assert!(backend.predict(req).is_err());
    }
}
