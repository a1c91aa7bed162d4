use super::scene::{Fidelity, SimFrame, EMBED_DIM};
use crate::error::{Error, Result};
use crate::memory::MemoryEntry;
use crate::tracker::{BackendDescriptor, PredictMode, PredictRequest, Prediction, SegmentationBackend};
use crate::types::{cosine_similarity, Embedding, MaskGrid, ScoreReport};

/// Synthetic segmenter whose accuracy depends on how well the memory context
/// covers the current viewpoint.
///
/// Tracking quality is `base + gain · max cos(memory, viewpoint)`, clamped
/// to `[0, 1]`; detection quality comes from the scene. The mask is the ground
/// truth shrunk or grown along the shape's level sets until its IoU matches
/// the quality, and the reported score is that IoU plus bounded noise.
/// Embeddings of poor predictions are contaminated, so a bad memory tends to
/// stay bad until a good reference is retrieved.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    fidelity: Fidelity,
    embedding_noise: f64,
    mask_height: usize,
    mask_width: usize,
}

/// What the oracle produced for one frame, before packaging.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    pub quality: f64,
    pub mask: MaskGrid,
    pub true_iou: f64,
    pub iou_score: f64,
    pub occlusion_logit: f64,
    pub embedding: Embedding,
}

impl OracleBackend {
    pub fn new(fidelity: Fidelity, embedding_noise: f64, mask_height: usize, mask_width: usize) -> Self {
        OracleBackend { fidelity, embedding_noise, mask_height, mask_width }
    }

    pub fn for_script(script: &super::SceneScript) -> Self {
        OracleBackend::new(script.fidelity.clone(), script.noise.embedding, script.mask.height, script.mask.width)
    }

    pub fn fidelity(&self) -> &Fidelity {
        &self.fidelity
    }

    /// Tracking-stage quality for a memory context.
    pub fn tracking_quality(&self, frame: &SimFrame, context: &[&MemoryEntry]) -> Result<f64> {
        if context.is_empty() {
            return Err(Error::EmptyContext);
        }
        let mut best = f64::NEG_INFINITY;
        for entry in context {
            best = best.max(cosine_similarity(&entry.embedding, &frame.viewpoint)?);
        }
        Ok((self.fidelity.base + self.fidelity.gain * best).clamp(0.0, 1.0))
    }

    /// Renders the prediction for `frame` at quality `q`.
    pub fn render(&self, frame: &SimFrame, quality: f64) -> Result<OracleOutput> {
        let (h, w) = frame.gt.dims();
        if (h, w) != (self.mask_height, self.mask_width) {
            return Err(Error::Backend(format!("frame {} has {h}x{w} masks, backend expects {}x{}", frame.index, self.mask_height, self.mask_width)));
        }
        let q = quality.clamp(0.0, 1.0);
        let area = frame.gt.count();
        let (mask, true_iou) = if !frame.present || area == 0 {
            (MaskGrid::empty(h, w), 0.0)
        } else {
            let total = h * w;
            let (keep, iou) = if frame.erode {
                let k = ((q * area as f64).round() as usize).min(area);
                (k, k as f64 / area as f64)
            } else {
                let k = if q > 0.0 { ((area as f64 / q).round() as usize).clamp(area, total) } else { total };
                (k, area as f64 / k as f64)
            };
            let mut cells = vec![false; total];
            for &i in &frame.order[..keep] {
                cells[i as usize] = true;
            }
            (MaskGrid::from_cells(h, w, cells)?, iou)
        };
        let iou_score = (true_iou + frame.score_noise).clamp(0.0, 1.0);
        let sign = if frame.present { 1.0 } else { -1.0 };
        let occlusion_logit = sign * self.fidelity.occlusion_scale * q.max(0.25);

        let raw: Vec<f64> = if frame.present {
            let taint = self.fidelity.corruption_gain * (self.fidelity.corruption_floor - true_iou).max(0.0);
            (0..EMBED_DIM)
                .map(|i| frame.viewpoint.values()[i] + self.embedding_noise * frame.appearance_noise[i] + taint * frame.corruption[i])
                .collect()
        } else {
            frame.junk.clone()
        };
        let embedding = Embedding::new(raw)?.normalized()?;
        Ok(OracleOutput { quality: q, mask, true_iou, iou_score, occlusion_logit, embedding })
    }
}

impl SegmentationBackend for OracleBackend {
    type Frame = SimFrame;

    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor { embedding_dim: EMBED_DIM, mask_height: self.mask_height, mask_width: self.mask_width }
    }

    fn predict(&self, request: PredictRequest<'_, SimFrame>) -> Result<Prediction> {
        let frame = request.payload;
        if frame.index != request.frame {
            return Err(Error::Backend(format!("payload is frame {}, request is frame {}", frame.index, request.frame)));
        }
        let q = match request.mode {
            PredictMode::Detection { .. } => frame.detection_quality,
            PredictMode::Tracking { context } => self.tracking_quality(frame, context)?,
        };
        let out = self.render(frame, q)?;
        let report = ScoreReport::new(frame.index, out.iou_score, out.occlusion_logit, Some(out.embedding), out.mask)?;
        Ok(report.into())
    }
}
