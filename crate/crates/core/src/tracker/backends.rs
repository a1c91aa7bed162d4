use super::{BackendDescriptor, PredictRequest, Prediction, SegmentationBackend};
use crate::error::{Error, Result};
use crate::types::{Embedding, MaskGrid, ScoreReport};

/// Replays recorded reports: the frame payload *is* the prediction.
#[derive(Debug, Clone)]
pub struct PassthroughBackend {
    descriptor: BackendDescriptor,
}

impl PassthroughBackend {
    pub fn new(embedding_dim: usize, mask_height: usize, mask_width: usize) -> Self {
        PassthroughBackend { descriptor: BackendDescriptor { embedding_dim, mask_height, mask_width } }
    }
}

impl SegmentationBackend for PassthroughBackend {
    type Frame = ScoreReport;

    fn descriptor(&self) -> BackendDescriptor {
        self.descriptor
    }

    fn predict(&self, request: PredictRequest<'_, ScoreReport>) -> Result<Prediction> {
        let report = request.payload;
        if report.mask.dims() != (self.descriptor.mask_height, self.descriptor.mask_width) {
            return Err(Error::Backend(format!("recorded mask for frame {} has wrong dims", report.frame)));
        }
        Ok(report.clone().into())
    }
}

/// Confident, slowly rotating predictions with no real payload. Used to
/// exercise the bookkeeping paths without paying for a real backend.
#[derive(Debug, Clone)]
pub struct SteadyBackend {
    pub iou_score: f64,
    pub occlusion_logit: f64,
    /// Viewpoint rotation per frame, radians.
    pub angle_step: f64,
}

impl Default for SteadyBackend {
    fn default() -> Self {
        SteadyBackend { iou_score: 0.99, occlusion_logit: 6.0, angle_step: 0.01 }
    }
}

impl SegmentationBackend for SteadyBackend {
    type Frame = ();

    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor { embedding_dim: 2, mask_height: 1, mask_width: 1 }
    }

    fn predict(&self, request: PredictRequest<'_, ()>) -> Result<Prediction> {
        let angle = request.frame.value() as f64 * self.angle_step;
        let embedding = Embedding::new(vec![angle.cos(), angle.sin()])?;
        let mask = MaskGrid::from_cells(1, 1, vec![true])?;
        Ok(ScoreReport::new(request.frame, self.iou_score, self.occlusion_logit, Some(embedding), mask)?.into())
    }
}
