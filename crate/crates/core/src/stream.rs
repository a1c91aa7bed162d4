//! JSON-lines interchange for per-frame score streams.
//!
//! One object per line with keys `frame`, `iou`, `occ_logit`, `embedding`,
//! `mask_rle` and optionally `gt_mask_rle`. Mask dimensions are not part of
//! a record; readers are told them up front.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Embedding, FrameIndex, MaskGrid, ScoreReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamRecord {
    pub frame: u64,
    pub iou: f64,
    pub occ_logit: f64,
    /// Empty when the frame carries no embedding.
    pub embedding: Vec<f64>,
    pub mask_rle: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_mask_rle: Option<Vec<u64>>,
}

/// A decoded stream frame: the prediction and, when present, its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamFrame {
    pub report: ScoreReport,
    pub ground_truth: Option<MaskGrid>,
}

impl StreamRecord {
    pub fn from_report(report: &ScoreReport, ground_truth: Option<&MaskGrid>) -> Self {
        StreamRecord {
            frame: report.frame.value(),
            iou: report.iou_score,
            occ_logit: report.occlusion_logit,
            embedding: report.embedding.as_ref().map(|e| e.values().to_vec()).unwrap_or_default(),
            mask_rle: report.mask.to_rle(),
            gt_mask_rle: ground_truth.map(MaskGrid::to_rle),
        }
    }

    pub fn decode(&self, height: usize, width: usize) -> Result<StreamFrame> {
        let embedding = if self.embedding.is_empty() {
            None
        } else {
            Some(Embedding::new(self.embedding.clone())?)
        };
        let mask = MaskGrid::from_rle(height, width, &self.mask_rle)?;
        let report = ScoreReport::new(FrameIndex(self.frame), self.iou, self.occ_logit, embedding, mask)?;
        let ground_truth = self
            .gt_mask_rle
            .as_ref()
            .map(|runs| MaskGrid::from_rle(height, width, runs))
            .transpose()?;
        Ok(StreamFrame { report, ground_truth })
    }
}

/// Reads a whole stream, enforcing strictly increasing frame indices.
pub fn read_stream<R: BufRead>(reader: R, height: usize, width: usize) -> Result<Vec<StreamFrame>> {
    let mut frames: Vec<StreamFrame> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: StreamRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Malformed(format!("line {}: {e}", lineno + 1)))?;
        let frame = record.decode(height, width)?;
        if let Some(prev) = frames.last() {
            if frame.report.frame <= prev.report.frame {
                return Err(Error::OutOfOrder { previous: prev.report.frame, got: frame.report.frame });
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn write_stream<W: Write>(mut writer: W, frames: &[StreamFrame]) -> Result<()> {
    for f in frames {
        let record = StreamRecord::from_report(&f.report, f.ground_truth.as_ref());
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(i: u64) -> StreamFrame {
        let mask = MaskGrid::from_ascii(&[".#.", "##."]).unwrap();
        StreamFrame {
            report: ScoreReport::new(
                FrameIndex(i),
                0.8,
                2.5,
                Some(Embedding::new(vec![1.0, -0.5]).unwrap()),
                mask.clone(),
            )
            .unwrap(),
            ground_truth: Some(mask),
        }
    }

    #[test]
    fn record_keys_match_interchange_format() {
        let rec = StreamRecord::from_report(&frame(3).report, None);
        let json = serde_json::to_string(&rec).unwrap();
        assert_eq!(json, r#"{"frame":3,"iou":0.8,"occ_logit":2.5,"embedding":[1.0,-0.5],"mask_rle":[1,1,1,2,1]}"#);
    }

    #[test]
    fn write_then_read() {
        let frames = vec![frame(0), frame(1), frame(5)];
        let mut buf = Vec::new();
        write_stream(&mut buf, &frames).unwrap();
        let back = read_stream(buf.as_slice(), 2, 3).unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn rejects_out_of_order_and_bad_rle() {
        let mut buf = Vec::new();
        write_stream(&mut buf, &[frame(2), frame(1)]).unwrap();
        assert!(matches!(read_stream(buf.as_slice(), 2, 3), Err(Error::OutOfOrder { .. })));

        let line = r#"{"frame":0,"iou":0.5,"occ_logit":0,"embedding":[],"mask_rle":[2,2]}"#;
        assert!(read_stream(line.as_bytes(), 2, 3).is_err());
    }

    #[test]
    fn empty_embedding_means_none() {
        let line = r#"{"frame":0,"iou":0.5,"occ_logit":0,"embedding":[],"mask_rle":[6]}"#;
        let frames = read_stream(line.as_bytes(), 2, 3).unwrap();
        assert!(frames[0].report.embedding.is_none());
        assert!(frames[0].ground_truth.is_none());
    }
}
