//! Value types shared by every stage of the engine, plus the two scalar
//! primitives the gating and memory rules are written in terms of.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rle;

/// Frames since stream start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameIndex(pub u64);

impl FrameIndex {
    pub const fn new(value: u64) -> Self {
        FrameIndex(value)
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    pub const fn next(self) -> Self {
        FrameIndex(self.0 + 1)
    }

    /// Frames elapsed from `earlier` to `self`, saturating at zero.
    pub const fn since(self, earlier: FrameIndex) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl fmt::Display for FrameIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u64> for FrameIndex {
    fn from(value: u64) -> Self {
        FrameIndex(value)
    }
}

/// Memory-encoder output for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding component"));
        }
        Ok(Embedding { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn scaled(&self, factor: f64) -> Embedding {
        Embedding { values: self.values.iter().map(|v| v * factor).collect() }
    }

    /// Unit-norm copy. Fails on a zero vector.
    pub fn normalized(&self) -> Result<Embedding> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(self.scaled(1.0 / n))
    }

    /// Little-endian byte image of the components, used for content hashes.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Binary segmentation mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskGrid {
    height: usize,
    width: usize,
    cells: Vec<bool>,
}

impl MaskGrid {
    pub fn empty(height: usize, width: usize) -> Self {
        MaskGrid { height, width, cells: vec![false; height * width] }
    }

    pub fn from_cells(height: usize, width: usize, cells: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("mask dims must be positive, got {height}x{width}")));
        }
        if cells.len() != height * width {
            return Err(Error::DimensionMismatch { expected: height * width, found: cells.len() });
        }
        Ok(MaskGrid { height, width, cells })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                cells.push(f(y, x));
            }
        }
        MaskGrid { height, width, cells }
    }

    /// Parses rows of `#`/`1` (set) and `.`/`0` (clear). Handy in tests.
    pub fn from_ascii(rows: &[&str]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut cells = Vec::with_capacity(height * width);
        for row in rows {
            if row.len() != width {
                return Err(Error::Shape("ragged ascii mask".into()));
            }
            for ch in row.chars() {
                cells.push(matches!(ch, '#' | '1'));
            }
        }
        MaskGrid::from_cells(height, width, cells)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.cells[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.cells[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    fn check_dims(&self, other: &MaskGrid) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "mask dims {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    /// `(|a ∩ b|, |a ∪ b|)`.
    pub fn overlap(&self, other: &MaskGrid) -> Result<(usize, usize)> {
        self.check_dims(other)?;
        let (mut inter, mut union) = (0, 0);
        for (&a, &b) in self.cells.iter().zip(&other.cells) {
            inter += usize::from(a && b);
            union += usize::from(a || b);
        }
        Ok((inter, union))
    }

    /// Geometric IoU; zero when both masks are empty.
    pub fn iou(&self, other: &MaskGrid) -> Result<f64> {
        let (inter, union) = self.overlap(other)?;
        Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
    }

    pub fn to_rle(&self) -> Vec<u64> {
        rle::encode(&self.cells)
    }

    pub fn from_rle(height: usize, width: usize, runs: &[u64]) -> Result<Self> {
        MaskGrid::from_cells(height, width, rle::decode(runs, height * width)?)
    }
}

impl fmt::Display for MaskGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.cells.chunks(self.width) {
            let line: String = row.iter().map(|&c| if c { '#' } else { '.' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct MaskWire {
    height: usize,
    width: usize,
    rle: Vec<u64>,
}

impl Serialize for MaskGrid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MaskWire { height: self.height, width: self.width, rle: self.to_rle() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MaskGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = MaskWire::deserialize(d)?;
        MaskGrid::from_rle(wire.height, wire.width, &wire.rle).map_err(serde::de::Error::custom)
    }
}

/// Per-frame prediction summary emitted by a segmentation backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub frame: FrameIndex,
    pub iou_score: f64,
    /// Signed presence confidence; positive means present.
    pub occlusion_logit: f64,
    pub embedding: Option<Embedding>,
    pub mask: MaskGrid,
}

impl ScoreReport {
    pub fn new(
        frame: FrameIndex,
        iou_score: f64,
        occlusion_logit: f64,
        embedding: Option<Embedding>,
        mask: MaskGrid,
    ) -> Result<Self> {
        if !iou_score.is_finite() || !(0.0..=1.0).contains(&iou_score) {
            return Err(Error::Malformed(format!("iou score {iou_score} outside [0, 1]")));
        }
        if !occlusion_logit.is_finite() {
            return Err(Error::NonFinite("occlusion logit"));
        }
        Ok(ScoreReport { frame, iou_score, occlusion_logit, embedding, mask })
    }

    pub fn presence_probability(&self) -> f64 {
        logistic(self.occlusion_logit)
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic sigmoid. Rejects non-finite input.
pub fn sigmoid(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("sigmoid input"));
    }
    Ok(logistic(x))
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    let dot = a.dot(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
