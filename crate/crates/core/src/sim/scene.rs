use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Embedding, FrameIndex, MaskGrid};

/// Width of simulated appearance embeddings. The viewpoint lives on the unit
/// circle spanned by the first two axes.
pub const EMBED_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    #[default]
    Ellipse,
    Rectangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskDims {
    pub height: usize,
    pub width: usize,
}

impl Default for MaskDims {
    fn default() -> Self {
        MaskDims { height: 32, width: 32 }
    }
}

/// Object centre moves on an ellipse of radii `orbit` around `center`,
/// completing one lap every `period` frames (0 keeps it still).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Trajectory {
    pub shape: Shape,
    pub center: [f64; 2],
    pub axes: [f64; 2],
    pub orbit: [f64; 2],
    pub period: u64,
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory { shape: Shape::Ellipse, center: [16.0, 16.0], axes: [7.0, 5.0], orbit: [0.0, 0.0], period: 0 }
    }
}

/// Viewpoint angle over time: piecewise-linear through `knots` when given,
/// otherwise `rate` radians per frame from zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Drift {
    pub rate: f64,
    pub knots: Vec<(u64, f64)>,
}

impl Drift {
    pub fn angle(&self, frame: u64) -> f64 {
        if self.knots.is_empty() {
            return self.rate * frame as f64;
        }
        let first = self.knots[0];
        if frame <= first.0 {
            return first.1;
        }
        for w in self.knots.windows(2) {
            let ((f0, a0), (f1, a1)) = (w[0], w[1]);
            if frame <= f1 {
                let t = (frame - f0) as f64 / (f1 - f0) as f64;
                return a0 + t * (a1 - a0);
            }
        }
        self.knots[self.knots.len() - 1].1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Noise {
    /// Std-dev of the additive noise on the emitted IoU score.
    pub score: f64,
    /// Std-dev of the per-axis appearance noise on embeddings.
    pub embedding: f64,
}

impl Default for Noise {
    fn default() -> Self {
        Noise { score: 0.02, embedding: 0.05 }
    }
}

/// Parameters of the oracle's accuracy model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fidelity {
    pub base: f64,
    pub gain: f64,
    /// Magnitude of the occlusion logit per unit of quality.
    pub occlusion_scale: f64,
    /// Predictions below this IoU yield embeddings contaminated in
    /// proportion to the shortfall.
    pub corruption_floor: f64,
    pub corruption_gain: f64,
}

impl Default for Fidelity {
    fn default() -> Self {
        Fidelity { base: 0.55, gain: 0.4, occlusion_scale: 4.0, corruption_floor: 0.85, corruption_gain: 20.0 }
    }
}

/// Quality of detection-stage (memoryless) predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Detection {
    pub quality: f64,
    pub jitter: f64,
    pub low_quality: f64,
    /// Inclusive frame ranges where detection quality drops to `low_quality`.
    pub low_windows: Vec<(u64, u64)>,
}

impl Default for Detection {
    fn default() -> Self {
        Detection { quality: 0.92, jitter: 0.02, low_quality: 0.68, low_windows: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneScript {
    pub length: u64,
    pub seed: u64,
    /// Inclusive frame ranges where the object is visible; `None` means
    /// visible throughout.
    pub presence: Option<Vec<(u64, u64)>>,
    pub mask: MaskDims,
    pub trajectory: Trajectory,
    pub drift: Drift,
    pub noise: Noise,
    pub fidelity: Fidelity,
    pub detection: Detection,
}

impl Default for SceneScript {
    fn default() -> Self {
        SceneScript {
            length: 100,
            seed: 0,
            presence: None,
            mask: MaskDims::default(),
            trajectory: Trajectory::default(),
            drift: Drift::default(),
            noise: Noise::default(),
            fidelity: Fidelity::default(),
            detection: Detection::default(),
        }
    }
}

fn check_ranges(name: &str, ranges: &[(u64, u64)], length: u64) -> Result<()> {
    for &(s, e) in ranges {
        if s > e || e >= length {
            return Err(Error::InvalidScript(format!("{name} interval [{s}, {e}] outside [0, {length})")));
        }
    }
    Ok(())
}

impl SceneScript {
    pub fn from_toml(text: &str) -> Result<Self> {
        let script: SceneScript = toml::from_str(text)?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self> {
        SceneScript::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.presence {
            check_ranges("presence", p, self.length)?;
        }
        if self.length > 0 {
            check_ranges("low-quality", &self.detection.low_windows, self.length)?;
        }
        if self.mask.height == 0 || self.mask.width == 0 {
            return Err(Error::InvalidScript("mask dims must be positive".into()));
        }
        let t = &self.trajectory;
        if !(t.axes[0] > 0.0 && t.axes[1] > 0.0) {
            return Err(Error::InvalidScript(format!("axes must be positive, got {:?}", t.axes)));
        }
        if self.drift.knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidScript("drift knots must have increasing frames".into()));
        }
        let reals = [
            t.center[0], t.center[1], t.orbit[0], t.orbit[1], self.drift.rate, self.noise.score, self.noise.embedding,
            self.fidelity.base, self.fidelity.gain, self.fidelity.occlusion_scale, self.fidelity.corruption_floor,
            self.fidelity.corruption_gain, self.detection.quality, self.detection.jitter, self.detection.low_quality,
        ];
        if reals.iter().chain(self.drift.knots.iter().map(|k| &k.1)).any(|v| !v.is_finite()) {
            return Err(Error::InvalidScript("non-finite parameter".into()));
        }
        if self.noise.score < 0.0 || self.noise.embedding < 0.0 || self.detection.jitter < 0.0 {
            return Err(Error::InvalidScript("noise levels must be non-negative".into()));
        }
        Ok(())
    }

    pub fn is_present(&self, frame: u64) -> bool {
        match &self.presence {
            None => frame < self.length,
            Some(p) => p.iter().any(|&(s, e)| s <= frame && frame <= e),
        }
    }

    fn is_low_quality(&self, frame: u64) -> bool {
        self.detection.low_windows.iter().any(|&(s, e)| s <= frame && frame <= e)
    }

    /// A still object seen from a fixed viewpoint.
    pub fn static_scene(length: u64) -> Self {
        SceneScript { length, ..SceneScript::default() }
    }

    /// Slowly drifting viewpoint with occlusions of mixed lengths: short ones
    /// early, long ones later. Separates memory designs by how far back they
    /// reach and whether they keep only confident frames.
    pub fn drifting(length: u64) -> Self {
        let gaps = [(90, 99), (170, 180), (250, 275), (340, 370), (430, 465)];
        let mut presence = Vec::new();
        let mut start = 0;
        for (s, e) in gaps {
            if s >= length {
                break;
            }
            presence.push((start, s - 1));
            start = e + 1;
        }
        if start < length {
            presence.push((start, length - 1));
        }
        SceneScript {
            length,
            presence: Some(presence),
            trajectory: Trajectory { orbit: [5.0, 4.0], period: 160, ..Trajectory::default() },
            drift: Drift { rate: 0.006, knots: Vec::new() },
            ..SceneScript::default()
        }
    }

    /// Detection is unreliable for a while right after the object appears,
    /// so single-frame gating latches onto a poor reference.
    pub fn early_low_quality(length: u64) -> Self {
        SceneScript {
            length,
            trajectory: Trajectory { orbit: [3.0, 3.0], period: 200, ..Trajectory::default() },
            drift: Drift { rate: 0.002, knots: Vec::new() },
            detection: Detection { low_windows: vec![(0, 39.min(length.saturating_sub(1)))], ..Detection::default() },
            ..SceneScript::default()
        }
    }

    fn shape_at(&self, frame: u64) -> ([f64; 2], [f64; 2]) {
        let t = &self.trajectory;
        let phase = if t.period == 0 { 0.0 } else { std::f64::consts::TAU * frame as f64 / t.period as f64 };
        ([t.center[0] + t.orbit[0] * phase.cos(), t.center[1] + t.orbit[1] * phase.sin()], t.axes)
    }
}

/// One simulated frame: ground truth plus every random draw the oracle needs,
/// so that predictions depend only on the frame and the memory context.
#[derive(Debug, Clone, PartialEq)]
pub struct SimFrame {
    pub index: FrameIndex,
    pub present: bool,
    pub viewpoint: Embedding,
    pub gt: MaskGrid,
    /// Pixels ordered from deepest inside the shape outward; the first
    /// `gt.count()` of them are exactly the ground-truth mask.
    pub(crate) order: Vec<u32>,
    pub detection_quality: f64,
    pub(crate) score_noise: f64,
    pub(crate) erode: bool,
    pub(crate) appearance_noise: Vec<f64>,
    pub(crate) corruption: Vec<f64>,
    pub(crate) junk: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimStream {
    pub script: SceneScript,
    pub frames: Arc<Vec<SimFrame>>,
}

impl SimStream {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn ground_truth(&self) -> Vec<MaskGrid> {
        self.frames.iter().map(|f| f.gt.clone()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (FrameIndex, &SimFrame)> {
        self.frames.iter().map(|f| (f.index, f))
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Standard normal truncated to `[-4, 4]` by rejection.
fn truncated_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 4.0 {
            return z;
        }
    }
}

/// Deterministic per-frame generator, independent of how many draws other
/// frames consumed.
fn frame_rng(seed: u64, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame);
    rng
}

pub fn generate_stream(script: &SceneScript) -> Result<SimStream> {
    script.validate()?;
    let (h, w) = (script.mask.height, script.mask.width);
    let mut frames = Vec::with_capacity(script.length as usize);
    for f in 0..script.length {
        let mut rng = frame_rng(script.seed, f);
        let present = script.is_present(f);
        let angle = script.drift.angle(f);
        let mut view = vec![0.0; EMBED_DIM];
        view[0] = angle.cos();
        view[1] = angle.sin();

        let (centre, axes) = script.shape_at(f);
        let level = |y: usize, x: usize| {
            let dx = (x as f64 + 0.5 - centre[0]) / axes[0];
            let dy = (y as f64 + 0.5 - centre[1]) / axes[1];
            match script.trajectory.shape {
                Shape::Ellipse => dx * dx + dy * dy,
                Shape::Rectangle => dx.abs().max(dy.abs()),
            }
        };
        let levels: Vec<f64> = (0..h * w).map(|i| level(i / w, i % w)).collect();
        let mut order: Vec<u32> = (0..(h * w) as u32).collect();
        order.sort_by(|&a, &b| levels[a as usize].total_cmp(&levels[b as usize]).then(a.cmp(&b)));
        let gt = if present { MaskGrid::from_fn(h, w, |y, x| levels[y * w + x] <= 1.0) } else { MaskGrid::empty(h, w) };

        let base_q = if script.is_low_quality(f) { script.detection.low_quality } else { script.detection.quality };
        let detection_quality = (base_q + script.detection.jitter * truncated_normal(&mut rng)).clamp(0.0, 1.0);
        let score_noise = script.noise.score * truncated_normal(&mut rng);
        let erode = rng.random_bool(0.5);
        let appearance_noise = normal_vec(&mut rng, EMBED_DIM);
        // contamination and junk live off the viewpoint plane
        let mut corruption = normal_vec(&mut rng, EMBED_DIM);
        corruption[0] = 0.0;
        corruption[1] = 0.0;
        let mut junk = normal_vec(&mut rng, EMBED_DIM);
        junk[0] = 0.0;
        junk[1] = 0.0;

        frames.push(SimFrame {
            index: FrameIndex(f),
            present,
            viewpoint: Embedding::new(view)?,
            gt,
            order,
            detection_quality,
            score_noise,
            erode,
            appearance_noise,
            corruption,
            junk,
        });
    }
    Ok(SimStream { script: script.clone(), frames: Arc::new(frames) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_length_gives_empty_stream() {
        let s = generate_stream(&SceneScript { length: 0, ..SceneScript::default() }).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn static_scene_has_identical_masks() {
        let s = generate_stream(&SceneScript::static_scene(20)).unwrap();
        assert!(s.frames.iter().all(|f| f.gt == s.frames[0].gt));
        assert!(s.frames[0].gt.count() > 50);
    }

    #[test]
    fn presence_interval_counts() {
        let script = SceneScript { length: 30, presence: Some(vec![(10, 20)]), ..SceneScript::default() };
        let s = generate_stream(&script).unwrap();
        assert_eq!(s.frames.iter().filter(|f| !f.gt.is_empty()).count(), 11);
        assert!(s.frames[10].present && !s.frames[9].present && !s.frames[21].present);
    }

    #[test]
    fn rejects_bad_intervals_and_axes() {
        let bad = SceneScript { length: 10, presence: Some(vec![(5, 10)]), ..SceneScript::default() };
        assert!(matches!(generate_stream(&bad), Err(Error::InvalidScript(_))));
        let bad = SceneScript { length: 10, presence: Some(vec![(6, 5)]), ..SceneScript::default() };
        assert!(generate_stream(&bad).is_err());
        let mut bad = SceneScript::default();
        bad.trajectory.axes = [0.0, 3.0];
        assert!(generate_stream(&bad).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_stream(&SceneScript::drifting(60).with_seed(4)).unwrap();
        let b = generate_stream(&SceneScript::drifting(60).with_seed(4)).unwrap();
        let c = generate_stream(&SceneScript::drifting(60).with_seed(5)).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn order_prefix_is_ground_truth() {
        let s = generate_stream(&SceneScript::drifting(40)).unwrap();
        for f in s.frames.iter().filter(|f| f.present) {
            let n = f.gt.count();
            assert!(f.order[..n].iter().all(|&i| f.gt.cells()[i as usize]));
        }
    }

    #[test]
    fn viewpoints_are_unit_and_follow_knots() {
        let d = Drift { rate: 0.0, knots: vec![(0, 0.0), (10, 1.0), (20, 0.5)] };
        assert_eq!(d.angle(5), 0.5);
        assert_eq!(d.angle(15), 0.75);
        assert_eq!(d.angle(99), 0.5);
        let s = generate_stream(&SceneScript::drifting(30)).unwrap();
        assert!(s.frames.iter().all(|f| (f.viewpoint.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn toml_round_trip() {
        let script = SceneScript::drifting(500);
        let back = SceneScript::from_toml(&script.to_toml()).unwrap();
        assert_eq!(back, script);
        let parsed = SceneScript::from_toml("length = 30\nseed = 2\npresence = [[10, 20]]\n[drift]\nrate = 0.01\n").unwrap();
        assert_eq!(parsed.presence, Some(vec![(10, 20)]));
        assert!(SceneScript::from_toml("length = 3\nbogus = 1\n").is_err());
    }
}
