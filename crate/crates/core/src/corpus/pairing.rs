//! Frame sequences with synthetic keypoints and interval-reduction pair selection.

use rand::Rng;

use super::scene::{generate_scene, Scene, SceneConfig};
use crate::error::{Error, Result};
use crate::rng::{stream, tags};

pub const KEYPOINTS_PER_PRIMITIVE: usize = 8;
pub const DEFAULT_START_INTERVAL: usize = 18;
pub const DEFAULT_MIN_MATCHES: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub primitive: usize,
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

#[derive(Clone, Debug)]
pub struct FrameSequence {
    pub frames: Vec<Scene>,
    /// `keypoints[f]` is ordered by (primitive, index) and has the same length for every frame.
    pub keypoints: Vec<Vec<Keypoint>>,
    /// Maximum displacement for two observations of one keypoint to match.
    pub gate: f64,
}

/// Contour samples of every primitive. A sample is visible when it lies on the
/// canvas and no primitive above it covers it.
pub fn keypoints(scene: &Scene) -> Vec<Keypoint> {
    let mut out = Vec::with_capacity(scene.primitives.len() * KEYPOINTS_PER_PRIMITIVE);
    let mut prims: Vec<_> = scene.primitives.iter().collect();
    prims.sort_by_key(|p| p.id);
    for p in &prims {
        for (index, (x, y)) in p.contour_samples(KEYPOINTS_PER_PRIMITIVE).into_iter().enumerate() {
            let on_canvas = x >= 0.0 && y >= 0.0 && x < scene.width as f64 && y < scene.height as f64;
            let occluded = prims.iter().any(|q| q.id != p.id && (q.z, q.id) > (p.z, p.id) && q.contains(x, y));
            out.push(Keypoint {
                primitive: p.id,
                index,
                x,
                y,
                visible: on_canvas && !occluded,
            });
        }
    }
    out
}

impl FrameSequence {
    pub fn from_frames(frames: Vec<Scene>, gate: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptySequence);
        }
        let n = frames[0].primitives.len();
        if frames.iter().any(|f| f.primitives.len() != n) {
            return Err(Error::InvalidArgument("frames disagree on primitive count".into()));
        }
        let keypoints = frames.iter().map(keypoints).collect();
        Ok(Self { frames, keypoints, gate })
    }

    /// Default gate: a quarter of the canvas side.
    pub fn default_gate(scene: &Scene) -> f64 {
        scene.width.max(scene.height) as f64 / 4.0
    }

    /// Smooth random motion: every primitive drifts with a constant velocity of
    /// up to `speed` px per frame and a slow spin. Primitives may leave the canvas.
    pub fn random(seed: u64, n_primitives: usize, len: usize, speed: f64, config: &SceneConfig) -> Result<Self> {
        let base = generate_scene(seed, n_primitives, config)?;
        let mut rng = stream(seed, tags::TRAJECTORY, len as u64);
        let motion: Vec<(f64, f64, f64)> = (0..n_primitives)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let v = rng.random_range(0.0..=speed);
                (v * angle.cos(), v * angle.sin(), rng.random_range(-0.05..=0.05))
            })
            .collect();
        let frames = (0..len)
            .map(|f| {
                let mut s = base.clone();
                for (p, &(vx, vy, w)) in s.primitives.iter_mut().zip(&motion) {
                    p.pose.tx += vx * f as f64;
                    p.pose.ty += vy * f as f64;
                    p.pose.rotation += w * f as f64;
                }
                s
            })
            .collect();
        let gate = Self::default_gate(&base);
        Self::from_frames(frames, gate)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Keypoints visible in both frames that moved no further than the gate.
    pub fn count_matches(&self, a: usize, b: usize) -> usize {
        self.keypoints[a]
            .iter()
            .zip(&self.keypoints[b])
            .filter(|(p, q)| p.visible && q.visible && (p.x - q.x).hypot(p.y - q.y) <= self.gate)
            .count()
    }
}

/// Starts with frames `0` and `start_interval` (capped at the last frame) and
/// shrinks the interval while fewer than `min_matches` keypoints match.
/// Interval 1 is accepted unconditionally. Returns `(reference, target)`.
pub fn select_pair(frames: &FrameSequence, start_interval: usize, min_matches: usize) -> Result<(usize, usize)> {
    if frames.len() <= 1 {
        return Err(Error::EmptySequence);
    }
    if start_interval == 0 {
        return Err(Error::InvalidArgument("start interval must be positive".into()));
    }
    let mut interval = start_interval.min(frames.len() - 1);
    while interval > 1 && frames.count_matches(0, interval) < min_matches {
        interval -= 1;
    }
    Ok((0, interval))
}
