//! Target / line-art / reference triplets built from a scene and a pose perturbation.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::scene::{render, Scene};
use crate::error::{Error, Result};
use crate::raster::RgbImage;
use crate::rng::{stream, tags};

/// Rigid motion of one primitive: translation, rotation (radians) and a
/// multiplicative scale factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrimitiveDelta {
    pub dx: f64,
    pub dy: f64,
    pub rotation: f64,
    pub scale: f64,
}

impl PrimitiveDelta {
    pub const IDENTITY: Self = Self {
        dx: 0.0,
        dy: 0.0,
        rotation: 0.0,
        scale: 1.0,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseDelta {
    /// Indexed by primitive id.
    pub primitives: Vec<PrimitiveDelta>,
    pub camera: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MotionPreset {
    None,
    #[default]
    Small,
    Large,
}

impl MotionPreset {
    /// (translation std as a fraction of the canvas, rotation bound, scale bound, camera bound).
    fn params(self) -> (f64, f64, f64, f64) {
        match self {
            MotionPreset::None => (0.0, 0.0, 0.0, 0.0),
            MotionPreset::Small => (0.03, 0.1, 0.05, 0.0),
            MotionPreset::Large => (0.15, 0.6, 0.15, 0.08),
        }
    }
}

impl std::fmt::Display for MotionPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MotionPreset::None => "none",
            MotionPreset::Small => "small",
            MotionPreset::Large => "large",
        })
    }
}

impl FromStr for MotionPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MotionPreset::None),
            "small" => Ok(MotionPreset::Small),
            "large" => Ok(MotionPreset::Large),
            _ => Err(Error::InvalidArgument(format!("unknown motion preset {s:?}"))),
        }
    }
}

impl PoseDelta {
    pub fn zero(n: usize) -> Self {
        Self {
            primitives: vec![PrimitiveDelta::IDENTITY; n],
            camera: (0.0, 0.0),
        }
    }

    /// Every primitive translated by `(dx, dy)`.
    pub fn translation(n: usize, dx: f64, dy: f64) -> Self {
        Self {
            primitives: vec![
                PrimitiveDelta {
                    dx,
                    dy,
                    ..PrimitiveDelta::IDENTITY
                };
                n
            ],
            camera: (0.0, 0.0),
        }
    }

    pub fn random(seed: u64, scene: &Scene, preset: MotionPreset) -> Self {
        let (t_std, rot, scale, cam) = preset.params();
        let size = scene.width.min(scene.height) as f64;
        let n = scene.primitives.len();
        if preset == MotionPreset::None {
            return Self::zero(n);
        }
        let mut rng = stream(seed, tags::POSE, n as u64);
        let normal = Normal::new(0.0, t_std * size).expect("finite std");
        let primitives = (0..n)
            .map(|_| PrimitiveDelta {
                dx: normal.sample(&mut rng),
                dy: normal.sample(&mut rng),
                rotation: rng.random_range(-rot..=rot),
                scale: 1.0 + rng.random_range(-scale..=scale),
            })
            .collect();
        let camera = (rng.random_range(-cam..=cam) * size, rng.random_range(-cam..=cam) * size);
        Self { primitives, camera }
    }

    /// Applies the delta. Centres are clamped to the canvas.
    pub fn apply(&self, scene: &Scene) -> Result<Scene> {
        if self.primitives.len() != scene.primitives.len() {
            return Err(Error::DimensionMismatch(format!(
                "pose delta for {} primitives applied to {}",
                self.primitives.len(),
                scene.primitives.len()
            )));
        }
        let mut out = scene.clone();
        for (p, d) in out.primitives.iter_mut().zip(&self.primitives) {
            let scale = p.pose.scale * d.scale;
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::DegeneratePrimitive(p.id));
            }
            p.pose.scale = scale;
            p.pose.rotation = (p.pose.rotation + d.rotation).rem_euclid(2.0 * PI);
            p.pose.tx = (p.pose.tx + d.dx + self.camera.0).clamp(0.0, scene.width as f64);
            p.pose.ty = (p.pose.ty + d.dy + self.camera.1).clamp(0.0, scene.height as f64);
        }
        Ok(out)
    }
}

/// Ground-truth link between one primitive in the target and in the reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Correspondence {
    pub id: usize,
    pub fill: [u8; 3],
    pub target_center: (f64, f64),
    pub reference_center: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct TripletSample {
    pub target: RgbImage,
    pub lineart: RgbImage,
    pub reference: RgbImage,
    /// Mean centre motion over primitives, in pixels.
    pub displacement: f64,
    pub correspondence: Vec<Correspondence>,
}

/// Mean distance between the target and reference centres of every primitive.
pub fn displacement(target: &Scene, reference: &Scene) -> f64 {
    let n = target.primitives.len();
    if n == 0 {
        return 0.0;
    }
    target
        .primitives
        .iter()
        .zip(&reference.primitives)
        .map(|(a, b)| (a.pose.tx - b.pose.tx).hypot(a.pose.ty - b.pose.ty))
        .sum::<f64>()
        / n as f64
}

pub fn render_triplet(scene: &Scene, delta: &PoseDelta, anti_alias: bool) -> Result<TripletSample> {
    let moved = delta.apply(scene)?;
    let target = render(scene, anti_alias)?;
    let reference = render(&moved, anti_alias)?;
    let correspondence = scene
        .primitives
        .iter()
        .zip(&moved.primitives)
        .map(|(a, b)| Correspondence {
            id: a.id,
            fill: a.fill,
            target_center: a.center(),
            reference_center: b.center(),
        })
        .collect();
    Ok(TripletSample {
        target: target.color,
        lineart: target.line,
        reference: reference.color,
        displacement: displacement(scene, &moved),
        correspondence,
    })
}

fn colour_centroids(img: &RgbImage, skip: &[[u8; 3]]) -> BTreeMap<[u8; 3], (f64, f64, usize)> {
    let mut acc: BTreeMap<[u8; 3], (f64, f64, usize)> = BTreeMap::new();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let c = img.get(x, y);
            if skip.contains(&c) {
                continue;
            }
            let e = acc.entry(c).or_insert((0.0, 0.0, 0));
            e.0 += x as f64;
            e.1 += y as f64;
            e.2 += 1;
        }
    }
    acc
}

/// Displacement estimated from pixels alone: the mean shift of the centroid of
/// every fill colour present in both images. Black strokes and the target's
/// corner colour (the background) are ignored.
pub fn measure_displacement(target: &RgbImage, reference: &RgbImage) -> Result<f64> {
    crate::raster::ensure_same_dims(target, reference)?;
    let skip = [[0, 0, 0], target.get(0, 0)];
    let a = colour_centroids(target, &skip);
    let b = colour_centroids(reference, &skip);
    let mut total = 0.0;
    let mut count = 0usize;
    for (c, &(ax, ay, an)) in &a {
        if let Some(&(bx, by, bn)) = b.get(c) {
            let (an, bn) = (an as f64, bn as f64);
            total += (ax / an - bx / bn).hypot(ay / an - by / bn);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}
