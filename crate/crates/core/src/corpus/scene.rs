//! Procedural scenes of flat-coloured primitives and their rasterisation.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{delta_e76, rgb_to_lab};
use crate::raster::RgbImage;
use crate::rng::{stream, tags};

/// Minimum pairwise CIE76 distance between fill colours and the background.
pub const MIN_PALETTE_DELTA_E: f64 = 15.0;
const AA_FACTOR: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Ellipse {
        rx: f64,
        ry: f64,
    },
    /// Convex polygon, vertices in counter-clockwise order.
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
    /// Segment from `(-half_length, 0)` to `(half_length, 0)` swept by a disc.
    Capsule {
        half_length: f64,
        radius: f64,
    },
}

impl Shape {
    fn contains_local(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Ellipse { rx, ry } => (x / rx).powi(2) + (y / ry).powi(2) <= 1.0,
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|i| {
                    let [ax, ay] = vertices[i];
                    let [bx, by] = vertices[(i + 1) % n];
                    (bx - ax) * (y - ay) - (by - ay) * (x - ax) >= 0.0
                })
            }
            Shape::Capsule { half_length, radius } => {
                let cx = x.clamp(-half_length, *half_length);
                (x - cx).powi(2) + y * y <= radius * radius
            }
        }
    }

    /// Radius of the smallest origin-centred disc containing the shape.
    pub fn extent(&self) -> f64 {
        match self {
            Shape::Ellipse { rx, ry } => rx.max(*ry),
            Shape::Polygon { vertices } => vertices.iter().map(|[x, y]| x.hypot(*y)).fold(0.0, f64::max),
            Shape::Capsule { half_length, radius } => half_length + radius,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub tx: f64,
    pub ty: f64,
    pub rotation: f64,
    pub scale: f64,
}

impl Pose {
    fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.tx, y - self.ty);
        let (s, c) = self.rotation.sin_cos();
        ((c * dx + s * dy) / self.scale, (-s * dx + c * dy) / self.scale)
    }

    fn to_world(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        let (x, y) = (x * self.scale, y * self.scale);
        (self.tx + c * x - s * y, self.ty + s * x + c * y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub id: usize,
    pub shape: Shape,
    pub fill: [u8; 3],
    pub stroke_width: f64,
    pub z: i32,
    pub pose: Pose,
}

impl Primitive {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (lx, ly) = self.pose.to_local(x, y);
        self.shape.contains_local(lx, ly)
    }

    /// World-space radius of the disc around the pose centre covering the primitive.
    pub fn radius(&self) -> f64 {
        self.shape.extent() * self.pose.scale
    }

    pub fn center(&self) -> (f64, f64) {
        (self.pose.tx, self.pose.ty)
    }

    /// `count` boundary points at evenly spaced angles around the centre
    /// (shapes are star-shaped about their origin).
    pub fn contour_samples(&self, count: usize) -> Vec<(f64, f64)> {
        let extent = self.shape.extent();
        (0..count)
            .map(|k| {
                let theta = 2.0 * PI * k as f64 / count as f64;
                let (dx, dy) = (theta.cos(), theta.sin());
                let (mut lo, mut hi) = (0.0, extent * 1.001);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    if self.shape.contains_local(mid * dx, mid * dy) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                self.pose.to_world(lo * dx, lo * dy)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub background: [u8; 3],
    pub primitives: Vec<Primitive>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneConfig {
    pub size: usize,
    pub stroke_width: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            size: 64,
            stroke_width: 1.0,
        }
    }
}

fn random_color<R: Rng>(rng: &mut R) -> [u8; 3] {
    [rng.random_range(30..=245), rng.random_range(30..=245), rng.random_range(30..=245)]
}

fn unit(c: [u8; 3]) -> [f64; 3] {
    c.map(|v| v as f64 / 255.0)
}

/// Background plus `n` fill colours, pairwise at least [`MIN_PALETTE_DELTA_E`] apart.
fn palette<R: Rng>(rng: &mut R, n: usize) -> Vec<[u8; 3]> {
    let mut colors: Vec<[u8; 3]> = Vec::with_capacity(n + 1);
    let mut labs: Vec<[f64; 3]> = Vec::with_capacity(n + 1);
    while colors.len() < n + 1 {
        let c = random_color(rng);
        let lab = rgb_to_lab(unit(c));
        if labs.iter().all(|&l| delta_e76(l, lab) >= MIN_PALETTE_DELTA_E) {
            colors.push(c);
            labs.push(lab);
        }
    }
    colors
}

fn random_shape<R: Rng>(rng: &mut R, radius: f64) -> Shape {
    match rng.random_range(0..3) {
        0 => Shape::Ellipse {
            rx: radius,
            ry: radius * rng.random_range(0.6..1.0),
        },
        1 => {
            let k = rng.random_range(3..=6);
            let offset = rng.random_range(0.0..2.0 * PI);
            let step = 2.0 * PI / k as f64;
            let vertices = (0..k)
                .map(|i| {
                    let a = offset + step * (i as f64 + rng.random_range(-0.2..0.2));
                    [radius * a.cos(), radius * a.sin()]
                })
                .collect();
            Shape::Polygon { vertices }
        }
        _ => {
            let half_length = radius * rng.random_range(0.25..0.5);
            Shape::Capsule {
                half_length,
                radius: radius - half_length,
            }
        }
    }
}

/// Places `n` non-overlapping primitives with distinct colours on a square
/// canvas. Deterministic in `seed`.
pub fn generate_scene(seed: u64, n_primitives: usize, config: &SceneConfig) -> Result<Scene> {
    if n_primitives == 0 {
        return Err(Error::InvalidArgument("a scene needs at least one primitive".into()));
    }
    let size = config.size as f64;
    let mut rng = stream(seed, tags::SCENE, n_primitives as u64);
    let colors = palette(&mut rng, n_primitives);
    let margin = config.stroke_width + 1.0;
    let mut r_max = (0.45 * size / (n_primitives as f64).sqrt()).min(0.3 * size);
    loop {
        let r_min = (0.6 * r_max).max(4.0);
        if r_min > r_max || 2.0 * (r_min + margin) > size {
            return Err(Error::InvalidArgument(format!(
                "{n_primitives} primitives do not fit a {}px canvas",
                config.size
            )));
        }
        let mut placed: Vec<Primitive> = Vec::with_capacity(n_primitives);
        for id in 0..n_primitives {
            let mut ok = false;
            for _ in 0..400 {
                let radius = rng.random_range(r_min..=r_max);
                let lo = radius + margin;
                let hi = size - radius - margin;
                let (tx, ty) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
                let clear = placed
                    .iter()
                    .all(|p| (p.pose.tx - tx).hypot(p.pose.ty - ty) > p.radius() + radius + margin);
                if !clear {
                    continue;
                }
                placed.push(Primitive {
                    id,
                    shape: random_shape(&mut rng, radius),
                    fill: colors[id + 1],
                    stroke_width: config.stroke_width,
                    z: id as i32,
                    pose: Pose {
                        tx,
                        ty,
                        rotation: rng.random_range(0.0..2.0 * PI),
                        scale: 1.0,
                    },
                });
                ok = true;
                break;
            }
            if !ok {
                break;
            }
        }
        if placed.len() == n_primitives {
            return Ok(Scene {
                width: config.size,
                height: config.size,
                background: colors[0],
                primitives: placed,
            });
        }
        r_max *= 0.9;
    }
}

/// Colour render and its line art.
#[derive(Clone, Debug)]
pub struct Rendered {
    pub color: RgbImage,
    pub line: RgbImage,
}

fn primitive_mask(p: &Primitive, w: usize, h: usize, supersample: usize) -> (Vec<bool>, (usize, usize, usize, usize)) {
    let s = supersample as f64;
    let r = p.radius() * s + 2.0;
    let (cx, cy) = (p.pose.tx * s, p.pose.ty * s);
    let x0 = ((cx - r).floor().max(0.0)) as usize;
    let y0 = ((cy - r).floor().max(0.0)) as usize;
    let x1 = ((cx + r).ceil().max(0.0) as usize).min(w);
    let y1 = ((cy + r).ceil().max(0.0) as usize).min(h);
    let mut mask = vec![false; w * h];
    for y in y0..y1 {
        for x in x0..x1 {
            mask[y * w + x] = p.contains((x as f64 + 0.5) / s, (y as f64 + 0.5) / s);
        }
    }
    (mask, (x0, y0, x1, y1))
}

fn render_at(scene: &Scene, supersample: usize) -> Result<(RgbImage, Vec<bool>)> {
    let (w, h) = (scene.width * supersample, scene.height * supersample);
    let mut color = RgbImage::filled(w, h, scene.background);
    let mut stroke = vec![false; w * h];
    let mut order: Vec<&Primitive> = scene.primitives.iter().collect();
    order.sort_by_key(|p| (p.z, p.id));
    for p in order {
        let (mask, (x0, y0, x1, y1)) = primitive_mask(p, w, h, supersample);
        let sw = p.stroke_width * supersample as f64;
        let reach = sw.ceil() as i64;
        let mut any = false;
        for y in y0..y1 {
            for x in x0..x1 {
                if !mask[y * w + x] {
                    continue;
                }
                any = true;
                let mut on_stroke = false;
                'search: for dy in -reach..=reach {
                    for dx in -reach..=reach {
                        if (dx == 0 && dy == 0) || ((dx * dx + dy * dy) as f64) > sw * sw {
                            continue;
                        }
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        let outside = nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 || !mask[ny as usize * w + nx as usize];
                        if outside {
                            on_stroke = true;
                            break 'search;
                        }
                    }
                }
                stroke[y * w + x] = on_stroke;
                color.put(x, y, if on_stroke { [0, 0, 0] } else { p.fill });
            }
        }
        if !any {
            return Err(Error::DegeneratePrimitive(p.id));
        }
    }
    Ok((color, stroke))
}

fn downsample(img: &RgbImage, factor: usize) -> RgbImage {
    let (w, h) = (img.width() / factor, img.height() / factor);
    RgbImage::from_fn(w, h, |x, y| {
        let mut acc = [0u32; 3];
        for yy in y * factor..(y + 1) * factor {
            for xx in x * factor..(x + 1) * factor {
                for (a, v) in acc.iter_mut().zip(img.get(xx, yy)) {
                    *a += v as u32;
                }
            }
        }
        let n = (factor * factor) as u32;
        acc.map(|a| ((a + n / 2) / n) as u8)
    })
}

/// Renders the scene: fills with black strokes on top, and the stroke-only
/// line art (black on white). Primitives are painted in z order, so an upper
/// primitive hides the strokes beneath it.
pub fn render(scene: &Scene, anti_alias: bool) -> Result<Rendered> {
    let factor = if anti_alias { AA_FACTOR } else { 1 };
    let (color, stroke) = render_at(scene, factor)?;
    let (w, h) = color.dims();
    let line = RgbImage::from_fn(w, h, |x, y| if stroke[y * w + x] { [0, 0, 0] } else { [255, 255, 255] });
    if factor == 1 {
        Ok(Rendered { color, line })
    } else {
        Ok(Rendered {
            color: downsample(&color, factor),
            line: downsample(&line, factor),
        })
    }
}
