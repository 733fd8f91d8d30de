//! Colour-region segmentation of a ground-truth image, split by line art.
//!
//! Non-line pixels are merged with their neighbours when the CIE76
//! difference between the two pixels is within the threshold. Line pixels
//! (line-art luma below `line_threshold`) are boundary and belong to no
//! region. Every region gets one representative pixel: the maximum of its
//! Euclidean distance transform, ties broken by smallest `(y, x)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::color::{delta_e76, rgb_to_lab};
use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, RgbImage};

pub const BOUNDARY: i32 = -1;
pub const DEFAULT_DELTA_E: f64 = 10.0;
pub const DEFAULT_LINE_THRESHOLD: f64 = 0.5;

#[derive(Debug, PartialEq, Eq, Copy, Clone, Serialize)]
pub enum Connectivity {
    Four,
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationParams {
    pub delta_e_threshold: f64,
    pub line_threshold: f64,
    pub connectivity: Connectivity,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            delta_e_threshold: DEFAULT_DELTA_E,
            line_threshold: DEFAULT_LINE_THRESHOLD,
            connectivity: Connectivity::Four,
        }
    }
}

impl SegmentationParams {
    pub fn with_threshold(delta_e_threshold: f64) -> Self {
        Self {
            delta_e_threshold,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorRegionMap {
    width: usize,
    height: usize,
    /// Row-major; [`BOUNDARY`] for line pixels, else the region id. Ids are
    /// assigned in raster order of each region's first pixel.
    labels: Vec<i32>,
    representatives: Vec<(usize, usize)>,
    sizes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionRow {
    pub id: usize,
    pub pixels: usize,
    pub rep_x: usize,
    pub rep_y: usize,
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl ColorRegionMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn region_count(&self) -> usize {
        self.representatives.len()
    }

    pub fn label(&self, x: usize, y: usize) -> i32 {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn representatives(&self) -> &[(usize, usize)] {
        &self.representatives
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// One row per region with the ground-truth colour at its representative.
    pub fn table(&self, gt: &RgbImage) -> Vec<RegionRow> {
        self.representatives
            .iter()
            .zip(&self.sizes)
            .enumerate()
            .map(|(id, (&(x, y), &pixels))| {
                let [r, g, b] = gt.get(x, y);
                RegionRow {
                    id,
                    pixels,
                    rep_x: x,
                    rep_y: y,
                    r,
                    g,
                    b,
                }
            })
            .collect()
    }

    /// Random colour per region, black boundaries, a red dot on each
    /// representative.
    pub fn visualize(&self, seed: u64) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let palette: Vec<[u8; 3]> = (0..self.region_count())
            .map(|_| [rng.random_range(40..=230), rng.random_range(40..=230), rng.random_range(40..=230)])
            .collect();
        let mut img = RgbImage::from_fn(self.width, self.height, |x, y| match self.label(x, y) {
            BOUNDARY => [0, 0, 0],
            id => palette[id as usize],
        });
        for &(x, y) in &self.representatives {
            for (dx, dy) in [(0i64, 0i64), (1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (px, py) = (x as i64 + dx, y as i64 + dy);
                if px >= 0 && py >= 0 && (px as usize) < self.width && (py as usize) < self.height {
                    img.put(px as usize, py as usize, [255, 0, 0]);
                }
            }
        }
        img
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

pub fn segment_color_regions(gt: &RgbImage, line: &RgbImage, params: &SegmentationParams) -> Result<ColorRegionMap> {
    ensure_same_dims(gt, line)?;
    let (w, h) = gt.dims();
    let n = w * h;
    let is_line: Vec<bool> = (0..n).map(|i| line.luma(i % w, i / w) < params.line_threshold).collect();
    let lab: Vec<[f64; 3]> = (0..n).map(|i| rgb_to_lab(gt.get_unit(i % w, i / w))).collect();

    // Forward neighbours only; each undirected edge is visited once.
    let offsets: &[(i64, i64)] = match params.connectivity {
        Connectivity::Four => &[(1, 0), (0, 1)],
        Connectivity::Eight => &[(1, 0), (0, 1), (1, 1), (-1, 1)],
    };
    let mut sets = DisjointSet::new(n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if is_line[i] {
                continue;
            }
            for &(dx, dy) in offsets {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !is_line[j] && delta_e76(lab[i], lab[j]) <= params.delta_e_threshold {
                    sets.union(i, j);
                }
            }
        }
    }

    let mut labels = vec![BOUNDARY; n];
    let mut root_label = vec![BOUNDARY; n];
    let mut sizes = Vec::new();
    for i in 0..n {
        if is_line[i] {
            continue;
        }
        let root = sets.find(i);
        if root_label[root] == BOUNDARY {
            root_label[root] = sizes.len() as i32;
            sizes.push(0);
        }
        labels[i] = root_label[root];
        sizes[labels[i] as usize] += 1;
    }

    let representatives = representatives(&labels, w, sizes.len());
    Ok(ColorRegionMap {
        width: w,
        height: h,
        labels,
        representatives,
        sizes,
    })
}

const FAR: f64 = 1e20;

/// 1-D squared Euclidean distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let parabola_cut = |p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
        let mut s = parabola_cut(v[k]);
        // z[0] is -inf, so this never pops the first parabola.
        while s <= z[k] {
            k -= 1;
            s = parabola_cut(v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared distance of every pixel to the nearest zero of `mask` (true = inside).
fn squared_edt(mask: &[bool], w: usize, h: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = mask.iter().map(|&m| if m { FAR } else { 0.0 }).collect();
    let len = w.max(h);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; len], vec![0.0; len], vec![0usize; len], vec![0.0; len + 1]);
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    grid
}

fn representatives(labels: &[i32], w: usize, count: usize) -> Vec<(usize, usize)> {
    let mut bbox = vec![(usize::MAX, usize::MAX, 0usize, 0usize); count];
    for (i, &l) in labels.iter().enumerate() {
        if l < 0 {
            continue;
        }
        let (x, y) = (i % w, i / w);
        let b = &mut bbox[l as usize];
        b.0 = b.0.min(x);
        b.1 = b.1.min(y);
        b.2 = b.2.max(x);
        b.3 = b.3.max(y);
    }
    bbox.iter()
        .enumerate()
        .map(|(id, &(x0, y0, x1, y1))| {
            // One-pixel ring around the bounding box stands for "outside the region".
            let (bw, bh) = (x1 - x0 + 3, y1 - y0 + 3);
            let mut mask = vec![false; bw * bh];
            for y in y0..=y1 {
                for x in x0..=x1 {
                    mask[(y - y0 + 1) * bw + (x - x0 + 1)] = labels[y * w + x] == id as i32;
                }
            }
            let dist = squared_edt(&mask, bw, bh);
            let mut best = (f64::NEG_INFINITY, 0, 0);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let m = (y - y0 + 1) * bw + (x - x0 + 1);
                    if mask[m] && dist[m] > best.0 {
                        best = (dist[m], x, y);
                    }
                }
            }
            (best.1, best.2)
        })
        .collect()
}

/// Mean over regions of the per-channel squared error at each representative
/// pixel, in normalised `[0, 1]` RGB.
pub fn mse_cr(gen: &RgbImage, gt: &RgbImage, regions: &ColorRegionMap) -> Result<f64> {
    ensure_same_dims(gen, gt)?;
    if gt.dims() != (regions.width, regions.height) {
        return Err(Error::DimensionMismatch(format!(
            "region map is {}x{}, images are {}x{}",
            regions.width,
            regions.height,
            gt.width(),
            gt.height()
        )));
    }
    if regions.region_count() == 0 {
        return Err(Error::InvalidArgument("region map has no regions".into()));
    }
    let total: f64 = regions
        .representatives
        .iter()
        .map(|&(x, y)| {
            let (a, b) = (gen.get_unit(x, y), gt.get_unit(x, y));
            a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / 3.0
        })
        .sum();
    Ok(total / regions.region_count() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank(w: usize, h: usize) -> RgbImage {
        RgbImage::filled(w, h, [255, 255, 255])
    }

    #[test]
    fn uniform_image_is_one_region() {
        let gt = RgbImage::filled(8, 8, [0, 200, 0]);
        let map = segment_color_regions(&gt, &blank(8, 8), &SegmentationParams::default()).unwrap();
        assert_eq!(map.region_count(), 1);
        assert_eq!(map.sizes(), &[64]);
    }

    #[test]
    fn vertical_line_splits_uniform_image() {
        let gt = RgbImage::filled(9, 6, [120, 60, 200]);
        let line = RgbImage::from_fn(9, 6, |x, _| if x == 4 { [0, 0, 0] } else { [255, 255, 255] });
        let map = segment_color_regions(&gt, &line, &SegmentationParams::default()).unwrap();
        assert_eq!(map.region_count(), 2);
        assert!((0..6).all(|y| map.label(4, y) == BOUNDARY));
    }

    #[test]
    fn diagonal_gap_does_not_leak_with_four_connectivity() {
        // Anti-diagonal line: 4-connected regions stay apart, 8-connected merge.
        let gt = RgbImage::filled(6, 6, [200, 200, 0]);
        let line = RgbImage::from_fn(6, 6, |x, y| if x + y == 5 { [0, 0, 0] } else { [255, 255, 255] });
        let four = segment_color_regions(&gt, &line, &SegmentationParams::default()).unwrap();
        assert_eq!(four.region_count(), 2);
        let eight = segment_color_regions(
            &gt,
            &line,
            &SegmentationParams {
                connectivity: Connectivity::Eight,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(eight.region_count(), 1);
    }

    #[test]
    fn representative_is_deepest_pixel() {
        let gt = RgbImage::filled(5, 5, [10, 10, 10]);
        let map = segment_color_regions(&gt, &blank(5, 5), &SegmentationParams::default()).unwrap();
        assert_eq!(map.representatives(), &[(2, 2)]);
        // 7x5: (2,2), (3,2), (4,2) all sit 3 px from the border; smallest x wins.
        let gt = RgbImage::filled(7, 5, [10, 10, 10]);
        let map = segment_color_regions(&gt, &blank(7, 5), &SegmentationParams::default()).unwrap();
        assert_eq!(map.representatives(), &[(2, 2)]);
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        assert!(segment_color_regions(&blank(4, 4), &blank(5, 4), &SegmentationParams::default()).is_err());
    }

    #[test]
    fn edt_matches_brute_force() {
        let (w, h) = (9, 7);
        let mask: Vec<bool> = (0..w * h).map(|i| (i * 7 + i / 3) % 5 != 0).collect();
        let fast = squared_edt(&mask, w, h);
        for i in 0..w * h {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let brute = (0..w * h)
                .filter(|&j| !mask[j])
                .map(|j| {
                    let (u, v) = ((j % w) as f64, (j / w) as f64);
                    (x - u).powi(2) + (y - v).powi(2)
                })
                .fold(f64::INFINITY, f64::min);
            assert_eq!(fast[i], brute, "pixel {i}");
        }
    }

    #[test]
    fn mse_cr_of_identical_images_is_zero() {
        let gt = RgbImage::from_fn(8, 8, |x, y| [(x * 30) as u8, (y * 30) as u8, 90]);
        let map = segment_color_regions(&gt, &blank(8, 8), &SegmentationParams::default()).unwrap();
        assert_eq!(mse_cr(&gt, &gt, &map).unwrap(), 0.0);
    }

    #[test]
    fn mse_cr_hand_computed_three_regions() {
        // Three vertical bands of distinct colours, 4 pixels wide each.
        let colors = [[255u8, 0, 0], [0, 255, 0], [0, 0, 255]];
        let gt = RgbImage::from_fn(12, 5, |x, _| colors[x / 4]);
        let map = segment_color_regions(&gt, &blank(12, 5), &SegmentationParams::default()).unwrap();
        assert_eq!(map.region_count(), 3);
        // Depth 2 is reached on rows 1..=3, columns 1..=2 of each band; (y, x) order picks row 1.
        assert_eq!(map.representatives(), &[(1, 1), (5, 1), (9, 1)]);
        let mut gen = gt.clone();
        gen.put(1, 1, [255, 51, 0]); // region 0: (0.2^2)/3
        gen.put(9, 1, [51, 0, 153]); // region 2: (0.2^2 + 0.4^2)/3
        gen.put(0, 0, [0, 0, 0]); // not a representative: ignored
        let e0 = 0.2f64.powi(2) / 3.0;
        let e2 = (0.2f64.powi(2) + 0.4f64.powi(2)) / 3.0;
        let expect = (e0 + 0.0 + e2) / 3.0;
        assert!((mse_cr(&gen, &gt, &map).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn mse_cr_without_regions_fails() {
        let gt = RgbImage::filled(4, 4, [9, 9, 9]);
        let all_line = RgbImage::filled(4, 4, [0, 0, 0]);
        let map = segment_color_regions(&gt, &all_line, &SegmentationParams::default()).unwrap();
        assert_eq!(map.region_count(), 0);
        assert!(mse_cr(&gt, &gt, &map).is_err());
    }

    #[test]
    fn visualization_marks_representatives() {
        let gt = RgbImage::filled(9, 9, [50, 50, 50]);
        let map = segment_color_regions(&gt, &blank(9, 9), &SegmentationParams::default()).unwrap();
        let vis = map.visualize(0);
        assert_eq!(vis.get(4, 4), [255, 0, 0]);
        assert_eq!(map.table(&gt)[0].pixels, 81);
    }
}
