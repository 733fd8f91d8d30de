//! Fixed, lossless image <-> token grid codec.
//!
//! Each `p x p` RGB patch becomes one token: values scaled to `[0, 1]`,
//! laid out as (row, column, channel), zero-padded up to `d_model`.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::raster::{unit_to_u8, RgbImage};
use crate::token_space::{Branch, FeatureGrid};

pub fn encode_from_image(img: &RgbImage, patch: usize, d_model: usize, branch: Branch) -> Result<FeatureGrid> {
    let (w, h) = img.dims();
    if patch == 0 || w % patch != 0 || h % patch != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{w}x{h} image is not divisible into {patch}px patches"
        )));
    }
    if patch * patch * 3 > d_model {
        return Err(Error::DimensionMismatch(format!(
            "{patch}px patches need {} channels, d_model is {d_model}",
            patch * patch * 3
        )));
    }
    let mut data = Array3::zeros((h / patch, w / patch, d_model));
    for ((r, c, k), v) in data.indexed_iter_mut() {
        if k < patch * patch * 3 {
            let (py, px, ch) = (k / (patch * 3), (k / 3) % patch, k % 3);
            *v = img.get(c * patch + px, r * patch + py)[ch] as f64 / 255.0;
        }
    }
    Ok(FeatureGrid::new(data, branch))
}

/// Inverse of [`encode_from_image`]; values are clamped to `[0, 1]` and rounded.
/// Padding channels are ignored.
pub fn decode_to_image(grid: &FeatureGrid, patch: usize) -> Result<RgbImage> {
    let (rows, cols, d) = grid.shape();
    if patch == 0 || patch * patch * 3 > d {
        return Err(Error::DimensionMismatch(format!("{patch}px patches do not fit d_model {d}")));
    }
    Ok(RgbImage::from_fn(cols * patch, rows * patch, |x, y| {
        let (r, c) = (y / patch, x / patch);
        let base = ((y % patch) * patch + x % patch) * 3;
        [0, 1, 2].map(|ch| unit_to_u8(grid.data[[r, c, base + ch]]))
    }))
}
