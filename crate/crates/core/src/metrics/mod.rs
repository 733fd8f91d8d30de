//! Colour-region consistency (MSE_CR), PSNR and SSIM.

mod color;
mod quality;
mod regions;

pub use color::{delta_e76, rgb_to_lab};
pub use quality::{mse, psnr, psnr_from_mse, ssim, PSNR_CAP_DB, SSIM_WINDOW};
pub use regions::{
    mse_cr, segment_color_regions, ColorRegionMap, Connectivity, RegionRow, SegmentationParams, BOUNDARY, DEFAULT_DELTA_E,
    DEFAULT_LINE_THRESHOLD,
};

use serde::Serialize;

use crate::error::Result;
use crate::raster::RgbImage;

/// All three scores for one generated image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairMetrics {
    pub psnr: f64,
    pub ssim: f64,
    pub mse_cr: f64,
}

impl PairMetrics {
    /// Column-wise arithmetic mean; `None` for an empty slice.
    pub fn mean(rows: &[PairMetrics]) -> Option<PairMetrics> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let sum = |f: fn(&PairMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Some(PairMetrics {
            psnr: sum(|r| r.psnr),
            ssim: sum(|r| r.ssim),
            mse_cr: sum(|r| r.mse_cr),
        })
    }
}

/// Scores `gen` against `gt`; regions are segmented from `gt` split by `line`.
pub fn evaluate_pair(gen: &RgbImage, gt: &RgbImage, line: &RgbImage, params: &SegmentationParams) -> Result<PairMetrics> {
    let regions = segment_color_regions(gt, line, params)?;
    Ok(PairMetrics {
        psnr: psnr(gen, gt)?,
        ssim: ssim(gen, gt)?,
        mse_cr: mse_cr(gen, gt, &regions)?,
    })
}
