//! Full-reference image quality: PSNR and windowed SSIM.

use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, RgbImage};

pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 8;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Mean squared error over all pixels and channels, `[0, 1]` scale.
pub fn mse(gen: &RgbImage, gt: &RgbImage) -> Result<f64> {
    ensure_same_dims(gen, gt)?;
    let sum: f64 = gen
        .as_raw()
        .iter()
        .zip(gt.as_raw())
        .map(|(&a, &b)| {
            let d = (a as f64 - b as f64) / 255.0;
            d * d
        })
        .sum();
    Ok(sum / gen.as_raw().len() as f64)
}

/// `-10 log10(MSE)`, capped at [`PSNR_CAP_DB`] (identical images hit the cap).
pub fn psnr(gen: &RgbImage, gt: &RgbImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(gen, gt)?))
}

pub fn psnr_from_mse(m: f64) -> f64 {
    if m == 0.0 {
        return PSNR_CAP_DB;
    }
    (-10.0 * m.log10()).min(PSNR_CAP_DB)
}

/// Summed-area table with a zero first row and column.
fn integral(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut s = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += values[y * w + x];
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

fn box_sum(s: &[f64], w: usize, x: usize, y: usize, k: usize) -> f64 {
    let stride = w + 1;
    s[(y + k) * stride + x + k] - s[y * stride + x + k] - s[(y + k) * stride + x] + s[y * stride + x]
}

/// Mean SSIM over every `8x8` window (stride 1) of the BT.601 luma, with
/// uniform window weights and population statistics.
pub fn ssim(gen: &RgbImage, gt: &RgbImage) -> Result<f64> {
    ensure_same_dims(gen, gt)?;
    let (w, h) = gen.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let luma = |img: &RgbImage| -> Vec<f64> { (0..w * h).map(|i| img.luma(i % w, i / w)).collect() };
    let (a, b) = (luma(gen), luma(gt));
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
    let sa = integral(&a, w, h);
    let sb = integral(&b, w, h);
    let saa = integral(&prod(&a, &a), w, h);
    let sbb = integral(&prod(&b, &b), w, h);
    let sab = integral(&prod(&a, &b), w, h);
    let k = SSIM_WINDOW;
    let n = (k * k) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - k {
        for x in 0..=w - k {
            let mu_a = box_sum(&sa, w, x, y, k) / n;
            let mu_b = box_sum(&sb, w, x, y, k) / n;
            let var_a = (box_sum(&saa, w, x, y, k) / n - mu_a * mu_a).max(0.0);
            let var_b = (box_sum(&sbb, w, x, y, k) / n - mu_b * mu_b).max(0.0);
            let cov = box_sum(&sab, w, x, y, k) / n - mu_a * mu_b;
            total += ((2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2)) / ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images() {
        let img = RgbImage::from_fn(12, 10, |x, y| [(x * 20) as u8, (y * 25) as u8, ((x + y) * 9) as u8]);
        assert_eq!(psnr(&img, &img).unwrap(), PSNR_CAP_DB);
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_error_of_one_tenth_is_twenty_db() {
        let a = RgbImage::filled(8, 8, [0, 0, 0]);
        // 25.5 is not representable; use a [0,1] value whose square is exact enough.
        let mut b = RgbImage::filled(8, 8, [51, 51, 51]); // 0.2 -> mse 0.04
        assert!((psnr(&a, &b).unwrap() - (-10.0 * 0.04f64.log10())).abs() < 1e-9);
        b = RgbImage::filled(8, 8, [255, 255, 255]);
        assert!((psnr(&a, &b).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn constant_images_only_luminance_term() {
        let a = RgbImage::filled(8, 8, [51, 51, 51]);
        let b = RgbImage::filled(8, 8, [153, 153, 153]);
        let (mu_a, mu_b) = (0.2, 0.6);
        let expect = (2.0 * mu_a * mu_b + C1) / (mu_a * mu_a + mu_b * mu_b + C1);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn too_small_for_ssim() {
        let a = RgbImage::filled(7, 9, [0, 0, 0]);
        assert!(ssim(&a, &a).is_err());
    }
}
