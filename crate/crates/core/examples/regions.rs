//! Segments a rendered scene into colour regions and scores a perturbed copy.
//!
//! Writes `regions.png` (labels with representatives in red) to the given
//! directory, default `target/example-regions`.

use std::path::PathBuf;

use hierdit::corpus::{generate_scene, render, SceneConfig};
use hierdit::metrics::{evaluate_pair, mse_cr, segment_color_regions, SegmentationParams};
use hierdit::raster::RgbImage;

fn main() -> hierdit::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-regions".into()));
    let scene = generate_scene(11, 4, &SceneConfig::default())?;
    let r = render(&scene, false)?;
    let params = SegmentationParams::default();
    let map = segment_color_regions(&r.color, &r.line, &params)?;
    println!("{} primitives -> {} regions", scene.primitives.len(), map.region_count());
    for row in map.table(&r.color) {
        println!(
            "  region {:>2}: {:>5} px, rep ({:>2},{:>2}), rgb ({},{},{})",
            row.id, row.pixels, row.rep_x, row.rep_y, row.r, row.g, row.b
        );
    }

    let shifted = RgbImage::from_fn(r.color.width(), r.color.height(), |x, y| {
        let [a, b, c] = r.color.get(x, y);
        [a.saturating_add(26), b, c]
    });
    println!("MSE_CR vs itself: {}", mse_cr(&r.color, &r.color, &map)?);
    let m = evaluate_pair(&shifted, &r.color, &r.line, &params)?;
    println!("red channel +26: PSNR {:.2} dB, SSIM {:.4}, MSE_CR {:.5}", m.psnr, m.ssim, m.mse_cr);

    std::fs::create_dir_all(&out)?;
    map.visualize(0).save(out.join("regions.png"))?;
    println!("wrote {}", out.join("regions.png").display());
    Ok(())
}
