//! Max-pool then nearest upsample for each training kernel size.

use hierdit::attention::{pool_and_upsample, POOL_KERNELS};
use hierdit::token_space::{Branch, FeatureGrid};
use ndarray::Array3;

fn show(g: &FeatureGrid) {
    for r in 0..g.rows() {
        let row: Vec<String> = (0..g.cols()).map(|c| format!("{:>3}", g.data[[r, c, 0]])).collect();
        println!("  {}", row.join(""));
    }
}

fn main() -> hierdit::Result<()> {
    // 10x10 so that kernel 4 and 8 need replicate padding.
    let side = 10;
    let g = FeatureGrid::new(
        Array3::from_shape_fn((side, side, 1), |(r, c, _)| ((r * 7 + c * 13) % 23) as f64),
        Branch::Reference,
    );
    println!("input:");
    show(&g);
    for k in POOL_KERNELS {
        let p = pool_and_upsample(&g, k)?;
        let again = pool_and_upsample(&p, k)?;
        let monotone = p.data.iter().zip(g.data.iter()).all(|(a, b)| a >= b);
        println!(
            "kernel {k}: shape {:?}, idempotent {}, never decreases {}",
            p.shape(),
            again == p,
            monotone
        );
        show(&p);
    }
    Ok(())
}
