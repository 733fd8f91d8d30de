//! Channel-wise max pooling followed by nearest-neighbour upsampling.
//!
//! Grids whose side is not a multiple of the kernel are replicate-padded up
//! to the next multiple before pooling and cropped after upsampling.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, tags};
use crate::token_space::FeatureGrid;

/// Kernel sizes drawn from during training.
pub const POOL_KERNELS: [usize; 3] = [2, 4, 8];
pub const DEFAULT_INFERENCE_KERNEL: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelSelection {
    /// One draw from [`POOL_KERNELS`] per training step, shared by all layers.
    RandomPerStep {
        seed: u64,
    },
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub selection: KernelSelection,
}

impl PoolSpec {
    pub fn fixed(kernel: usize) -> Self {
        Self {
            kernel,
            selection: KernelSelection::Fixed(kernel),
        }
    }

    /// Random policy; `kernel` holds the draw for step 0 until [`PoolSpec::for_step`] is called.
    pub fn random(seed: u64) -> Self {
        Self {
            kernel: draw_kernel(seed, 0),
            selection: KernelSelection::RandomPerStep { seed },
        }
    }

    /// Resolves the kernel used at `step`.
    pub fn for_step(&self, step: u64) -> Self {
        match self.selection {
            KernelSelection::Fixed(k) => Self::fixed(k),
            KernelSelection::RandomPerStep { seed } => Self {
                kernel: draw_kernel(seed, step),
                selection: self.selection,
            },
        }
    }
}

fn draw_kernel(seed: u64, step: u64) -> usize {
    let mut rng = stream(seed, tags::KERNEL, step);
    POOL_KERNELS[rng.random_range(0..POOL_KERNELS.len())]
}

/// Source token of every `(block, channel)` maximum; enough to route gradients back.
#[derive(Clone, Debug)]
pub(crate) struct PoolTrace {
    rows: usize,
    cols: usize,
    kernel: usize,
    block_cols: usize,
    /// `[block * d + channel]` -> source token index
    argmax: Vec<u32>,
}

impl PoolTrace {
    pub(crate) fn token_count(&self) -> usize {
        self.rows * self.cols
    }
}

fn check_kernel(rows: usize, cols: usize, kernel: usize) -> Result<()> {
    if kernel == 0 {
        return Err(Error::InvalidArgument("pooling kernel must be positive".into()));
    }
    if kernel > rows || kernel > cols {
        return Err(Error::KernelTooLarge {
            kernel,
            side: rows.min(cols),
        });
    }
    Ok(())
}

/// Pools and upsamples a row-major `rows*cols x d` token block.
pub(crate) fn pool_upsample_tokens(x: ArrayView2<f64>, rows: usize, cols: usize, kernel: usize) -> Result<(Array2<f64>, PoolTrace)> {
    check_kernel(rows, cols, kernel)?;
    let d = x.ncols();
    debug_assert_eq!(x.nrows(), rows * cols);
    let block_rows = rows.div_ceil(kernel);
    let block_cols = cols.div_ceil(kernel);
    let mut argmax = vec![0u32; block_rows * block_cols * d];
    let mut maxima = vec![f64::NEG_INFINITY; block_rows * block_cols * d];

    for br in 0..block_rows {
        for bc in 0..block_cols {
            let b = br * block_cols + bc;
            let best = &mut maxima[b * d..(b + 1) * d];
            let arg = &mut argmax[b * d..(b + 1) * d];
            for pr in br * kernel..(br + 1) * kernel {
                let r = pr.min(rows - 1);
                for pc in bc * kernel..(bc + 1) * kernel {
                    let c = pc.min(cols - 1);
                    let src = r * cols + c;
                    let row = x.row(src);
                    for (ch, &v) in row.iter().enumerate() {
                        if v > best[ch] {
                            best[ch] = v;
                            arg[ch] = src as u32;
                        }
                    }
                }
            }
        }
    }

    let mut out = Array2::zeros((rows * cols, d));
    for r in 0..rows {
        for c in 0..cols {
            let b = (r / kernel) * block_cols + c / kernel;
            out.row_mut(r * cols + c)
                .iter_mut()
                .zip(&maxima[b * d..(b + 1) * d])
                .for_each(|(o, &m)| *o = m);
        }
    }
    Ok((
        out,
        PoolTrace {
            rows,
            cols,
            kernel,
            block_cols,
            argmax,
        },
    ))
}

/// Gradient of [`pool_upsample_tokens`] with respect to its input.
pub(crate) fn pool_upsample_backward(grad: ArrayView2<f64>, trace: &PoolTrace) -> Array2<f64> {
    let d = grad.ncols();
    let PoolTrace {
        rows,
        cols,
        kernel,
        block_cols,
        ref argmax,
    } = *trace;
    let mut block_grad = vec![0.0; argmax.len()];
    for r in 0..rows {
        for c in 0..cols {
            let b = (r / kernel) * block_cols + c / kernel;
            block_grad[b * d..(b + 1) * d]
                .iter_mut()
                .zip(grad.row(r * cols + c))
                .for_each(|(acc, &g)| *acc += g);
        }
    }
    let mut dx = Array2::zeros((rows * cols, d));
    for (i, (&src, &g)) in argmax.iter().zip(&block_grad).enumerate() {
        dx[[src as usize, i % d]] += g;
    }
    dx
}

/// Max-pools `g` with a `kernel x kernel` window and upsamples back to the
/// original shape with nearest-neighbour interpolation.
pub fn pool_and_upsample(g: &FeatureGrid, kernel: usize) -> Result<FeatureGrid> {
    if !g.branch.is_image() {
        return Err(Error::NotAnImageBranch(g.branch));
    }
    let (pooled, _) = pool_upsample_tokens(g.token_matrix().view(), g.rows(), g.cols(), kernel)?;
    FeatureGrid::from_token_matrix(pooled.view(), g.rows(), g.cols(), g.branch)
}
