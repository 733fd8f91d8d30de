//! Independent reference implementations used by the integration tests.
//!
//! Everything here is written with plain loops over `Vec`s and shares no
//! code with the library beyond reading public parameter fields.

#![allow(dead_code)]

use hierdit::attention::AttentionParams;
use hierdit::corpus::{FrameSequence, Primitive, Scene};
use hierdit::model::{DitModel, EncodedTriplet, Linear, StepDraws, Tensors, Trainer};
use hierdit::raster::RgbImage;
use hierdit::token_space::{assemble, Branch, FeatureGrid, UnifiedSequence};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller, so the oracles do not lean on the library's samplers either.
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn to_mat(a: &Array2<f64>) -> Mat {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn grid_tokens(g: &FeatureGrid) -> Mat {
    let (rows, cols, d) = g.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push((0..d).map(|k| g.data[[r, c, k]]).collect());
        }
    }
    out
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut m: f64 = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        assert_eq!(ra.len(), rb.len());
        for (x, y) in ra.iter().zip(rb) {
            m = m.max((x - y).abs());
        }
    }
    m
}

/// `x · Wᵀ` with `W` stored `d_out x d_in`.
pub fn project(x: &Mat, w: &Array2<f64>) -> Mat {
    let (d_out, d_in) = w.dim();
    x.iter()
        .map(|row| {
            assert_eq!(row.len(), d_in);
            (0..d_out).map(|o| (0..d_in).map(|i| row[i] * w[[o, i]]).sum()).collect()
        })
        .collect()
}

pub fn linear(x: &Mat, l: &Linear) -> Mat {
    let mut y = project(x, &l.w);
    for row in &mut y {
        for (v, b) in row.iter_mut().zip(l.b.iter()) {
            *v += b;
        }
    }
    y
}

pub fn linear_vec(x: &[f64], l: &Linear) -> Vec<f64> {
    linear(&vec![x.to_vec()], l).remove(0)
}

/// Per-head scaled dot-product attention, heads concatenated.
pub fn dense_attention(q: &Mat, k: &Mat, v: &Mat, heads: usize) -> Mat {
    let n = q.len();
    let d = q[0].len();
    let dk = d / heads;
    let mut out = vec![vec![0.0; d]; n];
    for h in 0..heads {
        let lo = h * dk;
        for i in 0..n {
            let mut scores = vec![0.0; n];
            for (j, s) in scores.iter_mut().enumerate() {
                let mut dot = 0.0;
                for c in lo..lo + dk {
                    dot += q[i][c] * k[j][c];
                }
                *s = dot / (dk as f64).sqrt();
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for s in &mut scores {
                *s = (*s - max).exp();
                z += *s;
            }
            for (j, s) in scores.iter().enumerate() {
                for c in lo..lo + dk {
                    out[i][c] += s / z * v[j][c];
                }
            }
        }
    }
    out
}

/// Max over each `kernel x kernel` block (clipped to the grid), then
/// written back to every cell of the block.
pub fn pool_upsample(tokens: &Mat, rows: usize, cols: usize, kernel: usize) -> Mat {
    let d = tokens[0].len();
    let mut out = vec![vec![0.0; d]; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let (br, bc) = (r / kernel * kernel, c / kernel * kernel);
            for k in 0..d {
                let mut m = f64::NEG_INFINITY;
                for rr in br..(br + kernel).min(rows) {
                    for cc in bc..(bc + kernel).min(cols) {
                        m = m.max(tokens[rr * cols + cc][k]);
                    }
                }
                out[r * cols + c][k] = m;
            }
        }
    }
    out
}

/// Image segments of a sequence: `(start, rows, cols)`.
pub type Segments = Vec<(usize, usize, usize)>;

pub fn pool_segments(x: &Mat, segments: &Segments, kernel: usize) -> Mat {
    let mut out = x.clone();
    for &(start, rows, cols) in segments {
        let part = x[start..start + rows * cols].to_vec();
        let pooled = pool_upsample(&part, rows, cols, kernel);
        out[start..start + rows * cols].clone_from_slice(&pooled);
    }
    out
}

pub struct AttnWeights<'a> {
    pub w_q: &'a Array2<f64>,
    pub w_k: &'a Array2<f64>,
    pub w_v: &'a Array2<f64>,
    pub w_o: &'a Array2<f64>,
    pub w_q_ctx: &'a Array2<f64>,
    pub w_k_ctx: &'a Array2<f64>,
    pub heads: usize,
}

impl<'a> AttnWeights<'a> {
    pub fn of(p: &'a hierdit::attention::AttentionParams) -> Self {
        Self {
            w_q: &p.w_q,
            w_k: &p.w_k,
            w_v: &p.w_v,
            w_o: &p.w_o,
            w_q_ctx: &p.w_q_ctx,
            w_k_ctx: &p.w_k_ctx,
            heads: p.heads,
        }
    }
}

pub fn vanilla_oracle(x: &Mat, w: &AttnWeights) -> Mat {
    let a = dense_attention(&project(x, w.w_q), &project(x, w.w_k), &project(x, w.w_v), w.heads);
    project(&a, w.w_o)
}

pub fn context_oracle(x: &Mat, segments: &Segments, kernel: usize, w: &AttnWeights) -> Mat {
    let p = pool_segments(x, segments, kernel);
    let a = dense_attention(&project(&p, w.w_q_ctx), &project(&p, w.w_k_ctx), &project(x, w.w_v), w.heads);
    project(&a, w.w_o)
}

pub fn hierarchical_oracle(x: &Mat, segments: &Segments, kernel: usize, lambda: f64, w: &AttnWeights) -> Mat {
    let v = vanilla_oracle(x, w);
    let c = context_oracle(x, segments, kernel, w);
    v.iter()
        .zip(&c)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + lambda * y).collect())
        .collect()
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn gelu_tanh(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

fn layer_norm_rows(x: &Mat) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + 1e-6).sqrt();
            row.iter().map(|v| (v - mean) * inv).collect()
        })
        .collect()
}

fn sincos_position(p: f64, d_half: usize, out: &mut [f64]) {
    let pairs = d_half / 2;
    for k in 0..pairs {
        let freq = 10000f64.powf(-(k as f64) / pairs as f64);
        out[2 * k] = (p * freq).sin();
        out[2 * k + 1] = (p * freq).cos();
    }
}

/// Reference denoiser forward pass. `cond` is `(line, reference)`. Returns
/// the velocity tokens of the noisy grid, row-major.
pub fn reference_velocity(
    model: &DitModel,
    x_t: &FeatureGrid,
    cond: Option<(&FeatureGrid, &FeatureGrid)>,
    sigma: f64,
    lambda: f64,
    kernel: usize,
    context: bool,
) -> Mat {
    let c = &model.config;
    let p = &model.params;
    let d = c.d_model;
    let (rows, cols, _) = x_t.shape();
    let n_x = rows * cols;

    // tokens, positions, branch rows
    let mut raw: Mat = grid_tokens(x_t);
    let mut pos: Vec<(f64, f64)> = (0..n_x).map(|i| ((i / cols) as f64, (i % cols) as f64)).collect();
    let mut branch: Vec<usize> = vec![0; n_x];
    let mut segments: Segments = vec![(0, rows, cols)];
    if let Some((line, reference)) = cond {
        segments.push((raw.len(), rows, cols));
        raw.extend(grid_tokens(line));
        pos.extend((0..n_x).map(|i| ((i / cols) as f64, (i % cols + cols) as f64)));
        branch.extend(std::iter::repeat(1).take(n_x));
        segments.push((raw.len(), rows, cols));
        raw.extend(grid_tokens(reference));
        pos.extend((0..n_x).map(|i| ((i / cols + rows) as f64, (i % cols) as f64)));
        branch.extend(std::iter::repeat(2).take(n_x));
    }
    let mut h = linear(&raw, &p.embed);
    for (i, row) in h.iter_mut().enumerate() {
        let mut pe = vec![0.0; d];
        sincos_position(pos[i].0, d / 2, &mut pe[..d / 2]);
        sincos_position(pos[i].1, d / 2, &mut pe[d / 2..]);
        for k in 0..d {
            row[k] += pe[k] + p.branch_embed[[branch[i], k]];
        }
    }

    // timestep signal
    let half = d / 2;
    let tval = sigma * 1000.0;
    let mut temb = vec![0.0; d];
    for k in 0..half {
        let f = (-(10000f64).ln() * k as f64 / half as f64).exp();
        temb[k] = (tval * f).cos();
        temb[half + k] = (tval * f).sin();
    }
    let c1: Vec<f64> = linear_vec(&temb, &p.time1).into_iter().map(silu).collect();
    let sc: Vec<f64> = linear_vec(&c1, &p.time2).into_iter().map(silu).collect();

    let s = c.lora_scale;
    let eff = |w: &Array2<f64>, ad: &hierdit::model::LoraAdapter| -> Array2<f64> {
        let (o, i) = w.dim();
        let r = ad.a.nrows();
        Array2::from_shape_fn((o, i), |(a, b)| {
            w[[a, b]] + s * (0..r).map(|k| ad.b[[a, k]] * ad.a[[k, b]]).sum::<f64>()
        })
    };

    for blk in &p.blocks {
        let m = linear_vec(&sc, &blk.modulation);
        let modulate = |n: &Mat, g: &ndarray::Array1<f64>, b: &ndarray::Array1<f64>, shift: &[f64], scale: &[f64]| -> Mat {
            n.iter()
                .map(|row| (0..d).map(|k| (row[k] * g[k] + b[k]) * (1.0 + scale[k]) + shift[k]).collect())
                .collect()
        };
        let u1 = modulate(&layer_norm_rows(&h), &blk.ln1_gamma, &blk.ln1_beta, &m[0..d], &m[d..2 * d]);
        let a = &blk.attn;
        let l = &blk.lora;
        let (wq, wk, wv, wo, wqc, wkc) = (
            eff(&a.w_q, &l.q),
            eff(&a.w_k, &l.k),
            eff(&a.w_v, &l.v),
            eff(&a.w_o, &l.o),
            eff(&a.w_q_ctx, &l.q_ctx),
            eff(&a.w_k_ctx, &l.k_ctx),
        );
        let w = AttnWeights {
            w_q: &wq,
            w_k: &wk,
            w_v: &wv,
            w_o: &wo,
            w_q_ctx: &wqc,
            w_k_ctx: &wkc,
            heads: a.heads,
        };
        let att = if context {
            hierarchical_oracle(&u1, &segments, kernel, lambda, &w)
        } else {
            vanilla_oracle(&u1, &w)
        };
        for (hr, ar) in h.iter_mut().zip(&att) {
            for (x, y) in hr.iter_mut().zip(ar) {
                *x += y;
            }
        }
        let u2 = modulate(&layer_norm_rows(&h), &blk.ln2_gamma, &blk.ln2_beta, &m[2 * d..3 * d], &m[3 * d..]);
        let f: Mat = linear(&u2, &blk.ff1)
            .into_iter()
            .map(|r| r.into_iter().map(gelu_tanh).collect())
            .collect();
        let ff = linear(&f, &blk.ff2);
        for (hr, fr) in h.iter_mut().zip(&ff) {
            for (x, y) in hr.iter_mut().zip(fr) {
                *x += y;
            }
        }
    }
    let fm = linear_vec(&sc, &p.final_mod);
    let nf = layer_norm_rows(&h[..n_x].to_vec());
    let uf: Mat = nf
        .iter()
        .map(|row| (0..d).map(|k| row[k] * (1.0 + fm[d + k]) + fm[k]).collect())
        .collect();
    linear(&uf, &p.head)
}

// ---- image metrics ----

pub fn unit(v: u8) -> f64 {
    v as f64 / 255.0
}

pub fn mse_oracle(a: &RgbImage, b: &RgbImage) -> f64 {
    let (w, h) = a.dims();
    let mut s = 0.0;
    for y in 0..h {
        for x in 0..w {
            let (p, q) = (a.get(x, y), b.get(x, y));
            for ch in 0..3 {
                let e = unit(p[ch]) - unit(q[ch]);
                s += e * e;
            }
        }
    }
    s / (w * h * 3) as f64
}

pub fn psnr_oracle(a: &RgbImage, b: &RgbImage) -> f64 {
    let m = mse_oracle(a, b);
    if m == 0.0 {
        100.0
    } else {
        (10.0 * (1.0 / m).log10()).min(100.0)
    }
}

fn luma(img: &RgbImage, x: usize, y: usize) -> f64 {
    let p = img.get(x, y);
    0.299 * unit(p[0]) + 0.587 * unit(p[1]) + 0.114 * unit(p[2])
}

/// Direct two-pass window statistics, no summed-area tables.
pub fn ssim_oracle(a: &RgbImage, b: &RgbImage) -> f64 {
    let (w, h) = a.dims();
    let k = 8;
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=h - k {
        for x0 in 0..=w - k {
            let mut pa = Vec::with_capacity(k * k);
            let mut pb = Vec::with_capacity(k * k);
            for y in y0..y0 + k {
                for x in x0..x0 + k {
                    pa.push(luma(a, x, y));
                    pb.push(luma(b, x, y));
                }
            }
            let n = (k * k) as f64;
            let ma = pa.iter().sum::<f64>() / n;
            let mb = pb.iter().sum::<f64>() / n;
            let va = pa.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / n;
            let vb = pb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
            let cov = pa.iter().zip(&pb).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / n;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

fn lin(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB -> Lab with the white point taken as the XYZ of sRGB white.
pub fn lab(p: [u8; 3]) -> [f64; 3] {
    let m = [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ];
    let l = [lin(unit(p[0])), lin(unit(p[1])), lin(unit(p[2]))];
    let f = |t: f64| {
        let e = (6.0f64 / 29.0).powi(3);
        if t > e {
            t.cbrt()
        } else {
            t * (29.0f64 / 6.0).powi(2) / 3.0 + 4.0 / 29.0
        }
    };
    let mut xyz = [0.0; 3];
    for i in 0..3 {
        xyz[i] = (m[i][0] * l[0] + m[i][1] * l[1] + m[i][2] * l[2]) / (m[i][0] + m[i][1] + m[i][2]);
    }
    let (fx, fy, fz) = (f(xyz[0]), f(xyz[1]), f(xyz[2]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// BFS flood fill over 4-neighbours: pixels join when neither is a line
/// pixel and their Lab distance is within `threshold`. Returns one label per
/// pixel (`-1` for line pixels), numbered in raster order of first visit.
pub fn flood_fill_oracle(gt: &RgbImage, line: &RgbImage, threshold: f64, line_threshold: f64) -> Vec<i32> {
    let (w, h) = gt.dims();
    let is_line = |x: usize, y: usize| luma(line, x, y) < line_threshold;
    let mut labels = vec![i32::MIN; w * h];
    let mut next = 0;
    for start in 0..w * h {
        if labels[start] != i32::MIN {
            continue;
        }
        let (sx, sy) = (start % w, start / w);
        if is_line(sx, sy) {
            labels[start] = -1;
            continue;
        }
        labels[start] = next;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            let here = lab(gt.get(x, y));
            let mut nbrs = Vec::with_capacity(4);
            if x > 0 {
                nbrs.push(i - 1);
            }
            if x + 1 < w {
                nbrs.push(i + 1);
            }
            if y > 0 {
                nbrs.push(i - w);
            }
            if y + 1 < h {
                nbrs.push(i + w);
            }
            for j in nbrs {
                if labels[j] != i32::MIN || is_line(j % w, j / w) {
                    continue;
                }
                let there = lab(gt.get(j % w, j / w));
                let de = ((here[0] - there[0]).powi(2) + (here[1] - there[1]).powi(2) + (here[2] - there[2]).powi(2)).sqrt();
                if de <= threshold {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    labels
}

/// Relabels a partition by order of first appearance so two labelings can be compared.
pub fn canonical(labels: &[i32]) -> Vec<i32> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                -1
            } else {
                let n = map.len() as i32;
                *map.entry(l).or_insert(n)
            }
        })
        .collect()
}

// Attention fixtures

pub struct Instance {
    pub seq: UnifiedSequence,
    pub segments: Segments,
    pub kernel: usize,
    pub params: AttentionParams,
}

pub fn random_grid<R: Rng>(rows: usize, cols: usize, d: usize, branch: Branch, rng: &mut R) -> FeatureGrid {
    FeatureGrid::new(Array3::from_shape_simple_fn((rows, cols, d), || normal(rng)), branch)
}

pub fn random_params<R: Rng>(d: usize, heads: usize, rng: &mut R) -> AttentionParams {
    let mut m = || Array2::from_shape_simple_fn((d, d), || normal(rng) / (d as f64).sqrt());
    AttentionParams::new(m(), m(), m(), m(), m(), m(), heads).unwrap()
}

/// Up to 16 tokens: either a conditioned sequence of three small grids or a
/// lone noisy grid.
pub fn instance(seed: u64) -> Instance {
    let mut rng = rng(seed);
    let heads = [1, 2, 4][rng.random_range(0..3)];
    let d = heads * rng.random_range(1..=3);
    let params = random_params(d, heads, &mut rng);
    if rng.random_bool(0.5) {
        let (rows, cols) = [(1, 1), (1, 2), (2, 1), (2, 2), (1, 5), (4, 1)][rng.random_range(0..6)];
        let kernel = rng.random_range(1..=rows.min(cols));
        let x = random_grid(rows, cols, d, Branch::Noisy, &mut rng);
        let l = random_grid(rows, cols, d, Branch::LineArt, &mut rng);
        let r = random_grid(rows, cols, d, Branch::Reference, &mut rng);
        let n = rows * cols;
        Instance {
            seq: assemble(&x, &l, &r).unwrap(),
            segments: vec![(0, rows, cols), (n, rows, cols), (2 * n, rows, cols)],
            kernel,
            params,
        }
    } else {
        let (rows, cols) = [(3, 3), (4, 4), (3, 5), (2, 7), (4, 3)][rng.random_range(0..5)];
        let kernel = rng.random_range(1..=rows.min(cols));
        let x = random_grid(rows, cols, d, Branch::Noisy, &mut rng);
        Instance {
            seq: UnifiedSequence::unconditional(&x).unwrap(),
            segments: vec![(0, rows, cols)],
            kernel,
            params,
        }
    }
}

// Gradient check

pub const FD_EPS: f64 = 1e-4;

/// Relative error between analytic and central-difference derivatives for
/// three entries of every tensor: the largest analytic entry and two random ones.
pub fn fd_check(trainer: &Trainer, batch: &[&EncodedTriplet], draws: &StepDraws, seed: u64) -> Vec<(String, f64)> {
    let (_, grads) = trainer.loss_and_grad(batch, draws).unwrap();
    let mut r = rng(seed);
    let mut report = Vec::new();
    for (k, g) in grads.tensors().into_iter().enumerate() {
        let n = g.data.len();
        let largest = (0..n).max_by(|&a, &b| g.data[a].abs().total_cmp(&g.data[b].abs())).unwrap();
        let mut worst: f64 = 0.0;
        for idx in [largest, r.random_range(0..n), r.random_range(0..n)] {
            let loss_at = |delta: f64| {
                let mut probe = trainer.clone();
                probe.model.params.tensors_mut()[k].data[idx] += delta;
                probe.loss_and_grad(batch, draws).unwrap().0
            };
            let fd = (loss_at(FD_EPS) - loss_at(-FD_EPS)) / (2.0 * FD_EPS);
            let a = g.data[idx];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
        }
        report.push((g.name, worst));
    }
    report
}

// Pair selection

/// Matches between frame 0 and frame `b`, recomputed from the scenes.
pub fn frame_matches(seq: &FrameSequence, b: usize) -> usize {
    let visible = |s: &Scene, p: &Primitive, (x, y): (f64, f64)| {
        let on = x >= 0.0 && y >= 0.0 && x < s.width as f64 && y < s.height as f64;
        on && !s
            .primitives
            .iter()
            .any(|q| q.id != p.id && (q.z, q.id) > (p.z, p.id) && q.contains(x, y))
    };
    let (s0, s1) = (&seq.frames[0], &seq.frames[b]);
    let mut count = 0;
    for p0 in &s0.primitives {
        let p1 = s1.primitives.iter().find(|q| q.id == p0.id).unwrap();
        for (a, c) in p0.contour_samples(8).into_iter().zip(p1.contour_samples(8)) {
            if visible(s0, p0, a) && visible(s1, p1, c) && (a.0 - c.0).hypot(a.1 - c.1) <= seq.gate {
                count += 1;
            }
        }
    }
    count
}

/// Largest interval up to `start` (and the last frame) with enough matches, else 1.
pub fn brute_force_interval(seq: &FrameSequence, start: usize, min: usize) -> usize {
    (1..=start.min(seq.len() - 1))
        .rev()
        .find(|&i| frame_matches(seq, i) >= min)
        .unwrap_or(1)
}
