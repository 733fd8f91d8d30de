//! Multi-head attention over a unified sequence, with an extra context path.
//!
//! The vanilla path is `softmax(QKᵀ/√d_k)V` over every token of every
//! branch. The context path max-pools each image branch, upsamples it back
//! to its grid, projects the result with its own `W_Q'`/`W_K'`, and reuses
//! the vanilla `V`. The hierarchical output is `vanilla + λ·context`, summed
//! after the output projection (which is linear, so the order does not
//! matter).

mod pool;

pub use pool::{pool_and_upsample, KernelSelection, PoolSpec, DEFAULT_INFERENCE_KERNEL, POOL_KERNELS};
pub(crate) use pool::{pool_upsample_backward, pool_upsample_tokens, PoolTrace};

use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::token_space::{SequenceLayout, UnifiedSequence};

/// Projection matrices are stored `d_out x d_in`; a projection is `x · Wᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
    pub w_q_ctx: Array2<f64>,
    pub w_k_ctx: Array2<f64>,
    pub heads: usize,
}

impl AttentionParams {
    pub fn new(
        w_q: Array2<f64>,
        w_k: Array2<f64>,
        w_v: Array2<f64>,
        w_o: Array2<f64>,
        w_q_ctx: Array2<f64>,
        w_k_ctx: Array2<f64>,
        heads: usize,
    ) -> Result<Self> {
        let p = Self {
            w_q,
            w_k,
            w_v,
            w_o,
            w_q_ctx,
            w_k_ctx,
            heads,
        };
        p.validate()?;
        Ok(p)
    }

    /// Gaussian init with std `1/√d`; the context projections start as copies
    /// of `W_Q` and `W_K`.
    pub fn random<R: Rng + ?Sized>(d_model: usize, heads: usize, rng: &mut R) -> Result<Self> {
        let std = 1.0 / (d_model as f64).sqrt();
        let mut m = || Array2::from_shape_simple_fn((d_model, d_model), || std * rng.sample::<f64, _>(StandardNormal));
        let (w_q, w_k, w_v, w_o) = (m(), m(), m(), m());
        Self::new(w_q.clone(), w_k.clone(), w_v, w_o, w_q, w_k, heads)
    }

    pub fn d_model(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn head_dim(&self) -> usize {
        self.d_model() / self.heads
    }

    pub fn matrices(&self) -> [(&'static str, &Array2<f64>); 6] {
        [
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_o", &self.w_o),
            ("w_q_ctx", &self.w_q_ctx),
            ("w_k_ctx", &self.w_k_ctx),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.w_q.nrows();
        if self.heads == 0 || d == 0 || d % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "d_model {d} must be a positive multiple of heads {}",
                self.heads
            )));
        }
        for (name, m) in self.matrices() {
            if m.dim() != (d, d) {
                return Err(Error::DimensionMismatch(format!("{name} is {:?}, expected ({d}, {d})", m.dim())));
            }
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(name.into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AttentionOutput {
    /// Same shape as the input token matrix.
    pub tokens: Array2<f64>,
    /// Per-head softmax matrices of the vanilla path (empty if not computed).
    pub vanilla_weights: Vec<Array2<f64>>,
    /// Per-head softmax matrices of the context path (empty if not computed).
    pub context_weights: Vec<Array2<f64>>,
}

pub(crate) struct ContextCache {
    pooled: Array2<f64>,
    traces: Vec<(usize, PoolTrace)>,
    q: Array2<f64>,
    k: Array2<f64>,
    probs: Vec<Array2<f64>>,
    lambda: f64,
}

pub(crate) struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    context: Option<ContextCache>,
    mixed: Array2<f64>,
}

/// Gradients of one attention layer; matrices share the layout of [`AttentionParams`].
pub(crate) struct AttentionGrads {
    pub dx: Array2<f64>,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
    pub w_q_ctx: Array2<f64>,
    pub w_k_ctx: Array2<f64>,
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Per-head `softmax(q kᵀ/√d_k) v`, heads concatenated along channels.
fn multi_head(q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>, heads: usize) -> (Array2<f64>, Vec<Array2<f64>>) {
    let (n, d) = q.dim();
    let dk = d / heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut out = Array2::zeros((n, d));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        scores.mapv_inplace(|v| v * scale);
        softmax_rows(&mut scores);
        out.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }
    (out, probs)
}

/// Backward of [`multi_head`]: accumulates into `dq`, `dk`, `dv`.
fn multi_head_backward(
    dout: ArrayView2<f64>,
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    probs: &[Array2<f64>],
    dq: &mut Array2<f64>,
    dk: &mut Array2<f64>,
    dv: &mut Array2<f64>,
) {
    let heads = probs.len();
    let d = q.ncols();
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    for (h, p) in probs.iter().enumerate() {
        let cols = s![.., h * hd..(h + 1) * hd];
        let dout_h = dout.slice(cols);
        let dp = dout_h.dot(&v.slice(cols).t());
        let mut dvh = dv.slice_mut(cols);
        dvh += &p.t().dot(&dout_h);
        let row_dot = (&dp * p).sum_axis(Axis(1));
        let mut ds = dp;
        Zip::from(ds.rows_mut())
            .and(p.rows())
            .and(&row_dot)
            .for_each(|mut ds_row, p_row, &rd| {
                Zip::from(&mut ds_row).and(&p_row).for_each(|g, &pv| *g = pv * (*g - rd) * scale);
            });
        let mut dqh = dq.slice_mut(cols);
        dqh += &ds.dot(&k.slice(cols));
        let mut dkh = dk.slice_mut(cols);
        dkh += &ds.t().dot(&q.slice(cols));
    }
}

/// Pool-and-upsample every non-empty image segment of the sequence.
pub(crate) fn pool_sequence(x: ArrayView2<f64>, layout: &SequenceLayout, kernel: usize) -> Result<(Array2<f64>, Vec<(usize, PoolTrace)>)> {
    let mut pooled = Array2::zeros(x.dim());
    let mut traces = Vec::new();
    for seg in layout.segments.iter().filter(|s| s.len > 0) {
        let (rows, cols) = seg.grid.ok_or(Error::NotAnImageBranch(seg.branch))?;
        let (p, trace) = pool_upsample_tokens(x.slice(s![seg.range(), ..]), rows, cols, kernel)?;
        pooled.slice_mut(s![seg.range(), ..]).assign(&p);
        traces.push((seg.start, trace));
    }
    Ok((pooled, traces))
}

fn check_inputs(x: ArrayView2<f64>, p: &AttentionParams) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::EmptySequence);
    }
    if x.ncols() != p.d_model() {
        return Err(Error::DimensionMismatch(format!(
            "tokens have {} channels, params expect {}",
            x.ncols(),
            p.d_model()
        )));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("attention input tokens".into()));
    }
    Ok(())
}

/// Forward pass keeping everything the backward pass needs. `context` is
/// `(kernel, λ)`; `None` runs the vanilla path only.
pub(crate) fn attention_forward(
    x: ArrayView2<f64>,
    layout: &SequenceLayout,
    p: &AttentionParams,
    context: Option<(usize, f64)>,
) -> Result<(Array2<f64>, AttentionCache)> {
    check_inputs(x, p)?;
    let q = x.dot(&p.w_q.t());
    let k = x.dot(&p.w_k.t());
    let v = x.dot(&p.w_v.t());
    let (mut mixed, probs) = multi_head(&q, &k, &v, p.heads);
    let context = match context {
        None => None,
        Some((kernel, lambda)) => {
            if lambda < 0.0 {
                return Err(Error::NegativeLambda(lambda));
            }
            let (pooled, traces) = pool_sequence(x, layout, kernel)?;
            let qc = pooled.dot(&p.w_q_ctx.t());
            let kc = pooled.dot(&p.w_k_ctx.t());
            let (ctx_out, ctx_probs) = multi_head(&qc, &kc, &v, p.heads);
            mixed.scaled_add(lambda, &ctx_out);
            Some(ContextCache {
                pooled,
                traces,
                q: qc,
                k: kc,
                probs: ctx_probs,
                lambda,
            })
        }
    };
    let y = mixed.dot(&p.w_o.t());
    Ok((
        y,
        AttentionCache {
            x: x.to_owned(),
            q,
            k,
            v,
            probs,
            context,
            mixed,
        },
    ))
}

pub(crate) fn attention_backward(dy: ArrayView2<f64>, cache: &AttentionCache, p: &AttentionParams) -> AttentionGrads {
    let (n, d) = cache.x.dim();
    let w_o = dy.t().dot(&cache.mixed);
    let dmixed = dy.dot(&p.w_o);
    let mut dq = Array2::zeros((n, d));
    let mut dk = Array2::zeros((n, d));
    let mut dv = Array2::zeros((n, d));
    multi_head_backward(dmixed.view(), &cache.q, &cache.k, &cache.v, &cache.probs, &mut dq, &mut dk, &mut dv);
    let mut dx = dq.dot(&p.w_q) + dk.dot(&p.w_k);
    let (w_q_ctx, w_k_ctx) = match &cache.context {
        None => (Array2::zeros((d, d)), Array2::zeros((d, d))),
        Some(ctx) => {
            let dctx = &dmixed * ctx.lambda;
            let mut dqc = Array2::zeros((n, d));
            let mut dkc = Array2::zeros((n, d));
            multi_head_backward(dctx.view(), &ctx.q, &ctx.k, &cache.v, &ctx.probs, &mut dqc, &mut dkc, &mut dv);
            let dpooled = dqc.dot(&p.w_q_ctx) + dkc.dot(&p.w_k_ctx);
            for (start, trace) in &ctx.traces {
                let seg = s![*start..*start + trace.token_count(), ..];
                let g = pool_upsample_backward(dpooled.slice(seg), trace);
                let mut dst = dx.slice_mut(seg);
                dst += &g;
            }
            (dqc.t().dot(&ctx.pooled), dkc.t().dot(&ctx.pooled))
        }
    };
    dx += &dv.dot(&p.w_v);
    AttentionGrads {
        dx,
        w_q: dq.t().dot(&cache.x),
        w_k: dk.t().dot(&cache.x),
        w_v: dv.t().dot(&cache.x),
        w_o,
        w_q_ctx,
        w_k_ctx,
    }
}

/// Vanilla multi-head attention jointly over all tokens of all branches.
pub fn vanilla_attention(u: &UnifiedSequence, p: &AttentionParams) -> Result<AttentionOutput> {
    p.validate()?;
    let x = u.tokens();
    let (tokens, cache) = attention_forward(x.view(), u.layout(), p, None)?;
    Ok(AttentionOutput {
        tokens,
        vanilla_weights: cache.probs,
        context_weights: Vec::new(),
    })
}

/// Context-aware attention: queries and keys from pooled-then-upsampled
/// image features, values shared with the vanilla path.
pub fn context_attention(u: &UnifiedSequence, p: &AttentionParams, spec: &PoolSpec) -> Result<AttentionOutput> {
    p.validate()?;
    let x = u.tokens();
    check_inputs(x.view(), p)?;
    let v = x.dot(&p.w_v.t());
    let (pooled, _) = pool_sequence(x.view(), u.layout(), spec.kernel)?;
    let qc = pooled.dot(&p.w_q_ctx.t());
    let kc = pooled.dot(&p.w_k_ctx.t());
    let (out, probs) = multi_head(&qc, &kc, &v, p.heads);
    Ok(AttentionOutput {
        tokens: out.dot(&p.w_o.t()),
        vanilla_weights: Vec::new(),
        context_weights: probs,
    })
}

/// `vanilla + λ · context`, token-wise, without renormalisation.
pub fn hierarchical_attention(u: &UnifiedSequence, p: &AttentionParams, spec: &PoolSpec, lambda: f64) -> Result<AttentionOutput> {
    if !(lambda >= 0.0) {
        return Err(Error::NegativeLambda(lambda));
    }
    p.validate()?;
    let x = u.tokens();
    let (tokens, cache) = attention_forward(x.view(), u.layout(), p, Some((spec.kernel, lambda)))?;
    Ok(AttentionOutput {
        tokens,
        vanilla_weights: cache.probs,
        context_weights: cache.context.map(|c| c.probs).unwrap_or_default(),
    })
}
