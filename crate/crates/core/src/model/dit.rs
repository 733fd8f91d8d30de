//! The denoiser: patch-token embedding, a stack of timestep-modulated
//! attention blocks, and a velocity head over the noisy-latent tokens.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::config::ModelConfig;
use super::layers::{gaussian, gelu, gelu_grad, layer_norm, layer_norm_backward, silu, silu_grad, Linear};
use super::lora::AttentionLora;
use super::tensors::{tensor_fields, Tensors};
use crate::attention::{attention_backward, attention_forward, AttentionCache, AttentionParams};
use crate::error::{Error, Result};
use crate::rng::{stream, tags};
use crate::token_space::{assemble, positional_encoding, Branch, FeatureGrid, SequenceLayout, UnifiedSequence};

#[derive(Clone, Debug, PartialEq)]
pub struct DitBlock {
    pub ln1_gamma: Array1<f64>,
    pub ln1_beta: Array1<f64>,
    pub attn: AttentionParams,
    pub lora: AttentionLora,
    pub ln2_gamma: Array1<f64>,
    pub ln2_beta: Array1<f64>,
    pub ff1: Linear,
    pub ff2: Linear,
    /// Timestep signal -> (shift1, scale1, shift2, scale2).
    pub modulation: Linear,
}

tensor_fields!(DitBlock {
    ln1_gamma,
    ln1_beta,
    attn,
    lora,
    ln2_gamma,
    ln2_beta,
    ff1,
    ff2,
    modulation
});

/// Every trainable tensor. Gradients and optimiser moments use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct DitParams {
    pub embed: Linear,
    /// One learned offset per image branch: noisy, line art, reference.
    pub branch_embed: Array2<f64>,
    pub time1: Linear,
    pub time2: Linear,
    pub blocks: Vec<DitBlock>,
    /// Timestep signal -> (shift, scale) of the output normalisation.
    pub final_mod: Linear,
    pub head: Linear,
}

tensor_fields!(DitParams {
    embed,
    branch_embed,
    time1,
    time2,
    blocks,
    final_mod,
    head
});

fn branch_row(b: Branch) -> Option<usize> {
    match b {
        Branch::Noisy => Some(0),
        Branch::Text => None,
        Branch::LineArt => Some(1),
        Branch::Reference => Some(2),
    }
}

impl DitParams {
    pub fn zeros(c: &ModelConfig) -> Self {
        let d = c.d_model;
        let hidden = d * c.ffn_mult;
        let z = || Array2::zeros((d, d));
        let block = || DitBlock {
            ln1_gamma: Array1::zeros(d),
            ln1_beta: Array1::zeros(d),
            attn: AttentionParams {
                w_q: z(),
                w_k: z(),
                w_v: z(),
                w_o: z(),
                w_q_ctx: z(),
                w_k_ctx: z(),
                heads: c.heads,
            },
            lora: AttentionLora::zeros(d, c.rank),
            ln2_gamma: Array1::zeros(d),
            ln2_beta: Array1::zeros(d),
            ff1: Linear::zeros(d, hidden),
            ff2: Linear::zeros(hidden, d),
            modulation: Linear::zeros(d, 4 * d),
        };
        Self {
            embed: Linear::zeros(d, d),
            branch_embed: Array2::zeros((3, d)),
            time1: Linear::zeros(d, d),
            time2: Linear::zeros(d, d),
            blocks: (0..c.depth).map(|_| block()).collect(),
            final_mod: Linear::zeros(d, 2 * d),
            head: Linear::zeros(d, d),
        }
    }

    /// Seeded initialisation: Gaussian weights scaled by fan-in, small
    /// modulation and head weights, unit layer-norm gains, zero LoRA `B`.
    pub fn init(c: &ModelConfig) -> Result<Self> {
        let d = c.d_model;
        let hidden = d * c.ffn_mult;
        let mut rng = stream(c.seed, tags::INIT, 0);
        let fan = |n: usize| 1.0 / (n as f64).sqrt();
        let embed = Linear::random(d, d, fan(d), &mut rng);
        let branch_embed = gaussian(3, d, 0.1, &mut rng);
        let time1 = Linear::random(d, d, fan(d), &mut rng);
        let time2 = Linear::random(d, d, fan(d), &mut rng);
        let mut blocks = Vec::with_capacity(c.depth);
        for _ in 0..c.depth {
            let attn = AttentionParams::random(d, c.heads, &mut rng)?;
            let lora = AttentionLora::new(d, c.rank, &mut rng);
            blocks.push(DitBlock {
                ln1_gamma: Array1::ones(d),
                ln1_beta: Array1::zeros(d),
                attn,
                lora,
                ln2_gamma: Array1::ones(d),
                ln2_beta: Array1::zeros(d),
                ff1: Linear::random(d, hidden, fan(d), &mut rng),
                ff2: Linear::random(hidden, d, fan(hidden), &mut rng),
                modulation: Linear::random(d, 4 * d, 0.02, &mut rng),
            });
        }
        let final_mod = Linear::random(d, 2 * d, 0.02, &mut rng);
        let head = Linear::random(d, d, fan(d), &mut rng);
        Ok(Self {
            embed,
            branch_embed,
            time1,
            time2,
            blocks,
            final_mod,
            head,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// Per-call switches for the attention blend.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    /// Context-path weight.
    pub lambda: f64,
    pub kernel: usize,
    /// Evaluate the context path at all.
    pub context: bool,
}

/// Sinusoidal embedding of a scalar: cosines then sines over `d/2` log-spaced frequencies.
pub fn timestep_embedding(value: f64, d: usize) -> Array1<f64> {
    let half = d / 2;
    let mut out = Array1::zeros(d);
    for k in 0..half {
        let freq = (-(10000f64).ln() * k as f64 / half as f64).exp();
        out[k] = (value * freq).cos();
        out[half + k] = (value * freq).sin();
    }
    out
}

/// Noise level used by the timestep embedding.
pub const TIME_SCALE: f64 = 1000.0;

pub(crate) struct BlockCache {
    eff: AttentionParams,
    n1: Array2<f64>,
    inv1: Array1<f64>,
    a1: Array2<f64>,
    attn: AttentionCache,
    n2: Array2<f64>,
    inv2: Array1<f64>,
    a2: Array2<f64>,
    u2: Array2<f64>,
    f1: Array2<f64>,
    g: Array2<f64>,
    modulation: Array1<f64>,
}

pub(crate) struct ForwardCache {
    x_in: Array2<f64>,
    layout: SequenceLayout,
    temb: Array1<f64>,
    c1: Array1<f64>,
    c1a: Array1<f64>,
    c: Array1<f64>,
    sc: Array1<f64>,
    blocks: Vec<BlockCache>,
    nf: Array2<f64>,
    invf: Array1<f64>,
    uf: Array2<f64>,
    final_mod: Array1<f64>,
    n_x: usize,
}

/// `u = (n·γ + β)·(1 + scale) + shift`, row-broadcast. Returns `(n·γ + β, u)`.
fn modulate(
    n: &Array2<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
    shift: ArrayView1<f64>,
    scale: ArrayView1<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let a = n * gamma + beta;
    let u = &a * &scale.mapv(|v| 1.0 + v) + &shift;
    (a, u)
}

/// Backward of [`modulate`]; accumulates `γ`, `β` gradients and returns `(dn, dshift, dscale)`.
#[allow(clippy::too_many_arguments)]
fn modulate_backward(
    du: &Array2<f64>,
    n: &Array2<f64>,
    a: &Array2<f64>,
    gamma: &Array1<f64>,
    scale: ArrayView1<f64>,
    d_gamma: &mut Array1<f64>,
    d_beta: &mut Array1<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let dshift = du.sum_axis(Axis(0));
    let dscale = (du * a).sum_axis(Axis(0));
    let da = du * &scale.mapv(|v| 1.0 + v);
    *d_gamma += &(&da * n).sum_axis(Axis(0));
    *d_beta += &da.sum_axis(Axis(0));
    (da * gamma, dshift, dscale)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DitModel {
    pub config: ModelConfig,
    pub params: DitParams,
}

impl DitModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = DitParams::init(&config)?;
        Ok(Self { config, params })
    }

    /// Starts the context projections from the vanilla query/key weights.
    pub fn copy_query_key_to_context(&mut self) {
        for b in &mut self.params.blocks {
            b.attn.w_q_ctx = b.attn.w_q.clone();
            b.attn.w_k_ctx = b.attn.w_k.clone();
        }
    }

    /// Options the sampler uses at integer timestep `t`.
    pub fn options_at(&self, t: u32) -> Result<ForwardOptions> {
        Ok(ForwardOptions {
            lambda: self.config.schedule.lambda_at(t)?,
            kernel: self.config.sample_kernel(),
            context: self.config.hier_attention,
        })
    }

    pub fn sigma_of(&self, t: u32) -> f64 {
        t as f64 / self.config.schedule.total_steps as f64
    }

    /// Velocity prediction for the noisy grid at integer timestep `t`,
    /// conditioned on line art and reference.
    pub fn predict_velocity(&self, x_t: &FeatureGrid, line: &FeatureGrid, reference: &FeatureGrid, t: u32) -> Result<FeatureGrid> {
        let opts = self.options_at(t)?;
        self.predict_velocity_with(x_t, Some((line, reference)), self.sigma_of(t), &opts)
    }

    pub fn predict_velocity_with(
        &self,
        x_t: &FeatureGrid,
        cond: Option<(&FeatureGrid, &FeatureGrid)>,
        sigma: f64,
        opts: &ForwardOptions,
    ) -> Result<FeatureGrid> {
        let seq = self.sequence(x_t, cond)?;
        let (out, _) = self.forward(&seq, sigma, opts)?;
        FeatureGrid::from_token_matrix(out.view(), x_t.rows(), x_t.cols(), Branch::Noisy)
    }

    pub(crate) fn sequence(&self, x_t: &FeatureGrid, cond: Option<(&FeatureGrid, &FeatureGrid)>) -> Result<UnifiedSequence> {
        let d = self.config.d_model;
        for g in std::iter::once(x_t).chain(cond.into_iter().flat_map(|(l, r)| [l, r])) {
            if g.d_model() != d {
                return Err(Error::DimensionMismatch(format!("grid has d_model {}, model {d}", g.d_model())));
            }
        }
        match cond {
            Some((line, reference)) => assemble(x_t, line, reference),
            None => UnifiedSequence::unconditional(x_t),
        }
    }

    fn time_signal(&self, sigma: f64) -> (Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>) {
        let p = &self.params;
        let temb = timestep_embedding(sigma * TIME_SCALE, self.config.d_model);
        let c1 = p.time1.forward_vec(temb.view());
        let c1a = c1.mapv(silu);
        let c = p.time2.forward_vec(c1a.view());
        let sc = c.mapv(silu);
        (temb, c1, c1a, c, sc)
    }

    /// Embedded tokens: projection + positional encoding + branch offset.
    fn embed(&self, seq: &UnifiedSequence) -> (Array2<f64>, Array2<f64>) {
        let x_in = seq.tokens();
        let mut e = self.params.embed.forward(x_in.view()) + positional_encoding(&seq.positions(), self.config.d_model);
        for seg in &seq.layout().segments {
            if let Some(r) = branch_row(seg.branch) {
                let mut rows = e.slice_mut(s![seg.range(), ..]);
                rows += &self.params.branch_embed.row(r);
            }
        }
        (x_in, e)
    }

    /// Full forward pass; returns velocity tokens of the noisy segment and the cache.
    pub(crate) fn forward(&self, seq: &UnifiedSequence, sigma: f64, opts: &ForwardOptions) -> Result<(Array2<f64>, ForwardCache)> {
        let d = self.config.d_model;
        let p = &self.params;
        let layout = seq.layout().clone();
        let n_x = layout.segment(Branch::Noisy).len;
        let (temb, c1, c1a, c, sc) = self.time_signal(sigma);
        let (x_in, mut h) = self.embed(seq);
        let context = opts.context.then_some((opts.kernel, opts.lambda));
        let mut caches = Vec::with_capacity(p.blocks.len());
        for (l, blk) in p.blocks.iter().enumerate() {
            let m = blk.modulation.forward_vec(sc.view());
            let (n1, inv1) = layer_norm(h.view());
            let (a1, u1) = modulate(&n1, &blk.ln1_gamma, &blk.ln1_beta, m.slice(s![0..d]), m.slice(s![d..2 * d]));
            let eff = blk.lora.effective(&blk.attn, self.config.lora_scale);
            let (att, attn_cache) = attention_forward(u1.view(), &layout, &eff, context)?;
            h += &att;
            let (n2, inv2) = layer_norm(h.view());
            let (a2, u2) = modulate(&n2, &blk.ln2_gamma, &blk.ln2_beta, m.slice(s![2 * d..3 * d]), m.slice(s![3 * d..]));
            let f1 = blk.ff1.forward(u2.view());
            let g = f1.mapv(gelu);
            h += &blk.ff2.forward(g.view());
            if !h.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteActivation(l));
            }
            caches.push(BlockCache {
                eff,
                n1,
                inv1,
                a1,
                attn: attn_cache,
                n2,
                inv2,
                a2,
                u2,
                f1,
                g,
                modulation: m,
            });
        }
        let fm = p.final_mod.forward_vec(sc.view());
        let (nf, invf) = layer_norm(h.slice(s![0..n_x, ..]));
        let uf = &nf * &fm.slice(s![d..]).mapv(|v| 1.0 + v) + &fm.slice(s![0..d]);
        let out = p.head.forward(uf.view());
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteActivation(p.blocks.len()));
        }
        Ok((
            out,
            ForwardCache {
                x_in,
                layout,
                temb,
                c1,
                c1a,
                c,
                sc,
                blocks: caches,
                nf,
                invf,
                uf,
                final_mod: fm,
                n_x,
            },
        ))
    }

    /// Accumulates `dL/dθ` into `grads` given `dL/d(out)`.
    pub(crate) fn backward(&self, cache: &ForwardCache, dout: ArrayView2<f64>, grads: &mut DitParams) {
        let d = self.config.d_model;
        let p = &self.params;
        let n = cache.x_in.nrows();
        let mut dsc = Array1::<f64>::zeros(d);

        // Output head and final modulation.
        let duf = p.head.backward(cache.uf.view(), dout, &mut grads.head);
        let scale_f = cache.final_mod.slice(s![d..]);
        let dnf = &duf * &scale_f.mapv(|v| 1.0 + v);
        let dfm = concatenate![Axis(0), duf.sum_axis(Axis(0)), (&duf * &cache.nf).sum_axis(Axis(0))];
        dsc += &p.final_mod.backward_vec(cache.sc.view(), dfm.view(), &mut grads.final_mod);
        let mut dh = Array2::<f64>::zeros((n, d));
        dh.slice_mut(s![0..cache.n_x, ..])
            .assign(&layer_norm_backward(dnf.view(), &cache.nf, &cache.invf));

        for (l, (blk, bc)) in p.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let gb = &mut grads.blocks[l];
            let m = &bc.modulation;
            // Feed-forward branch.
            let dg = blk.ff2.backward(bc.g.view(), dh.view(), &mut gb.ff2);
            let df1 = dg * &bc.f1.mapv(gelu_grad);
            let du2 = blk.ff1.backward(bc.u2.view(), df1.view(), &mut gb.ff1);
            let (dn2, dshift2, dscale2) = modulate_backward(
                &du2,
                &bc.n2,
                &bc.a2,
                &blk.ln2_gamma,
                m.slice(s![3 * d..]),
                &mut gb.ln2_gamma,
                &mut gb.ln2_beta,
            );
            dh += &layer_norm_backward(dn2.view(), &bc.n2, &bc.inv2);
            // Attention branch.
            let ag = attention_backward(dh.view(), &bc.attn, &bc.eff);
            let s = self.config.lora_scale;
            for (dw, base, lora, glora) in [
                (&ag.w_q, &mut gb.attn.w_q, &blk.lora.q, &mut gb.lora.q),
                (&ag.w_k, &mut gb.attn.w_k, &blk.lora.k, &mut gb.lora.k),
                (&ag.w_v, &mut gb.attn.w_v, &blk.lora.v, &mut gb.lora.v),
                (&ag.w_o, &mut gb.attn.w_o, &blk.lora.o, &mut gb.lora.o),
                (&ag.w_q_ctx, &mut gb.attn.w_q_ctx, &blk.lora.q_ctx, &mut gb.lora.q_ctx),
                (&ag.w_k_ctx, &mut gb.attn.w_k_ctx, &blk.lora.k_ctx, &mut gb.lora.k_ctx),
            ] {
                *base += dw;
                lora.accumulate_grad(dw, s, glora);
            }
            let (dn1, dshift1, dscale1) = modulate_backward(
                &ag.dx,
                &bc.n1,
                &bc.a1,
                &blk.ln1_gamma,
                m.slice(s![d..2 * d]),
                &mut gb.ln1_gamma,
                &mut gb.ln1_beta,
            );
            dh += &layer_norm_backward(dn1.view(), &bc.n1, &bc.inv1);
            let dm = concatenate![Axis(0), dshift1, dscale1, dshift2, dscale2];
            dsc += &blk.modulation.backward_vec(cache.sc.view(), dm.view(), &mut gb.modulation);
        }

        // Embedding.
        p.embed.backward(cache.x_in.view(), dh.view(), &mut grads.embed);
        for seg in &cache.layout.segments {
            if let Some(r) = branch_row(seg.branch) {
                let mut row = grads.branch_embed.row_mut(r);
                row += &dh.slice(s![seg.range(), ..]).sum_axis(Axis(0));
            }
        }
        // Timestep network.
        let dc = &dsc * &cache.c.mapv(silu_grad);
        let dc1a = p.time2.backward_vec(cache.c1a.view(), dc.view(), &mut grads.time2);
        let dc1 = &dc1a * &cache.c1.mapv(silu_grad);
        p.time1.backward_vec(cache.temb.view(), dc1.view(), &mut grads.time1);
    }
}

/// Mean squared error and its gradient with respect to `pred`.
pub(crate) fn mse_with_grad(pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
    let diff = pred - target;
    let n = diff.len() as f64;
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / n;
    (loss, diff * (2.0 / n))
}
