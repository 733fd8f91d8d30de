//! Low-rank additive adapters `W + s·B·A`.

use ndarray::Array2;
use rand::Rng;

use super::layers::gaussian;
use super::tensors::tensor_fields;
use crate::attention::AttentionParams;

#[derive(Clone, Debug, PartialEq)]
pub struct LoraAdapter {
    /// `rank x d_in`
    pub a: Array2<f64>,
    /// `d_out x rank`
    pub b: Array2<f64>,
}

tensor_fields!(LoraAdapter { a, b });

impl LoraAdapter {
    /// `A` Gaussian with std `1/√d_in`, `B` zero: a no-op until trained.
    pub fn new<R: Rng + ?Sized>(d_out: usize, d_in: usize, rank: usize, rng: &mut R) -> Self {
        Self {
            a: gaussian(rank, d_in, 1.0 / (d_in as f64).sqrt(), rng),
            b: Array2::zeros((d_out, rank)),
        }
    }

    pub fn zeros(d_out: usize, d_in: usize, rank: usize) -> Self {
        Self {
            a: Array2::zeros((rank, d_in)),
            b: Array2::zeros((d_out, rank)),
        }
    }

    pub fn rank(&self) -> usize {
        self.a.nrows()
    }

    /// Materialised update `s·B·A`.
    pub fn delta(&self, scale: f64) -> Array2<f64> {
        self.b.dot(&self.a) * scale
    }

    /// `W + s·B·A`.
    pub fn apply(&self, w: &Array2<f64>, scale: f64) -> Array2<f64> {
        let mut out = w.clone();
        out.scaled_add(scale, &self.b.dot(&self.a));
        out
    }

    /// Adds factor gradients given `dL/dW_eff`.
    pub fn accumulate_grad(&self, d_w: &Array2<f64>, scale: f64, grad: &mut LoraAdapter) {
        grad.a.scaled_add(scale, &self.b.t().dot(d_w));
        grad.b.scaled_add(scale, &d_w.dot(&self.a.t()));
    }
}

/// One adapter per attention projection, including the context path.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionLora {
    pub q: LoraAdapter,
    pub k: LoraAdapter,
    pub v: LoraAdapter,
    pub o: LoraAdapter,
    pub q_ctx: LoraAdapter,
    pub k_ctx: LoraAdapter,
}

tensor_fields!(AttentionLora { q, k, v, o, q_ctx, k_ctx });

impl AttentionLora {
    pub fn new<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> Self {
        let mut f = || LoraAdapter::new(d, d, rank, rng);
        Self {
            q: f(),
            k: f(),
            v: f(),
            o: f(),
            q_ctx: f(),
            k_ctx: f(),
        }
    }

    pub fn zeros(d: usize, rank: usize) -> Self {
        let f = || LoraAdapter::zeros(d, d, rank);
        Self {
            q: f(),
            k: f(),
            v: f(),
            o: f(),
            q_ctx: f(),
            k_ctx: f(),
        }
    }

    pub fn adapters(&self) -> [&LoraAdapter; 6] {
        [&self.q, &self.k, &self.v, &self.o, &self.q_ctx, &self.k_ctx]
    }

    /// Attention parameters with every adapter folded in.
    pub fn effective(&self, base: &AttentionParams, scale: f64) -> AttentionParams {
        AttentionParams {
            w_q: self.q.apply(&base.w_q, scale),
            w_k: self.k.apply(&base.w_k, scale),
            w_v: self.v.apply(&base.w_v, scale),
            w_o: self.o.apply(&base.w_o, scale),
            w_q_ctx: self.q_ctx.apply(&base.w_q_ctx, scale),
            w_k_ctx: self.k_ctx.apply(&base.w_k_ctx, scale),
            heads: base.heads,
        }
    }
}
