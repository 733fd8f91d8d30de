//! Dense building blocks with hand-written backward passes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::tensors::tensor_fields;

pub(crate) const LN_EPS: f64 = 1e-6;

pub(crate) fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || std * rng.sample::<f64, _>(StandardNormal))
}

/// `y = x · Wᵀ + b`, with `W` stored `d_out x d_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

tensor_fields!(Linear { w, b });

impl Linear {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            w: Array2::zeros((d_out, d_in)),
            b: Array1::zeros(d_out),
        }
    }

    pub fn random<R: Rng + ?Sized>(d_in: usize, d_out: usize, std: f64, rng: &mut R) -> Self {
        Self {
            w: gaussian(d_out, d_in, std, rng),
            b: Array1::zeros(d_out),
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    pub fn forward_vec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.w.dot(&x) + &self.b
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.w += &dy.t().dot(&x);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w)
    }

    pub fn backward_vec(&self, x: ArrayView1<f64>, dy: ArrayView1<f64>, grad: &mut Linear) -> Array1<f64> {
        for (mut row, &g) in grad.w.rows_mut().into_iter().zip(dy.iter()) {
            row.scaled_add(g, &x);
        }
        grad.b += &dy;
        self.w.t().dot(&dy)
    }
}

/// Row-wise normalisation without affine terms. Returns `(n, 1/σ per row)`.
pub(crate) fn layer_norm(x: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
    let d = x.ncols() as f64;
    let mut n = x.to_owned();
    let mut inv = Array1::zeros(x.nrows());
    for (mut row, inv_std) in n.rows_mut().into_iter().zip(inv.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *inv_std = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| v * *inv_std);
    }
    (n, inv)
}

pub(crate) fn layer_norm_backward(dn: ArrayView2<f64>, n: &Array2<f64>, inv_std: &Array1<f64>) -> Array2<f64> {
    let d = n.ncols() as f64;
    let mut dx = dn.to_owned();
    for ((mut g, nr), &s) in dx.rows_mut().into_iter().zip(n.rows()).zip(inv_std.iter()) {
        let mean_g = g.sum() / d;
        let mean_gn = g.iter().zip(nr.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        for (gv, &nv) in g.iter_mut().zip(nr.iter()) {
            *gv = s * (*gv - mean_g - nv * mean_gn);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        (f(x + 1e-6) - f(x - 1e-6)) / 2e-6
    }

    #[test]
    fn activation_derivatives() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            assert!((gelu_grad(x) - fd(gelu, x)).abs() < 1e-8);
            assert!((silu_grad(x) - fd(silu, x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardised() {
        let x = array![[1.0, 2.0, 3.0, 4.0], [-1.0, 0.0, 0.0, 5.0]];
        let (n, _) = layer_norm(x.view());
        for row in n.rows() {
            assert!(row.sum().abs() < 1e-12);
            assert!((row.iter().map(|v| v * v).sum::<f64>() / 4.0 - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn layer_norm_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gaussian(3, 5, 1.0, &mut rng);
        let g = gaussian(3, 5, 1.0, &mut rng);
        let loss = |x: &Array2<f64>| (&layer_norm(x.view()).0 * &g).sum();
        let (n, inv) = layer_norm(x.view());
        let dx = layer_norm_backward(g.view(), &n, &inv);
        for i in 0..3 {
            for j in 0..5 {
                let (mut a, mut b) = (x.clone(), x.clone());
                a[[i, j]] += 1e-6;
                b[[i, j]] -= 1e-6;
                let num = (loss(&a) - loss(&b)) / 2e-6;
                assert!((num - dx[[i, j]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn linear_backward_shapes_and_values() {
        let lin = Linear {
            w: array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            b: array![0.5, 0.0, -0.5],
        };
        let x = array![[1.0, -1.0]];
        assert_eq!(lin.forward(x.view()), array![[-0.5, -1.0, -1.5]]);
        let mut grad = Linear::zeros(2, 3);
        let dx = lin.backward(x.view(), array![[1.0, 0.0, 1.0]].view(), &mut grad);
        assert_eq!(dx, array![[6.0, 8.0]]);
        assert_eq!(grad.w, array![[1.0, -1.0], [0.0, 0.0], [1.0, -1.0]]);
        assert_eq!(grad.b, array![1.0, 0.0, 1.0]);
        let mut gv = Linear::zeros(2, 3);
        let dxv = lin.backward_vec(x.row(0), array![1.0, 0.0, 1.0].view(), &mut gv);
        assert_eq!(dxv, array![6.0, 8.0]);
        assert_eq!(gv, grad);
    }
}
