//! Named, flat views over every parameter tensor of a model.

use ndarray::{Array1, Array2};

pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

/// Enumerates parameter tensors in a fixed order with dotted names.
pub trait Tensors {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>);

    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        self.visit_mut("", &mut out);
        out
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Tensors for Array1<f64> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        out.push(TensorRef {
            name: prefix.to_string(),
            shape: vec![self.len()],
            data: self.as_slice().expect("owned parameters are contiguous"),
        });
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        let shape = vec![self.len()];
        out.push(TensorMut {
            name: prefix.to_string(),
            shape,
            data: self.as_slice_mut().expect("owned parameters are contiguous"),
        });
    }
}

impl Tensors for Array2<f64> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        out.push(TensorRef {
            name: prefix.to_string(),
            shape: self.shape().to_vec(),
            data: self.as_slice().expect("owned parameters are contiguous"),
        });
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        let shape = self.shape().to_vec();
        out.push(TensorMut {
            name: prefix.to_string(),
            shape,
            data: self.as_slice_mut().expect("owned parameters are contiguous"),
        });
    }
}

impl<T: Tensors> Tensors for Vec<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        for (i, t) in self.iter().enumerate() {
            t.visit(&join(prefix, &i.to_string()), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        for (i, t) in self.iter_mut().enumerate() {
            t.visit_mut(&join(prefix, &i.to_string()), out);
        }
    }
}

macro_rules! tensor_fields {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::model::tensors::Tensors for $ty {
            fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<$crate::model::tensors::TensorRef<'a>>) {
                $( $crate::model::tensors::Tensors::visit(&self.$field, &$crate::model::tensors::join(prefix, stringify!($field)), out); )*
            }
            fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<$crate::model::tensors::TensorMut<'a>>) {
                $( $crate::model::tensors::Tensors::visit_mut(&mut self.$field, &$crate::model::tensors::join(prefix, stringify!($field)), out); )*
            }
        }
    };
}
pub(crate) use tensor_fields;

tensor_fields!(crate::attention::AttentionParams {
    w_q,
    w_k,
    w_v,
    w_o,
    w_q_ctx,
    w_k_ctx
});
