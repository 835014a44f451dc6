//! Dense layers with hand-written backward passes.
//!
//! Everything is `f64`; finite-difference checks in [`gradcheck`] are only
//! meaningful at double precision.

mod attention;
mod gradcheck;
mod lstm;
mod softmax;

pub use attention::{attention_backward, attention_pool, AttentionOutput, AttentionParams};
pub use gradcheck::{finite_difference_check, GradCheckOptions, GradCheckReport};
pub use lstm::{
    bilstm_backward, bilstm_encode, bilstm_encode_masked, lstm_cell_backward, lstm_cell_step,
    BiLstmOutput, LstmCellParams, LstmStep,
};
pub use softmax::{dense_softmax_xent, softmax_in_place, SoftmaxXent};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::Rng;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix data".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Glorot/Xavier uniform initialization.
    pub fn xavier(rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Self::uniform(rows, cols, limit, rng)
    }

    pub fn uniform(rows: usize, cols: usize, limit: f64, rng: &mut Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `out += self · x`
    pub fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// `out += selfᵀ · y`
    pub fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&yr, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if yr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += yr * w;
            }
        }
    }

    /// `self += y · xᵀ`
    pub fn outer_acc(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (&yr, row) in y.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if yr == 0.0 {
                continue;
            }
            for (w, v) in row.iter_mut().zip(x) {
                *w += yr * v;
            }
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

/// A borrowed, named view of one parameter tensor.
#[derive(Debug, Clone, Copy)]
pub struct TensorRef<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

/// A collection of trainable tensors with stable names and a fixed order.
///
/// `tensors` and `tensors_mut` must enumerate the same tensors in the same
/// order; the same type doubles as its own gradient container.
pub trait ParamSet {
    fn tensors(&self) -> Vec<(String, TensorRef<'_>)>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|(_, t)| t.data.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }
}

pub(crate) fn prefixed<'a>(
    prefix: &str,
    items: Vec<(String, TensorRef<'a>)>,
) -> Vec<(String, TensorRef<'a>)> {
    items
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}

pub(crate) fn vec_ref(v: &[f64]) -> TensorRef<'_> {
    TensorRef {
        rows: 1,
        cols: v.len(),
        data: v,
    }
}

pub(crate) fn mat_ref(m: &Matrix) -> TensorRef<'_> {
    TensorRef {
        rows: m.rows,
        cols: m.cols,
        data: &m.data,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

/// Flat, name-addressed snapshot of a [`ParamSet`] with gradient slots.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore {
    pub tensors: Vec<NamedTensor>,
}

impl ParamStore {
    pub fn capture(params: &impl ParamSet) -> Self {
        let tensors = params
            .tensors()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                rows: t.rows,
                cols: t.cols,
                value: t.data.to_vec(),
                grad: vec![0.0; t.data.len()],
            })
            .collect();
        ParamStore { tensors }
    }

    /// Copies gradient values out of a same-shaped parameter set.
    pub fn set_grads(&mut self, grads: &impl ParamSet) -> Result<()> {
        let src = grads.tensors();
        if src.len() != self.tensors.len() {
            return Err(Error::DimensionMismatch {
                expected: self.tensors.len(),
                found: src.len(),
            });
        }
        for (dst, (name, t)) in self.tensors.iter_mut().zip(src) {
            if dst.name != name || dst.value.len() != t.data.len() {
                return Err(Error::invalid(format!("gradient tensor `{name}` does not match `{}`", dst.name)));
            }
            dst.grad.copy_from_slice(t.data);
        }
        Ok(())
    }

    /// Writes the stored values back into a same-shaped parameter set.
    pub fn apply_to(&self, params: &mut impl ParamSet) -> Result<()> {
        let names: Vec<(String, usize)> = params
            .tensors()
            .into_iter()
            .map(|(n, t)| (n, t.data.len()))
            .collect();
        if names.len() != self.tensors.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                found: self.tensors.len(),
            });
        }
        for ((dst, (name, len)), src) in params.tensors_mut().into_iter().zip(names).zip(&self.tensors) {
            if src.name != name || src.value.len() != len {
                return Err(Error::invalid(format!("stored tensor `{}` does not match `{name}`", src.name)));
            }
            dst.copy_from_slice(&src.value);
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}
