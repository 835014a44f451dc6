use super::Matrix;
use crate::error::{Error, Result};

/// Numerically stable softmax; `-inf` entries map to exactly zero.
pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = if *x == f64::NEG_INFINITY { 0.0 } else { (*x - max).exp() };
        total += *x;
    }
    xs.iter_mut().for_each(|x| *x /= total);
}

#[derive(Debug, Clone)]
pub struct SoftmaxXent {
    pub probabilities: Vec<f64>,
    pub loss: f64,
    pub d_input: Vec<f64>,
    pub d_weight: Matrix,
    pub d_bias: Vec<f64>,
}

/// Affine layer + softmax + cross-entropy against `label`.
pub fn dense_softmax_xent(v: &[f64], label: usize, w: &Matrix, b: &[f64]) -> Result<SoftmaxXent> {
    let classes = w.rows();
    if label >= classes {
        return Err(Error::invalid(format!("label {label} out of range for {classes} classes")));
    }
    if v.len() != w.cols() || b.len() != classes {
        return Err(Error::DimensionMismatch {
            expected: w.cols(),
            found: v.len(),
        });
    }
    let mut logits = b.to_vec();
    w.matvec_acc(v, &mut logits);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let loss = log_z - logits[label];
    let probabilities: Vec<f64> = logits.iter().map(|z| (z - log_z).exp()).collect();
    let mut d_bias = probabilities.clone();
    d_bias[label] -= 1.0;
    let mut d_weight = Matrix::zeros(classes, v.len());
    d_weight.outer_acc(&d_bias, v);
    let mut d_input = vec![0.0; v.len()];
    w.matvec_t_acc(&d_bias, &mut d_input);
    Ok(SoftmaxXent {
        probabilities,
        loss,
        d_input,
        d_weight,
        d_bias,
    })
}
