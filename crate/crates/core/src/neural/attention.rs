use serde::{Deserialize, Serialize};

use super::{mat_ref, softmax_in_place, vec_ref, Matrix, ParamSet, TensorRef};
use crate::error::{Error, Result};
use crate::util::{dot, Rng};

/// Additive attention with a learned context vector:
/// `u_t = tanh(W·s_t + b)`, `score_t = u_t·context`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub input_dim: usize,
    pub attn_dim: usize,
    /// (a × input_dim)
    pub w: Matrix,
    pub b: Vec<f64>,
    pub context: Vec<f64>,
}

impl AttentionParams {
    pub fn new(input_dim: usize, attn_dim: usize, rng: &mut Rng) -> Self {
        let ctx_limit = (6.0 / (attn_dim + 1) as f64).sqrt();
        AttentionParams {
            input_dim,
            attn_dim,
            w: Matrix::xavier(attn_dim, input_dim, rng),
            b: vec![0.0; attn_dim],
            context: Matrix::uniform(1, attn_dim, ctx_limit, rng).as_slice().to_vec(),
        }
    }

    pub fn zeros(input_dim: usize, attn_dim: usize) -> Self {
        AttentionParams {
            input_dim,
            attn_dim,
            w: Matrix::zeros(attn_dim, input_dim),
            b: vec![0.0; attn_dim],
            context: vec![0.0; attn_dim],
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(other.input_dim, other.attn_dim)
    }
}

impl ParamSet for AttentionParams {
    fn tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        vec![
            ("w".into(), mat_ref(&self.w)),
            ("b".into(), vec_ref(&self.b)),
            ("context".into(), vec_ref(&self.context)),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_mut_slice(), &mut self.b, &mut self.context]
    }
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub pooled: Vec<f64>,
    /// Softmax weights; exactly zero at masked positions.
    pub weights: Vec<f64>,
    projected: Vec<Vec<f64>>,
}

/// Softmax-weighted sum of `states`. Masked positions get a score of −∞.
pub fn attention_pool(states: &[Vec<f64>], p: &AttentionParams, mask: Option<&[bool]>) -> Result<AttentionOutput> {
    if states.is_empty() {
        return Err(Error::invalid("attention over an empty sequence"));
    }
    if let Some(m) = mask {
        if m.len() != states.len() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                found: m.len(),
            });
        }
        if !m.iter().any(|&v| v) {
            return Err(Error::invalid("attention with every position masked"));
        }
    }
    let mut scores = Vec::with_capacity(states.len());
    let mut projected = Vec::with_capacity(states.len());
    for (t, s) in states.iter().enumerate() {
        if s.len() != p.input_dim {
            return Err(Error::DimensionMismatch {
                expected: p.input_dim,
                found: s.len(),
            });
        }
        let mut u = p.b.clone();
        p.w.matvec_acc(s, &mut u);
        u.iter_mut().for_each(|v| *v = v.tanh());
        let visible = mask.map_or(true, |m| m[t]);
        scores.push(if visible { dot(&u, &p.context) } else { f64::NEG_INFINITY });
        projected.push(u);
    }
    softmax_in_place(&mut scores);
    let mut pooled = vec![0.0; p.input_dim];
    for (w, s) in scores.iter().zip(states) {
        if *w == 0.0 {
            continue;
        }
        pooled.iter_mut().zip(s).for_each(|(o, v)| *o += w * v);
    }
    Ok(AttentionOutput {
        pooled,
        weights: scores,
        projected,
    })
}

/// Returns the gradient w.r.t. each state and accumulates parameter gradients.
pub fn attention_backward(
    out: &AttentionOutput,
    states: &[Vec<f64>],
    p: &AttentionParams,
    d_pooled: &[f64],
    grads: &mut AttentionParams,
) -> Vec<Vec<f64>> {
    let dw: Vec<f64> = states.iter().map(|s| dot(d_pooled, s)).collect();
    let mean_dw: f64 = out.weights.iter().zip(&dw).map(|(w, d)| w * d).sum();
    let mut d_states = Vec::with_capacity(states.len());
    for t in 0..states.len() {
        let w = out.weights[t];
        let mut ds: Vec<f64> = d_pooled.iter().map(|g| g * w).collect();
        if w > 0.0 {
            let d_score = w * (dw[t] - mean_dw);
            let u = &out.projected[t];
            let d_pre: Vec<f64> = u
                .iter()
                .zip(&p.context)
                .map(|(uv, c)| d_score * c * (1.0 - uv * uv))
                .collect();
            grads.context.iter_mut().zip(u).for_each(|(g, uv)| *g += d_score * uv);
            grads.w.outer_acc(&d_pre, &states[t]);
            grads.b.iter_mut().zip(&d_pre).for_each(|(g, d)| *g += d);
            p.w.matvec_t_acc(&d_pre, &mut ds);
        }
        d_states.push(ds);
    }
    d_states
}
