use rand::seq::index;

use super::ParamStore;
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Coordinates sampled per tensor; smaller tensors are checked in full.
    pub coords_per_tensor: usize,
    /// Below this magnitude (of both gradients) the absolute difference is
    /// reported instead of the relative one.
    pub abs_threshold: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-5,
            coords_per_tensor: 50,
            abs_threshold: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(tensor name, flat index)` of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares the analytic gradients stored in `store` with central differences
/// of `forward`.
pub fn finite_difference_check(
    forward: &mut dyn FnMut(&ParamStore) -> Result<f64>,
    store: &ParamStore,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut rng = util::rng(opts.seed);
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (ti, tensor) in store.tensors.iter().enumerate() {
        let len = tensor.value.len();
        let coords: Vec<usize> = if len <= opts.coords_per_tensor {
            (0..len).collect()
        } else {
            let mut c = index::sample(&mut rng, len, opts.coords_per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let orig = tensor.value[i];
            probe.tensors[ti].value[i] = orig + opts.epsilon;
            let plus = forward(&probe)?;
            probe.tensors[ti].value[i] = orig - opts.epsilon;
            let minus = forward(&probe)?;
            probe.tensors[ti].value[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("forward at {}[{i}]", tensor.name)));
            }
            let numeric = (plus - minus) / (2.0 * opts.epsilon);
            let analytic = tensor.grad[i];
            let scale = numeric.abs().max(analytic.abs());
            let err = if scale < opts.abs_threshold {
                (numeric - analytic).abs()
            } else {
                (numeric - analytic).abs() / scale
            };
            report.checked += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((tensor.name.clone(), i));
            }
        }
    }
    Ok(report)
}
