use serde::{Deserialize, Serialize};

use super::{mat_ref, vec_ref, Matrix, ParamSet, TensorRef};
use crate::error::{Error, Result};
use crate::util::{sigmoid, Rng};

/// LSTM weights with the four gates stacked row-wise in the order
/// input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub input_dim: usize,
    pub hidden: usize,
    /// (4h × d_in)
    pub w: Matrix,
    /// (4h × h)
    pub u: Matrix,
    /// (4h)
    pub b: Vec<f64>,
}

impl LstmCellParams {
    /// Xavier-uniform per gate block, zero biases except forget gate = 1.
    pub fn new(input_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let wl = (6.0 / (input_dim + hidden) as f64).sqrt();
        let ul = (6.0 / (2 * hidden) as f64).sqrt();
        let w = Matrix::uniform(4 * hidden, input_dim, wl, rng);
        let u = Matrix::uniform(4 * hidden, hidden, ul, rng);
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        LstmCellParams {
            input_dim,
            hidden,
            w,
            u,
            b,
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmCellParams {
            input_dim,
            hidden,
            w: Matrix::zeros(4 * hidden, input_dim),
            u: Matrix::zeros(4 * hidden, hidden),
            b: vec![0.0; 4 * hidden],
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(other.input_dim, other.hidden)
    }
}

impl ParamSet for LstmCellParams {
    fn tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        vec![
            ("w".into(), mat_ref(&self.w)),
            ("u".into(), mat_ref(&self.u)),
            ("b".into(), vec_ref(&self.b)),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_mut_slice(), self.u.as_mut_slice(), &mut self.b]
    }
}

/// One cell step together with what the backward pass needs.
#[derive(Debug, Clone)]
pub struct LstmStep {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates, stacked i, f, o, g.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

pub fn lstm_cell_step(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmCellParams) -> Result<LstmStep> {
    let h = p.hidden;
    if x.len() != p.input_dim {
        return Err(Error::DimensionMismatch {
            expected: p.input_dim,
            found: x.len(),
        });
    }
    if h_prev.len() != h || c_prev.len() != h {
        return Err(Error::DimensionMismatch {
            expected: h,
            found: h_prev.len().max(c_prev.len()),
        });
    }
    if x.iter().chain(h_prev).chain(c_prev).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("LSTM input".into()));
    }
    let mut gates = p.b.clone();
    p.w.matvec_acc(x, &mut gates);
    p.u.matvec_acc(h_prev, &mut gates);
    for (k, a) in gates.iter_mut().enumerate() {
        *a = if k < 3 * h { sigmoid(*a) } else { a.tanh() };
    }
    let mut c = vec![0.0; h];
    let mut tanh_c = vec![0.0; h];
    let mut h_next = vec![0.0; h];
    for j in 0..h {
        let (i, f, o, g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h_next[j] = o * tanh_c[j];
    }
    Ok(LstmStep {
        h: h_next,
        c,
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates,
        tanh_c,
    })
}

/// Backpropagates `dh`, `dc` (gradients w.r.t. this step's outputs) through
/// one step, accumulating parameter gradients into `grads`.
///
/// Returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_cell_backward(
    step: &LstmStep,
    p: &LstmCellParams,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmCellParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = p.hidden;
    let g = &step.gates;
    let mut da = vec![0.0; 4 * h];
    let mut dc_prev = vec![0.0; h];
    for j in 0..h {
        let (i, f, o, gg) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
        let tc = step.tanh_c[j];
        let d_o = dh[j] * tc;
        let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
        let di = dct * gg;
        let df = dct * step.c_prev[j];
        let dg = dct * i;
        dc_prev[j] = dct * f;
        da[j] = di * i * (1.0 - i);
        da[h + j] = df * f * (1.0 - f);
        da[2 * h + j] = d_o * o * (1.0 - o);
        da[3 * h + j] = dg * (1.0 - gg * gg);
    }
    grads.w.outer_acc(&da, &step.x);
    grads.u.outer_acc(&da, &step.h_prev);
    for (gb, d) in grads.b.iter_mut().zip(&da) {
        *gb += d;
    }
    let mut dx = vec![0.0; p.input_dim];
    p.w.matvec_t_acc(&da, &mut dx);
    let mut dh_prev = vec![0.0; h];
    p.u.matvec_t_acc(&da, &mut dh_prev);
    (dx, dh_prev, dc_prev)
}

/// Bidirectional encoding of a sequence.
#[derive(Debug, Clone)]
pub struct BiLstmOutput {
    /// One `2h` vector per input position: forward half then backward half.
    /// Masked positions are all zeros.
    pub outputs: Vec<Vec<f64>>,
    /// Unmasked positions in increasing order.
    pub valid: Vec<usize>,
    fwd_steps: Vec<LstmStep>,
    /// Steps in processing order, i.e. `bwd_steps[k]` is position `valid[len-1-k]`.
    bwd_steps: Vec<LstmStep>,
}

pub fn bilstm_encode(seq: &[Vec<f64>], fwd: &LstmCellParams, bwd: &LstmCellParams) -> Result<BiLstmOutput> {
    bilstm_encode_masked(seq, &vec![true; seq.len()], fwd, bwd)
}

/// Like [`bilstm_encode`], but positions with `mask[t] == false` are skipped:
/// the recurrent state passes over them unchanged and their output is zero.
pub fn bilstm_encode_masked(
    seq: &[Vec<f64>],
    mask: &[bool],
    fwd: &LstmCellParams,
    bwd: &LstmCellParams,
) -> Result<BiLstmOutput> {
    if seq.is_empty() {
        return Err(Error::invalid("cannot encode an empty sequence"));
    }
    if mask.len() != seq.len() {
        return Err(Error::DimensionMismatch {
            expected: seq.len(),
            found: mask.len(),
        });
    }
    if fwd.hidden != bwd.hidden {
        return Err(Error::DimensionMismatch {
            expected: fwd.hidden,
            found: bwd.hidden,
        });
    }
    let h = fwd.hidden;
    let valid: Vec<usize> = (0..seq.len()).filter(|&t| mask[t]).collect();
    let mut outputs = vec![vec![0.0; 2 * h]; seq.len()];

    let mut fwd_steps = Vec::with_capacity(valid.len());
    let (mut hs, mut cs) = (vec![0.0; h], vec![0.0; h]);
    for &t in &valid {
        let step = lstm_cell_step(&seq[t], &hs, &cs, fwd)?;
        outputs[t][..h].copy_from_slice(&step.h);
        hs.clone_from(&step.h);
        cs.clone_from(&step.c);
        fwd_steps.push(step);
    }

    let mut bwd_steps = Vec::with_capacity(valid.len());
    let (mut hs, mut cs) = (vec![0.0; h], vec![0.0; h]);
    for &t in valid.iter().rev() {
        let step = lstm_cell_step(&seq[t], &hs, &cs, bwd)?;
        outputs[t][h..].copy_from_slice(&step.h);
        hs.clone_from(&step.h);
        cs.clone_from(&step.c);
        bwd_steps.push(step);
    }

    Ok(BiLstmOutput {
        outputs,
        valid,
        fwd_steps,
        bwd_steps,
    })
}

/// Returns the gradient w.r.t. every input position (zero where masked).
pub fn bilstm_backward(
    enc: &BiLstmOutput,
    d_outputs: &[Vec<f64>],
    fwd: &LstmCellParams,
    bwd: &LstmCellParams,
    g_fwd: &mut LstmCellParams,
    g_bwd: &mut LstmCellParams,
) -> Vec<Vec<f64>> {
    let h = fwd.hidden;
    let mut dx = vec![vec![0.0; fwd.input_dim]; enc.outputs.len()];

    let (mut dh_next, mut dc_next) = (vec![0.0; h], vec![0.0; h]);
    for (k, &t) in enc.valid.iter().enumerate().rev() {
        let dh: Vec<f64> = d_outputs[t][..h].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let (dxt, dhp, dcp) = lstm_cell_backward(&enc.fwd_steps[k], fwd, &dh, &dc_next, g_fwd);
        dx[t].iter_mut().zip(&dxt).for_each(|(a, b)| *a += b);
        dh_next = dhp;
        dc_next = dcp;
    }

    let n = enc.valid.len();
    let (mut dh_next, mut dc_next) = (vec![0.0; h], vec![0.0; h]);
    for k in (0..n).rev() {
        let t = enc.valid[n - 1 - k];
        let dh: Vec<f64> = d_outputs[t][h..].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let (dxt, dhp, dcp) = lstm_cell_backward(&enc.bwd_steps[k], bwd, &dh, &dc_next, g_bwd);
        dx[t].iter_mut().zip(&dxt).for_each(|(a, b)| *a += b);
        dh_next = dhp;
        dc_next = dcp;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{finite_difference_check, GradCheckOptions, ParamStore};
    use crate::util;
    use rand::Rng as _;

    fn rand_vec(n: usize, rng: &mut Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_params_zero_state() {
        let p = LstmCellParams::zeros(3, 2);
        let s = lstm_cell_step(&[1.0, -2.0, 0.5], &[0.0; 2], &[0.0; 2], &p).unwrap();
        assert_eq!(s.h, vec![0.0; 2]);
        assert_eq!(s.c, vec![0.0; 2]);
    }

    #[test]
    fn zero_params_carry_half_of_cell() {
        let p = LstmCellParams::zeros(1, 2);
        let c_prev = [0.8, -2.0];
        let s = lstm_cell_step(&[0.3], &[0.0; 2], &c_prev, &p).unwrap();
        for j in 0..2 {
            assert!((s.c[j] - 0.5 * c_prev[j]).abs() < 1e-15);
            assert!((s.h[j] - 0.5 * (0.5 * c_prev[j]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let p = LstmCellParams::new(3, 4, &mut util::rng(0));
        assert_eq!(&p.b[4..8], &[1.0; 4]);
        assert!(p.b[..4].iter().chain(&p.b[8..]).all(|&b| b == 0.0));
    }

    #[test]
    fn rejects_non_finite_and_misshaped_input() {
        let p = LstmCellParams::zeros(2, 2);
        assert!(matches!(
            lstm_cell_step(&[f64::NAN, 0.0], &[0.0; 2], &[0.0; 2], &p),
            Err(Error::NonFinite(_))
        ));
        assert!(lstm_cell_step(&[0.0], &[0.0; 2], &[0.0; 2], &p).is_err());
    }

    fn cell_objective(p: &LstmCellParams, x: &[f64], hp: &[f64], cp: &[f64], rh: &[f64], rc: &[f64]) -> f64 {
        let s = lstm_cell_step(x, hp, cp, p).unwrap();
        util::dot(&s.h, rh) + util::dot(&s.c, rc)
    }

    #[test]
    fn cell_gradient_matches_finite_differences() {
        let mut rng = util::rng(11);
        let p = LstmCellParams::new(4, 3, &mut rng);
        let (x, hp, cp) = (rand_vec(4, &mut rng), rand_vec(3, &mut rng), rand_vec(3, &mut rng));
        let (rh, rc) = (rand_vec(3, &mut rng), rand_vec(3, &mut rng));
        let step = lstm_cell_step(&x, &hp, &cp, &p).unwrap();
        let mut g = LstmCellParams::zeros_like(&p);
        let (dx, dhp, dcp) = lstm_cell_backward(&step, &p, &rh, &rc, &mut g);

        let mut store = ParamStore::capture(&p);
        store.set_grads(&g).unwrap();
        let mut scratch = p.clone();
        let report = finite_difference_check(
            &mut |s: &ParamStore| {
                s.apply_to(&mut scratch)?;
                Ok(cell_objective(&scratch, &x, &hp, &cp, &rh, &rc))
            },
            &store,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-5, "{report:?}");

        // inputs and carried state
        let eps = 1e-5;
        let checks: [(&Vec<f64>, &Vec<f64>, usize); 3] = [(&x, &dx, 0), (&hp, &dhp, 1), (&cp, &dcp, 2)];
        for (base, analytic, which) in checks {
            for k in 0..base.len() {
                let eval = |delta: f64| {
                    let mut v = [x.clone(), hp.clone(), cp.clone()];
                    v[which][k] += delta;
                    cell_objective(&p, &v[0], &v[1], &v[2], &rh, &rc)
                };
                let num = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let err = (num - analytic[k]).abs() / num.abs().max(analytic[k].abs()).max(1e-8);
                assert!(err < 1e-5, "input {which}[{k}]: {num} vs {}", analytic[k]);
            }
        }
    }

    #[test]
    fn single_step_sequence_is_two_cell_steps() {
        let mut rng = util::rng(2);
        let (f, b) = (LstmCellParams::new(3, 2, &mut rng), LstmCellParams::new(3, 2, &mut rng));
        let x = rand_vec(3, &mut rng);
        let out = bilstm_encode(&[x.clone()], &f, &b).unwrap();
        let sf = lstm_cell_step(&x, &[0.0; 2], &[0.0; 2], &f).unwrap();
        let sb = lstm_cell_step(&x, &[0.0; 2], &[0.0; 2], &b).unwrap();
        assert_eq!(out.outputs[0], [sf.h, sb.h].concat());
    }

    #[test]
    fn palindrome_with_shared_params_mirrors() {
        let mut rng = util::rng(3);
        let p = LstmCellParams::new(2, 3, &mut rng);
        let (a, b, c) = (rand_vec(2, &mut rng), rand_vec(2, &mut rng), rand_vec(2, &mut rng));
        let seq = vec![a.clone(), b.clone(), c, b, a];
        let out = bilstm_encode(&seq, &p, &p).unwrap();
        let t_len = seq.len();
        for t in 0..t_len {
            let mirrored = &out.outputs[t_len - 1 - t];
            assert_eq!(&out.outputs[t][..3], &mirrored[3..]);
            assert_eq!(&out.outputs[t][3..], &mirrored[..3]);
            assert_eq!(out.outputs[t].len(), 6);
        }
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let p = LstmCellParams::zeros(2, 2);
        assert!(bilstm_encode(&[], &p, &p).is_err());
    }

    #[test]
    fn masked_trailing_positions_match_stripped_sequence() {
        let mut rng = util::rng(4);
        let (f, b) = (LstmCellParams::new(2, 3, &mut rng), LstmCellParams::new(2, 3, &mut rng));
        let seq: Vec<Vec<f64>> = (0..5).map(|_| rand_vec(2, &mut rng)).collect();
        let stripped = bilstm_encode(&seq[..3], &f, &b).unwrap();
        let masked = bilstm_encode_masked(&seq, &[true, true, true, false, false], &f, &b).unwrap();
        assert_eq!(&masked.outputs[..3], &stripped.outputs[..]);
        assert!(masked.outputs[3..].iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn bilstm_gradient_matches_finite_differences() {
        let mut rng = util::rng(5);
        let (f, b) = (LstmCellParams::new(3, 2, &mut rng), LstmCellParams::new(3, 2, &mut rng));
        let seq: Vec<Vec<f64>> = (0..4).map(|_| rand_vec(3, &mut rng)).collect();
        let mask = [true, false, true, true];
        let r: Vec<Vec<f64>> = (0..4).map(|_| rand_vec(4, &mut rng)).collect();
        let objective = |f: &LstmCellParams, b: &LstmCellParams, seq: &[Vec<f64>]| {
            let out = bilstm_encode_masked(seq, &mask, f, b).unwrap();
            out.outputs.iter().zip(&r).map(|(o, w)| util::dot(o, w)).sum::<f64>()
        };
        let enc = bilstm_encode_masked(&seq, &mask, &f, &b).unwrap();
        let (mut gf, mut gb) = (LstmCellParams::zeros_like(&f), LstmCellParams::zeros_like(&b));
        let dx = bilstm_backward(&enc, &r, &f, &b, &mut gf, &mut gb);
        assert!(dx[1].iter().all(|&v| v == 0.0));

        for (which, grads) in [(0, &gf), (1, &gb)] {
            let base = if which == 0 { &f } else { &b };
            let mut store = ParamStore::capture(base);
            store.set_grads(grads).unwrap();
            let mut scratch = base.clone();
            let report = finite_difference_check(
                &mut |s: &ParamStore| {
                    s.apply_to(&mut scratch)?;
                    Ok(if which == 0 { objective(&scratch, &b, &seq) } else { objective(&f, &scratch, &seq) })
                },
                &store,
                &GradCheckOptions::default(),
            )
            .unwrap();
            assert!(report.max_relative_error < 1e-5, "{report:?}");
        }

        let eps = 1e-5;
        for t in 0..4 {
            for k in 0..3 {
                let eval = |d: f64| {
                    let mut s = seq.clone();
                    s[t][k] += d;
                    objective(&f, &b, &s)
                };
                let num = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let err = (num - dx[t][k]).abs() / num.abs().max(dx[t][k].abs()).max(1e-8);
                assert!(err < 1e-5);
            }
        }
    }

    /// See the attention tests: below this gradient magnitude a 1e-5 step
    /// cannot resolve 1e-5 relative error, so absolute error is checked.
    const NOISE_FLOOR: f64 = 1e-5;

    proptest::proptest! {
        #[test]
        fn random_shapes_pass_gradient_check(seed in 0u64..1000, d in 1usize..5, h in 1usize..4, len in 1usize..5) {
            let mut rng = util::rng(seed);
            let (f, b) = (LstmCellParams::new(d, h, &mut rng), LstmCellParams::new(d, h, &mut rng));
            let seq: Vec<Vec<f64>> = (0..len).map(|_| rand_vec(d, &mut rng)).collect();
            let mut mask: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.8)).collect();
            mask[0] = true;
            let r: Vec<Vec<f64>> = (0..len).map(|_| rand_vec(2 * h, &mut rng)).collect();
            let objective = |f: &LstmCellParams, b: &LstmCellParams| {
                let out = bilstm_encode_masked(&seq, &mask, f, b).unwrap();
                out.outputs.iter().zip(&r).map(|(o, w)| util::dot(o, w)).sum::<f64>()
            };
            let enc = bilstm_encode_masked(&seq, &mask, &f, &b).unwrap();
            let (mut gf, mut gb) = (LstmCellParams::zeros_like(&f), LstmCellParams::zeros_like(&b));
            bilstm_backward(&enc, &r, &f, &b, &mut gf, &mut gb);
            let opts = GradCheckOptions { abs_threshold: NOISE_FLOOR, seed, ..GradCheckOptions::default() };
            for (which, grads) in [(0, &gf), (1, &gb)] {
                let base = if which == 0 { &f } else { &b };
                let mut store = ParamStore::capture(base);
                store.set_grads(grads).unwrap();
                let mut scratch = base.clone();
                let report = finite_difference_check(
                    &mut |s: &ParamStore| {
                        s.apply_to(&mut scratch)?;
                        Ok(if which == 0 { objective(&scratch, &b) } else { objective(&f, &scratch) })
                    },
                    &store,
                    &opts,
                ).unwrap();
                proptest::prop_assert!(report.max_relative_error < 1e-5, "{:?}", report);
            }
        }
    }
}
