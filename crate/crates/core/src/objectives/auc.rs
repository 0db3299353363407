//! Polynomial surrogate of the per-label Wilcoxon-Mann-Whitney AUC.
//!
//! For label `τ`, positives are positions labeled `τ` and negatives all
//! others, each scored by the marginal `P(y_i = τ | X)`. With the step
//! approximation `H(x) = Σ_μ Σ_l Y_μl x^l y^{μ−l}` for `x − y`, the pairwise
//! sum factorizes into power sums `s_l = Σ_pos P^l` and `v_m = Σ_neg P^m`:
//!
//! `AUC_τ ≈ (1/n₀n₁) Σ_l s_l A_l`, with `A_l = Σ_{μ≥l} Y_μl v_{μ−l}`.
//!
//! Differentiating through the power sums gives every position a weight on
//! its own marginal (`Σ_l l P^{l−1} A_l` for positives, `Σ_m m P^{m−1} B_m`
//! with `B_m = Σ_{μ≥m} Y_{μ,μ−m} s_{μ−m}` for negatives). Batching all powers
//! into these weights needs one τ-weighted pass per sequence per label and
//! gives the same result as one pass per power.

use log::warn;
use ndarray::Array2;

use super::{map_sequences, seq_backward, seq_forward, SeqForward, ValueGrad};
use crate::chebyshev::StepApprox;
use crate::crf;
use crate::error::{Error, Result};
use crate::params::{GradParts, ModelParams};
use crate::seqdata::Dataset;

/// Per-label surrogate ingredients.
struct LabelTerms {
    tau: usize,
    value: f64,
    /// Coefficient on `P^{l−1}` in a positive's weight, `l·A_l/(n₀n₁)`.
    pos_coef: Vec<f64>,
    /// Coefficient on `P^{m−1}` in a negative's weight, `m·B_m/(n₀n₁)`.
    neg_coef: Vec<f64>,
}

fn label_terms(
    approx: &StepApprox,
    tau: usize,
    fwds: &[SeqForward],
    labels: &[&[usize]],
) -> Option<LabelTerms> {
    let d = approx.degree();
    let mut s = vec![0.0; d + 1];
    let mut v = vec![0.0; d + 1];
    let (mut n1, mut n0) = (0usize, 0usize);
    for (fwd, ys) in fwds.iter().zip(labels) {
        for (i, &y) in ys.iter().enumerate() {
            let p = fwd.fb.marginals[[i, tau]];
            let (sums, count) = if y == tau { (&mut s, &mut n1) } else { (&mut v, &mut n0) };
            *count += 1;
            let mut pw = 1.0;
            for slot in sums.iter_mut() {
                *slot += pw;
                pw *= p;
            }
        }
    }
    if n0 == 0 || n1 == 0 {
        return None;
    }
    let y = approx.pair_coefficients();
    let norm = 1.0 / (n0 as f64 * n1 as f64);
    let mut a = vec![0.0; d + 1];
    let mut b = vec![0.0; d + 1];
    for (mu, row) in y.iter().enumerate() {
        for (l, &c) in row.iter().enumerate() {
            a[l] += c * v[mu - l];
            b[mu - l] += c * s[l];
        }
    }
    let value = s.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>() * norm;
    let pos_coef = (1..=d).map(|l| l as f64 * a[l] * norm).collect();
    let neg_coef = (1..=d).map(|m| m as f64 * b[m] * norm).collect();
    Some(LabelTerms {
        tau,
        value,
        pos_coef,
        neg_coef,
    })
}

fn poly(coef: &[f64], p: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * p + c)
}

pub(crate) fn auc_dataset_parts(
    params: &ModelParams,
    data: &Dataset,
    approx: &StepApprox,
    parallel: bool,
) -> Result<(f64, GradParts)> {
    let fwds = map_sequences(data, parallel, |_, s| seq_forward(params, s))?;
    let labels: Vec<&[usize]> = data.sequences.iter().map(|s| s.labels()).collect::<Result<_>>()?;

    let mut terms = Vec::new();
    for tau in 0..params.num_labels() {
        match label_terms(approx, tau, &fwds, &labels) {
            Some(t) => terms.push(t),
            None => warn!(
                "label {} is absent or covers every position; left out of the AUC objective",
                data.alphabet.name(tau)
            ),
        }
    }
    if terms.is_empty() {
        return Err(Error::DegenerateLabeling);
    }
    let value = terms.iter().map(|t| t.value).sum();

    let n = params.num_labels();
    let parts = map_sequences(data, parallel, |k, _| {
        let fwd = &fwds[k];
        let ys = labels[k];
        let fb = &fwd.fb;
        let mut grad_t = Array2::<f64>::zeros((n, n));
        let mut error = Array2::<f64>::zeros((ys.len(), n));
        for t in &terms {
            let weights: Vec<f64> = ys
                .iter()
                .enumerate()
                .map(|(i, &y)| {
                    let coef = if y == t.tau { &t.pos_coef } else { &t.neg_coef };
                    poly(coef, fb.marginals[[i, t.tau]])
                })
                .collect();
            let tt = crf::tau_forward_backward(fb, t.tau, &weights)?;
            let (gt, e) = crf::marginal_grad_contractions(fb, &tt, t.tau, &weights)?;
            grad_t += &gt;
            error += &e;
        }
        seq_backward(params, fwd, &error, grad_t)
    })?;
    let mut grad = GradParts::zeros(params);
    for g in &parts {
        grad.add_assign(g);
    }
    Ok((value, grad))
}

/// Surrogate AUC summed over every label that has both positives and
/// negatives, with its gradient. Labels lacking either are skipped with a
/// warning; if all are skipped the result is [`Error::DegenerateLabeling`].
pub fn auc_dataset(params: &ModelParams, data: &Dataset, approx: &StepApprox) -> Result<ValueGrad> {
    params.check()?;
    params.check_compatible(data.feature_dim(), data.num_labels())?;
    let (value, grad) = auc_dataset_parts(params, data, approx, true)?;
    Ok(ValueGrad {
        value,
        grad: grad.into_flat(),
    })
}
