use ndarray::Array2;

use super::{seq_backward, seq_forward, ValueGrad};
use crate::crf::{self, FbTables};
use crate::error::{Error, Result};
use crate::params::{GradParts, ModelParams};
use crate::seqdata::LabeledSequence;

/// `Q_λ(x) = 1 / (1 + e^{−λx})`.
pub fn sigmoid_margin(lambda: f64, x: f64) -> f64 {
    let z = lambda * x;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Most probable wrong label at every position (lowest index on ties).
pub fn runner_up_labels(fb: &FbTables, labels: &[usize]) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = fb.marginals.row(i);
            let mut best: Option<usize> = None;
            for a in (0..row.len()).filter(|&a| a != y) {
                if best.is_none_or(|b| row[a] > row[b]) {
                    best = Some(a);
                }
            }
            best.unwrap_or(y)
        })
        .collect()
}

pub(crate) fn labelwise_parts(
    params: &ModelParams,
    seq: &LabeledSequence,
    lambda: f64,
    frozen: Option<&[usize]>,
) -> Result<(f64, GradParts, Vec<usize>)> {
    let labels = seq.labels()?;
    let fwd = seq_forward(params, seq)?;
    let fb = &fwd.fb;
    let runner_up = match frozen {
        Some(r) if r.len() != labels.len() => {
            return Err(Error::dim(format!("{} runner-up labels for {} positions", r.len(), labels.len())))
        }
        Some(r) => r.to_vec(),
        None => runner_up_labels(fb, labels),
    };
    let n = params.num_labels();
    if runner_up.iter().any(|&r| r >= n) {
        return Err(Error::dim("runner-up label outside the alphabet"));
    }

    let mut value = 0.0;
    let mut slope = Vec::with_capacity(labels.len());
    for (i, (&y, &r)) in labels.iter().zip(&runner_up).enumerate() {
        let q = sigmoid_margin(lambda, fb.marginals[[i, y]] - fb.marginals[[i, r]]);
        value += q;
        slope.push(lambda * q * (1.0 - q));
    }

    let mut grad_t = Array2::<f64>::zeros((n, n));
    let mut error = Array2::<f64>::zeros((labels.len(), n));
    let mut weights = vec![0.0; labels.len()];
    for tau in 0..n {
        let mut any = false;
        for (i, w) in weights.iter_mut().enumerate() {
            *w = 0.0;
            if labels[i] == runner_up[i] {
                continue;
            }
            if labels[i] == tau {
                *w = slope[i];
            } else if runner_up[i] == tau {
                *w = -slope[i];
            }
            any |= *w != 0.0;
        }
        if !any {
            continue;
        }
        let tt = crf::tau_forward_backward(fb, tau, &weights)?;
        let (gt, e) = crf::marginal_grad_contractions(fb, &tt, tau, &weights)?;
        grad_t += &gt;
        error += &e;
    }
    let grad = seq_backward(params, &fwd, &error, grad_t)?;
    Ok((value, grad, runner_up))
}

/// Smoothed count of correctly labeled positions in one sequence.
///
/// Each position contributes `Q_λ(P(y_i) − P(ỹ_i))` where `ỹ_i` is the
/// runner-up label. The gradient treats `ỹ_i` as fixed; pass `frozen` to
/// pin it explicitly. Returns the runner-up labels that were used.
pub fn labelwise_seq(
    params: &ModelParams,
    seq: &LabeledSequence,
    lambda: f64,
    frozen: Option<&[usize]>,
) -> Result<(ValueGrad, Vec<usize>)> {
    let (value, grad, r) = labelwise_parts(params, seq, lambda, frozen)?;
    Ok((
        ValueGrad {
            value,
            grad: grad.into_flat(),
        },
        r,
    ))
}
