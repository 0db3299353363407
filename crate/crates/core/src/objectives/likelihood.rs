use ndarray::Array2;

use super::{seq_backward, seq_forward, ValueGrad};
use crate::crf;
use crate::error::Result;
use crate::params::{GradParts, ModelParams};
use crate::seqdata::LabeledSequence;

pub(crate) fn loglik_parts(params: &ModelParams, seq: &LabeledSequence) -> Result<(f64, GradParts)> {
    let labels = seq.labels()?;
    let fwd = seq_forward(params, seq)?;
    let value = crf::sequence_log_probability(&fwd.pot, labels, &fwd.fb)?;

    let n = params.num_labels();
    let mut grad_t = fwd.fb.expected_transitions();
    grad_t.mapv_inplace(|v| -v);
    for w in labels.windows(2) {
        grad_t[[w[0], w[1]]] += 1.0;
    }

    let mut error = Array2::<f64>::zeros((labels.len(), n));
    error.zip_mut_with(&fwd.fb.marginals, |e, &p| *e = -p);
    for (i, &y) in labels.iter().enumerate() {
        error[[i, y]] += 1.0;
    }
    let grad = seq_backward(params, &fwd, &error, grad_t)?;
    Ok((value, grad))
}

/// Log-probability of one labeled sequence and its gradient.
pub fn loglik_seq(params: &ModelParams, seq: &LabeledSequence) -> Result<ValueGrad> {
    let (value, grad) = loglik_parts(params, seq)?;
    Ok(ValueGrad {
        value,
        grad: grad.into_flat(),
    })
}
