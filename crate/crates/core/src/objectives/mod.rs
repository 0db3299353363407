//! Training objectives. Every objective is maximized and reports its value
//! together with the gradient over all parameters in the flat ordering of
//! [`ModelParams::to_flat`].

mod auc;
mod labelwise;
mod likelihood;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chebyshev::{build_step_approx, StepApprox, DEFAULT_DEGREE};
use crate::crf::{self, FbTables, PotentialTable};
use crate::dcnn::{self, ForwardTrace};
use crate::error::{Error, Result};
use crate::params::{GradParts, ModelParams};
use crate::seqdata::{Dataset, LabeledSequence};

pub use auc::auc_dataset;
pub use labelwise::{labelwise_seq, runner_up_labels, sigmoid_margin};
pub use likelihood::loglik_seq;

pub const DEFAULT_LAMBDA: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObjectiveKind {
    Likelihood,
    Labelwise { lambda: f64 },
    Auc { degree: usize },
}

impl ObjectiveKind {
    pub fn labelwise() -> Self {
        ObjectiveKind::Labelwise { lambda: DEFAULT_LAMBDA }
    }

    pub fn auc() -> Self {
        ObjectiveKind::Auc {
            degree: DEFAULT_DEGREE,
        }
    }

    /// Short name used on the command line: `mle`, `label`, `auc`.
    pub fn short_name(&self) -> &'static str {
        match self {
            ObjectiveKind::Likelihood => "mle",
            ObjectiveKind::Labelwise { .. } => "label",
            ObjectiveKind::Auc { .. } => "auc",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegConfig {
    /// Adds `−l2 · ‖θ‖²` to the maximized objective.
    pub l2: f64,
}

/// Per-sequence quantities shared by all objectives.
pub(crate) struct SeqForward {
    pub trace: ForwardTrace,
    pub pot: PotentialTable,
    pub fb: FbTables,
}

pub(crate) fn seq_forward(params: &ModelParams, seq: &LabeledSequence) -> Result<SeqForward> {
    let trace = dcnn::forward(seq.features.view(), &params.arch, &params.conv)?;
    let pot = crf::compute_potentials(trace.top().view(), &params.crf)?;
    let fb = crf::forward_backward(&pot)?;
    Ok(SeqForward { trace, pot, fb })
}

/// Turn a unary-potential error `E_i(a)` and a transition gradient into a
/// full gradient: `∂/∂U = Eᵀ A`, and `E` backpropagated through the DCNN.
pub(crate) fn seq_backward(
    params: &ModelParams,
    fwd: &SeqForward,
    unary_error: &Array2<f64>,
    grad_t: Array2<f64>,
) -> Result<GradParts> {
    let u = unary_error.t().dot(fwd.trace.top());
    let conv = dcnn::backward(
        &fwd.trace,
        &params.arch,
        &params.conv,
        unary_error.view(),
        params.crf.unary_weights.view(),
    )?;
    Ok(GradParts { conv, u, t: grad_t })
}

/// Map over sequences (in parallel when asked) and keep input order so the
/// caller's reduction is deterministic.
pub(crate) fn map_sequences<T, F>(data: &Dataset, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &LabeledSequence) -> Result<T> + Sync,
{
    let run = |(k, s): (usize, &LabeledSequence)| f(k, s).map_err(|e| e.in_sequence(&s.id));
    if parallel {
        data.sequences.par_iter().enumerate().map(run).collect()
    } else {
        data.sequences.iter().enumerate().map(run).collect()
    }
}

fn sum_parts(params: &ModelParams, parts: Vec<(f64, GradParts)>) -> (f64, GradParts) {
    let mut grad = GradParts::zeros(params);
    let mut value = 0.0;
    for (v, g) in &parts {
        value += v;
        grad.add_assign(g);
    }
    (value, grad)
}

fn apply_l2(params: &ModelParams, reg: &RegConfig, value: f64, grad: Vec<f64>) -> ValueGrad {
    if reg.l2 == 0.0 {
        return ValueGrad { value, grad };
    }
    let theta = params.to_flat();
    let norm2: f64 = theta.iter().map(|x| x * x).sum();
    let grad = grad
        .into_iter()
        .zip(&theta)
        .map(|(g, x)| g - 2.0 * reg.l2 * x)
        .collect();
    ValueGrad {
        value: value - reg.l2 * norm2,
        grad,
    }
}

/// A configured objective: kind, regularization, and any state the kind needs
/// (the step polynomial for AUC).
#[derive(Debug, Clone)]
pub struct Objective {
    kind: ObjectiveKind,
    reg: RegConfig,
    approx: Option<StepApprox>,
    parallel: bool,
}

impl Objective {
    pub fn new(kind: ObjectiveKind, reg: RegConfig) -> Result<Self> {
        if !(reg.l2 >= 0.0 && reg.l2.is_finite()) {
            return Err(Error::config(format!("l2 coefficient {} must be >= 0", reg.l2)));
        }
        let approx = match kind {
            ObjectiveKind::Auc { degree } => Some(build_step_approx(degree)?),
            ObjectiveKind::Labelwise { lambda } => {
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::config(format!("lambda {lambda} must be positive")));
                }
                None
            }
            ObjectiveKind::Likelihood => None,
        };
        Ok(Objective {
            kind,
            reg,
            approx,
            parallel: true,
        })
    }

    /// Evaluate sequences on the rayon pool (default) or on the calling thread.
    /// Results are identical either way: per-sequence terms are always summed
    /// in dataset order.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn reg(&self) -> RegConfig {
        self.reg
    }

    pub fn value_grad(&self, params: &ModelParams, data: &Dataset) -> Result<ValueGrad> {
        self.value_grad_inner(params, data, None)
    }

    /// Labelwise objective with every position's runner-up label held fixed.
    /// Other kinds ignore `runner_up`.
    pub fn value_grad_frozen(
        &self,
        params: &ModelParams,
        data: &Dataset,
        runner_up: &[Vec<usize>],
    ) -> Result<ValueGrad> {
        if runner_up.len() != data.sequences.len() {
            return Err(Error::dim("one runner-up list per sequence is required"));
        }
        self.value_grad_inner(params, data, Some(runner_up))
    }

    fn value_grad_inner(
        &self,
        params: &ModelParams,
        data: &Dataset,
        runner_up: Option<&[Vec<usize>]>,
    ) -> Result<ValueGrad> {
        params.check()?;
        params.check_compatible(data.feature_dim(), data.num_labels())?;
        if !data.is_labeled() {
            return Err(Error::Data("training requires labels on every sequence".into()));
        }
        let (value, grad) = match self.kind {
            ObjectiveKind::Likelihood => {
                let parts = map_sequences(data, self.parallel, |_, s| likelihood::loglik_parts(params, s))?;
                sum_parts(params, parts)
            }
            ObjectiveKind::Labelwise { lambda } => {
                let parts = map_sequences(data, self.parallel, |k, s| {
                    let frozen = runner_up.map(|r| r[k].as_slice());
                    labelwise::labelwise_parts(params, s, lambda, frozen).map(|(v, g, _)| (v, g))
                })?;
                sum_parts(params, parts)
            }
            ObjectiveKind::Auc { .. } => {
                let approx = self.approx.as_ref().expect("built in new");
                auc::auc_dataset_parts(params, data, approx, self.parallel)?
            }
        };
        let vg = apply_l2(params, &self.reg, value, grad.into_flat());
        if !vg.value.is_finite() || vg.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("objective or gradient is not finite".into()));
        }
        Ok(vg)
    }
}

/// Evaluate `kind` on `data` with L2 regularization.
pub fn objective_value_grad(
    kind: ObjectiveKind,
    params: &ModelParams,
    data: &Dataset,
    reg: RegConfig,
) -> Result<ValueGrad> {
    Objective::new(kind, reg)?.value_grad(params, data)
}

/// Posterior marginals for one feature matrix.
pub fn predict_marginals(params: &ModelParams, features: ndarray::ArrayView2<f64>) -> Result<FbTables> {
    let trace = dcnn::forward(features, &params.arch, &params.conv)?;
    let pot = crf::compute_potentials(trace.top().view(), &params.crf)?;
    crf::forward_backward(&pot)
}
