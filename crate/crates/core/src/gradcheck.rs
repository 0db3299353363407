//! Central-difference verification of objective gradients on random tiny
//! instances.

use ndarray::Array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dcnn::{Activation, NetworkArch};
use crate::error::{Error, Result};
use crate::objectives::{runner_up_labels, seq_forward, Objective, ObjectiveKind, RegConfig};
use crate::params::ModelParams;
use crate::seqdata::{Dataset, LabelAlphabet, LabeledSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub objective: ObjectiveKind,
    pub seed: u64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub l2: f64,
    /// Perturb one analytic gradient entry; a negative control for the check.
    pub corrupt: bool,
}

impl GradcheckConfig {
    pub fn new(objective: ObjectiveKind) -> Self {
        GradcheckConfig {
            objective,
            seed: 0,
            epsilon: 1e-5,
            tolerance: 1e-4,
            l2: 0.0,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub num_params: usize,
    pub max_relative_error: f64,
    pub worst_coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

/// `|a − n| / max(|a|, |n|, 1e-3)`; the floor keeps near-zero entries from
/// dominating through rounding noise.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// A random instance: 1–3 convolution layers, 2–3 labels, two sequences of
/// length 2–5 in which every label occurs.
pub fn random_instance(seed: u64) -> (ModelParams, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = rng.random_range(2..=3);
    let input = rng.random_range(1..=3);
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![input];
    sizes.extend((0..depth).map(|_| rng.random_range(1..=3)));
    let windows = (0..depth).map(|_| rng.random_range(0..=1)).collect();
    let act = if rng.random_bool(0.5) {
        Activation::Sigmoid
    } else {
        Activation::Tanh
    };
    let arch = NetworkArch::new(sizes, windows, act).expect("valid by construction");
    let flat: Vec<f64> = (0..ModelParams::count(&arch, labels))
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let params = ModelParams::from_flat(arch, labels, &flat).expect("sized by construction");

    let mut seqs = Vec::new();
    for k in 0..2 {
        let len = rng.random_range(labels.max(2)..=5);
        let x = Array::from_shape_fn((len, input), |_| rng.random_range(-2.0..2.0));
        let mut y: Vec<usize> = (0..len).map(|_| rng.random_range(0..labels)).collect();
        if k == 0 {
            for (i, v) in y.iter_mut().take(labels).enumerate() {
                *v = i;
            }
        }
        seqs.push(LabeledSequence::new(format!("g{k}"), x, Some(y)).expect("valid by construction"));
    }
    let alphabet = LabelAlphabet::numbered(labels).expect("at least two labels");
    (params, Dataset::new(alphabet, seqs).expect("consistent by construction"))
}

/// Compare analytic and central-difference gradients over every coordinate.
/// For the labelwise objective the runner-up labels are frozen at their
/// values at the base point.
pub fn check_gradient(params: &ModelParams, data: &Dataset, cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if !(cfg.epsilon > 0.0 && cfg.tolerance > 0.0) {
        return Err(Error::config("epsilon and tolerance must be positive"));
    }
    let objective = Objective::new(cfg.objective, RegConfig { l2: cfg.l2 })?.with_parallel(false);
    let frozen: Vec<Vec<usize>> = data
        .sequences
        .iter()
        .map(|s| Ok(runner_up_labels(&seq_forward(params, s)?.fb, s.labels()?)))
        .collect::<Result<_>>()?;
    let eval = |p: &ModelParams| objective.value_grad_frozen(p, data, &frozen);

    let mut grad = eval(params)?.grad;
    if cfg.corrupt {
        let k = grad.len() / 2;
        grad[k] += 0.01 * (1.0 + grad[k].abs());
    }
    let theta = params.to_flat();
    let mut report = GradcheckReport {
        num_params: theta.len(),
        max_relative_error: 0.0,
        worst_coordinate: 0,
        analytic: grad.first().copied().unwrap_or(0.0),
        numeric: 0.0,
        passed: true,
    };
    let mut probe = theta.clone();
    for k in 0..theta.len() {
        probe[k] = theta[k] + cfg.epsilon;
        let fp = eval(&params.with_flat(&probe)?)?.value;
        probe[k] = theta[k] - cfg.epsilon;
        let fm = eval(&params.with_flat(&probe)?)?.value;
        probe[k] = theta[k];
        let numeric = (fp - fm) / (2.0 * cfg.epsilon);
        let err = relative_error(grad[k], numeric);
        if k == 0 || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_coordinate = k;
            report.analytic = grad[k];
            report.numeric = numeric;
        }
    }
    report.passed = report.max_relative_error < cfg.tolerance;
    Ok(report)
}

/// Gradient check on the random instance for `cfg.seed`.
pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let (params, data) = random_instance(cfg.seed);
    check_gradient(&params, &data, cfg)
}
