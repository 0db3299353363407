//! Training runs: initialize, maximize one objective with L-BFGS, package
//! the result as a [`Model`].

use serde::{Deserialize, Serialize};

use crate::dcnn::NetworkArch;
use crate::error::Result;
use crate::model::{Model, TrainingMetadata};
use crate::objectives::{Objective, ObjectiveKind, RegConfig};
use crate::optimizer::{init_params, lbfgs_maximize, InitConfig, LbfgsConfig, TrainingTrace};
use crate::params::ModelParams;
use crate::seqdata::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: ObjectiveKind,
    pub reg: RegConfig,
    pub init: InitConfig,
    pub lbfgs: LbfgsConfig,
}

impl TrainConfig {
    pub fn new(objective: ObjectiveKind) -> Self {
        TrainConfig {
            objective,
            reg: RegConfig::default(),
            init: InitConfig::default(),
            lbfgs: LbfgsConfig::default(),
        }
    }
}

/// Train from a fresh initialization.
pub fn train(data: &Dataset, arch: &NetworkArch, cfg: &TrainConfig) -> Result<(Model, TrainingTrace)> {
    let init = init_params(arch, &data.alphabet, cfg.init)?;
    train_from(data, init, cfg)
}

/// Train starting from given parameters.
pub fn train_from(data: &Dataset, init: ModelParams, cfg: &TrainConfig) -> Result<(Model, TrainingTrace)> {
    let objective = Objective::new(cfg.objective, cfg.reg)?;
    // surface data or labeling problems before the optimizer sees them
    objective.value_grad(&init, data)?;
    let (params, trace) = lbfgs_maximize(|p| objective.value_grad(p, data), &init, &cfg.lbfgs)?;
    let meta = TrainingMetadata {
        objective: cfg.objective,
        l2: cfg.reg.l2,
        seed: cfg.init.seed,
        init_scale: cfg.init.scale,
        iterations: trace.iterations(),
        final_objective: trace.final_value(),
        stop: trace.stop,
    };
    let model = Model::new(data.alphabet.clone(), params, Some(meta))?;
    Ok((model, trace))
}

/// The trace as TSV with a header row.
pub fn trace_tsv(trace: &TrainingTrace) -> String {
    let mut out = String::from("iteration\tobjective\tgrad_max_norm\tstep\telapsed_seconds\n");
    for r in &trace.records {
        out.push_str(&format!(
            "{}\t{:.10e}\t{:.4e}\t{:.4e}\t{:.3}\n",
            r.iteration, r.value, r.grad_max_norm, r.step, r.elapsed_seconds
        ));
    }
    out
}
