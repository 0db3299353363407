//! Side-by-side comparison of the three objectives on synthetic data.

use std::fmt::Write as _;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::dcnn::NetworkArch;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_model, MetricsReport};
use crate::objectives::{ObjectiveKind, RegConfig, DEFAULT_LAMBDA};
use crate::optimizer::{InitConfig, LbfgsConfig, StopReason};
use crate::seqdata::{generate_synthetic, label_frequencies, Dataset, SyntheticSpec};
use crate::training::{train, TrainConfig};
use crate::chebyshev::DEFAULT_DEGREE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Generator settings for the training split; `num_sequences` is the
    /// training size.
    pub spec: SyntheticSpec,
    pub test_sequences: usize,
    pub arch: NetworkArch,
    pub lambda: f64,
    pub degree: usize,
    pub l2: f64,
    pub init_scale: f64,
    pub lbfgs: LbfgsConfig,
}

impl BenchConfig {
    pub fn new(spec: SyntheticSpec, test_sequences: usize, arch: NetworkArch) -> Self {
        BenchConfig {
            spec,
            test_sequences,
            arch,
            lambda: DEFAULT_LAMBDA,
            degree: DEFAULT_DEGREE,
            l2: 1e-4,
            init_scale: 0.1,
            lbfgs: LbfgsConfig::default(),
        }
    }

    pub fn objectives(&self) -> [ObjectiveKind; 3] {
        [
            ObjectiveKind::Likelihood,
            ObjectiveKind::Labelwise { lambda: self.lambda },
            ObjectiveKind::Auc { degree: self.degree },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveResult {
    pub objective: ObjectiveKind,
    pub train_seconds: f64,
    pub iterations: usize,
    pub final_objective: f64,
    pub stop: StopReason,
    /// Held-out AUC of the least frequent training label.
    pub minority_auc: Option<f64>,
    pub minority_mcc: f64,
    pub test: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub train_label_frequencies: Vec<f64>,
    pub test_label_frequencies: Vec<f64>,
    pub minority_label: String,
    pub results: Vec<ObjectiveResult>,
}

/// Seed of the held-out split derived from the training seed.
fn test_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Training and held-out datasets for a configuration.
pub fn bench_datasets(cfg: &BenchConfig) -> Result<(Dataset, Dataset)> {
    let train = generate_synthetic(&cfg.spec)?;
    let test = generate_synthetic(&SyntheticSpec {
        num_sequences: cfg.test_sequences,
        seed: test_seed(cfg.spec.seed),
        ..cfg.spec.clone()
    })?;
    Ok((train, test))
}

/// Train every objective from the same initialization and evaluate each on
/// the held-out split.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.test_sequences == 0 {
        return Err(Error::config("the held-out split needs at least one sequence"));
    }
    if cfg.arch.input_dim() != cfg.spec.feature_dim {
        return Err(Error::config(format!(
            "architecture expects {} features, generator makes {}",
            cfg.arch.input_dim(),
            cfg.spec.feature_dim
        )));
    }
    let (train_data, test_data) = bench_datasets(cfg)?;
    let train_freq = label_frequencies(&train_data)?;
    let test_freq = label_frequencies(&test_data)?;
    let minority = (0..train_freq.len())
        .min_by(|&a, &b| train_freq[a].total_cmp(&train_freq[b]))
        .expect("at least two labels");

    let mut results = Vec::new();
    for objective in cfg.objectives() {
        let train_cfg = TrainConfig {
            objective,
            reg: RegConfig { l2: cfg.l2 },
            init: InitConfig {
                seed: cfg.spec.seed,
                scale: cfg.init_scale,
            },
            lbfgs: cfg.lbfgs,
        };
        let start = Instant::now();
        let (model, trace) = train(&train_data, &cfg.arch, &train_cfg)?;
        let train_seconds = start.elapsed().as_secs_f64();
        let test = evaluate_model(&model.params, &test_data)?;
        info!(
            "{}: {} iterations in {:.2}s, held-out mean AUC {:?}",
            objective.short_name(),
            trace.iterations(),
            train_seconds,
            test.mean_auc
        );
        results.push(ObjectiveResult {
            objective,
            train_seconds,
            iterations: trace.iterations(),
            final_objective: trace.final_value(),
            stop: trace.stop,
            minority_auc: test.labels[minority].auc,
            minority_mcc: test.labels[minority].mcc,
            test,
        });
    }
    Ok(BenchReport {
        config: cfg.clone(),
        train_label_frequencies: train_freq,
        test_label_frequencies: test_freq,
        minority_label: train_data.alphabet.name(minority).to_string(),
        results,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let freq = |f: &[f64]| f.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(",");
        let mut out = format!(
            "train label frequencies: {}\ntest label frequencies: {}\nminority label: {}\n",
            freq(&self.train_label_frequencies),
            freq(&self.test_label_frequencies),
            self.minority_label
        );
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>10} {:>10} {:>12} {:>12} {:>8} {:>10}",
            "objective", "qx", "mean_mcc", "mean_auc", "minor_auc", "minor_mcc", "iters", "seconds"
        );
        for r in &self.results {
            let _ = writeln!(
                out,
                "{:<10} {:>8.4} {:>10} {:>10} {:>12} {:>12.4} {:>8} {:>10.2}",
                r.objective.short_name(),
                r.test.qx,
                opt(r.test.mean_mcc),
                opt(r.test.mean_auc),
                opt(r.minority_auc),
                r.minority_mcc,
                r.iterations,
                r.train_seconds
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
