//! Evaluation metrics: Qx accuracy, one-vs-rest confusion metrics, the
//! empirical (Mann-Whitney) AUC of the marginals, and their label means.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::crf;
use crate::error::{Error, Result};
use crate::objectives::{map_sequences, predict_marginals};
use crate::params::ModelParams;
use crate::seqdata::Dataset;

/// One-vs-rest counts for a single label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Confusion counts for every label from decoded and true label lists.
pub fn confusion_counts(predicted: &[Vec<usize>], truth: &[Vec<usize>], num_labels: usize) -> Result<Vec<ConfusionCounts>> {
    check_lengths(predicted, truth)?;
    let mut counts = vec![ConfusionCounts::default(); num_labels];
    for (p, t) in predicted.iter().zip(truth) {
        for (&a, &b) in p.iter().zip(t) {
            if a >= num_labels || b >= num_labels {
                return Err(Error::dim(format!("label outside an alphabet of {num_labels}")));
            }
            for (tau, c) in counts.iter_mut().enumerate() {
                match (a == tau, b == tau) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, true) => c.fn_ += 1,
                    (false, false) => c.tn += 1,
                }
            }
        }
    }
    Ok(counts)
}

fn check_lengths(predicted: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<()> {
    if predicted.len() != truth.len() {
        return Err(Error::dim(format!(
            "{} predicted sequences for {} true ones",
            predicted.len(),
            truth.len()
        )));
    }
    for (k, (p, t)) in predicted.iter().zip(truth).enumerate() {
        if p.len() != t.len() {
            return Err(Error::dim(format!(
                "sequence {k}: {} predicted labels for {} positions",
                p.len(),
                t.len()
            )));
        }
    }
    Ok(())
}

/// Fraction of positions whose predicted label is correct.
pub fn qx_accuracy(predicted: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<f64> {
    check_lengths(predicted, truth)?;
    let total: usize = truth.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::Data("no positions to score".into()));
    }
    let correct: usize = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| p.iter().zip(t).filter(|(a, b)| a == b).count())
        .sum();
    Ok(correct as f64 / total as f64)
}

/// Sensitivity, specificity, precision and Mcc of one label. Ratios with a
/// zero denominator are `None`; Mcc with a zero denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub mcc: f64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn per_label_metrics(c: &ConfusionCounts) -> RateMetrics {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = if den > 0.0 {
        ((tp * tn - fp * fn_) / den.sqrt()).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    RateMetrics {
        sensitivity: ratio(c.tp, c.tp + c.fn_),
        specificity: ratio(c.tn, c.tn + c.fp),
        precision: ratio(c.tp, c.tp + c.fp),
        mcc,
    }
}

/// Mann-Whitney AUC with half credit for ties, by midranks in O(n log n).
/// `None` when either class is empty.
pub fn empirical_auc(scores: &[f64], is_positive: &[bool]) -> Result<Option<f64>> {
    if scores.len() != is_positive.len() {
        return Err(Error::dim(format!(
            "{} scores for {} class flags",
            scores.len(),
            is_positive.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("AUC scores contain NaN".into()));
    }
    let n1 = is_positive.iter().filter(|&&p| p).count();
    let n0 = scores.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of 1-based midranks of positives
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        let pos = order[start..end].iter().filter(|&&k| is_positive[k]).count();
        rank_sum += midrank * pos as f64;
        start = end;
    }
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(Some(u / (n1 as f64 * n0 as f64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub label: String,
    pub counts: ConfusionCounts,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub mcc: f64,
    pub auc: Option<f64>,
    /// Whether the label has positives and negatives in the evaluation data
    /// and so counts towards the means.
    pub in_mean: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub positions: u64,
    pub qx: f64,
    pub labels: Vec<LabelReport>,
    pub mean_mcc: Option<f64>,
    pub mean_auc: Option<f64>,
    /// Labels left out of the means.
    pub excluded_from_means: Vec<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

impl MetricsReport {
    /// Flat `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "positions={}", self.positions);
        let _ = writeln!(out, "qx={:.6}", self.qx);
        let _ = writeln!(out, "mean_mcc={}", fmt_opt(self.mean_mcc));
        let _ = writeln!(out, "mean_auc={}", fmt_opt(self.mean_auc));
        for l in &self.labels {
            let k = &l.label;
            let _ = writeln!(out, "label.{k}.tp={}", l.counts.tp);
            let _ = writeln!(out, "label.{k}.tn={}", l.counts.tn);
            let _ = writeln!(out, "label.{k}.fp={}", l.counts.fp);
            let _ = writeln!(out, "label.{k}.fn={}", l.counts.fn_);
            let _ = writeln!(out, "label.{k}.sens={}", fmt_opt(l.sensitivity));
            let _ = writeln!(out, "label.{k}.spec={}", fmt_opt(l.specificity));
            let _ = writeln!(out, "label.{k}.prec={}", fmt_opt(l.precision));
            let _ = writeln!(out, "label.{k}.mcc={:.6}", l.mcc);
            let _ = writeln!(out, "label.{k}.auc={}", fmt_opt(l.auc));
        }
        out
    }

    /// A header plus one row per label.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
            "label", "sens", "spec", "prec", "mcc", "auc"
        );
        for l in &self.labels {
            let _ = writeln!(
                out,
                "{:<12} {:>10} {:>10} {:>10} {:>10.6} {:>10}",
                l.label,
                fmt_opt(l.sensitivity),
                fmt_opt(l.specificity),
                fmt_opt(l.precision),
                l.mcc,
                fmt_opt(l.auc)
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Decoded labels and marginals for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub decoded: Vec<usize>,
    pub marginals: Array2<f64>,
}

/// Run inference on every sequence (labels are not needed).
pub fn predict_dataset(params: &ModelParams, data: &Dataset) -> Result<Vec<Prediction>> {
    params.check()?;
    params.check_compatible(data.feature_dim(), data.num_labels())?;
    map_sequences(data, true, |_, s| {
        let fb = predict_marginals(params, s.features.view())?;
        Ok(Prediction {
            decoded: crf::decode_posterior(&fb),
            marginals: fb.marginals,
        })
    })
}

/// Predictions in the sequence text format: each row carries the decoded
/// label, the input features, and one marginal per label (alphabet order).
pub fn format_predictions(data: &Dataset, preds: &[Prediction]) -> Result<String> {
    if preds.len() != data.sequences.len() {
        return Err(Error::dim("one prediction per sequence is required"));
    }
    let mut out = String::new();
    let _ = writeln!(out, "#labels {}", data.alphabet.names().join(","));
    let _ = writeln!(out, "#columns predicted\tfeatures\tmarginals");
    for (k, (seq, p)) in data.sequences.iter().zip(preds).enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "> {}", seq.id);
        for (i, row) in seq.features.outer_iter().enumerate() {
            let feats: Vec<String> = row.iter().map(|&v| crate::seqdata::fmt_f64(v)).collect();
            let probs: Vec<String> = p.marginals.row(i).iter().map(|v| format!("{v:.10}")).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                data.alphabet.name(p.decoded[i]),
                feats.join(" "),
                probs.join(" ")
            );
        }
    }
    Ok(out)
}

/// Metrics of already computed predictions against the dataset's labels.
pub fn report_from_predictions(data: &Dataset, preds: &[Prediction]) -> Result<MetricsReport> {
    if !data.is_labeled() {
        return Err(Error::Data("evaluation requires labels on every sequence".into()));
    }
    let truth: Vec<Vec<usize>> = data.sequences.iter().map(|s| s.labels().map(<[usize]>::to_vec)).collect::<Result<_>>()?;
    let decoded: Vec<Vec<usize>> = preds.iter().map(|p| p.decoded.clone()).collect();
    let n = data.num_labels();
    let qx = qx_accuracy(&decoded, &truth)?;
    let counts = confusion_counts(&decoded, &truth, n)?;

    let mut labels = Vec::with_capacity(n);
    for (tau, c) in counts.iter().enumerate() {
        let mut scores = Vec::new();
        let mut positive = Vec::new();
        for (p, t) in preds.iter().zip(&truth) {
            for (i, &y) in t.iter().enumerate() {
                scores.push(p.marginals[[i, tau]]);
                positive.push(y == tau);
            }
        }
        let auc = empirical_auc(&scores, &positive)?;
        let r = per_label_metrics(c);
        labels.push(LabelReport {
            label: data.alphabet.name(tau).to_string(),
            counts: *c,
            sensitivity: r.sensitivity,
            specificity: r.specificity,
            precision: r.precision,
            mcc: r.mcc,
            auc,
            in_mean: auc.is_some(),
        });
    }
    let kept: Vec<&LabelReport> = labels.iter().filter(|l| l.in_mean).collect();
    let mean = |f: &dyn Fn(&LabelReport) -> f64| {
        (!kept.is_empty()).then(|| kept.iter().map(|l| f(l)).sum::<f64>() / kept.len() as f64)
    };
    let mean_mcc = mean(&|l| l.mcc);
    let mean_auc = mean(&|l| l.auc.unwrap_or(0.0));
    let excluded_from_means = labels.iter().filter(|l| !l.in_mean).map(|l| l.label.clone()).collect();
    Ok(MetricsReport {
        positions: truth.iter().map(|t| t.len() as u64).sum(),
        qx,
        labels,
        mean_mcc,
        mean_auc,
        excluded_from_means,
    })
}

pub fn evaluate_model(params: &ModelParams, data: &Dataset) -> Result<MetricsReport> {
    let preds = predict_dataset(params, data)?;
    report_from_predictions(data, &preds)
}
