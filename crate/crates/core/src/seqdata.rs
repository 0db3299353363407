//! Sequence data model, the line-oriented text format, and a synthetic
//! generator for imbalanced labeling problems.
//!
//! File layout (UTF-8):
//!
//! ```text
//! #labels O,D
//! > seq1
//! O\t0.1 0.2
//! D\t1.5 -0.3
//!
//! > seq2
//! ?\t0.0 1.0
//! ```
//!
//! Each record starts with `> <id>` and is followed by one row per position:
//! the label name (or `?` when unlabeled), a tab, then the features as
//! space-separated decimals. Records are separated by blank lines.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Placeholder written in place of a label for prediction-only input.
pub const UNLABELED: &str = "?";

/// Ordered set of label names; indices follow the listed order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAlphabet {
    names: Vec<String>,
}

impl LabelAlphabet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::config("a label alphabet needs at least two labels"));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() || n.contains(char::is_whitespace) || n.contains(',') {
                return Err(Error::config(format!("invalid label name {n:?}")));
            }
            if n == UNLABELED {
                return Err(Error::config("'?' is reserved for unlabeled positions"));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::config(format!("duplicate label name {n:?}")));
            }
        }
        Ok(LabelAlphabet { names })
    }

    /// Alphabet `L0, L1, ...` of the given size.
    pub fn numbered(size: usize) -> Result<Self> {
        Self::new((0..size).map(|i| format!("L{i}")))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// One sequence: `L × M₁` feature rows and optional per-position labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub id: String,
    pub features: Array2<f64>,
    pub labels: Option<Vec<usize>>,
}

impl LabeledSequence {
    pub fn new(id: impl Into<String>, features: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        let seq = LabeledSequence {
            id: id.into(),
            features,
            labels,
        };
        if seq.len() == 0 {
            return Err(Error::Data(format!("sequence {} is empty", seq.id)));
        }
        if seq.features.ncols() == 0 {
            return Err(Error::Data(format!("sequence {} has no features", seq.id)));
        }
        if seq.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("sequence {} has a non-finite feature", seq.id)));
        }
        if let Some(labels) = &seq.labels {
            if labels.len() != seq.len() {
                return Err(Error::dim(format!(
                    "sequence {}: {} labels for {} positions",
                    seq.id,
                    labels.len(),
                    seq.len()
                )));
            }
        }
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Data(format!("sequence {} is unlabeled", self.id)))
    }
}

/// A non-empty collection of sequences sharing one alphabet and feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub alphabet: LabelAlphabet,
    pub sequences: Vec<LabeledSequence>,
}

impl Dataset {
    pub fn new(alphabet: LabelAlphabet, sequences: Vec<LabeledSequence>) -> Result<Self> {
        let first = sequences
            .first()
            .ok_or_else(|| Error::Data("dataset has no sequences".into()))?;
        let width = first.feature_dim();
        for s in &sequences {
            if s.feature_dim() != width {
                return Err(Error::dim(format!(
                    "sequence {} has {} features, expected {width}",
                    s.id,
                    s.feature_dim()
                )));
            }
            if let Some(labels) = &s.labels {
                if let Some(&bad) = labels.iter().find(|&&y| y >= alphabet.len()) {
                    return Err(Error::Data(format!(
                        "sequence {} uses label index {bad} outside the alphabet",
                        s.id
                    )));
                }
            }
        }
        Ok(Dataset { alphabet, sequences })
    }

    pub fn feature_dim(&self) -> usize {
        self.sequences[0].feature_dim()
    }

    pub fn num_labels(&self) -> usize {
        self.alphabet.len()
    }

    pub fn total_positions(&self) -> usize {
        self.sequences.iter().map(LabeledSequence::len).sum()
    }

    pub fn is_labeled(&self) -> bool {
        self.sequences.iter().all(|s| s.labels.is_some())
    }
}

/// Parse a dataset from any buffered reader. `origin` is used in error messages.
pub fn read_dataset<R: BufRead>(reader: R, origin: &Path) -> Result<Dataset> {
    let perr = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let alphabet = match lines.next() {
        Some((n, line)) => {
            let line = line.map_err(|e| io_err(origin, e))?;
            let rest = line
                .trim_end()
                .strip_prefix("#labels")
                .ok_or_else(|| perr(n, "expected header '#labels <name>,<name>,...'".into()))?;
            let names: Vec<&str> = rest.trim().split(',').map(str::trim).collect();
            LabelAlphabet::new(names).map_err(|e| perr(n, format!("malformed header: {e}")))?
        }
        None => return Err(perr(1, "empty file".into())),
    };

    struct Partial {
        id: String,
        rows: Vec<f64>,
        labels: Vec<Option<usize>>,
        width: Option<usize>,
        start: usize,
    }

    let finish = |p: Partial| -> Result<LabeledSequence> {
        if p.labels.is_empty() {
            return Err(perr(p.start, format!("record {} has no positions", p.id)));
        }
        let labeled = p.labels.iter().filter(|l| l.is_some()).count();
        let labels = if labeled == p.labels.len() {
            Some(p.labels.into_iter().flatten().collect())
        } else if labeled == 0 {
            None
        } else {
            return Err(perr(p.start, format!("record {} mixes labeled and '?' rows", p.id)));
        };
        let width = p.width.unwrap_or(0);
        let n = p.rows.len() / width.max(1);
        let features = Array2::from_shape_vec((n, width), p.rows).map_err(|e| perr(p.start, e.to_string()))?;
        LabeledSequence::new(p.id, features, labels).map_err(|e| perr(p.start, e.to_string()))
    };

    let mut sequences = Vec::new();
    let mut current: Option<Partial> = None;
    let mut dataset_width: Option<usize> = None;

    for (n, line) in lines {
        let line = line.map_err(|e| io_err(origin, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if let Some(p) = current.take() {
                sequences.push(finish(p)?);
            }
            continue;
        }
        if let Some(id) = trimmed.strip_prefix('>') {
            if let Some(p) = current.take() {
                sequences.push(finish(p)?);
            }
            let id = id.trim();
            if id.is_empty() {
                return Err(perr(n, "record header without an id".into()));
            }
            current = Some(Partial {
                id: id.to_string(),
                rows: Vec::new(),
                labels: Vec::new(),
                width: None,
                start: n,
            });
            continue;
        }
        let p = current
            .as_mut()
            .ok_or_else(|| perr(n, "data row outside of a '>' record".into()))?;
        let (label, feats) = trimmed
            .split_once('\t')
            .ok_or_else(|| perr(n, "expected '<label>\\t<features>'".into()))?;
        let label = label.trim();
        let label = if label == UNLABELED {
            None
        } else {
            Some(
                alphabet
                    .index_of(label)
                    .ok_or_else(|| perr(n, format!("unknown label at line {n}: {label:?}")))?,
            )
        };
        let before = p.rows.len();
        for tok in feats.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| perr(n, format!("cannot parse feature {tok:?}")))?;
            if !v.is_finite() {
                return Err(perr(n, format!("non-finite feature {tok:?}")));
            }
            p.rows.push(v);
        }
        let width = p.rows.len() - before;
        match p.width {
            None => p.width = Some(width),
            Some(w) if w != width => {
                return Err(perr(n, format!("ragged feature row: {width} values, expected {w}")));
            }
            _ => {}
        }
        match dataset_width {
            None => dataset_width = Some(width),
            Some(w) if w != width => {
                return Err(perr(n, format!("ragged feature row: {width} values, expected {w}")));
            }
            _ => {}
        }
        if width == 0 {
            return Err(perr(n, "row has no features".into()));
        }
        p.labels.push(label);
    }
    if let Some(p) = current.take() {
        sequences.push(finish(p)?);
    }
    Dataset::new(alphabet, sequences).map_err(|e| perr(1, e.to_string()))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    read_dataset(BufReader::new(file), path)
}

/// Shortest decimal representation that parses back to the same value.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Render a dataset in the text format.
pub fn format_dataset(ds: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "#labels {}", ds.alphabet.names().join(","));
    for (k, seq) in ds.sequences.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "> {}", seq.id);
        for (i, row) in seq.features.outer_iter().enumerate() {
            let label = match &seq.labels {
                Some(l) => ds.alphabet.name(l[i]),
                None => UNLABELED,
            };
            out.push_str(label);
            out.push('\t');
            let feats: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            out.push_str(&feats.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(format_dataset(ds).as_bytes())
        .map_err(|e| io_err(path, e))
}

/// Per-label empirical frequencies over every labeled position.
pub fn label_frequencies(ds: &Dataset) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; ds.num_labels()];
    for seq in &ds.sequences {
        for &y in seq.labels()? {
            counts[y] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

/// Parameters of the synthetic sticky-Markov / Gaussian-emission generator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub num_sequences: usize,
    pub length_range: (usize, usize),
    pub alphabet_size: usize,
    pub label_priors: Vec<f64>,
    /// Extra self-transition mass; `P(a → b) = s·[a = b] + (1 − s)·π_b`.
    pub transition_stickiness: f64,
    pub feature_dim: usize,
    pub emission_separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_sequences == 0 {
            return Err(Error::config("numSequences must be positive"));
        }
        let (lo, hi) = self.length_range;
        if lo == 0 || lo > hi {
            return Err(Error::config(format!("invalid length range {lo}..{hi}")));
        }
        if self.alphabet_size < 2 {
            return Err(Error::config("alphabet size must be at least 2"));
        }
        if self.label_priors.len() != self.alphabet_size {
            return Err(Error::config(format!(
                "{} priors for {} labels",
                self.label_priors.len(),
                self.alphabet_size
            )));
        }
        if self.label_priors.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::config("every label prior must be positive"));
        }
        let sum: f64 = self.label_priors.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("label priors sum to {sum}, not 1")));
        }
        if !(0.0..1.0).contains(&self.transition_stickiness) {
            return Err(Error::config("stickiness must lie in [0, 1)"));
        }
        if self.feature_dim == 0 {
            return Err(Error::config("feature dimension must be positive"));
        }
        if !(self.emission_separation >= 0.0 && self.emission_separation.is_finite()) {
            return Err(Error::config("emission separation must be a finite value >= 0"));
        }
        Ok(())
    }
}

/// Draw a dataset from `spec`. Label `a` shifts feature `a mod featureDim` by
/// the emission separation; every feature carries unit-variance Gaussian noise.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let prior = WeightedIndex::new(&spec.label_priors).map_err(|e| Error::config(e.to_string()))?;
    let alphabet = LabelAlphabet::numbered(spec.alphabet_size)?;
    let (lo, hi) = spec.length_range;
    let m = spec.feature_dim;

    let mut sequences = Vec::with_capacity(spec.num_sequences);
    for t in 0..spec.num_sequences {
        let len = rng.random_range(lo..=hi);
        let mut labels = Vec::with_capacity(len);
        let mut y = prior.sample(&mut rng);
        for i in 0..len {
            if i > 0 && !rng.random_bool(spec.transition_stickiness) {
                y = prior.sample(&mut rng);
            }
            labels.push(y);
        }
        let mut features = Array2::<f64>::zeros((len, m));
        for (i, mut row) in features.outer_iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            row[labels[i] % m] += spec.emission_separation;
        }
        sequences.push(LabeledSequence::new(format!("syn{t}"), features, Some(labels))?);
    }
    Dataset::new(alphabet, sequences)
}
