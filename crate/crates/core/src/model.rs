//! Model files: a JSON document holding the alphabet, the architecture, the
//! flat parameter vector and how the model was trained.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dcnn::NetworkArch;
use crate::error::{Error, Result};
use crate::objectives::ObjectiveKind;
use crate::optimizer::StopReason;
use crate::params::ModelParams;
use crate::seqdata::LabelAlphabet;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub objective: ObjectiveKind,
    pub l2: f64,
    pub seed: u64,
    pub init_scale: f64,
    pub iterations: usize,
    pub final_objective: f64,
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub alphabet: Vec<String>,
    pub arch: NetworkArch,
    /// Convolution layers, then `U`, then `T`, each row-major.
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<TrainingMetadata>,
}

/// A loaded model: labels plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub alphabet: LabelAlphabet,
    pub params: ModelParams,
    pub metadata: Option<TrainingMetadata>,
}

impl Model {
    pub fn new(alphabet: LabelAlphabet, params: ModelParams, metadata: Option<TrainingMetadata>) -> Result<Self> {
        params.check()?;
        if alphabet.len() != params.num_labels() {
            return Err(Error::dim(format!(
                "alphabet has {} labels, parameters have {}",
                alphabet.len(),
                params.num_labels()
            )));
        }
        Ok(Model {
            alphabet,
            params,
            metadata,
        })
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: FORMAT_VERSION,
            alphabet: self.alphabet.names().to_vec(),
            arch: self.params.arch.clone(),
            params: self.params.to_flat(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        let alphabet = LabelAlphabet::new(file.alphabet).map_err(|e| Error::Model(e.to_string()))?;
        file.arch.validate().map_err(|e| Error::Model(e.to_string()))?;
        if file.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("parameters must be finite".into()));
        }
        let params =
            ModelParams::from_flat(file.arch, alphabet.len(), &file.params).map_err(|e| Error::Model(e.to_string()))?;
        Model::new(alphabet, params, file.metadata)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        Model::from_file(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Model::from_json(&text).map_err(|e| Error::Model(format!("{}: {e}", path.display())))
    }

    /// Check that `alphabet` names the same labels in the same order and that
    /// the feature width matches.
    pub fn check_data(&self, alphabet: &LabelAlphabet, feature_dim: usize) -> Result<()> {
        if alphabet.names() != self.alphabet.names() {
            return Err(Error::dim(format!(
                "data labels [{}] differ from model labels [{}]",
                alphabet.names().join(","),
                self.alphabet.names().join(",")
            )));
        }
        self.params.check_compatible(feature_dim, alphabet.len())
    }
}
