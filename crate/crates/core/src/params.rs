//! The full parameter set and its fixed flat ordering: convolution weights
//! layer by layer (`[n][h][h']` row-major within a layer), then `U`
//! row-major, then `T` row-major.

use ndarray::{Array2, Array3};

use crate::crf::CrfParams;
use crate::dcnn::{ConvWeights, NetworkArch};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: NetworkArch,
    pub conv: ConvWeights,
    pub crf: CrfParams,
}

impl ModelParams {
    pub fn zeros(arch: NetworkArch, num_labels: usize) -> Self {
        let conv = ConvWeights::zeros(&arch);
        let crf = CrfParams::zeros(num_labels, arch.top_dim());
        ModelParams { arch, conv, crf }
    }

    pub fn num_labels(&self) -> usize {
        self.crf.num_labels()
    }

    pub fn count(arch: &NetworkArch, num_labels: usize) -> usize {
        arch.num_weights() + num_labels * arch.top_dim() + num_labels * num_labels
    }

    pub fn num_params(&self) -> usize {
        Self::count(&self.arch, self.num_labels())
    }

    pub fn check(&self) -> Result<()> {
        self.arch.validate()?;
        self.conv.check(&self.arch)?;
        let n = self.num_labels();
        if self.crf.transitions.dim() != (n, n) {
            return Err(Error::dim(format!("T is {:?}", self.crf.transitions.dim())));
        }
        if self.crf.unary_weights.dim() != (n, self.arch.top_dim()) {
            return Err(Error::dim(format!(
                "U is {:?}, expected ({n}, {})",
                self.crf.unary_weights.dim(),
                self.arch.top_dim()
            )));
        }
        Ok(())
    }

    /// Check that the model can label `data`-shaped input.
    pub fn check_compatible(&self, feature_dim: usize, num_labels: usize) -> Result<()> {
        if feature_dim != self.arch.input_dim() {
            return Err(Error::dim(format!(
                "data has {feature_dim} features per position, model expects {}",
                self.arch.input_dim()
            )));
        }
        if num_labels != self.num_labels() {
            return Err(Error::dim(format!(
                "data has {num_labels} labels, model has {}",
                self.num_labels()
            )));
        }
        Ok(())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.conv.layers {
            out.extend(layer.iter());
        }
        out.extend(self.crf.unary_weights.iter());
        out.extend(self.crf.transitions.iter());
        out
    }

    pub fn from_flat(arch: NetworkArch, num_labels: usize, flat: &[f64]) -> Result<Self> {
        arch.validate()?;
        let expected = Self::count(&arch, num_labels);
        if flat.len() != expected {
            return Err(Error::dim(format!(
                "{} parameters supplied, architecture needs {expected}",
                flat.len()
            )));
        }
        let mut rest = flat;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        let mut layers = Vec::with_capacity(arch.half_windows.len());
        for k in 0..arch.half_windows.len() {
            let shape = arch.weight_shape(k);
            let data = take(shape.0 * shape.1 * shape.2);
            layers.push(Array3::from_shape_vec(shape, data).expect("shape checked"));
        }
        let top = arch.top_dim();
        let u = Array2::from_shape_vec((num_labels, top), take(num_labels * top)).expect("shape checked");
        let t = Array2::from_shape_vec((num_labels, num_labels), take(num_labels * num_labels))
            .expect("shape checked");
        Ok(ModelParams {
            arch,
            conv: ConvWeights { layers },
            crf: CrfParams {
                unary_weights: u,
                transitions: t,
            },
        })
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        Self::from_flat(self.arch.clone(), self.num_labels(), flat)
    }
}

/// Gradient storage shaped like the parameters.
#[derive(Debug, Clone)]
pub(crate) struct GradParts {
    pub conv: ConvWeights,
    pub u: Array2<f64>,
    pub t: Array2<f64>,
}

impl GradParts {
    pub fn zeros(params: &ModelParams) -> Self {
        GradParts {
            conv: ConvWeights::zeros(&params.arch),
            u: Array2::zeros(params.crf.unary_weights.dim()),
            t: Array2::zeros(params.crf.transitions.dim()),
        }
    }

    pub fn add_assign(&mut self, other: &GradParts) {
        for (a, b) in self.conv.layers.iter_mut().zip(&other.conv.layers) {
            *a += b;
        }
        self.u += &other.u;
        self.t += &other.t;
    }

    pub fn into_flat(self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.conv.layers {
            out.extend(layer.iter());
        }
        out.extend(self.u.iter());
        out.extend(self.t.iter());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcnn::Activation;
    use proptest::prelude::*;

    #[test]
    fn count_matches_layout() {
        let arch = NetworkArch::new(vec![3, 4, 2], vec![1, 2], Activation::Sigmoid).unwrap();
        let p = ModelParams::zeros(arch.clone(), 3);
        assert_eq!(p.num_params(), 3 * 4 * 3 + 5 * 2 * 4 + 3 * 2 + 9);
        assert_eq!(p.to_flat().len(), p.num_params());
        assert!(ModelParams::from_flat(arch, 3, &[0.0; 5]).is_err());
    }

    #[test]
    fn ordering_is_layer_then_u_then_t() {
        let arch = NetworkArch::new(vec![1, 2], vec![0], Activation::Sigmoid).unwrap();
        let flat: Vec<f64> = (0..2 + 4 + 4).map(f64::from).collect();
        let p = ModelParams::from_flat(arch, 2, &flat).unwrap();
        assert_eq!(p.conv.layers[0][[0, 1, 0]], 1.0);
        assert_eq!(p.crf.unary_weights[[0, 1]], 3.0);
        assert_eq!(p.crf.unary_weights[[1, 0]], 4.0);
        assert_eq!(p.crf.transitions[[0, 1]], 7.0);
        assert_eq!(p.crf.transitions[[1, 1]], 9.0);
    }

    proptest! {
        #[test]
        fn flat_round_trip(values in prop::collection::vec(-10.0f64..10.0, 3 * 4 * 3 + 3 * 2 * 4 + 2 * 2 + 4)) {
            let arch = NetworkArch::new(vec![3, 4, 2], vec![1, 1], Activation::Tanh).unwrap();
            let p = ModelParams::from_flat(arch, 2, &values).unwrap();
            p.check().unwrap();
            prop_assert_eq!(p.to_flat(), values);
        }
    }
}
