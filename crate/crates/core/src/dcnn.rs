//! Windowed deep convolutional feature extractor.
//!
//! Layer `k + 1` at position `i` applies the activation to
//! `Σ_n Σ_h' H^k[i + n, h'] · W^k[n, h, h']` for offsets `n ∈ [−N_k, N_k]`.
//! Positions outside the sequence contribute zero. There are no bias terms.

use ndarray::{s, Array2, Array3, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative written in terms of the activation's output value.
    #[inline]
    pub fn derivative_from_output(self, v: f64) -> f64 {
        match self {
            Activation::Sigmoid => v * (1.0 - v),
            Activation::Tanh => 1.0 - v * v,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Layer widths `M_1..M_K` (with `M_1` the input width) and per-transition
/// half windows `N_1..N_{K-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkArch {
    pub layer_sizes: Vec<usize>,
    pub half_windows: Vec<usize>,
    pub activation: Activation,
}

pub const DEFAULT_HIDDEN_LAYERS: usize = 5;
pub const DEFAULT_NEURONS: usize = 50;
pub const DEFAULT_WINDOW: usize = 11;

impl NetworkArch {
    pub fn new(layer_sizes: Vec<usize>, half_windows: Vec<usize>, activation: Activation) -> Result<Self> {
        let arch = NetworkArch {
            layer_sizes,
            half_windows,
            activation,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Same width and window for every hidden layer.
    pub fn uniform(
        input_dim: usize,
        hidden_layers: usize,
        neurons: usize,
        window: usize,
        activation: Activation,
    ) -> Result<Self> {
        if window % 2 == 0 {
            return Err(Error::config(format!("window size {window} must be odd")));
        }
        if hidden_layers == 0 {
            return Err(Error::config("at least one hidden layer is required"));
        }
        let mut sizes = vec![input_dim];
        sizes.extend(std::iter::repeat_n(neurons, hidden_layers));
        Self::new(sizes, vec![window / 2; hidden_layers], activation)
    }

    /// 5 hidden layers of 50 neurons with window 11, sigmoid activation.
    pub fn default_for(input_dim: usize) -> Self {
        Self::uniform(
            input_dim,
            DEFAULT_HIDDEN_LAYERS,
            DEFAULT_NEURONS,
            DEFAULT_WINDOW,
            Activation::Sigmoid,
        )
        .expect("default architecture is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::config("a network needs at least two layers"));
        }
        if self.half_windows.len() + 1 != self.layer_sizes.len() {
            return Err(Error::config(format!(
                "{} half windows for {} layers",
                self.half_windows.len(),
                self.layer_sizes.len()
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::config("every layer needs at least one neuron"));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn top_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Shape `(2N + 1, M_out, M_in)` of transition `k` (0-based).
    pub fn weight_shape(&self, k: usize) -> (usize, usize, usize) {
        (
            2 * self.half_windows[k] + 1,
            self.layer_sizes[k + 1],
            self.layer_sizes[k],
        )
    }

    pub fn num_weights(&self) -> usize {
        (0..self.half_windows.len())
            .map(|k| {
                let (a, b, c) = self.weight_shape(k);
                a * b * c
            })
            .sum()
    }
}

/// Convolution weights, one `(2N + 1) × M_out × M_in` array per transition,
/// indexed `[n + N, h, h']`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub layers: Vec<Array3<f64>>,
}

impl ConvWeights {
    pub fn zeros(arch: &NetworkArch) -> Self {
        ConvWeights {
            layers: (0..arch.half_windows.len())
                .map(|k| Array3::zeros(arch.weight_shape(k)))
                .collect(),
        }
    }

    pub fn check(&self, arch: &NetworkArch) -> Result<()> {
        if self.layers.len() != arch.half_windows.len() {
            return Err(Error::dim(format!(
                "{} weight layers for {} transitions",
                self.layers.len(),
                arch.half_windows.len()
            )));
        }
        for (k, w) in self.layers.iter().enumerate() {
            if w.dim() != arch.weight_shape(k) {
                return Err(Error::dim(format!(
                    "transition {k}: weights {:?}, expected {:?}",
                    w.dim(),
                    arch.weight_shape(k)
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|w| w.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Activations of every layer; `layers[0]` is the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub layers: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn top(&self) -> &Array2<f64> {
        self.layers.last().unwrap()
    }
}

/// Rows `[lo, hi)` of the output that read input rows `[lo + n, hi + n)`.
#[inline]
fn overlap(len: usize, n: isize) -> Option<(usize, usize)> {
    let lo = (-n).max(0) as usize;
    let hi = (len as isize - n).min(len as isize);
    if hi <= lo as isize {
        None
    } else {
        Some((lo, hi as usize))
    }
}

pub fn forward(features: ArrayView2<f64>, arch: &NetworkArch, w: &ConvWeights) -> Result<ForwardTrace> {
    w.check(arch)?;
    if features.ncols() != arch.input_dim() {
        return Err(Error::dim(format!(
            "{} input features, architecture expects {}",
            features.ncols(),
            arch.input_dim()
        )));
    }
    let len = features.nrows();
    let mut layers = Vec::with_capacity(arch.num_layers());
    layers.push(features.to_owned());
    for (k, wk) in w.layers.iter().enumerate() {
        let half = arch.half_windows[k] as isize;
        let input = &layers[k];
        let mut out = Array2::<f64>::zeros((len, arch.layer_sizes[k + 1]));
        for n in -half..=half {
            let Some((lo, hi)) = overlap(len, n) else { continue };
            let wn = wk.slice(s![(n + half) as usize, .., ..]);
            let src = input.slice(s![(lo as isize + n) as usize..(hi as isize + n) as usize, ..]);
            let mut dst = out.slice_mut(s![lo..hi, ..]);
            ndarray::linalg::general_mat_mul(1.0, &src, &wn.t(), 1.0, &mut dst);
        }
        let act = arch.activation;
        out.mapv_inplace(|x| act.apply(x));
        layers.push(out);
    }
    Ok(ForwardTrace { layers })
}

/// Backpropagate a per-position label error `E_i(u)` through `U` and the
/// convolution stack, returning the gradient of every convolution weight.
pub fn backward(
    trace: &ForwardTrace,
    arch: &NetworkArch,
    w: &ConvWeights,
    top_error: ArrayView2<f64>,
    label_weights: ArrayView2<f64>,
) -> Result<ConvWeights> {
    w.check(arch)?;
    let top = trace.top();
    let len = top.nrows();
    if trace.layers.len() != arch.num_layers() {
        return Err(Error::dim("trace depth does not match the architecture"));
    }
    if top_error.nrows() != len || top_error.ncols() != label_weights.nrows() {
        return Err(Error::dim(format!(
            "top error {:?} against {len} positions and {} labels",
            top_error.dim(),
            label_weights.nrows()
        )));
    }
    if label_weights.ncols() != top.ncols() {
        return Err(Error::dim(format!(
            "label weights have {} columns, top layer has {} neurons",
            label_weights.ncols(),
            top.ncols()
        )));
    }
    let act = arch.activation;

    let mut delta = top_error.dot(&label_weights);
    Zip::from(&mut delta)
        .and(top)
        .for_each(|d, &v| *d *= act.derivative_from_output(v));

    let mut grads: Vec<Array3<f64>> = Vec::with_capacity(w.layers.len());
    for k in (0..w.layers.len()).rev() {
        let half = arch.half_windows[k] as isize;
        let input = &trace.layers[k];
        let wk = &w.layers[k];
        let mut gk = Array3::<f64>::zeros(wk.dim());
        let mut prop = (k > 0).then(|| Array2::<f64>::zeros(input.dim()));
        for n in -half..=half {
            let Some((lo, hi)) = overlap(len, n) else { continue };
            let idx = (n + half) as usize;
            let src_rows = (lo as isize + n) as usize..(hi as isize + n) as usize;
            let d = delta.slice(s![lo..hi, ..]);
            let mut gn = gk.slice_mut(s![idx, .., ..]);
            ndarray::linalg::general_mat_mul(1.0, &d.t(), &input.slice(s![src_rows.clone(), ..]), 1.0, &mut gn);
            if let Some(p) = prop.as_mut() {
                let mut dst = p.slice_mut(s![src_rows, ..]);
                ndarray::linalg::general_mat_mul(1.0, &d, &wk.slice(s![idx, .., ..]), 1.0, &mut dst);
            }
        }
        grads.push(gk);
        if let Some(mut p) = prop {
            Zip::from(&mut p)
                .and(input)
                .for_each(|d, &v| *d *= act.derivative_from_output(v));
            delta = p;
        }
    }
    grads.reverse();
    Ok(ConvWeights { layers: grads })
}
