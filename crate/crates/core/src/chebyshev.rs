//! Polynomial approximation of the step `H(x) = [x > 0]` on `[−1, 1]`.
//!
//! The Chebyshev series of `H` is computed by Chebyshev–Gauss quadrature,
//! damped with Lanczos σ-factors to tame the Gibbs overshoot next to the
//! jump, and converted to monomial form `Σ_μ c_μ x^μ`. Because `H − 1/2` is
//! odd, every even coefficient except `c_0 = 1/2` is exactly zero.
//!
//! Expanding `c_μ (x − y)^μ` binomially gives the pair coefficients
//! `Y[μ][l] = c_μ · C(μ, l) · (−1)^(μ−l)`, so a double sum over pairs
//! `Σ_i Σ_j p(x_i − y_j)` factors into products of power sums.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 63;
pub const DEFAULT_DEGREE: usize = 15;

/// Quadrature nodes used for the series coefficients.
const QUADRATURE_NODES: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct StepApprox {
    degree: usize,
    chebyshev: Vec<f64>,
    mono: Vec<f64>,
    pair: Vec<Vec<f64>>,
}

/// Series coefficients `a_k` of `H` in the Chebyshev basis, by quadrature.
///
/// With nodes `x_j = cos θ_j`, `θ_j = π (j + ½) / N`, the coefficients are
/// `a_0 = (1/N) Σ_j H(x_j)` and `a_k = (2/N) Σ_j H(x_j) cos(k θ_j)`.
pub fn quadrature_coefficients(degree: usize) -> Vec<f64> {
    static CACHE: OnceLock<Vec<f64>> = OnceLock::new();
    let all = CACHE.get_or_init(|| quadrature(MAX_DEGREE));
    all[..=degree.min(MAX_DEGREE)].to_vec()
}

fn quadrature(degree: usize) -> Vec<f64> {
    let n = QUADRATURE_NODES;
    let mut a = vec![0.0; degree + 1];
    let mut inside = 0usize;
    for j in 0..n {
        let theta = PI * (j as f64 + 0.5) / n as f64;
        if theta.cos() <= 0.0 {
            continue;
        }
        inside += 1;
        for (k, ak) in a.iter_mut().enumerate().skip(1) {
            *ak += (k as f64 * theta).cos();
        }
    }
    a[0] = inside as f64 / n as f64;
    for ak in a.iter_mut().skip(1) {
        *ak *= 2.0 / n as f64;
    }
    // H − 1/2 is odd: only odd Chebyshev polynomials survive.
    for ak in a.iter_mut().skip(2).step_by(2) {
        *ak = 0.0;
    }
    a
}

/// Exact series coefficients: `a_0 = 1/2`, `a_k = 2 (−1)^((k−1)/2) / (π k)`
/// for odd `k`, zero otherwise.
pub fn closed_form_coefficients(degree: usize) -> Vec<f64> {
    (0..=degree)
        .map(|k| match k {
            0 => 0.5,
            k if k % 2 == 1 => {
                let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
                2.0 * sign / (PI * k as f64)
            }
            _ => 0.0,
        })
        .collect()
}

/// Lanczos σ-factors `sinc(k / (d + 1))`.
fn lanczos_sigma(degree: usize) -> Vec<f64> {
    (0..=degree)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                let z = PI * k as f64 / (degree + 1) as f64;
                z.sin() / z
            }
        })
        .collect()
}

/// Integer monomial coefficients of `T_0..T_d`.
fn chebyshev_polynomials(degree: usize) -> Vec<Vec<i128>> {
    let mut t: Vec<Vec<i128>> = Vec::with_capacity(degree + 1);
    t.push(vec![1]);
    if degree >= 1 {
        t.push(vec![0, 1]);
    }
    for k in 2..=degree {
        let mut next = vec![0i128; k + 1];
        for (p, &c) in t[k - 1].iter().enumerate() {
            next[p + 1] += 2 * c;
        }
        for (p, &c) in t[k - 2].iter().enumerate() {
            next[p] -= c;
        }
        t.push(next);
    }
    t
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as f64
}

pub fn build_step_approx(degree: usize) -> Result<StepApprox> {
    if !(1..=MAX_DEGREE).contains(&degree) {
        return Err(Error::config(format!(
            "polynomial degree {degree} outside 1..={MAX_DEGREE}"
        )));
    }
    let chebyshev: Vec<f64> = quadrature_coefficients(degree)
        .into_iter()
        .zip(lanczos_sigma(degree))
        .map(|(a, s)| a * s)
        .collect();
    let basis = chebyshev_polynomials(degree);
    let mut mono = vec![0.0; degree + 1];
    for (k, tk) in basis.iter().enumerate() {
        if chebyshev[k] == 0.0 {
            continue;
        }
        for (p, &c) in tk.iter().enumerate() {
            mono[p] += chebyshev[k] * c as f64;
        }
    }
    let pair = mono
        .iter()
        .enumerate()
        .map(|(mu, &c)| {
            (0..=mu)
                .map(|l| {
                    let sign = if (mu - l) % 2 == 0 { 1.0 } else { -1.0 };
                    c * binomial(mu, l) * sign
                })
                .collect()
        })
        .collect();
    Ok(StepApprox {
        degree,
        chebyshev,
        mono,
        pair,
    })
}

impl StepApprox {
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Monomial coefficients `c_0..c_d`.
    pub fn coefficients(&self) -> &[f64] {
        &self.mono
    }

    /// Damped Chebyshev-basis coefficients.
    pub fn chebyshev_coefficients(&self) -> &[f64] {
        &self.chebyshev
    }

    /// `Y[μ][l]` for `0 ≤ l ≤ μ ≤ d`.
    pub fn pair_coefficients(&self) -> &[Vec<f64>] {
        &self.pair
    }

    fn check_domain(x: f64) -> Result<()> {
        if x.abs() <= 1.0 {
            Ok(())
        } else {
            Err(Error::config(format!("{x} lies outside [-1, 1]")))
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Self::check_domain(x)?;
        Ok(self.mono.iter().rev().fold(0.0, |acc, &c| acc * x + c))
    }

    pub fn eval_derivative(&self, x: f64) -> Result<f64> {
        Self::check_domain(x)?;
        Ok(self
            .mono
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (mu, &c)| acc * x + mu as f64 * c))
    }
}
