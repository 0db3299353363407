//! Linear-chain CRF layer.
//!
//! Forward/backward tables are kept in the exponential domain with one
//! rescaling factor per position. With `ψ_i(a, b) = exp(T[a, b] + g_i(b))`
//! the unscaled tables satisfy
//!
//! ```text
//! α(b, 1) = exp(g_1(b))            α(b, i) = Σ_a α(a, i−1) ψ_i(a, b)
//! β(a, L) = 1                      β(a, i) = Σ_b ψ_{i+1}(a, b) β(b, i+1)
//! ```
//!
//! and the stored tables are `α̂(·, i) = α(·, i) / Π_{j≤i} s_j` and
//! `β̂(·, i) = β(·, i) / Π_{j>i} s_j`, so that `Z = Π_j s_j` and
//! `P(y_i = a | X) = α̂(a, i) β̂(a, i)`. The τ-weighted tables used by the
//! marginal-derivative contractions share the same factors.
//!
//! There is no transition term at the first position.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// `U` maps top-layer activations to labels (`|Σ| × M_K`), `T` scores
/// adjacent label pairs (`|Σ| × |Σ|`, previous label first).
#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    pub unary_weights: Array2<f64>,
    pub transitions: Array2<f64>,
}

impl CrfParams {
    pub fn zeros(num_labels: usize, top_dim: usize) -> Self {
        CrfParams {
            unary_weights: Array2::zeros((num_labels, top_dim)),
            transitions: Array2::zeros((num_labels, num_labels)),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.transitions.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    /// `g_i(a)`, one row per position.
    pub unary: Array2<f64>,
    /// `T[a, b]`, shared by every position after the first.
    pub pairwise: Array2<f64>,
}

impl PotentialTable {
    pub fn len(&self) -> usize {
        self.unary.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_labels(&self) -> usize {
        self.unary.ncols()
    }
}

pub fn compute_potentials(top: ArrayView2<f64>, params: &CrfParams) -> Result<PotentialTable> {
    let u = &params.unary_weights;
    let t = &params.transitions;
    if t.nrows() != t.ncols() || u.nrows() != t.nrows() {
        return Err(Error::dim(format!("U is {:?}, T is {:?}", u.dim(), t.dim())));
    }
    if top.ncols() != u.ncols() {
        return Err(Error::dim(format!(
            "top layer has {} neurons, U has {} columns",
            top.ncols(),
            u.ncols()
        )));
    }
    Ok(PotentialTable {
        unary: top.dot(&u.t()),
        pairwise: t.clone(),
    })
}

/// Scaled forward/backward tables and position marginals for one sequence.
#[derive(Debug, Clone)]
pub struct FbTables {
    pub alpha: Array2<f64>,
    pub beta: Array2<f64>,
    /// `log s_i` for each position; these sum to `log_z`.
    pub log_scales: Vec<f64>,
    pub log_z: f64,
    pub marginals: Array2<f64>,
    // exp(g_i(b) − max_b g_i(b))
    unary_exp: Array2<f64>,
    // exp(T[a, b] − max T)
    trans_exp: Array2<f64>,
    // s_i divided by the shifts folded into unary_exp / trans_exp
    norms: Vec<f64>,
}

impl FbTables {
    pub fn len(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_labels(&self) -> usize {
        self.alpha.ncols()
    }

    /// `ψ_i(a, b) / s_i` for `i ≥ 1` (0-based).
    #[inline]
    fn edge(&self, i: usize, a: usize, b: usize) -> f64 {
        self.trans_exp[[a, b]] * self.unary_exp[[i, b]] / self.norms[i]
    }

    /// `P(y_{i−1} = a, y_i = b | X)` for `i ≥ 1` (0-based).
    pub fn pair_marginals(&self, i: usize) -> Array2<f64> {
        let n = self.num_labels();
        Array2::from_shape_fn((n, n), |(a, b)| {
            self.alpha[[i - 1, a]] * self.edge(i, a, b) * self.beta[[i, b]]
        })
    }

    /// Expected transition counts `Σ_i P(y_{i−1} = a, y_i = b | X)`.
    pub fn expected_transitions(&self) -> Array2<f64> {
        let n = self.num_labels();
        let mut out = Array2::zeros((n, n));
        for i in 1..self.len() {
            for a in 0..n {
                let fa = self.alpha[[i - 1, a]];
                for b in 0..n {
                    out[[a, b]] += fa * self.edge(i, a, b) * self.beta[[i, b]];
                }
            }
        }
        out
    }
}

pub fn forward_backward(pot: &PotentialTable) -> Result<FbTables> {
    let len = pot.len();
    let n = pot.num_labels();
    if len == 0 {
        return Err(Error::dim("empty potential table"));
    }
    if pot.pairwise.dim() != (n, n) {
        return Err(Error::dim(format!(
            "pairwise table {:?} for {n} labels",
            pot.pairwise.dim()
        )));
    }
    if pot.unary.iter().chain(pot.pairwise.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite potential".into()));
    }

    let t_max = pot.pairwise.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let trans_exp = pot.pairwise.mapv(|t| (t - t_max).exp());
    let mut unary_exp = Array2::zeros((len, n));
    let mut shifts = vec![0.0; len];
    for (i, row) in pot.unary.outer_iter().enumerate() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (dst, &g) in unary_exp.row_mut(i).iter_mut().zip(row) {
            *dst = (g - m).exp();
        }
        shifts[i] = if i == 0 { m } else { m + t_max };
    }

    let mut alpha = Array2::<f64>::zeros((len, n));
    let mut norms = vec![0.0; len];
    for b in 0..n {
        alpha[[0, b]] = unary_exp[[0, b]];
    }
    for i in 0..len {
        if i > 0 {
            for b in 0..n {
                let mut acc = 0.0;
                for a in 0..n {
                    acc += alpha[[i - 1, a]] * trans_exp[[a, b]];
                }
                alpha[[i, b]] = acc * unary_exp[[i, b]];
            }
        }
        let c: f64 = alpha.row(i).sum();
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Numerical(format!(
                "forward mass {c} at position {i}; potentials are too extreme"
            )));
        }
        alpha.row_mut(i).mapv_inplace(|v| v / c);
        norms[i] = c;
    }

    let mut beta = Array2::<f64>::zeros((len, n));
    beta.row_mut(len - 1).fill(1.0);
    for i in (0..len - 1).rev() {
        for a in 0..n {
            let mut acc = 0.0;
            for b in 0..n {
                acc += trans_exp[[a, b]] * unary_exp[[i + 1, b]] * beta[[i + 1, b]];
            }
            beta[[i, a]] = acc / norms[i + 1];
        }
    }

    let log_scales: Vec<f64> = norms.iter().zip(&shifts).map(|(c, s)| c.ln() + s).collect();
    let log_z = log_scales.iter().sum::<f64>();
    if !log_z.is_finite() {
        return Err(Error::Numerical("log partition function is not finite".into()));
    }
    let marginals = &alpha * &beta;
    Ok(FbTables {
        alpha,
        beta,
        log_scales,
        log_z,
        marginals,
        unary_exp,
        trans_exp,
        norms,
    })
}

/// `log P(y | X) = Σ_i g_i(y_i) + Σ_{i>1} T[y_{i−1}, y_i] − log Z`.
pub fn sequence_log_probability(pot: &PotentialTable, labels: &[usize], fb: &FbTables) -> Result<f64> {
    if labels.len() != pot.len() {
        return Err(Error::dim(format!(
            "{} labels for a sequence of length {}",
            labels.len(),
            pot.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= pot.num_labels()) {
        return Err(Error::dim(format!("label {bad} outside the alphabet")));
    }
    let mut score = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        score += pot.unary[[i, y]];
        if i > 0 {
            score += pot.pairwise[[labels[i - 1], y]];
        }
    }
    Ok(score - fb.log_z)
}

/// Max-marginal decoding; ties go to the lowest label index.
pub fn decode_posterior(fb: &FbTables) -> Vec<usize> {
    fb.marginals
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (a, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// τ-weighted forward/backward tables for per-position weights `q_i`.
///
/// Unscaled, `α^τ(u, i)` sums `q_t · exp(F_{1:i})` over prefixes ending in
/// `u` at `i` that visit `τ` at some `t ≤ i`; `β^τ(u, i)` is the suffix
/// counterpart over `t > i`. `accumulator` is `C = Σ_i q_i P(y_i = τ | X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TauTables {
    pub alpha_tau: Array2<f64>,
    pub beta_tau: Array2<f64>,
    pub accumulator: f64,
}

pub fn tau_forward_backward(fb: &FbTables, tau: usize, q_prime: &[f64]) -> Result<TauTables> {
    let len = fb.len();
    let n = fb.num_labels();
    if q_prime.len() != len {
        return Err(Error::dim(format!("{} weights for {len} positions", q_prime.len())));
    }
    if tau >= n {
        return Err(Error::dim(format!("label {tau} outside the alphabet")));
    }

    let mut alpha_tau = Array2::<f64>::zeros((len, n));
    alpha_tau[[0, tau]] = q_prime[0] * fb.alpha[[0, tau]];
    for i in 1..len {
        for u in 0..n {
            let mut acc = 0.0;
            for up in 0..n {
                acc += alpha_tau[[i - 1, up]] * fb.edge(i, up, u);
            }
            alpha_tau[[i, u]] = acc;
        }
        alpha_tau[[i, tau]] += q_prime[i] * fb.alpha[[i, tau]];
    }

    let mut beta_tau = Array2::<f64>::zeros((len, n));
    for i in (0..len - 1).rev() {
        for u in 0..n {
            let mut acc = 0.0;
            for up in 0..n {
                let mut next = beta_tau[[i + 1, up]];
                if up == tau {
                    next += q_prime[i + 1] * fb.beta[[i + 1, up]];
                }
                acc += fb.edge(i + 1, u, up) * next;
            }
            beta_tau[[i, u]] = acc;
        }
    }

    let accumulator = q_prime
        .iter()
        .enumerate()
        .map(|(i, q)| q * fb.marginals[[i, tau]])
        .sum();
    Ok(TauTables {
        alpha_tau,
        beta_tau,
        accumulator,
    })
}

/// Gradient of `Σ_i q_i P(y_i = τ | X)` (with `q` held fixed) with respect to
/// the transition matrix and the unary potentials.
///
/// The second output, `Φ̃(i, a)`, is the derivative with respect to `g_i(a)`;
/// contracting it with the top-layer activations gives the `U` gradient and
/// it is the error signal that drives the convolution backward pass.
pub fn marginal_grad_contractions(
    fb: &FbTables,
    tt: &TauTables,
    tau: usize,
    q_prime: &[f64],
) -> Result<(Array2<f64>, Array2<f64>)> {
    let len = fb.len();
    let n = fb.num_labels();
    if tt.alpha_tau.dim() != (len, n) || tt.beta_tau.dim() != (len, n) || q_prime.len() != len {
        return Err(Error::dim("τ tables do not match the forward/backward tables"));
    }
    if tau >= n {
        return Err(Error::dim(format!("label {tau} outside the alphabet")));
    }
    let c = tt.accumulator;

    let mut grad_t = Array2::<f64>::zeros((n, n));
    for i in 1..len {
        for a in 0..n {
            let fa = fb.alpha[[i - 1, a]];
            let fa_tau = tt.alpha_tau[[i - 1, a]];
            for b in 0..n {
                let bb = fb.beta[[i, b]];
                let mut phi = fa_tau * bb + fa * tt.beta_tau[[i, b]] - fa * bb * c;
                if b == tau {
                    phi += q_prime[i] * fa * bb;
                }
                grad_t[[a, b]] += phi * fb.edge(i, a, b);
            }
        }
    }

    let mut unary_error = Array2::<f64>::zeros((len, n));
    for i in 0..len {
        for a in 0..n {
            unary_error[[i, a]] = tt.alpha_tau[[i, a]] * fb.beta[[i, a]] + fb.alpha[[i, a]] * tt.beta_tau[[i, a]]
                - fb.marginals[[i, a]] * c;
        }
    }
    Ok((grad_t, unary_error))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pot(len: usize, n: usize, seed: u64, scale: f64) -> PotentialTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PotentialTable {
            unary: Array::from_shape_fn((len, n), |_| rng.random_range(-scale..scale)),
            pairwise: Array::from_shape_fn((n, n), |_| rng.random_range(-scale..scale)),
        }
    }

    fn score(pot: &PotentialTable, y: &[usize]) -> f64 {
        let mut s = 0.0;
        for i in 0..y.len() {
            s += pot.unary[[i, y[i]]];
            if i > 0 {
                s += pot.pairwise[[y[i - 1], y[i]]];
            }
        }
        s
    }

    fn paths(len: usize, n: usize) -> Vec<Vec<usize>> {
        let total = n.pow(len as u32);
        (0..total)
            .map(|mut code| {
                (0..len)
                    .map(|_| {
                        let d = code % n;
                        code /= n;
                        d
                    })
                    .collect()
            })
            .collect()
    }

    struct Enumerated {
        log_z: f64,
        marginals: Array2<f64>,
    }

    fn enumerate(pot: &PotentialTable) -> Enumerated {
        let (len, n) = pot.unary.dim();
        let all = paths(len, n);
        let z: f64 = all.iter().map(|y| score(pot, y).exp()).sum();
        let mut marginals = Array2::zeros((len, n));
        for y in &all {
            let p = score(pot, y).exp() / z;
            for i in 0..len {
                marginals[[i, y[i]]] += p;
            }
        }
        Enumerated {
            log_z: z.ln(),
            marginals,
        }
    }

    /// Unscaled α^τ by its path definition.
    fn enumerate_alpha_tau(pot: &PotentialTable, tau: usize, q: &[f64], i: usize) -> Vec<f64> {
        let n = pot.num_labels();
        let prefix = PotentialTable {
            unary: pot.unary.slice(ndarray::s![..=i, ..]).to_owned(),
            pairwise: pot.pairwise.clone(),
        };
        let mut out = vec![0.0; n];
        for y in paths(i + 1, n) {
            let w: f64 = (0..=i).filter(|&t| y[t] == tau).map(|t| q[t]).sum();
            out[y[i]] += w * score(&prefix, &y).exp();
        }
        out
    }

    /// Unscaled β^τ by its path definition.
    fn enumerate_beta_tau(pot: &PotentialTable, tau: usize, q: &[f64], i: usize) -> Vec<f64> {
        let (len, n) = pot.unary.dim();
        let mut out = vec![0.0; n];
        for y in paths(len - i, n) {
            let w: f64 = (1..len - i).filter(|&t| y[t] == tau).map(|t| q[i + t]).sum();
            let mut s = 0.0;
            for t in 1..len - i {
                s += pot.unary[[i + t, y[t]]] + pot.pairwise[[y[t - 1], y[t]]];
            }
            out[y[0]] += w * s.exp();
        }
        out
    }

    #[test]
    fn matches_enumeration() {
        for seed in 0..20 {
            let pot = random_pot(3, 2, seed, 2.0);
            let fb = forward_backward(&pot).unwrap();
            let e = enumerate(&pot);
            assert!((fb.log_z - e.log_z).abs() < 1e-10);
            for (a, b) in fb.marginals.iter().zip(e.marginals.iter()) {
                assert!((a - b).abs() < 1e-10);
            }
            let decoded = decode_posterior(&fb);
            for (i, &d) in decoded.iter().enumerate() {
                let row = e.marginals.row(i);
                assert!(row.iter().all(|&p| p <= row[d] + 1e-12));
            }
        }
    }

    #[test]
    fn single_position_is_softmax() {
        let pot = PotentialTable {
            unary: array![[0.3, -1.2, 2.0]],
            pairwise: Array2::from_elem((3, 3), 5.0),
        };
        let fb = forward_backward(&pot).unwrap();
        let z: f64 = pot.unary.iter().map(|g| g.exp()).sum();
        assert!((fb.log_z - z.ln()).abs() < 1e-14);
        for a in 0..3 {
            assert!((fb.marginals[[0, a]] - pot.unary[[0, a]].exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_transitions_factorize() {
        let mut pot = random_pot(6, 3, 9, 3.0);
        pot.pairwise.fill(0.0);
        let fb = forward_backward(&pot).unwrap();
        for i in 0..6 {
            let z: f64 = pot.unary.row(i).iter().map(|g| g.exp()).sum();
            for a in 0..3 {
                assert!((fb.marginals[[i, a]] - pot.unary[[i, a]].exp() / z).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn log_probabilities_normalize() {
        let pot = random_pot(3, 2, 5, 1.5);
        let fb = forward_backward(&pot).unwrap();
        let total: f64 = paths(3, 2)
            .iter()
            .map(|y| sequence_log_probability(&pot, y, &fb).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);

        let flat = PotentialTable {
            unary: Array2::zeros((1, 2)),
            pairwise: Array2::zeros((2, 2)),
        };
        let fb = forward_backward(&flat).unwrap();
        for y in 0..2 {
            let lp = sequence_log_probability(&flat, &[y], &fb).unwrap();
            assert!((lp + 2f64.ln()).abs() < 1e-15);
        }
        assert!(sequence_log_probability(&flat, &[0, 1], &fb).is_err());
    }

    #[test]
    fn constant_unary_shift_leaves_probabilities() {
        let pot = random_pot(5, 3, 21, 2.0);
        let mut shifted = pot.clone();
        shifted.unary.mapv_inplace(|g| g + 7.5);
        let (fa, fb2) = (forward_backward(&pot).unwrap(), forward_backward(&shifted).unwrap());
        let y = [0, 2, 1, 1, 0];
        let a = sequence_log_probability(&pot, &y, &fa).unwrap();
        let b = sequence_log_probability(&shifted, &y, &fb2).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!((fb2.log_z - fa.log_z - 5.0 * 7.5).abs() < 1e-10);
    }

    #[test]
    fn decode_ties_go_low() {
        let pot = PotentialTable {
            unary: array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]],
            pairwise: Array2::zeros((2, 2)),
        };
        let fb = forward_backward(&pot).unwrap();
        assert_eq!(decode_posterior(&fb), vec![0, 0, 1]);
    }

    #[test]
    fn long_sequences_do_not_underflow() {
        let pot = random_pot(10_000, 3, 4, 20.0);
        let fb = forward_backward(&pot).unwrap();
        assert!(fb.log_z.is_finite());
        for row in fb.marginals.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn non_finite_potentials_rejected() {
        let mut pot = random_pot(3, 2, 1, 1.0);
        pot.unary[[1, 1]] = f64::INFINITY;
        assert!(matches!(forward_backward(&pot), Err(Error::Numerical(_))));
    }

    #[test]
    fn potentials_match_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let top = Array::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let params = CrfParams {
            unary_weights: Array::from_shape_fn((2, 4), |_| rng.random_range(-1.0..1.0)),
            transitions: Array::from_shape_fn((2, 2), |_| rng.random_range(-1.0..1.0)),
        };
        let pot = compute_potentials(top.view(), &params).unwrap();
        for i in 0..3 {
            for a in 0..2 {
                let direct: f64 = (0..4).map(|h| params.unary_weights[[a, h]] * top[[i, h]]).sum();
                assert!((pot.unary[[i, a]] - direct).abs() < 1e-14);
            }
        }
        assert_eq!(pot.pairwise, params.transitions);

        let zero = CrfParams::zeros(2, 4);
        assert!(compute_potentials(top.view(), &zero).unwrap().unary.iter().all(|&g| g == 0.0));
        let ones = Array2::ones((5, 1));
        let mut p1 = CrfParams::zeros(3, 1);
        p1.unary_weights = array![[0.5], [-1.0], [2.0]];
        let pot = compute_potentials(ones.view(), &p1).unwrap();
        for i in 0..5 {
            assert_eq!(pot.unary.row(i).to_vec(), vec![0.5, -1.0, 2.0]);
        }
        assert!(compute_potentials(Array2::zeros((2, 3)).view(), &p1).is_err());
    }

    #[test]
    fn tau_tables_match_definition() {
        for seed in 0..10 {
            let pot = random_pot(3, 2, 100 + seed, 1.5);
            let fb = forward_backward(&pot).unwrap();
            let q = [0.7, -1.3, 0.4];
            for tau in 0..2 {
                let tt = tau_forward_backward(&fb, tau, &q).unwrap();
                let mut prefix_scale = 0.0;
                for i in 0..3 {
                    prefix_scale += fb.log_scales[i];
                    let suffix_scale: f64 = fb.log_scales[i + 1..].iter().sum();
                    let a = enumerate_alpha_tau(&pot, tau, &q, i);
                    let b = enumerate_beta_tau(&pot, tau, &q, i);
                    for u in 0..2 {
                        assert!((tt.alpha_tau[[i, u]] * prefix_scale.exp() - a[u]).abs() < 1e-10);
                        assert!((tt.beta_tau[[i, u]] * suffix_scale.exp() - b[u]).abs() < 1e-10);
                    }
                }
                assert!(tt.beta_tau.row(2).iter().all(|&v| v == 0.0));
                let c: f64 = (0..3).map(|i| q[i] * fb.marginals[[i, tau]]).sum();
                assert!((tt.accumulator - c).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn tau_base_cases() {
        let pot = random_pot(1, 3, 8, 1.0);
        let fb = forward_backward(&pot).unwrap();
        let tt = tau_forward_backward(&fb, 2, &[0.6]).unwrap();
        for u in 0..3 {
            let expect = if u == 2 { 0.6 * fb.alpha[[0, 2]] } else { 0.0 };
            assert_eq!(tt.alpha_tau[[0, u]], expect);
            assert_eq!(tt.beta_tau[[0, u]], 0.0);
        }
        assert!((tt.accumulator - 0.6 * fb.marginals[[0, 2]]).abs() < 1e-15);

        let pot = random_pot(4, 2, 9, 1.0);
        let fb = forward_backward(&pot).unwrap();
        let q = [0.0; 4];
        let tt = tau_forward_backward(&fb, 1, &q).unwrap();
        assert!(tt.alpha_tau.iter().chain(tt.beta_tau.iter()).all(|&v| v == 0.0));
        assert_eq!(tt.accumulator, 0.0);
        let (gt, ue) = marginal_grad_contractions(&fb, &tt, 1, &q).unwrap();
        assert!(gt.iter().chain(ue.iter()).all(|&v| v == 0.0));
        assert!(tau_forward_backward(&fb, 1, &[0.0; 3]).is_err());
    }

    fn weighted_marginal(pot: &PotentialTable, tau: usize, q: &[f64]) -> f64 {
        let fb = forward_backward(pot).unwrap();
        (0..pot.len()).map(|i| q[i] * fb.marginals[[i, tau]]).sum()
    }

    #[test]
    fn contractions_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (len, n, m) = (4, 2, 3);
        let top = Array::from_shape_fn((len, m), |_| rng.random_range(-1.0..1.0));
        let params = CrfParams {
            unary_weights: Array::from_shape_fn((n, m), |_| rng.random_range(-1.0..1.0)),
            transitions: Array::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0)),
        };
        // l = 1 on D^τ = positions labeled τ, then arbitrary weights.
        let labels = [0, 1, 1, 0];
        for tau in 0..n {
            let mask: Vec<f64> = labels.iter().map(|&y| f64::from(u8::from(y == tau))).collect();
            let arbitrary: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
            for q in [mask, arbitrary] {
                let f = |p: &CrfParams| weighted_marginal(&compute_potentials(top.view(), p).unwrap(), tau, &q);
                let pot = compute_potentials(top.view(), &params).unwrap();
                let fb = forward_backward(&pot).unwrap();
                let tt = tau_forward_backward(&fb, tau, &q).unwrap();
                let (gt, ue) = marginal_grad_contractions(&fb, &tt, tau, &q).unwrap();
                let gu = ue.t().dot(&top);
                let eps = 1e-5;
                for idx in ndarray::indices((n, n)) {
                    let (mut p, mut m_) = (params.clone(), params.clone());
                    p.transitions[idx] += eps;
                    m_.transitions[idx] -= eps;
                    let fd = (f(&p) - f(&m_)) / (2.0 * eps);
                    assert!((fd - gt[idx]).abs() / fd.abs().max(gt[idx].abs()).max(1e-3) < 1e-5);
                }
                for idx in ndarray::indices((n, m)) {
                    let (mut p, mut m_) = (params.clone(), params.clone());
                    p.unary_weights[idx] += eps;
                    m_.unary_weights[idx] -= eps;
                    let fd = (f(&p) - f(&m_)) / (2.0 * eps);
                    assert!((fd - gu[idx]).abs() / fd.abs().max(gu[idx].abs()).max(1e-3) < 1e-5);
                }
            }
        }
    }

    #[test]
    fn all_position_weights_give_marginal_derivative() {
        // With q ≡ 1, ∂/∂g_j(a) Σ_i P(y_i = τ) = Σ_i [P(y_i = τ, y_j = a) − P(y_i = τ) P(y_j = a)].
        let pot = random_pot(3, 2, 31, 1.2);
        let fb = forward_backward(&pot).unwrap();
        let q = [1.0; 3];
        let e = enumerate(&pot);
        let all = paths(3, 2);
        let z = e.log_z.exp();
        for tau in 0..2 {
            let tt = tau_forward_backward(&fb, tau, &q).unwrap();
            let (_, ue) = marginal_grad_contractions(&fb, &tt, tau, &q).unwrap();
            for j in 0..3 {
                for a in 0..2 {
                    let mut expect = 0.0;
                    for i in 0..3 {
                        let joint: f64 = all
                            .iter()
                            .filter(|y| y[i] == tau && y[j] == a)
                            .map(|y| score(&pot, y).exp() / z)
                            .sum();
                        expect += joint - e.marginals[[i, tau]] * e.marginals[[j, a]];
                    }
                    assert!((ue[[j, a]] - expect).abs() < 1e-12);
                }
            }
        }
    }

    fn log_sum_exp(v: &[f64]) -> f64 {
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    }

    /// Log-domain reference forward/backward.
    fn log_domain(pot: &PotentialTable) -> (f64, Array2<f64>) {
        let (len, n) = pot.unary.dim();
        let mut la = Array2::<f64>::zeros((len, n));
        let mut lb = Array2::<f64>::zeros((len, n));
        la.row_mut(0).assign(&pot.unary.row(0));
        for i in 1..len {
            for b in 0..n {
                let terms: Vec<f64> = (0..n).map(|a| la[[i - 1, a]] + pot.pairwise[[a, b]]).collect();
                la[[i, b]] = log_sum_exp(&terms) + pot.unary[[i, b]];
            }
        }
        for i in (0..len - 1).rev() {
            for a in 0..n {
                let terms: Vec<f64> = (0..n)
                    .map(|b| pot.pairwise[[a, b]] + pot.unary[[i + 1, b]] + lb[[i + 1, b]])
                    .collect();
                lb[[i, a]] = log_sum_exp(&terms);
            }
        }
        let log_z = log_sum_exp(&la.row(len - 1).to_vec());
        let marg = Array2::from_shape_fn((len, n), |(i, a)| (la[[i, a]] + lb[[i, a]] - log_z).exp());
        (log_z, marg)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn enumeration_equivalence(seed in 0u64..100_000, len in 1usize..=6, n in 2usize..=4) {
            prop_assume!(n.pow(len as u32) <= 4096);
            let pot = random_pot(len, n, seed, 3.0);
            let fb = forward_backward(&pot).unwrap();
            let e = enumerate(&pot);
            prop_assert!((fb.log_z - e.log_z).abs() < 1e-9);
            for (a, b) in fb.marginals.iter().zip(e.marginals.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            // pairwise path probabilities
            let all = paths(len, n);
            let z = e.log_z.exp();
            for i in 1..len {
                let pm = fb.pair_marginals(i);
                for a in 0..n {
                    for b in 0..n {
                        let direct: f64 = all.iter().filter(|y| y[i - 1] == a && y[i] == b)
                            .map(|y| score(&pot, y).exp() / z).sum();
                        prop_assert!((pm[[a, b]] - direct).abs() < 1e-9);
                    }
                }
            }
        }

        #[test]
        fn scaled_agrees_with_log_domain(seed in 0u64..100_000, len in 1usize..40, n in 2usize..6) {
            let pot = random_pot(len, n, seed, 8.0);
            let fb = forward_backward(&pot).unwrap();
            let (log_z, marg) = log_domain(&pot);
            prop_assert!((fb.log_z - log_z).abs() < 1e-8 * log_z.abs().max(1.0));
            for (a, b) in fb.marginals.iter().zip(marg.iter()) {
                prop_assert!((a - b).abs() < 1e-8);
            }
            for row in fb.marginals.outer_iter() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-10);
                prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }

        #[test]
        fn position_shift_invariance(seed in 0u64..100_000, pos in 0usize..5, c in -10.0f64..10.0) {
            let pot = random_pot(5, 3, seed, 2.0);
            let mut shifted = pot.clone();
            shifted.unary.row_mut(pos).mapv_inplace(|g| g + c);
            let a = forward_backward(&pot).unwrap();
            let b = forward_backward(&shifted).unwrap();
            prop_assert!((b.log_z - a.log_z - c).abs() < 1e-10);
            for (x, y) in a.marginals.iter().zip(b.marginals.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
