#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};

/// Brute-force path enumeration over all |Σ|^L labelings.
pub struct Enumerated {
    pub log_z: f64,
    pub marginals: Array2<f64>,
    /// `log P(y | X)` for every path, in odometer order (position 0 fastest).
    pub log_probs: Vec<(Vec<usize>, f64)>,
}

pub fn path_score(unary: ArrayView2<f64>, pairwise: ArrayView2<f64>, y: &[usize]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        s += unary[[i, y[i]]];
        if i > 0 {
            s += pairwise[[y[i - 1], y[i]]];
        }
    }
    s
}

pub fn enumerate(unary: ArrayView2<f64>, pairwise: ArrayView2<f64>) -> Enumerated {
    let (len, n) = unary.dim();
    let mut paths = Vec::new();
    let mut y = vec![0usize; len];
    loop {
        paths.push((y.clone(), path_score(unary, pairwise, &y)));
        let mut k = 0;
        while k < len {
            y[k] += 1;
            if y[k] < n {
                break;
            }
            y[k] = 0;
            k += 1;
        }
        if k == len {
            break;
        }
    }
    let max = paths.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + paths.iter().map(|p| (p.1 - max).exp()).sum::<f64>().ln();
    let mut marginals = Array2::zeros((len, n));
    for (y, s) in &paths {
        let p = (s - log_z).exp();
        for (i, &a) in y.iter().enumerate() {
            marginals[[i, a]] += p;
        }
    }
    let log_probs = paths.into_iter().map(|(y, s)| (y, s - log_z)).collect();
    Enumerated {
        log_z,
        marginals,
        log_probs,
    }
}

/// Direct O(n₀n₁) Mann-Whitney count with half credit for ties.
pub fn pairwise_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut acc, mut n1, mut n0) = (0.0, 0usize, 0usize);
    for (i, &si) in scores.iter().enumerate() {
        if !positive[i] {
            n0 += 1;
            continue;
        }
        n1 += 1;
        for (j, &sj) in scores.iter().enumerate() {
            if !positive[j] {
                acc += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (n1 > 0 && n0 > 0).then(|| acc / (n1 * n0) as f64)
}
