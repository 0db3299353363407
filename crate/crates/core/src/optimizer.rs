//! Batch L-BFGS with a strong Wolfe line search, plus parameter
//! initialization. Objectives are maximized; internally the negation is
//! minimized.

use std::collections::VecDeque;
use std::time::Instant;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dcnn::NetworkArch;
use crate::error::{Error, Result};
use crate::objectives::ValueGrad;
use crate::params::ModelParams;
use crate::seqdata::LabelAlphabet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once the max-norm of the gradient falls below this.
    pub grad_tolerance: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub max_line_search_steps: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iterations: 200,
            grad_tolerance: 1e-5,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_search_steps: 40,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::config(format!(
                "Wolfe constants must satisfy 0 < c1 < c2 < 1 (got {}, {})",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        if self.memory == 0 {
            return Err(Error::config("L-BFGS memory must be at least 1"));
        }
        if self.max_line_search_steps == 0 {
            return Err(Error::config("line search needs at least one step"));
        }
        if !(self.grad_tolerance >= 0.0) {
            return Err(Error::config("gradient tolerance must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub seed: u64,
    /// Convolution weights and `U` are drawn uniformly from `[−scale, scale]`;
    /// `T` starts at zero.
    pub scale: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig { seed: 0, scale: 0.1 }
    }
}

pub fn init_params(arch: &NetworkArch, alphabet: &LabelAlphabet, cfg: InitConfig) -> Result<ModelParams> {
    arch.validate()?;
    if !(cfg.scale >= 0.0 && cfg.scale.is_finite()) {
        return Err(Error::config(format!("init scale {} must be >= 0", cfg.scale)));
    }
    let mut params = ModelParams::zeros(arch.clone(), alphabet.len());
    if cfg.scale == 0.0 {
        return Ok(params);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |x: &mut f64| *x = rng.random_range(-cfg.scale..=cfg.scale);
    for layer in &mut params.conv.layers {
        layer.iter_mut().for_each(&mut draw);
    }
    params.crf.unary_weights.iter_mut().for_each(&mut draw);
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    /// No acceptable step was found; the best iterate seen is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub value: f64,
    pub grad_max_norm: f64,
    pub step: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Record 0 is the starting point; each later record is an accepted step.
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    pub evaluations: usize,
}

impl TrainingTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_value(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.value)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// A point evaluated on the minimized function `f = −objective`.
#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

struct Evaluator<F> {
    objective: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> Result<ValueGrad>> Evaluator<F> {
    /// `Ok(None)` when the objective is not finite at `x`.
    fn eval(&mut self, x: Vec<f64>) -> Result<Option<Point>> {
        self.evaluations += 1;
        match (self.objective)(&x) {
            Ok(vg) => {
                if vg.grad.len() != x.len() {
                    return Err(Error::dim(format!(
                        "objective returned {} gradient entries for {} parameters",
                        vg.grad.len(),
                        x.len()
                    )));
                }
                if !vg.value.is_finite() || vg.grad.iter().any(|g| !g.is_finite()) {
                    return Ok(None);
                }
                let g = vg.grad.iter().map(|v| -v).collect();
                Ok(Some(Point { x, f: -vg.value, g }))
            }
            Err(e) if matches!(e.root(), Error::Numerical(_)) => {
                debug!("objective not finite during line search: {e}");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}

enum Search {
    Wolfe(Point, f64),
    /// No strong-Wolfe point, but this one decreased `f`.
    Decrease(Point, f64),
    Failed,
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, kept inside
/// the middle 80% of the bracket; bisection otherwise.
fn interpolate(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (hi - lo);
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc >= 0.0 {
        let d2 = (b - a).signum() * disc.sqrt();
        let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
        if t.is_finite() && t > lo + margin && t < hi - margin {
            return t;
        }
    }
    0.5 * (lo + hi)
}

fn line_search<F: FnMut(&[f64]) -> Result<ValueGrad>>(
    ev: &mut Evaluator<F>,
    cur: &Point,
    dir: &[f64],
    alpha0: f64,
    cfg: &LbfgsConfig,
) -> Result<Search> {
    let f0 = cur.f;
    let d0 = dot(&cur.g, dir);
    let at = |alpha: f64| -> Vec<f64> { cur.x.iter().zip(dir).map(|(x, d)| x + alpha * d).collect() };
    let mut best: Option<(Point, f64)> = None;
    let note = |p: &Point, alpha: f64, best: &mut Option<(Point, f64)>| {
        if p.f < f0 + cfg.wolfe_c1 * alpha * d0 && best.as_ref().is_none_or(|(b, _)| p.f < b.f) {
            *best = Some((p.clone(), alpha));
        }
    };

    // bracketing phase
    let (mut prev_a, mut prev_f, mut prev_d) = (0.0, f0, d0);
    let mut alpha = alpha0;
    let mut upper = f64::INFINITY;
    let mut steps = 0;
    let bracket = loop {
        if steps >= cfg.max_line_search_steps {
            break None;
        }
        steps += 1;
        let Some(p) = ev.eval(at(alpha))? else {
            upper = alpha;
            alpha = prev_a + 0.5 * (alpha - prev_a);
            continue;
        };
        note(&p, alpha, &mut best);
        let d = dot(&p.g, dir);
        if p.f > f0 + cfg.wolfe_c1 * alpha * d0 || (steps > 1 && p.f >= prev_f) {
            break Some(((prev_a, prev_f, prev_d), (alpha, p.f, d)));
        }
        if d.abs() <= -cfg.wolfe_c2 * d0 {
            return Ok(Search::Wolfe(p, alpha));
        }
        if d >= 0.0 {
            break Some(((alpha, p.f, d), (prev_a, prev_f, prev_d)));
        }
        prev_a = alpha;
        prev_f = p.f;
        prev_d = d;
        alpha = if upper.is_finite() { 0.5 * (alpha + upper) } else { 2.0 * alpha };
    };

    // zoom phase: `lo` always satisfies sufficient decrease and has the lower f
    if let Some((mut lo, mut hi)) = bracket {
        while steps < cfg.max_line_search_steps {
            steps += 1;
            let a = interpolate(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2);
            let Some(p) = ev.eval(at(a))? else {
                hi = (a, f64::INFINITY, 0.0);
                continue;
            };
            note(&p, a, &mut best);
            let d = dot(&p.g, dir);
            if p.f > f0 + cfg.wolfe_c1 * a * d0 || p.f >= lo.1 {
                hi = (a, p.f, d);
            } else {
                if d.abs() <= -cfg.wolfe_c2 * d0 {
                    return Ok(Search::Wolfe(p, a));
                }
                if d * (hi.0 - lo.0) >= 0.0 {
                    hi = lo;
                }
                lo = (a, p.f, d);
            }
            if (hi.0 - lo.0).abs() <= f64::EPSILON * lo.0.abs().max(1e-300) {
                break;
            }
        }
    }
    Ok(match best {
        Some((p, a)) => Search::Decrease(p, a),
        None => Search::Failed,
    })
}

/// Maximize `objective` over a flat parameter vector.
///
/// Returns the best point seen and the trace of accepted iterations. An
/// objective that is not finite (or fails with a numerical error) at a trial
/// point makes the line search back off; any other error is returned.
pub fn lbfgs_maximize_flat<F>(objective: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> Result<(Vec<f64>, TrainingTrace)>
where
    F: FnMut(&[f64]) -> Result<ValueGrad>,
{
    cfg.validate()?;
    let start = Instant::now();
    let mut ev = Evaluator {
        objective,
        evaluations: 0,
    };
    let mut cur = ev
        .eval(x0)?
        .ok_or_else(|| Error::Numerical("objective is not finite at the starting point".into()))?;
    let record = |iteration, p: &Point, step| IterationRecord {
        iteration,
        value: -p.f,
        grad_max_norm: max_norm(&p.g),
        step,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    let mut records = vec![record(0, &cur, 0.0)];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);

    let stop = loop {
        if max_norm(&cur.g) <= cfg.grad_tolerance {
            break StopReason::GradientTolerance;
        }
        if records.len() > cfg.max_iterations {
            break StopReason::MaxIterations;
        }

        // two-loop recursion
        let mut q = cur.g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = history.back().map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&dir, &cur.g) >= 0.0 {
            history.clear();
            dir = cur.g.iter().map(|v| -v).collect();
        }
        let alpha0 = if history.is_empty() {
            (1.0 / max_norm(&dir)).min(1.0)
        } else {
            1.0
        };

        let (next, step) = match line_search(&mut ev, &cur, &dir, alpha0, cfg)? {
            Search::Wolfe(p, a) => (p, a),
            Search::Decrease(p, a) => {
                debug!("line search ended without a curvature condition; taking the best decrease");
                (p, a)
            }
            Search::Failed if !history.is_empty() => {
                debug!("line search failed; restarting from steepest descent");
                history.clear();
                continue;
            }
            Search::Failed => break StopReason::LineSearchFailed,
        };

        let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        cur = next;
        let rec = record(records.len(), &cur, step);
        info!(
            "iteration {}: objective {:.6e}, |grad|max {:.3e}, step {:.3e}",
            rec.iteration, rec.value, rec.grad_max_norm, rec.step
        );
        records.push(rec);
    };
    if stop == StopReason::LineSearchFailed {
        warn!("line search failed after {} iterations; returning the best iterate", records.len() - 1);
    }
    Ok((
        cur.x,
        TrainingTrace {
            records,
            stop,
            evaluations: ev.evaluations,
        },
    ))
}

/// Maximize an objective over model parameters, starting from `init`.
pub fn lbfgs_maximize<F>(mut objective: F, init: &ModelParams, cfg: &LbfgsConfig) -> Result<(ModelParams, TrainingTrace)>
where
    F: FnMut(&ModelParams) -> Result<ValueGrad>,
{
    let (x, trace) = lbfgs_maximize_flat(|x| objective(&init.with_flat(x)?), init.to_flat(), cfg)?;
    Ok((init.with_flat(&x)?, trace))
}
