use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::roc::auc;
use crate::attacks::MinMax;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.0, 1e-4, 1e-3, 1e-2, 1e-1];
pub const DEFAULT_FOLDS: usize = 5;
/// Stop once the gradient norm falls below this.
pub const GRAD_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;

/// Minimiser of `mean log-loss + lambda/2 * ||w||^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_design(x: &[Vec<f64>], y: &[bool]) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Input(format!("{} rows and {} labels", x.len(), y.len())));
    }
    let m = x[0].len();
    if x.iter().any(|r| r.len() != m || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Input("feature rows must be finite and of equal width".into()));
    }
    Ok(m)
}

/// Regularised mean logistic loss at `(w, b)`; the bias is not penalised.
pub fn objective(x: &[Vec<f64>], y: &[bool], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = x.len() as f64;
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(r, &yi)| {
            let s = b + r.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            if yi {
                softplus(-s)
            } else {
                softplus(s)
            }
        })
        .sum();
    loss / n + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Objective and its gradient; the last gradient entry is for the bias.
fn value_and_grad(x: &[Vec<f64>], y: &[bool], theta: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let m = theta.len() - 1;
    let (w, b) = (&theta[..m], theta[m]);
    let n = x.len() as f64;
    let mut g = vec![0.0; m + 1];
    let mut loss = 0.0;
    for (r, &yi) in x.iter().zip(y) {
        let s = b + r.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let t = if yi { 1.0 } else { 0.0 };
        loss += if yi { softplus(-s) } else { softplus(s) };
        let d = sigmoid(s) - t;
        for (gj, a) in g.iter_mut().zip(r) {
            *gj += d * a;
        }
        g[m] += d;
    }
    for gj in &mut g {
        *gj /= n;
    }
    for (gj, wj) in g.iter_mut().zip(w) {
        *gj += lambda * wj;
    }
    (loss / n + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>(), g)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Full-batch accelerated gradient descent from `w = 0, b = 0`, with
/// backtracking on the step size and gradient-based momentum restarts.
///
/// The step never drops below `1 / L` for the global Lipschitz bound
/// `L = trace(X'X / n) / 4 + lambda` (bias column included), which keeps the
/// method moving once objective differences fall under rounding. Stops when
/// the gradient norm drops below [`GRAD_TOL`] or after [`MAX_ITERATIONS`]; the
/// second case leaves `converged` false.
pub fn solve(x: &[Vec<f64>], y: &[bool], lambda: f64) -> Result<Solution> {
    let m = check_design(x, y)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Input(format!("lambda must be non-negative, got {lambda}")));
    }
    let bound = 0.25 * x.iter().map(|r| 1.0 + r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / x.len() as f64
        + lambda;
    let mut theta = vec![0.0; m + 1];
    let (mut f, mut g) = value_and_grad(x, y, &theta, lambda);
    let mut ahead = theta.clone();
    let mut t = 1.0f64;
    let mut lipschitz = bound;
    let mut iterations = 0;
    let mut converged = norm(&g) < GRAD_TOL;
    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let (fy, gy) = value_and_grad(x, y, &ahead, lambda);
        let gy2 = gy.iter().map(|v| v * v).sum::<f64>();
        lipschitz *= 0.5;
        let next = loop {
            if lipschitz >= bound {
                lipschitz = bound;
            }
            let cand: Vec<f64> = ahead.iter().zip(&gy).map(|(p, d)| p - d / lipschitz).collect();
            if lipschitz == bound || objective(x, y, &cand[..m], cand[m], lambda) <= fy - 0.5 * gy2 / lipschitz {
                break cand;
            }
            lipschitz *= 2.0;
        };
        let uphill = gy.iter().zip(next.iter().zip(&theta)).map(|(d, (a, b))| d * (a - b)).sum::<f64>() > 0.0;
        if uphill {
            t = 1.0;
            ahead.clone_from(&next);
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            ahead = next.iter().zip(&theta).map(|(a, b)| a + beta * (a - b)).collect();
            t = t_next;
        }
        theta = next;
        (f, g) = value_and_grad(x, y, &theta, lambda);
        converged = norm(&g) < GRAD_TOL;
    }
    Ok(Solution {
        weights: theta[..m].to_vec(),
        bias: theta[m],
        objective: f,
        iterations,
        converged,
    })
}

/// How [`fit`] selects the penalty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl FitOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            folds: DEFAULT_FOLDS,
            seed,
        }
    }
}

/// Logistic-regression membership classifier over a subset of feature
/// columns, min-max normalised with statistics from its training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2_lambda: f64,
    pub feature_mask: Vec<bool>,
    pub normalization: MinMax,
    pub converged: bool,
    /// Mean cross-validated AUC for each candidate penalty.
    pub cv_auc: Vec<(f64, f64)>,
}

fn select(row: &[f64], mask: &[bool]) -> Vec<f64> {
    row.iter().zip(mask).filter(|(_, &k)| k).map(|(&v, _)| v).collect()
}

impl LogRegModel {
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.feature_mask.len() {
            return Err(Error::Contract(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.feature_mask.len()
            )));
        }
        let z = self.normalization.apply_row(&select(row, &self.feature_mask))?;
        Ok(sigmoid(self.bias + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()))
    }

    pub fn predict_all(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict_proba(r)).collect()
    }
}

/// Stratified fold index of every row.
fn fold_ids(y: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "cv-folds", folds as u64));
    let mut ids = vec![0; y.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (k, &i) in idx.iter().enumerate() {
            ids[i] = k % folds;
        }
    }
    ids
}

fn cv_auc(x: &[Vec<f64>], y: &[bool], folds: &[usize], k: usize, lambda: f64) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..k {
        let (mut xt, mut yt, mut xv, mut yv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..x.len() {
            if folds[i] == f {
                xv.push(x[i].clone());
                yv.push(y[i]);
            } else {
                xt.push(x[i].clone());
                yt.push(y[i]);
            }
        }
        let s = solve(&xt, &yt, lambda)?;
        let scores: Vec<f64> = xv
            .iter()
            .map(|r| s.bias + r.iter().zip(&s.weights).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        total += auc(&scores, &yv)?;
    }
    Ok(total / k as f64)
}

/// Fits on the columns selected by `mask`, choosing the penalty by stratified
/// k-fold cross-validated AUC. Ties go to the larger penalty.
pub fn fit(rows: &[Vec<f64>], labels: &[bool], mask: &[bool], opts: &FitOptions) -> Result<LogRegModel> {
    check_design(rows, labels)?;
    if mask.len() != rows[0].len() || !mask.iter().any(|&k| k) {
        return Err(Error::Input(format!(
            "mask must have {} entries with at least one kept",
            rows[0].len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let smaller = positives.min(labels.len() - positives);
    if smaller < 2 {
        return Err(Error::Input("need at least 2 samples of each class".into()));
    }
    if opts.lambda_grid.is_empty() {
        return Err(Error::Input("empty lambda grid".into()));
    }
    let selected: Vec<Vec<f64>> = rows.iter().map(|r| select(r, mask)).collect();
    let normalization = MinMax::fit(&selected)?;
    let x = normalization.apply(&selected)?;

    let k = opts.folds.clamp(2, smaller);
    let folds = fold_ids(labels, k, opts.seed);
    let mut grid = opts.lambda_grid.clone();
    grid.sort_by(|a, b| b.total_cmp(a));
    let mut cv = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &lambda in &grid {
        let a = cv_auc(&x, labels, &folds, k, lambda)?;
        cv.push((lambda, a));
        if best.map_or(true, |(_, b)| a > b) {
            best = Some((lambda, a));
        }
    }
    let (lambda, _) = best.expect("non-empty grid");
    let s = solve(&x, labels, lambda)?;
    cv.reverse();
    Ok(LogRegModel {
        weights: s.weights,
        bias: s.bias,
        l2_lambda: lambda,
        feature_mask: mask.to_vec(),
        normalization,
        converged: s.converged,
        cv_auc: cv,
    })
}
