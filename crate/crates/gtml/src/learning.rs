//! Behavior learning: fitting the transition model from a trajectory.
//!
//! Two estimators are provided. The non-parametric one is the conditional
//! frequency of `b_{t+1} = B_k` among the steps with `b_t = B_i, h_t = H_j`;
//! rows that were never observed fall back to a configurable default. The
//! parametric one models each row as a discrete truncated Gaussian,
//!
//! ```text
//! M_h(b, b') ∝ exp(-(e(b') - <w, phi(b, h)>)^2)
//! ```
//!
//! with `e(b')` the scalar behavior embedding, `phi(b, h)` the feature
//! vector `(emb(b), emb(h), 1)` and the weights `w` box-constrained and fit
//! by maximum likelihood (projected gradient ascent with restarts). The
//! truncation is realized by normalizing over the finite behavior space.

use rand::Rng;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::BehaviorModel;
use crate::spaces::{BehaviorSpace, SignalSpace};
use crate::task_rng;
use crate::trajectory::Trajectory;

/// Replacement policy for transition rows with no observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowFallback {
    /// Uniform row: keeps the estimate row-stochastic and uniformly ergodic.
    Uniform,
    /// Point mass on the current behavior (agents assumed to stay put).
    Stay,
}

/// Diagnostics accompanying a fitted model.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FitReport {
    /// Objective trace along accepted optimizer steps (parametric) or the
    /// single final log-likelihood (non-parametric).
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub final_grad_norm: f64,
    /// `(signal, row)` cells that had zero observations.
    pub fallback_rows: Vec<(usize, usize)>,
    /// Whether rows were renormalized after estimation.
    pub renormalized: bool,
}

/// Transition counts `n[h][b][b']` extracted from a trajectory.
fn transition_counts(
    traj: &Trajectory,
    n_behaviors: usize,
    n_signals: usize,
) -> Result<Vec<Vec<Vec<u64>>>> {
    if traj.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "behavior learning needs at least 2 records, got {}",
            traj.len()
        )));
    }
    let mut counts = vec![vec![vec![0u64; n_behaviors]; n_behaviors]; n_signals];
    for pair in traj.records.windows(2) {
        let (b, h, bp) = (pair[0].behavior, pair[0].signal, pair[1].behavior);
        if b >= n_behaviors || bp >= n_behaviors || h >= n_signals {
            return Err(Error::SpaceMismatch(format!(
                "trajectory record ({b}, {h}) -> {bp} outside {n_signals}x{n_behaviors} model"
            )));
        }
        counts[h][b][bp] += 1;
    }
    Ok(counts)
}

/// Conditional-frequency estimator of the behavior model.
pub fn fit_nonparametric(
    traj: &Trajectory,
    n_behaviors: usize,
    n_signals: usize,
    fallback: RowFallback,
) -> Result<(BehaviorModel, FitReport)> {
    let counts = transition_counts(traj, n_behaviors, n_signals)?;
    let mut matrices = vec![vec![vec![0.0f64; n_behaviors]; n_behaviors]; n_signals];
    let mut fallback_rows = Vec::new();
    for h in 0..n_signals {
        for b in 0..n_behaviors {
            let denom: u64 = counts[h][b].iter().sum();
            if denom == 0 {
                fallback_rows.push((h, b));
                match fallback {
                    RowFallback::Uniform => {
                        matrices[h][b].fill(1.0 / n_behaviors as f64);
                    }
                    RowFallback::Stay => {
                        matrices[h][b][b] = 1.0;
                    }
                }
            } else {
                for (bp, x) in matrices[h][b].iter_mut().enumerate() {
                    *x = counts[h][b][bp] as f64 / denom as f64;
                }
                let sum: f64 = matrices[h][b].iter().sum();
                for x in matrices[h][b].iter_mut() {
                    *x /= sum;
                }
            }
        }
    }
    let model = BehaviorModel::new(matrices)?;
    let ll = log_likelihood_of(&model, &counts);
    let report = FitReport {
        log_likelihood: vec![ll],
        iterations: 0,
        final_grad_norm: 0.0,
        fallback_rows,
        renormalized: true,
    };
    Ok((model, report))
}

fn log_likelihood_of(model: &BehaviorModel, counts: &[Vec<Vec<u64>>]) -> f64 {
    let mut ll = 0.0;
    for (h, m) in counts.iter().enumerate() {
        for (b, row) in m.iter().enumerate() {
            for (bp, &c) in row.iter().enumerate() {
                if c > 0 {
                    ll += c as f64 * model.row(h, b)[bp].max(f64::MIN_POSITIVE).ln();
                }
            }
        }
    }
    ll
}

/// The truncated-Gaussian row family over fixed spaces: targets are the
/// scalar behavior embeddings, features are `(emb(b), emb(h), 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricFamily {
    targets: Vec<f64>,
    /// `features[b][h]`, each of length `dim`.
    features: Vec<Vec<Vec<f64>>>,
    dim: usize,
}

impl ParametricFamily {
    /// Builds the family from explicit targets and features. Every feature
    /// vector must have the same length; that length is the weight
    /// dimension.
    pub fn new(targets: Vec<f64>, features: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if targets.len() < 2 {
            return Err(Error::InvalidInput("family needs at least 2 behaviors".into()));
        }
        if features.len() != targets.len() || features.iter().any(|f| f.is_empty()) {
            return Err(Error::InvalidInput(
                "features must be given per (behavior, signal) pair".into(),
            ));
        }
        let n_signals = features[0].len();
        let dim = features[0][0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("feature vectors must be non-empty".into()));
        }
        for fb in &features {
            if fb.len() != n_signals || fb.iter().any(|f| f.len() != dim) {
                return Err(Error::InvalidInput("ragged feature table".into()));
            }
        }
        Ok(Self { targets, features, dim })
    }

    /// Canonical family over a pair of spaces. Behavior embeddings must be
    /// one-dimensional (they double as the scalar regression target);
    /// signal embeddings may have any dimension.
    pub fn from_spaces(behaviors: &BehaviorSpace, signals: &SignalSpace) -> Result<Self> {
        let mut targets = Vec::with_capacity(behaviors.size());
        for b in 0..behaviors.size() {
            let e = behaviors.embedding(b);
            if e.len() != 1 {
                return Err(Error::InvalidInput(format!(
                    "parametric family needs 1-dimensional behavior embeddings, label {:?} has {}",
                    behaviors.label(b),
                    e.len()
                )));
            }
            targets.push(e[0]);
        }
        let mut features = Vec::with_capacity(behaviors.size());
        for b in 0..behaviors.size() {
            let mut per_signal = Vec::with_capacity(signals.size());
            for h in 0..signals.size() {
                let mut phi = Vec::with_capacity(2 + signals.embedding(h).len());
                phi.extend_from_slice(behaviors.embedding(b));
                phi.extend_from_slice(signals.embedding(h));
                phi.push(1.0);
                per_signal.push(phi);
            }
            features.push(per_signal);
        }
        Self::new(targets, features)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_behaviors(&self) -> usize {
        self.targets.len()
    }

    pub fn n_signals(&self) -> usize {
        self.features[0].len()
    }

    fn mean(&self, w: &[f64], b: usize, h: usize) -> f64 {
        self.features[b][h].iter().zip(w.iter()).map(|(x, y)| x * y).sum()
    }

    /// Row `M_h(b, .)` at weights `w`: softmax of negative squared
    /// residuals, normalized over the finite behavior space.
    pub fn row(&self, w: &[f64], b: usize, h: usize) -> Vec<f64> {
        let m = self.mean(w, b, h);
        // log-sum-exp for stability
        let logits: Vec<f64> = self.targets.iter().map(|&e| -(e - m) * (e - m)).collect();
        let max = logits.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
        let mut row: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= sum);
        row
    }
}

/// A fitted parametric model: the family plus box-constrained weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricBehaviorModel {
    pub family: ParametricFamily,
    pub weights: Vec<f64>,
    pub weight_bound: f64,
}

/// Expands a parametric model into explicit per-signal matrices.
pub fn materialize(pm: &ParametricBehaviorModel) -> BehaviorModel {
    let nb = pm.family.n_behaviors();
    let nh = pm.family.n_signals();
    let mut matrices = vec![vec![Vec::new(); nb]; nh];
    for h in 0..nh {
        for b in 0..nb {
            matrices[h][b] = pm.family.row(&pm.weights, b, h);
        }
    }
    BehaviorModel::new(matrices).expect("materialized rows are well formed")
}

/// Optimizer settings for the parametric MLE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Number of optimizer starts: the first is `w = 0`, the rest are drawn
    /// uniformly from the box.
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop when the infinity norm of the projected gradient drops below
    /// this (boundary-active coordinates count as zero).
    pub grad_tol: f64,
    pub init_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { restarts: 10, max_iters: 500, grad_tol: 1e-8, init_step: 0.5 }
    }
}

struct CellStats {
    b: usize,
    h: usize,
    /// Total transitions out of (b, h).
    total: f64,
    /// Sum of targets of observed next behaviors.
    target_sum: f64,
    /// Counts per next behavior.
    counts: Vec<f64>,
}

/// Maximum-likelihood fit of the parametric family on a trajectory.
///
/// The likelihood depends on the data only through the transition counts,
/// so the optimizer works on per-cell sufficient statistics. The returned
/// report carries the objective trace of the best start; the objective is
/// non-decreasing along that trace.
pub fn fit_parametric(
    traj: &Trajectory,
    family: &ParametricFamily,
    weight_bound: f64,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<(ParametricBehaviorModel, FitReport)> {
    if weight_bound < 0.0 {
        return Err(Error::InvalidInput("weight bound must be non-negative".into()));
    }
    let nb = family.n_behaviors();
    let nh = family.n_signals();
    let counts = transition_counts(traj, nb, nh)?;

    let mut cells = Vec::new();
    let mut fallback_rows = Vec::new();
    for h in 0..nh {
        for b in 0..nb {
            let total: u64 = counts[h][b].iter().sum();
            if total == 0 {
                fallback_rows.push((h, b));
                continue;
            }
            let target_sum = counts[h][b]
                .iter()
                .enumerate()
                .map(|(bp, &c)| c as f64 * family.targets[bp])
                .sum();
            cells.push(CellStats {
                b,
                h,
                total: total as f64,
                target_sum,
                counts: counts[h][b].iter().map(|&c| c as f64).collect(),
            });
        }
    }

    let objective = |w: &[f64]| -> f64 {
        let mut ll = 0.0;
        for cell in &cells {
            let row = family.row(w, cell.b, cell.h);
            for (bp, &c) in cell.counts.iter().enumerate() {
                if c > 0.0 {
                    ll += c * row[bp].ln();
                }
            }
        }
        ll
    };
    // d/dw log-likelihood = sum over cells of 2(S - N * E_row[e]) * phi,
    // with S the observed target sum and E_row[e] the model's row mean.
    let gradient = |w: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; family.dim];
        for cell in &cells {
            let row = family.row(w, cell.b, cell.h);
            let model_mean: f64 =
                row.iter().zip(family.targets.iter()).map(|(p, e)| p * e).sum();
            let scale = 2.0 * (cell.target_sum - cell.total * model_mean);
            for (gi, &phi) in g.iter_mut().zip(family.features[cell.b][cell.h].iter()) {
                *gi += scale * phi;
            }
        }
        g
    };

    let project = |w: &mut [f64]| {
        for x in w.iter_mut() {
            *x = x.clamp(-weight_bound, weight_bound);
        }
    };
    let projected_grad_norm = |w: &[f64], g: &[f64]| -> f64 {
        w.iter()
            .zip(g.iter())
            .map(|(&wi, &gi)| {
                let blocked_high = wi >= weight_bound && gi > 0.0;
                let blocked_low = wi <= -weight_bound && gi < 0.0;
                if blocked_high || blocked_low {
                    0.0
                } else {
                    gi.abs()
                }
            })
            .fold(0.0, f64::max)
    };

    if weight_bound == 0.0 || cells.is_empty() {
        let weights = vec![0.0; family.dim];
        let ll = objective(&weights);
        let pm = ParametricBehaviorModel { family: family.clone(), weights, weight_bound };
        return Ok((
            pm,
            FitReport {
                log_likelihood: vec![ll],
                iterations: 0,
                final_grad_norm: 0.0,
                fallback_rows,
                renormalized: false,
            },
        ));
    }

    let mut rng = task_rng(seed, 0);
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, usize, f64)> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut w = if restart == 0 {
            vec![0.0; family.dim]
        } else {
            (0..family.dim)
                .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * weight_bound)
                .collect()
        };
        let mut trace = vec![objective(&w)];
        let mut iterations = 0;
        let mut grad_norm = f64::INFINITY;
        for _ in 0..cfg.max_iters {
            iterations += 1;
            let g = gradient(&w);
            grad_norm = projected_grad_norm(&w, &g);
            if grad_norm <= cfg.grad_tol {
                break;
            }
            let f0 = *trace.last().unwrap();
            // backtracking line search on the projected step
            let mut eta = cfg.init_step;
            let mut accepted = false;
            for _ in 0..60 {
                let mut cand: Vec<f64> =
                    w.iter().zip(g.iter()).map(|(wi, gi)| wi + eta * gi).collect();
                project(&mut cand);
                let f1 = objective(&cand);
                let progress: f64 = cand
                    .iter()
                    .zip(w.iter())
                    .zip(g.iter())
                    .map(|((c, wi), gi)| (c - wi) * gi)
                    .sum();
                if f1 >= f0 + 1e-4 * progress && f1 >= f0 {
                    w = cand;
                    trace.push(f1);
                    accepted = true;
                    break;
                }
                eta *= 0.5;
            }
            if !accepted {
                break; // no ascent direction at this scale
            }
        }
        let f_final = *trace.last().unwrap();
        let replace = match &best {
            None => true,
            Some((bf, bw, ..)) => {
                f_final > *bf
                    || (f_final == *bf
                        && w.iter().zip(bw.iter()).any(|(a, b)| a < b)
                        && w.iter().zip(bw.iter()).all(|(a, b)| a <= b))
            }
        };
        if replace {
            best = Some((f_final, w, trace, iterations, grad_norm));
        }
    }

    let (_, weights, trace, iterations, grad_norm) = best.expect("at least one restart runs");
    let pm = ParametricBehaviorModel { family: family.clone(), weights, weight_bound };
    Ok((
        pm,
        FitReport {
            log_likelihood: trace,
            iterations,
            final_grad_norm: grad_norm,
            fallback_rows,
            renormalized: false,
        },
    ))
}

const MODEL_HEADER: &str = "# gtml behavior-model schema_version=1";

/// Writes a model as a structured text file: one `signal <label>` block per
/// signal followed by the row-major matrix at 17 significant digits.
pub fn save_model(path: &Path, model: &BehaviorModel, signals: &SignalSpace) -> Result<()> {
    if signals.size() != model.n_signals() {
        return Err(Error::SpaceMismatch(format!(
            "model has {} signals, space has {}",
            model.n_signals(),
            signals.size()
        )));
    }
    let mut out = String::new();
    out.push_str(MODEL_HEADER);
    out.push('\n');
    for h in 0..model.n_signals() {
        out.push_str(&format!("signal {}\n", signals.label(h)));
        for b in 0..model.n_behaviors() {
            let row: Vec<String> =
                model.row(h, b).iter().map(|x| format!("{x:.16e}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a model written by [`save_model`].
pub fn load_model(
    path: &Path,
    signals: &SignalSpace,
    n_behaviors: usize,
) -> Result<BehaviorModel> {
    let text = std::fs::read_to_string(path)?;
    let mut matrices = vec![Vec::new(); signals.size()];
    let mut current: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(label) = line.strip_prefix("signal ") {
            let idx = signals.index_of(label.trim()).ok_or_else(|| Error::Parse {
                line: lineno + 1,
                detail: format!("unknown signal label {:?}", label.trim()),
            })?;
            current = Some(idx);
            continue;
        }
        let h = current.ok_or_else(|| Error::Parse {
            line: lineno + 1,
            detail: "matrix row before any signal header".into(),
        })?;
        let row: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| Error::Parse {
            line: lineno + 1,
            detail: format!("bad matrix entry: {e}"),
        })?;
        if row.len() != n_behaviors {
            return Err(Error::Parse {
                line: lineno + 1,
                detail: format!("row has {} entries, expected {n_behaviors}", row.len()),
            });
        }
        matrices[h].push(row);
    }
    for (h, m) in matrices.iter().enumerate() {
        if m.len() != n_behaviors {
            return Err(Error::Parse {
                line: 0,
                detail: format!(
                    "signal {} has {} rows, expected {n_behaviors}",
                    signals.label(h),
                    m.len()
                ),
            });
        }
    }
    BehaviorModel::new(matrices)
}
