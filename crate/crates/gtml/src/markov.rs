//! Simulation and exact analysis of mechanism-dependent behavior chains.
//!
//! Under a fixed mechanism `a`, the behavior process is a Markov chain on
//! the finite behavior space: the platform draws a user `u_t`, emits the
//! signal `h_t = sig(a, b_t, u_t)`, and the agents move according to the
//! row `M_{h_t}(b_t, .)` of the behavior model. Marginalizing the i.i.d.
//! users out gives the exact one-step kernel
//!
//! ```text
//! P(b' | b) = sum_u P(u) * M_{sig(a,b,u)}(b, b')
//! ```
//!
//! from which stationary distributions, exact risks and ergodicity
//! certificates are computed without sampling error.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mechanism::{Environment, Mechanism};
use crate::model::{BehaviorModel, STOCHASTIC_TOL};
use crate::spaces::UserDistribution;
use crate::task_rng;
use crate::trajectory::{Trajectory, TrajectoryRecord};

/// Default residual tolerance for the stationary solver.
pub const STATIONARY_TOL: f64 = 1e-12;
/// Default iteration cap for the stationary solver.
pub const STATIONARY_MAX_ITERS: usize = 1_000_000;

/// The user-marginalized one-step behavior kernel under a fixed mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalKernel {
    pub matrix: Vec<Vec<f64>>,
    /// `(mechanism, model, users)` identity string for diagnostics.
    pub provenance: String,
}

impl MarginalKernel {
    /// Wraps a raw row-stochastic matrix (rows are renormalized exactly).
    pub fn from_matrix(matrix: Vec<Vec<f64>>, provenance: impl Into<String>) -> Result<Self> {
        let n = matrix.len();
        if n < 2 {
            return Err(Error::InvalidInput("kernel must be at least 2x2".into()));
        }
        let mut matrix = matrix;
        for (b, row) in matrix.iter_mut().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!(
                    "kernel row {b} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "kernel row {b} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidInput(format!("kernel row {b} sums to {sum}")));
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        Ok(Self { matrix, provenance: provenance.into() })
    }

    pub fn size(&self) -> usize {
        self.matrix.len()
    }
}

/// A stationary distribution together with its fixed-point residual.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub probs: Vec<f64>,
    /// `|| pi P - pi ||_1` of the returned vector.
    pub residual: f64,
}

/// Certificate of uniform ergodicity: the smallest power of the marginal
/// kernel that is entrywise positive, and its minimum entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicityCertificate {
    pub n0: usize,
    pub delta0: f64,
}

/// How a simulation chooses its initial behavior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitBehavior {
    /// Start at the given behavior index.
    Fixed(usize),
    /// Draw the initial behavior from the exact stationary distribution of
    /// the marginal kernel, so the simulated process is stationary.
    Stationary,
    /// Start at behavior 0 and discard this many transitions.
    BurnIn(usize),
}

/// Samples the next behavior from row `M_h(b, .)`, consuming exactly one
/// uniform draw.
pub fn step<R: Rng + ?Sized>(
    model: &BehaviorModel,
    b: usize,
    h: usize,
    rng: &mut R,
) -> Result<usize> {
    if h >= model.n_signals() {
        return Err(Error::InvalidInput(format!(
            "signal index {h} outside space of size {}",
            model.n_signals()
        )));
    }
    if b >= model.n_behaviors() {
        return Err(Error::InvalidInput(format!(
            "behavior index {b} outside space of size {}",
            model.n_behaviors()
        )));
    }
    let row = model.row(h, b);
    let u: f64 = rng.random();
    sample_index(row, u)
}

/// Inverse-CDF draw from a probability row. When rounding leaves `u` past
/// the accumulated mass, the last positive entry wins so point-mass rows
/// stay exact.
fn sample_index(row: &[f64], u: f64) -> Result<usize> {
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    row.iter()
        .rposition(|&p| p > 0.0)
        .ok_or_else(|| Error::InvalidInput("cannot sample from an all-zero row".into()))
}

/// Draws a probability-vector sample (same convention as [`step`]).
pub fn sample_from<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    let u: f64 = rng.random();
    sample_index(probs, u)
}

/// Simulates `t_len` records of the behavior/signal/user process under one
/// mechanism. Record `t` holds `(b_t, h_t, u_t)` with `u_t` i.i.d.,
/// `h_t = sig(a, b_t, u_t)` and `b_{t+1} ~ M_{h_t}(b_t, .)`.
pub fn simulate<E: Environment + ?Sized>(
    model: &BehaviorModel,
    mechanism: &Mechanism,
    env: &E,
    users: &UserDistribution,
    t_len: usize,
    init: InitBehavior,
    seed: u64,
) -> Result<Trajectory> {
    if t_len == 0 {
        return Err(Error::InvalidInput("trajectory length must be at least 1".into()));
    }
    let mut rng = task_rng(seed, 0);
    let mut b = match init {
        InitBehavior::Fixed(b0) => {
            if b0 >= model.n_behaviors() {
                return Err(Error::InvalidInput(format!(
                    "initial behavior {b0} outside space of size {}",
                    model.n_behaviors()
                )));
            }
            b0
        }
        InitBehavior::Stationary => {
            let kernel = marginal_kernel(model, mechanism, env, users)?;
            let pi = stationary_distribution(&kernel, STATIONARY_TOL, STATIONARY_MAX_ITERS)?;
            sample_from(&pi.probs, &mut rng)?
        }
        InitBehavior::BurnIn(steps) => {
            let mut b = 0;
            for _ in 0..steps {
                let u = users.sample(&mut rng);
                let h = env.signal(mechanism, b, &u);
                b = step(model, b, h, &mut rng)?;
            }
            b
        }
    };
    let mut records = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let u = users.sample(&mut rng);
        let h = env.signal(mechanism, b, &u);
        if h >= model.n_signals() {
            return Err(Error::SpaceMismatch(format!(
                "environment emitted signal {h} but model has {} signals",
                model.n_signals()
            )));
        }
        records.push(TrajectoryRecord { behavior: b, signal: h, user: u });
        if t + 1 < t_len {
            b = step(model, b, h, &mut rng)?;
        }
    }
    Trajectory::new(records, mechanism.clone(), seed)
}

/// Exact summation of `P(b'|b) = sum_u P(u) M_{sig(a,b,u)}(b,b')` over the
/// finite user support.
pub fn marginal_kernel<E: Environment + ?Sized>(
    model: &BehaviorModel,
    mechanism: &Mechanism,
    env: &E,
    users: &UserDistribution,
) -> Result<MarginalKernel> {
    let n = model.n_behaviors();
    let support = users.support();
    let mut matrix = vec![vec![0.0; n]; n];
    for b in 0..n {
        for (u, p) in &support {
            let h = env.signal(mechanism, b, u);
            if h >= model.n_signals() {
                return Err(Error::SpaceMismatch(format!(
                    "environment emitted signal {h} but model has {} signals",
                    model.n_signals()
                )));
            }
            let row = model.row(h, b);
            for (bp, x) in matrix[b].iter_mut().enumerate() {
                *x += p * row[bp];
            }
        }
    }
    MarginalKernel::from_matrix(
        matrix,
        format!("mechanism={} model={}x{}", mechanism.key(), model.n_signals(), n),
    )
}

/// Per-behavior signal distribution `q(h|b) = sum_u P(u) 1[sig(a,b,u)=h]`.
pub fn signal_distribution<E: Environment + ?Sized>(
    mechanism: &Mechanism,
    env: &E,
    users: &UserDistribution,
    n_behaviors: usize,
    n_signals: usize,
) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; n_signals]; n_behaviors];
    for (b, row) in q.iter_mut().enumerate() {
        for (u, p) in users.support() {
            let h = env.signal(mechanism, b, &u);
            if h < n_signals {
                row[h] += p;
            }
        }
    }
    q
}

/// Wielandt bound: a primitive `n x n` non-negative matrix has an all
/// positive power at exponent `(n-1)^2 + 1`; positivity is monotone in the
/// exponent for row-stochastic matrices, so checking one large power via
/// boolean squaring decides primitivity exactly.
fn is_primitive(matrix: &[Vec<f64>]) -> bool {
    let n = matrix.len();
    let bound = (n - 1) * (n - 1) + 1;
    let mut reach: Vec<Vec<bool>> = matrix
        .iter()
        .map(|row| row.iter().map(|&x| x > 0.0).collect())
        .collect();
    let mut exponent = 1usize;
    while exponent < bound {
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if reach[i][k] {
                    for (j, cell) in next[i].iter_mut().enumerate() {
                        *cell = *cell || reach[k][j];
                    }
                }
            }
        }
        reach = next;
        exponent *= 2;
    }
    reach.iter().all(|row| row.iter().all(|&x| x))
}

/// Power iteration for the stationary distribution of a marginal kernel.
///
/// The chain must be irreducible and aperiodic (checked exactly via the
/// primitivity of the zero pattern); the result is then independent of the
/// starting vector. Returns the iterate whose fixed-point residual
/// `||pi P - pi||_1` first drops below `tol`.
pub fn stationary_distribution(
    kernel: &MarginalKernel,
    tol: f64,
    max_iters: usize,
) -> Result<StationaryDistribution> {
    let n = kernel.size();
    if !is_primitive(&kernel.matrix) {
        return Err(Error::NotErgodic { max_n: (n - 1) * (n - 1) + 1 });
    }
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (b, &p) in pi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let row = &kernel.matrix[b];
            for (bp, x) in next.iter_mut().enumerate() {
                *x += p * row[bp];
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        residual = pi.iter().zip(next.iter()).map(|(a, b)| (a - b).abs()).sum();
        if residual <= tol {
            return Ok(StationaryDistribution { probs: pi, residual });
        }
        std::mem::swap(&mut pi, &mut next);
    }
    Err(Error::NoConvergence { residual, max_iters })
}

/// Stationary distribution with the default tolerance and iteration cap.
pub fn stationary(kernel: &MarginalKernel) -> Result<StationaryDistribution> {
    stationary_distribution(kernel, STATIONARY_TOL, STATIONARY_MAX_ITERS)
}

/// Exact expected loss of a mechanism under the stationary behavior
/// distribution:
///
/// ```text
/// R(a, M) = sum_b pi_b(b) sum_u P(u) L(a, b, u)
/// ```
///
/// The joint stationary law of `(b_t, u_t)` factors because `b_t` depends
/// only on past users while `u_t` is fresh.
pub fn exact_risk<E: Environment + ?Sized>(
    mechanism: &Mechanism,
    model: &BehaviorModel,
    env: &E,
    users: &UserDistribution,
) -> Result<f64> {
    let kernel = marginal_kernel(model, mechanism, env, users)?;
    let pi = stationary(&kernel)?;
    let support = users.support();
    let mut risk = 0.0;
    for (b, &pb) in pi.probs.iter().enumerate() {
        for (u, pu) in &support {
            risk += pb * pu * env.loss(mechanism, b, u);
        }
    }
    Ok(risk)
}

/// Searches for the smallest `N0 <= max_n` with every entry of the `N0`-th
/// power of the user-marginalized kernel positive; `delta0` is the minimum
/// entry of that power. The augmented `(b_{t+1}, b_t, h_t)` chain is
/// entrywise positive over its feasible states at `N0 + 1` steps exactly
/// when the kernel power is positive at `N0`, so this pair certifies
/// uniform ergodicity of the full signal-carrying process.
pub fn ergodicity_certificate<E: Environment + ?Sized>(
    model: &BehaviorModel,
    env: &E,
    mechanism: &Mechanism,
    users: &UserDistribution,
    max_n: usize,
) -> Result<ErgodicityCertificate> {
    if max_n == 0 {
        return Err(Error::InvalidInput("max_n must be at least 1".into()));
    }
    let kernel = marginal_kernel(model, mechanism, env, users)?;
    let mut power = kernel.matrix.clone();
    for n in 1..=max_n {
        let min = power
            .iter()
            .flat_map(|row| row.iter())
            .fold(f64::INFINITY, |m, &x| m.min(x));
        if min > 0.0 {
            return Ok(ErgodicityCertificate { n0: n, delta0: min });
        }
        if n < max_n {
            power = mat_mul(&power, &kernel.matrix);
        }
    }
    Err(Error::NotErgodic { max_n })
}

pub(crate) fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for (j, cell) in out[i].iter_mut().enumerate() {
                *cell += aik * b[k][j];
            }
        }
    }
    out
}

/// `max_h max_b sum_{b'} |m1_h(b,b') - m2_h(b,b')|`: the matrix infinity
/// norm of the difference, maximized over signals.
pub fn model_inf_distance(m1: &BehaviorModel, m2: &BehaviorModel) -> Result<f64> {
    if m1.n_behaviors() != m2.n_behaviors() || m1.n_signals() != m2.n_signals() {
        return Err(Error::SpaceMismatch(format!(
            "models have shapes {}x{} vs {}x{}",
            m1.n_signals(),
            m1.n_behaviors(),
            m2.n_signals(),
            m2.n_behaviors()
        )));
    }
    let mut worst = 0.0f64;
    for h in 0..m1.n_signals() {
        for b in 0..m1.n_behaviors() {
            let d: f64 = m1
                .row(h, b)
                .iter()
                .zip(m2.row(h, b).iter())
                .map(|(x, y)| (x - y).abs())
                .sum();
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

/// Total variation distance `0.5 * sum_i |p_i - q_i|` between two
/// probability vectors of equal length.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SpaceMismatch(format!(
            "distributions have lengths {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5 * p.iter().zip(q.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>())
}
