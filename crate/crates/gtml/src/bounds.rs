//! Finite-sample error-bound evaluators and their empirical counterparts.
//!
//! The formula evaluators compute the behavior-learning tail bounds, the
//! nested-covering uniform convergence bound for mechanism learning, and
//! their combination, exactly as displayed, as functions of their inputs.
//! Proof constants that have no closed form here (`C1`, `C2`, the
//! stationary-stability constant) enter as explicit inputs; the companion
//! estimators in this module produce empirical lower estimates for the
//! quantities that can be probed by computation (the Lipschitz constant of
//! the mechanism-to-stationary-distribution map, the stability constant,
//! covering numbers via greedy nets).
//!
//! Greedy nets are first-fit in enumeration order: the same scan rule the
//! sample-sharing cache uses, so cache sizes and net cardinalities agree.
//! A first-fit net certifies an upper bound on the minimal covering number
//! (representatives form a packing, every member is covered), not the
//! minimum itself.

use rand::Rng;

use crate::erm::{erm_search, SharingRule};
use crate::error::{Error, Result};
use crate::markov::{
    exact_risk, marginal_kernel, model_inf_distance, stationary, tv_distance,
    ErgodicityCertificate,
};
use crate::mechanism::{Environment, Mechanism, MechanismSpace};
use crate::model::BehaviorModel;
use crate::spaces::{UserDistribution, UserSample};
use crate::task_rng;

/// Inputs the bound formulas take as given: the algebraic mixing rate
/// `beta(a, m) <= beta0 * m^(-gamma)`, the block exponent `s` in
/// `(0, gamma)`, the Lipschitz constant `alpha` of the mechanism-to-
/// stationary-distribution map, the loss bound `k`, and the proof constants
/// `c1`/`c2` of the behavior-learning bounds.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MixingParameters {
    pub beta0: f64,
    pub gamma: f64,
    pub s: f64,
    pub alpha: f64,
    pub k: f64,
    pub c1: f64,
    pub c2: f64,
}

impl MixingParameters {
    pub fn new(
        beta0: f64,
        gamma: f64,
        s: f64,
        alpha: f64,
        k: f64,
        c1: f64,
        c2: f64,
    ) -> Result<Self> {
        let p = Self { beta0, gamma, s, alpha, k, c1, c2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta0", self.beta0),
            ("gamma", self.gamma),
            ("s", self.s),
            ("alpha", self.alpha),
            ("k", self.k),
            ("c1", self.c1),
            ("c2", self.c2),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!(
                    "mixing parameter {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.k <= 0.0 {
            return Err(Error::Domain("loss bound k must be positive".into()));
        }
        if !(self.s > 0.0 && self.s < self.gamma) {
            return Err(Error::Domain(format!(
                "block exponent s must lie in (0, gamma) = (0, {}), got {}",
                self.gamma, self.s
            )));
        }
        Ok(())
    }
}

/// A greedy net: representatives, the assignment of every member to its
/// covering representative, and the resulting cardinality.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverReport {
    pub radius: f64,
    /// Indices into the space's member list.
    pub representatives: Vec<usize>,
    /// For each member, the position (in `representatives`) of the
    /// representative that covers it.
    pub assignment: Vec<usize>,
    pub cardinality: usize,
}

/// Metric driving a cover: the mechanism-parameter metric `d_A`, or the
/// total-variation distance between induced stationary distributions.
pub enum CoverMetric<'a> {
    Mechanism,
    InducedTv { model: &'a BehaviorModel, users: &'a UserDistribution },
}

/// First-fit greedy net over the space in enumeration order. Every member
/// lies within `radius` of its representative and representatives are
/// pairwise more than `radius` apart; the cardinality upper-bounds the
/// minimal covering number.
pub fn cover<E: Environment + ?Sized>(
    space: &MechanismSpace,
    env: &E,
    radius: f64,
    metric: CoverMetric<'_>,
) -> Result<CoverReport> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidInput("cover radius must be non-negative".into()));
    }
    let pis: Option<Vec<Vec<f64>>> = match &metric {
        CoverMetric::Mechanism => None,
        CoverMetric::InducedTv { model, users } => {
            let mut pis = Vec::with_capacity(space.len());
            for a in &space.members {
                let kern = marginal_kernel(model, a, env, users)?;
                pis.push(stationary(&kern)?.probs);
            }
            Some(pis)
        }
    };
    let dist = |i: usize, j: usize| -> Result<f64> {
        match &pis {
            None => Ok(env.mechanism_distance(&space.members[i], &space.members[j])),
            Some(p) => tv_distance(&p[i], &p[j]),
        }
    };
    let mut representatives: Vec<usize> = Vec::new();
    let mut assignment = Vec::with_capacity(space.len());
    for i in 0..space.len() {
        let mut assigned = None;
        for (ri, &rep) in representatives.iter().enumerate() {
            if dist(i, rep)? <= radius {
                assigned = Some(ri);
                break;
            }
        }
        match assigned {
            Some(ri) => assignment.push(ri),
            None => {
                representatives.push(i);
                assignment.push(representatives.len() - 1);
            }
        }
    }
    Ok(CoverReport {
        radius,
        cardinality: representatives.len(),
        representatives,
        assignment,
    })
}

/// Largest observed ratio `tv(pi_a, pi_a') / d_A(a, a')` over enumerated
/// pairs: an empirical lower bound on the uniform Lipschitz constant of the
/// mechanism-to-stationary-distribution map (and the exact constant on the
/// finite space itself).
pub fn lipschitz_estimate<E: Environment + ?Sized>(
    space: &MechanismSpace,
    model: &BehaviorModel,
    env: &E,
    users: &UserDistribution,
) -> Result<f64> {
    if space.len() < 2 {
        return Err(Error::InvalidInput("lipschitz estimate needs at least 2 mechanisms".into()));
    }
    let mut pis = Vec::with_capacity(space.len());
    for a in &space.members {
        let kern = marginal_kernel(model, a, env, users)?;
        pis.push(stationary(&kern)?.probs);
    }
    let mut best: Option<f64> = None;
    for i in 0..space.len() {
        for j in i + 1..space.len() {
            let d = env.mechanism_distance(&space.members[i], &space.members[j]);
            if d > 0.0 {
                let ratio = tv_distance(&pis[i], &pis[j])? / d;
                best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
            }
        }
    }
    best.ok_or_else(|| {
        Error::InvalidInput("all pairwise mechanism distances are zero".into())
    })
}

/// Random row-stochastic perturbation of a model with
/// `model_inf_distance(model, perturbed) <= magnitude`. Each row is mixed
/// toward an independent random row so that its L1 change targets a
/// uniform draw from `[magnitude/2, magnitude]`; at least one row realizes
/// a positive change almost surely.
pub fn perturb_model<R: Rng + ?Sized>(
    model: &BehaviorModel,
    magnitude: f64,
    rng: &mut R,
) -> BehaviorModel {
    let n = model.n_behaviors();
    let mut matrices = Vec::with_capacity(model.n_signals());
    for h in 0..model.n_signals() {
        let mut mat = Vec::with_capacity(n);
        for b in 0..n {
            let row = model.row(h, b);
            let mut random_row: Vec<f64> =
                (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let total: f64 = random_row.iter().sum();
            random_row.iter_mut().for_each(|x| *x /= total);
            let gap: f64 =
                row.iter().zip(random_row.iter()).map(|(a, b)| (a - b).abs()).sum();
            let target = magnitude * (0.5 + 0.5 * rng.random::<f64>());
            let lambda = if gap > 0.0 { (target / gap).min(1.0) } else { 0.0 };
            mat.push(
                row.iter()
                    .zip(random_row.iter())
                    .map(|(a, r)| (1.0 - lambda) * a + lambda * r)
                    .collect(),
            );
        }
        matrices.push(mat);
    }
    BehaviorModel::new(matrices).expect("perturbed rows stay stochastic")
}

/// Outcome of the stability-constant estimation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StabilityEstimate {
    /// Largest observed `tv(pi(M), pi(M')) / ||M - M'||_inf`: an empirical
    /// lower estimate of the stationary-stability constant.
    pub c_hat: f64,
    pub samples_used: usize,
    /// Perturbations skipped because they broke ergodicity.
    pub skipped: usize,
}

/// Estimates the stationary-stability constant of a model under one
/// mechanism by random row-stochastic perturbations. Perturbation `i` is
/// drawn from `task_rng(seed, i)`, so runs are reproducible sample by
/// sample.
pub fn stability_constant_estimate<E: Environment + ?Sized>(
    model: &BehaviorModel,
    env: &E,
    users: &UserDistribution,
    mechanism: &Mechanism,
    n_perturbations: usize,
    magnitude: f64,
    seed: u64,
) -> Result<StabilityEstimate> {
    if n_perturbations == 0 {
        return Err(Error::InvalidInput("need at least one perturbation".into()));
    }
    if !(magnitude > 0.0) {
        return Err(Error::InvalidInput("perturbation magnitude must be positive".into()));
    }
    let base_kernel = marginal_kernel(model, mechanism, env, users)?;
    let base_pi = stationary(&base_kernel)?;
    let mut c_hat = 0.0f64;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for i in 0..n_perturbations {
        let mut rng = task_rng(seed, i as u64);
        let perturbed = perturb_model(model, magnitude, &mut rng);
        let dist = model_inf_distance(model, &perturbed)?;
        if dist == 0.0 {
            skipped += 1;
            continue;
        }
        let kern = marginal_kernel(&perturbed, mechanism, env, users)?;
        match stationary(&kern) {
            Ok(pi) => {
                let ratio = tv_distance(&base_pi.probs, &pi.probs)? / dist;
                c_hat = c_hat.max(ratio);
                used += 1;
            }
            Err(Error::NotErgodic { .. }) | Err(Error::NoConvergence { .. }) => {
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(StabilityEstimate { c_hat, samples_used: used, skipped })
}

fn clamp_probability(x: f64) -> f64 {
    if x.is_nan() {
        1.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Tail bound for the parametric behavior learner:
///
/// ```text
/// P(||Mhat - M*||_inf >= eps)
///   <= 2 exp(-(T1 eps |B|^2 |H| d0 - 2 C1 N0)^2 / (2 T1 N0^2 C1^2))
/// ```
///
/// valid for `T1 > 2 C1 N0 / (|B|^2 |H| d0 eps)`.
pub fn behavior_bound_parametric(
    t1: u64,
    eps: f64,
    params: &MixingParameters,
    n_behaviors: usize,
    n_signals: usize,
    cert: &ErgodicityCertificate,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if params.c1 <= 0.0 {
        return Err(Error::Domain("constant c1 must be positive".into()));
    }
    if cert.delta0 <= 0.0 || cert.n0 == 0 {
        return Err(Error::Domain("certificate must have n0 >= 1 and delta0 > 0".into()));
    }
    let (nb, nh) = (n_behaviors as f64, n_signals as f64);
    let n0 = cert.n0 as f64;
    let threshold = 2.0 * params.c1 * n0 / (nb * nb * nh * cert.delta0 * eps);
    let t1f = t1 as f64;
    if !(t1f > threshold) {
        return Err(Error::Domain(format!(
            "T1 must exceed 2*C1*N0/(|B|^2*|H|*delta0*eps) = {threshold}, got {t1}"
        )));
    }
    let z = t1f * eps * nb * nb * nh * cert.delta0 - 2.0 * params.c1 * n0;
    let value = 2.0 * (-(z * z) / (2.0 * t1f * n0 * n0 * params.c1 * params.c1)).exp();
    Ok(clamp_probability(value))
}

/// Tail bound for the non-parametric (conditional frequency) learner:
///
/// ```text
/// P(||Mhat - M*||_inf >= eps)
///   <= 2 |H| |B|^2 (|B|+1)
///      exp(-(C2 T1 d0 |B| |H| eps - 2 N0 (|B|+1))^2 / (2 T1 N0^2 (|B|+1)^2))
/// ```
///
/// valid for `T1 > 2 N0 (|B|+1) / (|B| |H| d0 C2 eps)`.
pub fn behavior_bound_nonparametric(
    t1: u64,
    eps: f64,
    params: &MixingParameters,
    n_behaviors: usize,
    n_signals: usize,
    cert: &ErgodicityCertificate,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if params.c2 <= 0.0 {
        return Err(Error::Domain("constant c2 must be positive".into()));
    }
    if cert.delta0 <= 0.0 || cert.n0 == 0 {
        return Err(Error::Domain("certificate must have n0 >= 1 and delta0 > 0".into()));
    }
    let (nb, nh) = (n_behaviors as f64, n_signals as f64);
    let n0 = cert.n0 as f64;
    let threshold =
        2.0 * n0 * (nb + 1.0) / (nb * nh * cert.delta0 * params.c2 * eps);
    let t1f = t1 as f64;
    if !(t1f > threshold) {
        return Err(Error::Domain(format!(
            "T1 must exceed 2*N0*(|B|+1)/(|B|*|H|*delta0*C2*eps) = {threshold}, got {t1}"
        )));
    }
    let z = params.c2 * t1f * cert.delta0 * nb * nh * eps - 2.0 * n0 * (nb + 1.0);
    let front = 2.0 * nh * nb * nb * (nb + 1.0);
    let value =
        front * (-(z * z) / (2.0 * t1f * n0 * n0 * (nb + 1.0) * (nb + 1.0))).exp();
    Ok(clamp_probability(value))
}

/// Source of second-layer covering numbers for [`uniform_bound`].
#[derive(Debug, Clone, PartialEq)]
pub enum N1Provider {
    /// Pseudo-dimension bound `(e T2 K / eps')^(16 |B| pdim)`, valid for
    /// `T2 > 4 |B| pdim`.
    PseudoDim { pdim: usize, n_behaviors: usize },
    /// User-supplied covering numbers: one per partition, or a single
    /// broadcast value.
    Table(Vec<f64>),
}

/// Natural log of the second-layer covering number for partition `i`.
pub fn log_n1(provider: &N1Provider, i: usize, t2: u64, k: f64, eps_prime: f64) -> Result<f64> {
    if !(eps_prime > 0.0) {
        return Err(Error::Domain(format!(
            "second-layer radius must be positive, got {eps_prime}"
        )));
    }
    match provider {
        N1Provider::PseudoDim { pdim, n_behaviors } => {
            if *pdim == 0 {
                return Err(Error::Domain("pseudo-dimension must be at least 1".into()));
            }
            let needed = 4 * n_behaviors * pdim;
            if t2 <= needed as u64 {
                return Err(Error::Domain(format!(
                    "T2 must exceed 4*|B|*P-dim = {needed}, got {t2}"
                )));
            }
            let exponent = 16.0 * *n_behaviors as f64 * *pdim as f64;
            Ok(exponent * (std::f64::consts::E * t2 as f64 * k / eps_prime).ln())
        }
        N1Provider::Table(values) => {
            let v = if values.len() == 1 {
                values[0]
            } else {
                *values.get(i).ok_or_else(|| {
                    Error::Domain(format!(
                        "N1 table has {} entries but partition {i} was requested",
                        values.len()
                    ))
                })?
            };
            if !(v >= 1.0) {
                return Err(Error::Domain(format!(
                    "covering numbers must be at least 1, got {v}"
                )));
            }
            Ok(v.ln())
        }
    }
}

/// Uniform convergence bound for mechanism learning with sharing radius
/// `delta`:
///
/// ```text
/// P(sup_a |R_T2(a, M, delta) - R(a, M)| >= eps)
///   <= N_dA(delta) * max_i ( 16 N1((eps - K a d)/16, i, T2)
///        * exp(-((eps - d a K)^2 / (128 K^2)) ceil(T2^(s/(1+s)) / 2))
///        + beta0 * ceil(T2^((s-gamma)/(1+s))) )
/// ```
///
/// requiring `delta` in `(0, eps/(K alpha))` and `s` in `(0, gamma)`. The
/// dominant product is evaluated in log space so large covering numbers do
/// not overflow before the Gaussian factor is applied.
pub fn uniform_bound(
    t2: u64,
    eps: f64,
    delta: f64,
    params: &MixingParameters,
    cover: &CoverReport,
    n1: &N1Provider,
) -> Result<f64> {
    params.validate()?;
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    let slack = eps - params.k * params.alpha * delta;
    if !(slack > 0.0) {
        return Err(Error::Domain(format!(
            "delta must be below eps/(K*alpha) = {}, got {delta}",
            eps / (params.k * params.alpha)
        )));
    }
    if cover.cardinality == 0 {
        return Err(Error::Domain("cover must have at least one element".into()));
    }
    if t2 == 0 {
        return Err(Error::Domain("T2 must be at least 1".into()));
    }
    let t2f = t2 as f64;
    let block_count = (t2f.powf(params.s / (1.0 + params.s)) / 2.0).ceil();
    let gaussian_log = -(slack * slack) / (128.0 * params.k * params.k) * block_count;
    let beta_term =
        params.beta0 * t2f.powf((params.s - params.gamma) / (1.0 + params.s)).ceil();
    let eps_prime = slack / 16.0;
    let mut worst = 0.0f64;
    for i in 0..cover.cardinality {
        let log_main = (16.0f64).ln() + log_n1(n1, i, t2, params.k, eps_prime)? + gaussian_log;
        let term = log_main.exp() + beta_term;
        worst = worst.max(term);
    }
    Ok(clamp_probability(cover.cardinality as f64 * worst))
}

/// Which behavior-learning tail enters the total bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BehaviorMethod {
    Parametric,
    Nonparametric,
}

/// Everything the total bound needs besides the sample sizes and `eps`.
pub struct TotalBoundInputs<'a> {
    pub method: BehaviorMethod,
    pub params: &'a MixingParameters,
    pub n_behaviors: usize,
    pub n_signals: usize,
    pub cert: ErgodicityCertificate,
    pub cover: &'a CoverReport,
    pub n1: &'a N1Provider,
    /// Stability-constant estimate standing in for `C(M*)`.
    pub c_hat: f64,
    /// Sharing radius for the uniform term.
    pub delta: f64,
    /// Fraction of `eps` consumed by the behavior term; the split is
    /// `eps = 2 K c_hat eps1 + 2 eps2`.
    pub behavior_fraction: f64,
}

/// Total generalization bound: the behavior tail at `eps1` plus the uniform
/// convergence tail at `eps2`, with `eps` split so that
/// `2 K c_hat eps1 = behavior_fraction * eps` and
/// `2 eps2 = (1 - behavior_fraction) * eps`.
pub fn total_bound(t1: u64, t2: u64, eps: f64, inputs: &TotalBoundInputs<'_>) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if !(inputs.behavior_fraction > 0.0 && inputs.behavior_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "inadmissible split: behavior fraction must lie in (0, 1), got {}",
            inputs.behavior_fraction
        )));
    }
    if !(inputs.c_hat > 0.0) {
        return Err(Error::Domain(format!(
            "inadmissible split: stability constant must be positive, got {}",
            inputs.c_hat
        )));
    }
    let eps1 =
        inputs.behavior_fraction * eps / (2.0 * inputs.params.k * inputs.c_hat);
    let eps2 = (1.0 - inputs.behavior_fraction) * eps / 2.0;
    let behavior = match inputs.method {
        BehaviorMethod::Parametric => behavior_bound_parametric(
            t1,
            eps1,
            inputs.params,
            inputs.n_behaviors,
            inputs.n_signals,
            &inputs.cert,
        )?,
        BehaviorMethod::Nonparametric => behavior_bound_nonparametric(
            t1,
            eps1,
            inputs.params,
            inputs.n_behaviors,
            inputs.n_signals,
            &inputs.cert,
        )?,
    };
    let mechanism = uniform_bound(t2, eps2, inputs.delta, inputs.params, inputs.cover, inputs.n1)?;
    Ok(clamp_probability(behavior + mechanism))
}

/// Outcome of one error-decomposition diagnostic.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DecompositionReport {
    /// Exact generalization gap `R(a_hat, M*) - R(a*, M*)`.
    pub lhs: f64,
    /// `2 K c_hat ||M* - Mhat||_inf`.
    pub behavior_term: f64,
    /// `2 sup_a |R(a, Mhat) - R_T2(a, Mhat, delta)|`.
    pub mechanism_term: f64,
    pub rhs: f64,
    /// Whether `lhs <= rhs` held. Shortfalls are expected occasionally
    /// because `c_hat` is a lower estimate of the true stability constant.
    pub holds: bool,
    pub c_hat: f64,
    pub model_distance: f64,
    pub sup_deviation: f64,
    pub learned_params: Vec<f64>,
    pub optimal_params: Vec<f64>,
}

/// Exhaustive exact-risk minimization: the infinite-data analogue of
/// [`erm_search`]. Ties break toward the lexicographically smallest
/// parameter vector.
pub fn exact_erm_search<E: Environment + ?Sized>(
    space: &MechanismSpace,
    model: &BehaviorModel,
    env: &E,
    users: &UserDistribution,
) -> Result<(Mechanism, f64)> {
    if space.is_empty() {
        return Err(Error::InvalidInput("mechanism space is empty".into()));
    }
    let mut best: Option<(Mechanism, f64)> = None;
    for a in &space.members {
        let risk = exact_risk(a, model, env, users)?;
        let replace = match &best {
            None => true,
            Some((bm, br)) => {
                risk < *br || (risk == *br && a.lex_cmp(bm) == std::cmp::Ordering::Less)
            }
        };
        if replace {
            best = Some((a.clone(), risk));
        }
    }
    Ok(best.expect("space is non-empty"))
}

/// Runs the full error-decomposition diagnostic: ERM under the learned
/// model against the shared samples, exact risks under the true model, the
/// per-candidate sup deviation, and the stability term with `c_hat`
/// estimated at the actual model distance (maximized over the mechanisms
/// in the space).
#[allow(clippy::too_many_arguments)]
pub fn decomposition_check<E: Environment + ?Sized>(
    m_star: &BehaviorModel,
    m_hat: &BehaviorModel,
    space: &MechanismSpace,
    env: &E,
    users: &UserDistribution,
    user_seq: Vec<UserSample>,
    delta: f64,
    n_perturbations: usize,
    seed: u64,
) -> Result<DecompositionReport> {
    let model_distance = model_inf_distance(m_star, m_hat)?;
    let erm = erm_search(
        space,
        m_hat,
        env,
        users,
        user_seq,
        SharingRule::Mechanism { delta },
        seed,
    )?;
    let mut sup_deviation = 0.0f64;
    for row in &erm.table {
        let exact = exact_risk(&row.mechanism, m_hat, env, users)?;
        sup_deviation = sup_deviation.max((exact - row.empirical_risk).abs());
    }
    let c_hat = if model_distance > 0.0 {
        let mut worst = 0.0f64;
        for (i, a) in space.members.iter().enumerate() {
            let est = stability_constant_estimate(
                m_star,
                env,
                users,
                a,
                n_perturbations,
                model_distance,
                seed.wrapping_add(i as u64 + 1),
            )?;
            worst = worst.max(est.c_hat);
        }
        worst
    } else {
        0.0
    };
    let (a_star, exact_min) = exact_erm_search(space, m_star, env, users)?;
    let learned_exact = exact_risk(&erm.best, m_star, env, users)?;
    let lhs = learned_exact - exact_min;
    let k = env.loss_bound();
    let behavior_term = 2.0 * k * c_hat * model_distance;
    let mechanism_term = 2.0 * sup_deviation;
    let rhs = behavior_term + mechanism_term;
    Ok(DecompositionReport {
        lhs,
        behavior_term,
        mechanism_term,
        rhs,
        holds: lhs <= rhs + 1e-12,
        c_hat,
        model_distance,
        sup_deviation,
        learned_params: erm.best.params().to_vec(),
        optimal_params: a_star.params().to_vec(),
    })
}
