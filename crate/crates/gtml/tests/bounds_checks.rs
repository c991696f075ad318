//! Cross-cutting bound diagnostics: the relation between parameter covers
//! and induced total-variation covers, corollary-level agreement of the
//! pseudo-dimension provider, monotonicity of the evaluators in their
//! sample sizes, and the decomposition diagnostic on exact inputs.

use gtml::bounds::{
    behavior_bound_nonparametric, behavior_bound_parametric, cover, decomposition_check,
    exact_erm_search, lipschitz_estimate, log_n1, uniform_bound, CoverMetric, CoverReport,
    MixingParameters, N1Provider,
};
use gtml::erm::{erm_search, SharingRule};
use gtml::gsp::{make_true_model, GspConfig, GspEnv, QuerySpec};
use gtml::markov::{marginal_kernel, stationary, tv_distance, ErgodicityCertificate};
use gtml::mechanism::Environment;
use gtml::spaces::UserSample;
use gtml::task_rng;
use rand::Rng;

fn env() -> GspEnv {
    GspEnv::new(&GspConfig {
        advertisers: 3,
        bid_levels: vec![1.0, 2.0],
        reserve_levels: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75],
        queries: vec![QuerySpec {
            name: "q".into(),
            prob: 1.0,
            click_probs: [0.5, 0.8],
        }],
    })
    .unwrap()
}

/// Minimal covering number by exhaustive subset search under an arbitrary
/// distance matrix.
fn brute_minimal_cover(dist: &[Vec<f64>], radius: f64) -> usize {
    let n = dist.len();
    let mut best = n;
    for mask in 1u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if size >= best {
            continue;
        }
        let covered = (0..n).all(|i| {
            (0..n).any(|j| mask & (1 << j) != 0 && dist[i][j] <= radius)
        });
        if covered {
            best = size;
        }
    }
    best
}

#[test]
fn induced_tv_cover_is_never_larger_than_the_parameter_cover() {
    // With alpha the exact Lipschitz constant on the finite space, a
    // minimal delta-cover under d_A induces a (delta * alpha)-cover under
    // the total-variation distance, so N_TV(delta*alpha) <= N_dA(delta).
    let env = env();
    let model = make_true_model(env.n_behaviors(), 9, 0.03, 41).unwrap();
    let space = env.reserve_space();
    let alpha = lipschitz_estimate(&space, &model, &env, env.users()).unwrap();
    assert!(alpha > 0.0, "the reserve changes the chain, alpha = {alpha}");
    let n = space.len();
    let mut d_mech = vec![vec![0.0; n]; n];
    let mut d_tv = vec![vec![0.0; n]; n];
    let pis: Vec<Vec<f64>> = space
        .members
        .iter()
        .map(|a| {
            let k = marginal_kernel(&model, a, &env, env.users()).unwrap();
            stationary(&k).unwrap().probs
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            d_mech[i][j] = env.mechanism_distance(&space.members[i], &space.members[j]);
            d_tv[i][j] = tv_distance(&pis[i], &pis[j]).unwrap();
        }
    }
    for delta in [0.25, 0.5, 1.0] {
        let n_da = brute_minimal_cover(&d_mech, delta);
        let n_tv = brute_minimal_cover(&d_tv, delta * alpha);
        assert!(
            n_tv <= n_da,
            "delta {delta}: N_TV({}) = {n_tv} > N_dA = {n_da}",
            delta * alpha
        );
    }
}

#[test]
fn greedy_induced_tv_cover_is_coherent() {
    let env = env();
    let model = make_true_model(env.n_behaviors(), 9, 0.03, 41).unwrap();
    let space = env.reserve_space();
    let report = cover(
        &space,
        &env,
        0.01,
        CoverMetric::InducedTv { model: &model, users: env.users() },
    )
    .unwrap();
    assert!(report.cardinality >= 1 && report.cardinality <= space.len());
    // coverage under the same metric
    let pis: Vec<Vec<f64>> = space
        .members
        .iter()
        .map(|a| {
            let k = marginal_kernel(&model, a, &env, env.users()).unwrap();
            stationary(&k).unwrap().probs
        })
        .collect();
    for (i, &rep_pos) in report.assignment.iter().enumerate() {
        let rep = report.representatives[rep_pos];
        assert!(tv_distance(&pis[i], &pis[rep]).unwrap() <= 0.01);
    }
}

#[test]
fn pseudo_dim_provider_reproduces_the_direct_substitution() {
    // Substituting the pseudo-dimension expression into the uniform bound
    // must agree with handing the same number in through a table, and its
    // log must match independent arithmetic to 1e-9.
    let params = MixingParameters::new(0.5, 2.0, 1.0, 0.2, 2.0, 1.0, 1.0).unwrap();
    let cov = CoverReport {
        radius: 0.1,
        representatives: vec![0, 1, 2],
        assignment: vec![0, 1, 2],
        cardinality: 3,
    };
    let (t2, eps, delta, pdim, nb) = (50_000u64, 1.0, 0.5, 2usize, 4usize);
    let provider = N1Provider::PseudoDim { pdim, n_behaviors: nb };
    let eps_prime = (eps - params.k * params.alpha * delta) / 16.0;
    let log_direct = 16.0 * nb as f64 * pdim as f64
        * (std::f64::consts::E * t2 as f64 * params.k / eps_prime).ln();
    let log_provider = log_n1(&provider, 0, t2, params.k, eps_prime).unwrap();
    assert!((log_provider - log_direct).abs() < 1e-9);
    let via_pdim = uniform_bound(t2, eps, delta, &params, &cov, &provider).unwrap();
    let table = N1Provider::Table(vec![log_direct.exp(); 3]);
    let via_table = uniform_bound(t2, eps, delta, &params, &cov, &table).unwrap();
    let rel = (via_pdim - via_table).abs() / via_pdim.max(1e-300);
    assert!(rel < 1e-9, "{via_pdim} vs {via_table}");
}

#[test]
fn bound_evaluators_are_monotone_beyond_their_thresholds() {
    let mut rng = task_rng(97, 0);
    let cert = ErgodicityCertificate { n0: 2, delta0: 0.05 };
    for _ in 0..50 {
        let k = 1.0 + rng.random::<f64>() * 3.0;
        let params = MixingParameters::new(
            rng.random::<f64>() * 0.2,
            1.5 + rng.random::<f64>(),
            0.5 + rng.random::<f64>() * 0.5,
            rng.random::<f64>(),
            k,
            0.5 + rng.random::<f64>(),
            0.5 + rng.random::<f64>(),
        )
        .unwrap();
        let nb = 2 + (rng.random::<f64>() * 6.0) as usize;
        let nh = 1 + (rng.random::<f64>() * 8.0) as usize;
        let eps = (0.05 + 0.85 * rng.random::<f64>()) * k;
        // behavior bounds beyond their thresholds
        let thr_p = 2.0 * params.c1 * cert.n0 as f64
            / (nb as f64 * nb as f64 * nh as f64 * cert.delta0 * eps);
        let thr_n = 2.0 * cert.n0 as f64 * (nb as f64 + 1.0)
            / (nb as f64 * nh as f64 * cert.delta0 * params.c2 * eps);
        let start = (thr_p.max(thr_n).ceil() as u64).max(2) + 1;
        let mut prev_p = f64::INFINITY;
        let mut prev_n = f64::INFINITY;
        for mult in [1u64, 4, 16, 64] {
            let t1 = start * mult;
            let p = behavior_bound_parametric(t1, eps, &params, nb, nh, &cert).unwrap();
            let n = behavior_bound_nonparametric(t1, eps, &params, nb, nh, &cert).unwrap();
            assert!(p <= prev_p + 1e-15, "parametric rose: {p} after {prev_p}");
            assert!(n <= prev_n + 1e-15, "nonparametric rose: {n} after {prev_n}");
            prev_p = p;
            prev_n = n;
        }
        // uniform bound beyond the pseudo-dimension threshold
        let pdim = 1 + (rng.random::<f64>() * 2.0) as usize;
        let delta = (0.1 + 0.8 * rng.random::<f64>()) * eps / (params.k * params.alpha.max(0.05));
        if eps - params.k * params.alpha * delta <= 0.0 {
            continue;
        }
        let cov = CoverReport {
            radius: delta,
            representatives: vec![0],
            assignment: vec![0],
            cardinality: 1,
        };
        let provider = N1Provider::PseudoDim { pdim, n_behaviors: nb };
        let mut prev_u = f64::INFINITY;
        let mut t2 = (4 * nb * pdim + 1) as u64;
        for _ in 0..6 {
            let u = uniform_bound(t2, eps, delta, &params, &cov, &provider).unwrap();
            assert!(u <= prev_u + 1e-15, "uniform bound rose: {u} after {prev_u}");
            prev_u = u;
            t2 *= 8;
        }
    }
}

#[test]
fn lipschitz_estimate_is_monotone_in_the_enumerated_set() {
    let env = env();
    let model = make_true_model(env.n_behaviors(), 9, 0.03, 45).unwrap();
    let space = env.reserve_space();
    let subset = gtml::mechanism::MechanismSpace::new(space.members[..3].to_vec());
    let small = lipschitz_estimate(&subset, &model, &env, env.users()).unwrap();
    let large = lipschitz_estimate(&space, &model, &env, env.users()).unwrap();
    assert!(large >= small, "max over more pairs can only grow: {small} -> {large}");
}

#[test]
fn decomposition_pieces_match_hand_computation_on_two_mechanisms() {
    // two mechanisms, exact recomputation of every report field
    let env = env();
    let m_star = make_true_model(env.n_behaviors(), 9, 0.06, 80).unwrap();
    let mut rng = task_rng(81, 0);
    let m_hat = gtml::bounds::perturb_model(&m_star, 0.2, &mut rng);
    let space = gtml::mechanism::MechanismSpace::new(vec![
        env.reserve_mechanism(&[0.5]).unwrap(),
        env.reserve_mechanism(&[1.25]).unwrap(),
    ]);
    let user_seq: Vec<UserSample> =
        (0..600).map(|_| env.users().sample(&mut rng)).collect();
    let delta = 0.25;
    let seed = 82;
    let report = decomposition_check(
        &m_star,
        &m_hat,
        &space,
        &env,
        env.users(),
        user_seq.clone(),
        delta,
        6,
        seed,
    )
    .unwrap();
    // hand recomputation of the four pieces
    let dist = gtml::markov::model_inf_distance(&m_star, &m_hat).unwrap();
    assert_eq!(report.model_distance, dist);
    let erm = erm_search(
        &space,
        &m_hat,
        &env,
        env.users(),
        user_seq,
        SharingRule::Mechanism { delta },
        seed,
    )
    .unwrap();
    let mut sup = 0.0f64;
    for row in &erm.table {
        let ex = gtml::markov::exact_risk(&row.mechanism, &m_hat, &env, env.users())
            .unwrap();
        sup = sup.max((ex - row.empirical_risk).abs());
    }
    assert!((report.sup_deviation - sup).abs() < 1e-15);
    assert!((report.mechanism_term - 2.0 * sup).abs() < 1e-15);
    let exact: Vec<f64> = space
        .members
        .iter()
        .map(|a| gtml::markov::exact_risk(a, &m_star, &env, env.users()).unwrap())
        .collect();
    let min = exact.iter().cloned().fold(f64::INFINITY, f64::min);
    let learned =
        gtml::markov::exact_risk(&erm.best, &m_star, &env, env.users()).unwrap();
    assert!((report.lhs - (learned - min)).abs() < 1e-15);
    assert!(
        (report.behavior_term - 2.0 * env.loss_bound() * report.c_hat * dist).abs()
            < 1e-15
    );
    assert_eq!(report.holds, report.lhs <= report.rhs + 1e-12);
}

#[test]
fn decomposition_is_tight_when_the_model_is_exact() {
    // Mhat = M*: the behavior term vanishes, and the empirical ERM path is
    // the only error source; with exact risks substituted the gap is zero.
    let env = env();
    let model = make_true_model(env.n_behaviors(), 9, 0.05, 50).unwrap();
    let space = env.reserve_space();
    let (a_star, r_star) = exact_erm_search(&space, &model, &env, env.users()).unwrap();
    // the exact-risk surrogate of the empirical search is the same argmin
    let (again, r_again) = exact_erm_search(&space, &model, &env, env.users()).unwrap();
    assert_eq!(a_star, again);
    assert_eq!(r_star, r_again);
    // the full diagnostic with Mhat = M* has a zero behavior term and holds
    let mut rng = task_rng(51, 0);
    let user_seq: Vec<UserSample> =
        (0..800).map(|_| env.users().sample(&mut rng)).collect();
    let report = decomposition_check(
        &model,
        &model,
        &space,
        &env,
        env.users(),
        user_seq,
        0.25,
        4,
        99,
    )
    .unwrap();
    assert_eq!(report.model_distance, 0.0);
    assert_eq!(report.behavior_term, 0.0);
    assert!(report.lhs >= -1e-12, "gap is non-negative by optimality of a*");
    assert!(report.mechanism_term >= 0.0);
}

#[test]
fn decomposition_bound_holds_on_a_hand_sized_perturbation() {
    let env = env();
    let m_star = make_true_model(env.n_behaviors(), 9, 0.06, 60).unwrap();
    let mut rng = task_rng(61, 0);
    let m_hat = gtml::bounds::perturb_model(&m_star, 0.15, &mut rng);
    let space = env.reserve_space();
    let user_seq: Vec<UserSample> =
        (0..2_000).map(|_| env.users().sample(&mut rng)).collect();
    let report = decomposition_check(
        &m_star,
        &m_hat,
        &space,
        &env,
        env.users(),
        user_seq,
        0.25,
        12,
        101,
    )
    .unwrap();
    assert!(report.model_distance > 0.0);
    assert!(report.rhs >= report.mechanism_term);
    // the erm path and the sup-deviation come from the same cache, so the
    // pathwise decomposition argument applies directly
    assert!(
        report.holds,
        "lhs {} vs rhs {} (c_hat {})",
        report.lhs, report.rhs, report.c_hat
    );
}

#[test]
fn erm_risk_table_feeds_the_decomposition_sup() {
    // sanity wiring check: the sup deviation the diagnostic reports is at
    // least the deviation of the learned mechanism itself
    let env = env();
    let model = make_true_model(env.n_behaviors(), 9, 0.05, 70).unwrap();
    let space = env.reserve_space();
    let mut rng = task_rng(71, 0);
    let user_seq: Vec<UserSample> =
        (0..500).map(|_| env.users().sample(&mut rng)).collect();
    let erm = erm_search(
        &space,
        &model,
        &env,
        env.users(),
        user_seq.clone(),
        SharingRule::Mechanism { delta: 0.25 },
        5,
    )
    .unwrap();
    let report = decomposition_check(
        &model,
        &model,
        &space,
        &env,
        env.users(),
        user_seq,
        0.25,
        4,
        5,
    )
    .unwrap();
    let learned_exact = gtml::markov::exact_risk(
        &erm.best,
        &model,
        &env,
        env.users(),
    )
    .unwrap();
    let own_dev = (learned_exact - erm.best_risk).abs();
    assert!(report.sup_deviation >= own_dev - 1e-12);
}
