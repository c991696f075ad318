//! The seven experiment commands.
//!
//! Randomness layout: every randomized object draws its seed from
//! `derive_seed(config.seed, TAG, index)` with one tag per object kind and
//! `index = replication_seed * 2^16 + cell`, so tasks are independent,
//! order-free, and bit-reproducible regardless of how many worker threads
//! run them.

use std::path::Path;

use rayon::prelude::*;

use gtml::bounds::{
    behavior_bound_nonparametric, behavior_bound_parametric, cover, lipschitz_estimate,
    stability_constant_estimate, total_bound, uniform_bound, BehaviorMethod, CoverMetric,
    N1Provider, TotalBoundInputs,
};
use gtml::config::Config;
use gtml::erm::{erm_search, SharingRule};
use gtml::gsp::{
    make_aligned_true_model, make_signal_independent_model, GspEnv, N_SIGNALS,
};
use gtml::learning::{
    fit_nonparametric, fit_parametric, materialize, save_model, OptimizerConfig,
    ParametricBehaviorModel, ParametricFamily, RowFallback,
};
use gtml::markov::{
    ergodicity_certificate, exact_risk, model_inf_distance, simulate, stationary,
    marginal_kernel, InitBehavior,
};
use gtml::mechanism::{Environment, Mechanism, MechanismSpace};
use gtml::spaces::UserSample;
use gtml::trajectory::{load_trajectory, save_trajectory};
use gtml::{derive_seed, task_rng, BehaviorModel, Error, Result};

use crate::csvout::{fmt, median, write_csv};

const TAG_MODEL: u64 = 0;
const TAG_TRAJECTORY: u64 = 1;
const TAG_USERS: u64 = 2;
const TAG_CACHE: u64 = 3;
const TAG_STABILITY: u64 = 4;

fn task_index(rep_seed: u64, cell: usize) -> u64 {
    rep_seed.wrapping_mul(1 << 16).wrapping_add(cell as u64)
}

fn sample_users(env: &GspEnv, t2: usize, seed: u64) -> Vec<UserSample> {
    let mut rng = task_rng(seed, 0);
    (0..t2).map(|_| env.users().sample(&mut rng)).collect()
}

/// Ground-truth model for the configured environment. Rows that the
/// training mechanism can never visit are fixed to the estimator's uniform
/// fallback, so the learning error measures only what data can identify.
fn build_true_model(cfg: &Config, env: &GspEnv, a0: &Mechanism) -> Result<BehaviorModel> {
    let seed = derive_seed(cfg.seed, TAG_MODEL, 0);
    if cfg.model.signal_independent {
        make_signal_independent_model(
            env.n_behaviors(),
            N_SIGNALS,
            cfg.model.positivity_floor,
            seed,
        )
    } else {
        make_aligned_true_model(env, a0, cfg.model.positivity_floor, seed)
    }
}

fn sharing_rule(cfg: &Config) -> SharingRule {
    let delta = cfg.sharing_delta();
    match cfg.mechanism_learning.rule.as_str() {
        "stationary" => SharingRule::Stationary { delta_tv: delta },
        _ => SharingRule::Mechanism { delta },
    }
}

fn parametric_truth(cfg: &Config, env: &GspEnv) -> Result<ParametricBehaviorModel> {
    let family = ParametricFamily::from_spaces(env.behavior_space(), env.signal_space())?;
    let weights = cfg.behavior_learning.true_weights.clone();
    if weights.len() != family.dim() {
        return Err(Error::Config(format!(
            "true_weights has {} entries but the feature dimension is {}",
            weights.len(),
            family.dim()
        )));
    }
    let bound = cfg.behavior_learning.weight_bound;
    if weights.iter().any(|w| w.abs() > bound) {
        return Err(Error::Config(format!(
            "true_weights must satisfy the weight bound {bound}"
        )));
    }
    Ok(ParametricBehaviorModel { family, weights, weight_bound: bound })
}

fn optimizer_config(cfg: &Config) -> OptimizerConfig {
    OptimizerConfig {
        restarts: cfg.behavior_learning.restarts,
        max_iters: cfg.behavior_learning.max_iters,
        grad_tol: cfg.behavior_learning.grad_tol,
        ..OptimizerConfig::default()
    }
}

/// `simulate`: one trajectory under the training mechanism.
pub fn cmd_simulate(cfg: &Config, out: &Path) -> Result<()> {
    let env = cfg.build_env()?;
    let a0 = cfg.training_mechanism(&env)?;
    let model = build_true_model(cfg, &env, &a0)?;
    let traj = simulate(
        &model,
        &a0,
        &env,
        env.users(),
        cfg.experiment.simulate_t,
        InitBehavior::Stationary,
        derive_seed(cfg.seed, TAG_TRAJECTORY, 0),
    )?;
    save_trajectory(
        &out.join("trajectory.csv"),
        &traj,
        env.behavior_space(),
        env.signal_space(),
        env.users(),
    )?;
    Ok(())
}

/// `fit-behavior`: fit the configured estimator on a stored trajectory.
pub fn cmd_fit_behavior(cfg: &Config, out: &Path) -> Result<()> {
    let env = cfg.build_env()?;
    let a0 = cfg.training_mechanism(&env)?;
    let traj_path = out.join(&cfg.behavior_learning.trajectory_file);
    let traj = load_trajectory(
        &traj_path,
        env.behavior_space(),
        env.signal_space(),
        env.users(),
        a0,
    )?;
    let (model, report, method) = match cfg.behavior_learning.method.as_str() {
        "parametric" => {
            let family =
                ParametricFamily::from_spaces(env.behavior_space(), env.signal_space())?;
            let (pm, report) = fit_parametric(
                &traj,
                &family,
                cfg.behavior_learning.weight_bound,
                &optimizer_config(cfg),
                derive_seed(cfg.seed, TAG_TRAJECTORY, 1),
            )?;
            (materialize(&pm), report, "parametric")
        }
        _ => {
            let (m, report) = fit_nonparametric(
                &traj,
                env.n_behaviors(),
                N_SIGNALS,
                RowFallback::Uniform,
            )?;
            (m, report, "nonparametric")
        }
    };
    save_model(&out.join("behavior_model.txt"), &model, env.signal_space())?;
    let summary = serde_json::json!({
        "schema_version": 1,
        "method": method,
        "records": traj.len(),
        "iterations": report.iterations,
        "final_grad_norm": report.final_grad_norm,
        "fallback_rows": report.fallback_rows.len(),
        "log_likelihood": report.log_likelihood.last(),
        "renormalized": report.renormalized,
    });
    std::fs::write(
        out.join("fit_report.json"),
        serde_json::to_string_pretty(&summary).expect("json serializes") + "\n",
    )?;
    Ok(())
}

pub const BEHAVIOR_CONVERGENCE_HEADER: &str = "record,method,t1,seed,value,epsilon";

/// One replication of the behavior-learning experiment: simulate from the
/// truth, fit, return the infinity distance between fitted and true model.
fn behavior_error_once(
    cfg: &Config,
    env: &GspEnv,
    a0: &Mechanism,
    truth: &BehaviorModel,
    parametric: Option<&ParametricBehaviorModel>,
    t1: usize,
    task: u64,
) -> Result<f64> {
    let traj = simulate(
        truth,
        a0,
        env,
        env.users(),
        t1,
        InitBehavior::Stationary,
        derive_seed(cfg.seed, TAG_TRAJECTORY, task),
    )?;
    let fitted = match parametric {
        Some(pm_star) => {
            let (pm, _) = fit_parametric(
                &traj,
                &pm_star.family,
                pm_star.weight_bound,
                &optimizer_config(cfg),
                derive_seed(cfg.seed, TAG_CACHE, task),
            )?;
            materialize(&pm)
        }
        None => {
            fit_nonparametric(&traj, env.n_behaviors(), N_SIGNALS, RowFallback::Uniform)?.0
        }
    };
    model_inf_distance(&fitted, truth)
}

/// `behavior-convergence`: learning-error sweep over T1.
pub fn cmd_behavior_convergence(cfg: &Config, out: &Path) -> Result<()> {
    let env = cfg.build_env()?;
    let a0 = cfg.training_mechanism(&env)?;
    let method = cfg.behavior_learning.method.clone();
    let (truth, pm_star) = if method == "parametric" {
        let pm = parametric_truth(cfg, &env)?;
        (materialize(&pm), Some(pm))
    } else {
        (build_true_model(cfg, &env, &a0)?, None)
    };

    let mut tasks = Vec::new();
    for (cell, &t1) in cfg.experiment.t1_sweep.iter().enumerate() {
        for &rep in &cfg.experiment.seeds {
            tasks.push((cell, t1, rep));
        }
    }
    let results: Vec<(usize, usize, u64, f64)> = tasks
        .par_iter()
        .map(|&(cell, t1, rep)| {
            let err = behavior_error_once(
                cfg,
                &env,
                &a0,
                &truth,
                pm_star.as_ref(),
                t1,
                task_index(rep, cell),
            )?;
            Ok((cell, t1, rep, err))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &(_, t1, rep, err) in &results {
        rows.push(format!("sample,{method},{t1},{rep},{},", fmt(err)));
    }
    for (cell, &t1) in cfg.experiment.t1_sweep.iter().enumerate() {
        let errs: Vec<f64> = results
            .iter()
            .filter(|r| r.0 == cell)
            .map(|r| r.3)
            .collect();
        rows.push(format!("median,{method},{t1},,{},", fmt(median(&errs))));
        for &eps in &cfg.experiment.tail_epsilons {
            let freq =
                errs.iter().filter(|&&e| e >= eps).count() as f64 / errs.len() as f64;
            rows.push(format!("tail,{method},{t1},,{},{}", fmt(freq), fmt(eps)));
        }
    }
    write_csv(
        &out.join("behavior_convergence.csv"),
        "behavior-convergence",
        BEHAVIOR_CONVERGENCE_HEADER,
        &rows,
    )
}

pub const MECHANISM_CONVERGENCE_HEADER: &str =
    "record,t2,seed,sup_deviation,cache_sequences";

pub const RISK_TABLE_HEADER: &str =
    "mechanism_params,empirical_risk,exact_risk,cache_hit";

/// Writes one per-candidate risk table (mechanism parameters joined with
/// `|`, empirical and exact risk, cache-hit flag).
fn write_risk_table(
    path: &Path,
    table: &[gtml::erm::CandidateRow],
    exact: &[f64],
) -> Result<()> {
    let rows: Vec<String> = table
        .iter()
        .zip(exact.iter())
        .map(|(row, ex)| {
            let params = row
                .mechanism
                .params()
                .iter()
                .map(|p| fmt(*p))
                .collect::<Vec<_>>()
                .join("|");
            format!(
                "{params},{},{},{}",
                fmt(row.empirical_risk),
                fmt(*ex),
                u8::from(row.cache_hit)
            )
        })
        .collect();
    write_csv(path, "risk-table", RISK_TABLE_HEADER, &rows)
}

/// Sup deviation of empirical risks from exact risks over a space, sharing
/// samples through one cache.
fn sup_deviation_once(
    model: &BehaviorModel,
    env: &GspEnv,
    space: &MechanismSpace,
    exact: &[f64],
    rule: SharingRule,
    t2: usize,
    users_seed: u64,
    cache_seed: u64,
) -> Result<(f64, usize)> {
    let user_seq = sample_users(env, t2, users_seed);
    let result = erm_search(space, model, env, env.users(), user_seq, rule, cache_seed)?;
    let sup = result
        .table
        .iter()
        .zip(exact.iter())
        .map(|(row, ex)| (row.empirical_risk - ex).abs())
        .fold(0.0f64, f64::max);
    Ok((sup, result.sequences_generated))
}

/// `mechanism-convergence`: sup-deviation sweep over T2 under the true
/// model.
pub fn cmd_mechanism_convergence(cfg: &Config, out: &Path) -> Result<()> {
    let env = cfg.build_env()?;
    let a0 = cfg.training_mechanism(&env)?;
    let model = build_true_model(cfg, &env, &a0)?;
    let space = env.reserve_space();
    let rule = sharing_rule(cfg);
    let exact: Vec<f64> = space
        .members
        .iter()
        .map(|a| exact_risk(a, &model, &env, env.users()))
        .collect::<Result<_>>()?;

    let mut tasks = Vec::new();
    for (cell, &t2) in cfg.experiment.t2_sweep.iter().enumerate() {
        for &rep in &cfg.experiment.seeds {
            tasks.push((cell, t2, rep));
        }
    }
    let results: Vec<(usize, usize, u64, f64, usize)> = tasks
        .par_iter()
        .map(|&(cell, t2, rep)| {
            let idx = task_index(rep, cell);
            let (sup, seqs) = sup_deviation_once(
                &model,
                &env,
                &space,
                &exact,
                rule,
                t2,
                derive_seed(cfg.seed, TAG_USERS, idx),
                derive_seed(cfg.seed, TAG_CACHE, idx),
            )?;
            Ok((cell, t2, rep, sup, seqs))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &(_, t2, rep, sup, seqs) in &results {
        rows.push(format!("sample,{t2},{rep},{},{seqs}", fmt(sup)));
    }
    for (cell, &t2) in cfg.experiment.t2_sweep.iter().enumerate() {
        let sups: Vec<f64> =
            results.iter().filter(|r| r.0 == cell).map(|r| r.3).collect();
        rows.push(format!("median,{t2},,{},", fmt(median(&sups))));
    }
    write_csv(
        &out.join("mechanism_convergence.csv"),
        "mechanism-convergence",
        MECHANISM_CONVERGENCE_HEADER,
        &rows,
    )?;

    // per-candidate risk table at the largest T2 for the first replication
    let t2 = *cfg.experiment.t2_sweep.last().expect("sweep is non-empty");
    let rep = cfg.experiment.seeds[0];
    let cell = cfg.experiment.t2_sweep.len() - 1;
    let idx = task_index(rep, cell);
    let user_seq = sample_users(&env, t2, derive_seed(cfg.seed, TAG_USERS, idx));
    let result = erm_search(
        &space,
        &model,
        &env,
        env.users(),
        user_seq,
        rule,
        derive_seed(cfg.seed, TAG_CACHE, idx),
    )?;
    write_risk_table(&out.join("risk_table.csv"), &result.table, &exact)
}

pub const SHARING_ABLATION_HEADER: &str = "record,n,sharing,t2,seed,sup_deviation";

/// Reserve grid applying one common level to every query.
pub fn uniform_reserve_grid(env: &GspEnv, n: usize) -> MechanismSpace {
    let max = env.max_bid();
    let queries = env.users().n_queries();
    let members = (0..n)
        .map(|i| {
            let r = if n == 1 { 0.0 } else { i as f64 * max / (n - 1) as f64 };
            Mechanism::new(vec![r; queries]).expect("grid reserves are finite")
        })
        .collect();
    MechanismSpace::new(members)
}

/// `sharing-ablation`: sup deviation with and without sample sharing as the
/// mechanism grid grows, under a mechanism-independent chain.
pub fn cmd_sharing_ablation(cfg: &Config, out: &Path) -> Result<()> {
    if !cfg.experiment.ablation_signal_independent {
        return Err(Error::Config(
            "the sharing ablation requires experiment.ablation_signal_independent = true"
                .into(),
        ));
    }
    let env = cfg.build_env()?;
    let model = make_signal_independent_model(
        env.n_behaviors(),
        N_SIGNALS,
        cfg.model.positivity_floor,
        derive_seed(cfg.seed, TAG_MODEL, 1),
    )?;
    let t2 = cfg.experiment.ablation_t2;
    let delta_on = cfg
        .experiment
        .ablation_delta
        .unwrap_or(0.505 * env.max_bid());

    let mut tasks = Vec::new();
    for (cell, &n) in cfg.experiment.ablation_grid_sizes.iter().enumerate() {
        for sharing in [false, true] {
            for &rep in &cfg.experiment.ablation_seeds {
                tasks.push((cell, n, sharing, rep));
            }
        }
    }
    // exact risks per grid size; the chain is mechanism-independent so one
    // stationary distribution serves every candidate
    let exact_per_cell: Vec<Vec<f64>> = cfg
        .experiment
        .ablation_grid_sizes
        .par_iter()
        .map(|&n| {
            let space = uniform_reserve_grid(&env, n);
            let kernel = marginal_kernel(&model, &space.members[0], &env, env.users())?;
            let pi = stationary(&kernel)?;
            let support = env.users().support();
            Ok(space
                .members
                .iter()
                .map(|a| {
                    pi.probs
                        .iter()
                        .enumerate()
                        .map(|(b, &pb)| {
                            support
                                .iter()
                                .map(|(u, pu)| pb * pu * env.loss(a, b, u))
                                .sum::<f64>()
                        })
                        .sum()
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let results: Vec<(usize, usize, bool, u64, f64)> = tasks
        .par_iter()
        .map(|&(cell, n, sharing, rep)| {
            let space = uniform_reserve_grid(&env, n);
            let delta = if sharing { delta_on } else { 0.0 };
            // users and cache seeds depend on the replication only, so the
            // arms share their noise and differ purely in the sharing rule
            let (sup, _) = sup_deviation_once(
                &model,
                &env,
                &space,
                &exact_per_cell[cell],
                SharingRule::Mechanism { delta },
                t2,
                derive_seed(cfg.seed, TAG_USERS, task_index(rep, 0)),
                derive_seed(cfg.seed, TAG_CACHE, task_index(rep, 0)),
            )?;
            Ok((cell, n, sharing, rep, sup))
        })
        .collect::<Result<_>>()?;

    let mode = |sharing: bool| if sharing { "on" } else { "off" };
    let mut rows = Vec::new();
    for &(_, n, sharing, rep, sup) in &results {
        rows.push(format!("sample,{n},{},{t2},{rep},{}", mode(sharing), fmt(sup)));
    }
    for (cell, &n) in cfg.experiment.ablation_grid_sizes.iter().enumerate() {
        for sharing in [false, true] {
            let sups: Vec<f64> = results
                .iter()
                .filter(|r| r.0 == cell && r.2 == sharing)
                .map(|r| r.4)
                .collect();
            rows.push(format!(
                "median,{n},{},{t2},,{}",
                mode(sharing),
                fmt(median(&sups))
            ));
        }
    }
    write_csv(
        &out.join("sharing_ablation.csv"),
        "sharing-ablation",
        SHARING_ABLATION_HEADER,
        &rows,
    )
}

pub const END_TO_END_HEADER: &str = "record,t1,t2,seed,gap";

/// One end-to-end replication: learn the model, learn the mechanism,
/// return the exact generalization gap.
#[allow(clippy::too_many_arguments)]
fn end_to_end_once(
    cfg: &Config,
    env: &GspEnv,
    a0: &Mechanism,
    m_star: &BehaviorModel,
    pm_family: Option<&ParametricFamily>,
    space: &MechanismSpace,
    exact_min: f64,
    rule: SharingRule,
    t1: usize,
    t2: usize,
    task: u64,
) -> Result<f64> {
    let traj = simulate(
        m_star,
        a0,
        env,
        env.users(),
        t1,
        InitBehavior::Stationary,
        derive_seed(cfg.seed, TAG_TRAJECTORY, task),
    )?;
    let m_hat = match pm_family {
        Some(family) => {
            let (pm, _) = fit_parametric(
                &traj,
                family,
                cfg.behavior_learning.weight_bound,
                &optimizer_config(cfg),
                derive_seed(cfg.seed, TAG_STABILITY, task),
            )?;
            materialize(&pm)
        }
        None => {
            fit_nonparametric(&traj, env.n_behaviors(), N_SIGNALS, RowFallback::Uniform)?.0
        }
    };
    let user_seq = sample_users(env, t2, derive_seed(cfg.seed, TAG_USERS, task));
    let result = erm_search(
        space,
        &m_hat,
        env,
        env.users(),
        user_seq,
        rule,
        derive_seed(cfg.seed, TAG_CACHE, task),
    )?;
    let learned = exact_risk(&result.best, m_star, env, env.users())?;
    Ok(learned - exact_min)
}

/// `end-to-end`: the full pipeline along the diagonal (T1, T2) sweep, plus
/// a JSON summary with the bound-formula overlay.
pub fn cmd_end_to_end(cfg: &Config, out: &Path) -> Result<()> {
    if cfg.experiment.t1_sweep.len() != cfg.experiment.t2_sweep.len() {
        return Err(Error::Config(
            "end-to-end pairs t1_sweep with t2_sweep; the lists must have equal length"
                .into(),
        ));
    }
    let env = cfg.build_env()?;
    let a0 = cfg.training_mechanism(&env)?;
    let m_star = build_true_model(cfg, &env, &a0)?;
    let pm_family = if cfg.behavior_learning.method == "parametric" {
        Some(ParametricFamily::from_spaces(env.behavior_space(), env.signal_space())?)
    } else {
        None
    };
    let space = env.reserve_space();
    let rule = sharing_rule(cfg);
    let exact: Vec<f64> = space
        .members
        .iter()
        .map(|a| exact_risk(a, &m_star, &env, env.users()))
        .collect::<Result<_>>()?;
    let (best_idx, exact_min) = exact
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, &r)| (i, r))
        .expect("space is non-empty");

    let cells: Vec<(usize, usize)> = cfg
        .experiment
        .t1_sweep
        .iter()
        .zip(cfg.experiment.t2_sweep.iter())
        .map(|(&a, &b)| (a, b))
        .collect();
    let mut tasks = Vec::new();
    for (cell, &(t1, t2)) in cells.iter().enumerate() {
        for &rep in &cfg.experiment.seeds {
            tasks.push((cell, t1, t2, rep));
        }
    }
    let results: Vec<(usize, usize, usize, u64, f64)> = tasks
        .par_iter()
        .map(|&(cell, t1, t2, rep)| {
            let gap = end_to_end_once(
                cfg,
                &env,
                &a0,
                &m_star,
                pm_family.as_ref(),
                &space,
                exact_min,
                rule,
                t1,
                t2,
                task_index(rep, cell),
            )?;
            Ok((cell, t1, t2, rep, gap))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &(_, t1, t2, rep, gap) in &results {
        rows.push(format!("sample,{t1},{t2},{rep},{}", fmt(gap)));
    }
    let mut cell_summaries = Vec::new();
    for (cell, &(t1, t2)) in cells.iter().enumerate() {
        let gaps: Vec<f64> =
            results.iter().filter(|r| r.0 == cell).map(|r| r.4).collect();
        rows.push(format!("median,{t1},{t2},,{}", fmt(median(&gaps))));
        cell_summaries.push((t1, t2, median(&gaps), gaps));
    }
    write_csv(&out.join("end_to_end.csv"), "end-to-end", END_TO_END_HEADER, &rows)?;

    // bound overlay: formula values at the configured mixing parameters
    let params = cfg.mixing_parameters()?;
    let cert = ergodicity_certificate(&m_star, &env, &a0, env.users(), 64)?;
    let delta = cfg.sharing_delta();
    let net = cover(&space, &env, delta, CoverMetric::Mechanism)?;
    let n1 = N1Provider::PseudoDim {
        pdim: cfg.bounds.pseudo_dim,
        n_behaviors: env.n_behaviors(),
    };
    let method = match cfg.behavior_learning.method.as_str() {
        "parametric" => BehaviorMethod::Parametric,
        _ => BehaviorMethod::Nonparametric,
    };
    let alpha_hat = lipschitz_estimate(&space, &m_star, &env, env.users())?;
    let c_hat_emp = stability_constant_estimate(
        &m_star,
        &env,
        env.users(),
        &a0,
        16,
        0.1,
        derive_seed(cfg.seed, TAG_STABILITY, 0),
    )?;
    let inputs = TotalBoundInputs {
        method,
        params: &params,
        n_behaviors: env.n_behaviors(),
        n_signals: N_SIGNALS,
        cert,
        cover: &net,
        n1: &n1,
        c_hat: cfg.bounds.c_hat,
        delta,
        behavior_fraction: cfg.bounds.behavior_fraction,
    };
    let mut bound_rows = Vec::new();
    for &(t1, t2, _, _) in &cell_summaries {
        for &eps in &cfg.experiment.tail_epsilons {
            let value = total_bound(t1 as u64, t2 as u64, eps, &inputs);
            bound_rows.push(serde_json::json!({
                "t1": t1,
                "t2": t2,
                "eps": eps,
                "total_bound": value.as_ref().ok(),
                "error": value.as_ref().err().map(|e| e.to_string()),
            }));
        }
    }
    let summary = serde_json::json!({
        "schema_version": 1,
        "command": "end-to-end",
        "exact_optimum": {
            "params": space.members[best_idx].params(),
            "risk": exact_min,
        },
        "certificate": { "n0": cert.n0, "delta0": cert.delta0 },
        "alpha_hat": alpha_hat,
        "c_hat_empirical": c_hat_emp.c_hat,
        "loss_bound": env.loss_bound(),
        "cells": cell_summaries
            .iter()
            .map(|(t1, t2, med, gaps)| serde_json::json!({
                "t1": t1,
                "t2": t2,
                "median_gap": med,
                "gaps": gaps,
            }))
            .collect::<Vec<_>>(),
        "bounds": bound_rows,
    });
    std::fs::write(
        out.join("end_to_end_summary.json"),
        serde_json::to_string_pretty(&summary).expect("json serializes") + "\n",
    )?;
    Ok(())
}

pub const BOUNDS_HEADER: &str = "family,t1,t2,eps,bound_value,empirical_tail_estimate";

/// `bounds`: formula curves over the sweeps, with optional empirical tails
/// for the configured behavior method.
pub fn cmd_bounds(cfg: &Config, out: &Path) -> Result<()> {
    let env = cfg.build_env()?;
    let a0 = cfg.training_mechanism(&env)?;
    let m_star = build_true_model(cfg, &env, &a0)?;
    let params = cfg.mixing_parameters()?;
    let cert = ergodicity_certificate(&m_star, &env, &a0, env.users(), 64)?;
    let space = env.reserve_space();
    let delta = cfg.sharing_delta();
    let net = cover(&space, &env, delta, CoverMetric::Mechanism)?;
    let n1 = N1Provider::PseudoDim {
        pdim: cfg.bounds.pseudo_dim,
        n_behaviors: env.n_behaviors(),
    };
    let (nb, nh) = (env.n_behaviors(), N_SIGNALS);

    // empirical learning-error tails for the configured method
    let empirical: Option<Vec<Vec<f64>>> = if cfg.bounds.empirical_seeds.is_empty() {
        None
    } else {
        let method = cfg.behavior_learning.method.clone();
        let (truth, pm_star) = if method == "parametric" {
            let pm = parametric_truth(cfg, &env)?;
            (materialize(&pm), Some(pm))
        } else {
            (m_star.clone(), None)
        };
        let mut tasks = Vec::new();
        for (cell, &t1) in cfg.experiment.t1_sweep.iter().enumerate() {
            for &rep in &cfg.bounds.empirical_seeds {
                tasks.push((cell, t1, rep));
            }
        }
        let errs: Vec<(usize, f64)> = tasks
            .par_iter()
            .map(|&(cell, t1, rep)| {
                let err = behavior_error_once(
                    cfg,
                    &env,
                    &a0,
                    &truth,
                    pm_star.as_ref(),
                    t1,
                    task_index(rep, 32 + cell),
                )?;
                Ok((cell, err))
            })
            .collect::<Result<_>>()?;
        Some(
            (0..cfg.experiment.t1_sweep.len())
                .map(|cell| {
                    errs.iter().filter(|e| e.0 == cell).map(|e| e.1).collect()
                })
                .collect(),
        )
    };

    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for (family, parametric) in
        [("behavior_parametric", true), ("behavior_nonparametric", false)]
    {
        let matches_method = (cfg.behavior_learning.method == "parametric") == parametric;
        for (cell, &t1) in cfg.experiment.t1_sweep.iter().enumerate() {
            for &eps in &cfg.experiment.tail_epsilons {
                let value = if parametric {
                    behavior_bound_parametric(t1 as u64, eps, &params, nb, nh, &cert)
                } else {
                    behavior_bound_nonparametric(t1 as u64, eps, &params, nb, nh, &cert)
                };
                match value {
                    Ok(v) => {
                        let tail = match (&empirical, matches_method) {
                            (Some(errs), true) => {
                                let e = &errs[cell];
                                let freq = e.iter().filter(|&&x| x >= eps).count()
                                    as f64
                                    / e.len() as f64;
                                fmt(freq)
                            }
                            _ => String::new(),
                        };
                        rows.push(format!("{family},{t1},,{},{},{tail}", fmt(eps), fmt(v)));
                    }
                    Err(Error::Domain(d)) => {
                        skipped += 1;
                        eprintln!(
                            "gtml: warn: bounds: skipping {family} t1={t1} eps={eps}: {d}"
                        );
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    for &t2 in &cfg.experiment.t2_sweep {
        for &eps in &cfg.experiment.tail_epsilons {
            match uniform_bound(t2 as u64, eps, delta, &params, &net, &n1) {
                Ok(v) => {
                    rows.push(format!("uniform,,{t2},{},{},", fmt(eps), fmt(v)));
                }
                Err(Error::Domain(d)) => {
                    skipped += 1;
                    eprintln!("gtml: warn: bounds: skipping uniform t2={t2} eps={eps}: {d}");
                }
                Err(e) => return Err(e),
            }
        }
    }
    let method = match cfg.behavior_learning.method.as_str() {
        "parametric" => BehaviorMethod::Parametric,
        _ => BehaviorMethod::Nonparametric,
    };
    let inputs = TotalBoundInputs {
        method,
        params: &params,
        n_behaviors: nb,
        n_signals: nh,
        cert,
        cover: &net,
        n1: &n1,
        c_hat: cfg.bounds.c_hat,
        delta,
        behavior_fraction: cfg.bounds.behavior_fraction,
    };
    if cfg.experiment.t1_sweep.len() == cfg.experiment.t2_sweep.len() {
        for (&t1, &t2) in
            cfg.experiment.t1_sweep.iter().zip(cfg.experiment.t2_sweep.iter())
        {
            for &eps in &cfg.experiment.tail_epsilons {
                match total_bound(t1 as u64, t2 as u64, eps, &inputs) {
                    Ok(v) => {
                        rows.push(format!("total,{t1},{t2},{},{},", fmt(eps), fmt(v)));
                    }
                    Err(Error::Domain(d)) => {
                        skipped += 1;
                        eprintln!(
                            "gtml: warn: bounds: skipping total t1={t1} t2={t2} eps={eps}: {d}"
                        );
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    if skipped > 0 {
        eprintln!("gtml: warn: bounds: {skipped} parameter combinations were inadmissible");
    }
    write_csv(&out.join("bounds.csv"), "bounds", BOUNDS_HEADER, &rows)
}
