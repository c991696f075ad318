//! A desk-scale laboratory for game-theoretic machine learning (GTML).
//!
//! The pipeline this crate implements: agents bid in a platform mechanism
//! (here: two-slot GSP auctions with query-dependent reserve prices), and
//! their behavior follows a signal-conditioned first-order Markov model.
//! Learning the optimal mechanism is a bi-level empirical risk minimization:
//!
//! 1. *Behavior learning* fits the transition model from a trajectory of
//!    (behavior, signal) pairs, either parametrically (truncated-Gaussian
//!    rows, maximum likelihood) or non-parametrically (conditional
//!    frequencies). See [`learning`].
//! 2. *Mechanism learning* searches a finite mechanism space for the
//!    minimizer of the empirical risk computed on behavior sequences
//!    simulated under the fitted model, reusing sequences across mechanisms
//!    within a sharing radius. See [`erm`].
//!
//! The [`markov`] module supplies the exact machinery both levels rest on:
//! user-marginalized transition kernels, stationary distributions, exact
//! risks, and ergodicity certificates. The [`bounds`] module evaluates the
//! finite-sample error-bound formulas (behavior-learning tails, the nested
//! covering-number uniform-convergence bound, and their combination) and
//! provides the empirical diagnostics (covers, Lipschitz and stability
//! constant estimates, the error-decomposition check) used to confront the
//! formulas with simulation.
//!
//! Everything is deterministic under explicit seeds; all state spaces are
//! finite and small enough that oracles (linear solves, brute-force
//! enumerations) stay exact.

pub mod bounds;
pub mod config;
pub mod erm;
mod error;
pub mod gsp;
pub mod learning;
pub mod markov;
pub mod mechanism;
pub mod model;
pub mod spaces;
pub mod trajectory;

pub use error::{Error, Result};
pub use mechanism::{Environment, Mechanism, MechanismSpace};
pub use model::{validate_model, BehaviorModel, ModelViolation};
pub use spaces::{BehaviorSpace, Query, SignalSpace, UserDistribution, UserSample};
pub use trajectory::{Trajectory, TrajectoryRecord};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives the RNG for one task of a seeded experiment.
///
/// The split rule is `seed -> key`, `task -> stream`: two tasks of the same
/// run never share a stream, and the same `(seed, task)` pair always yields
/// the same generator, so replications can run concurrently without
/// perturbing results.
pub fn task_rng(seed: u64, task: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splits a base seed into an independent sub-seed for a `(tag, index)`
/// pair. Experiments give every randomized object (ground-truth model,
/// trajectory, user sequence, cache) its own tag so concurrent tasks never
/// share randomness; the map is pure, so runs reproduce bit for bit.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag ^ splitmix64(index)))
}
