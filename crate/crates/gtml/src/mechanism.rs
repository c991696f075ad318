//! Mechanisms, mechanism spaces, and the environment contract.
//!
//! A mechanism is an opaque parameter record; only an [`Environment`] gives
//! it meaning by evaluating losses, signals and the mechanism distance. The
//! concrete environment in this crate is the reserve-price GSP auction
//! ([`crate::gsp::GspEnv`]); tests use small synthetic environments.

use crate::error::{Error, Result};
use crate::spaces::UserSample;

/// An opaque parameter record interpretable by an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    params: Vec<f64>,
}

impl Mechanism {
    pub fn new(params: Vec<f64>) -> Result<Self> {
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("mechanism parameters must be finite".into()));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Identity key used in provenance strings and cache diagnostics.
    pub fn key(&self) -> String {
        let parts: Vec<String> = self.params.iter().map(|p| format!("{p}")).collect();
        format!("[{}]", parts.join(","))
    }

    /// Lexicographic order on the parameter vector; the documented
    /// tie-breaking rule for empirical risk minima.
    pub fn lex_cmp(&self, other: &Mechanism) -> std::cmp::Ordering {
        for (a, b) in self.params.iter().zip(other.params.iter()) {
            match a.partial_cmp(b).expect("mechanism params are finite") {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.params.len().cmp(&other.params.len())
    }
}

/// A finite, enumerable set of candidate mechanisms.
///
/// The enumeration order is part of the contract: greedy covers and the
/// sample-sharing cache scan members in this order, so a fixed order plus a
/// fixed seed reproduces results exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismSpace {
    pub members: Vec<Mechanism>,
}

impl MechanismSpace {
    pub fn new(members: Vec<Mechanism>) -> Self {
        Self { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Largest pairwise distance under the environment metric.
    pub fn diameter<E: Environment + ?Sized>(&self, env: &E) -> f64 {
        let mut d = 0.0f64;
        for (i, a) in self.members.iter().enumerate() {
            for b in &self.members[i + 1..] {
                d = d.max(env.mechanism_distance(a, b));
            }
        }
        d
    }
}

/// Couples a mechanism family with its loss, signal function and metric.
///
/// `loss` must take values in `[-loss_bound, 0]` and `signal` must return an
/// index into the environment's signal space for every admissible input;
/// both are exercised by property tests per concrete environment.
pub trait Environment {
    /// Signal the platform emits after matching behavior `b` with user `u`
    /// under mechanism `a`.
    fn signal(&self, a: &Mechanism, b: usize, u: &UserSample) -> usize;

    /// Loss (negative payoff) of mechanism `a` against behavior `b` and
    /// user `u`.
    fn loss(&self, a: &Mechanism, b: usize, u: &UserSample) -> f64;

    /// Upper bound `K` with `loss` in `[-K, 0]`.
    fn loss_bound(&self) -> f64;

    /// Distance `d_A` on the mechanism family.
    fn mechanism_distance(&self, a: &Mechanism, b: &Mechanism) -> f64;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lex_cmp_orders_by_first_differing_param() {
        let a = Mechanism::new(vec![0.5, 2.0]).unwrap();
        let b = Mechanism::new(vec![0.5, 1.0]).unwrap();
        assert_eq!(a.lex_cmp(&b), std::cmp::Ordering::Greater);
        assert_eq!(b.lex_cmp(&a), std::cmp::Ordering::Less);
        assert_eq!(a.lex_cmp(&a), std::cmp::Ordering::Equal);
    }

    #[test]
    fn non_finite_params_rejected() {
        assert!(Mechanism::new(vec![f64::NAN]).is_err());
        assert!(Mechanism::new(vec![f64::INFINITY]).is_err());
    }
}
