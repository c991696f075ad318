//! Finite behavior, signal and user spaces.
//!
//! Behaviors and signals are labeled finite sets with a numeric embedding
//! per label (the parametric behavior model reads labels through the
//! embeddings; everything else treats them as opaque indices). Users are
//! `(query, click-vector)` pairs drawn i.i.d. from a finite distribution:
//! a query with its probability, and an independent click probability per
//! ad slot given the query.

use rand::Rng;

use crate::error::{Error, Result};

/// Number of ad slots; fixed to two throughout.
pub const SLOTS: usize = 2;

fn check_labels(kind: &str, labels: &[String]) -> Result<()> {
    for (i, a) in labels.iter().enumerate() {
        if labels[..i].contains(a) {
            return Err(Error::InvalidInput(format!(
                "{kind} label {a:?} appears more than once"
            )));
        }
    }
    Ok(())
}

/// Index-scaled default embedding: label `i` of `n` maps to `[i / (n - 1)]`.
pub fn scaled_index_embeddings(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            if n <= 1 {
                vec![0.0]
            } else {
                vec![i as f64 / (n - 1) as f64]
            }
        })
        .collect()
}

/// The finite set of joint agent behaviors.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorSpace {
    labels: Vec<String>,
    embeddings: Vec<Vec<f64>>,
}

impl BehaviorSpace {
    pub fn new(labels: Vec<String>, embeddings: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "behavior space needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        if embeddings.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "behavior space has {} labels but {} embeddings",
                labels.len(),
                embeddings.len()
            )));
        }
        check_labels("behavior", &labels)?;
        Ok(Self { labels, embeddings })
    }

    /// Space with the default index-scaled one-dimensional embedding.
    pub fn with_default_embedding(labels: Vec<String>) -> Result<Self> {
        let emb = scaled_index_embeddings(labels.len());
        Self::new(labels, emb)
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.embeddings[i]
    }
}

/// The finite set of signals the platform sends back to agents.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpace {
    labels: Vec<String>,
    embeddings: Vec<Vec<f64>>,
}

impl SignalSpace {
    pub fn new(labels: Vec<String>, embeddings: Vec<Vec<f64>>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput(
                "signal space needs at least 1 label".into(),
            ));
        }
        if embeddings.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "signal space has {} labels but {} embeddings",
                labels.len(),
                embeddings.len()
            )));
        }
        check_labels("signal", &labels)?;
        Ok(Self { labels, embeddings })
    }

    pub fn with_default_embedding(labels: Vec<String>) -> Result<Self> {
        let emb = scaled_index_embeddings(labels.len());
        Self::new(labels, emb)
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.embeddings[i]
    }
}

/// One query with its arrival probability and per-slot click probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub name: String,
    pub prob: f64,
    pub click_probs: [f64; SLOTS],
}

/// A realized user: the issued query and the click outcome per slot.
///
/// Clicks are sampled independently of the bids; whether a click counts is
/// decided later by masking against the slots actually shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserSample {
    pub query: usize,
    pub clicks: [bool; SLOTS],
}

/// Finitely supported i.i.d. user distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDistribution {
    queries: Vec<Query>,
}

/// Tolerance for the query probabilities summing to one.
pub const QUERY_PROB_TOL: f64 = 1e-12;

impl UserDistribution {
    pub fn new(queries: Vec<Query>) -> Result<Self> {
        if queries.is_empty() {
            return Err(Error::InvalidInput("user distribution has no queries".into()));
        }
        let total: f64 = queries.iter().map(|q| q.prob).sum();
        if (total - 1.0).abs() > QUERY_PROB_TOL {
            return Err(Error::InvalidInput(format!(
                "query probabilities sum to {total}, expected 1"
            )));
        }
        for q in &queries {
            if q.prob < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "query {:?} has negative probability {}",
                    q.name, q.prob
                )));
            }
            for (slot, &p) in q.click_probs.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidInput(format!(
                        "query {:?} slot {slot} click probability {p} outside [0, 1]",
                        q.name
                    )));
                }
            }
        }
        Ok(Self { queries })
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn n_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn query_name(&self, i: usize) -> &str {
        &self.queries[i].name
    }

    pub fn query_index(&self, name: &str) -> Option<usize> {
        self.queries.iter().position(|q| q.name == name)
    }

    /// Draws one user. Consumes exactly three uniform draws (query plus one
    /// per slot) so simulation streams stay aligned across environments.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> UserSample {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut query = self.queries.len() - 1;
        for (i, q) in self.queries.iter().enumerate() {
            acc += q.prob;
            if u < acc {
                query = i;
                break;
            }
        }
        let mut clicks = [false; SLOTS];
        for (slot, click) in clicks.iter_mut().enumerate() {
            let c: f64 = rng.random();
            *click = c < self.queries[query].click_probs[slot];
        }
        UserSample { query, clicks }
    }

    /// Full support with exact probabilities: every (query, click-vector)
    /// combination, in deterministic order. Used by the exact kernels.
    pub fn support(&self) -> Vec<(UserSample, f64)> {
        let mut out = Vec::with_capacity(self.queries.len() * (1 << SLOTS));
        for (qi, q) in self.queries.iter().enumerate() {
            for mask in 0..(1usize << SLOTS) {
                let mut clicks = [false; SLOTS];
                let mut p = q.prob;
                for (slot, click) in clicks.iter_mut().enumerate() {
                    *click = mask & (1 << slot) != 0;
                    let cp = q.click_probs[slot];
                    p *= if *click { cp } else { 1.0 - cp };
                }
                if p > 0.0 {
                    out.push((UserSample { query: qi, clicks }, p));
                }
            }
        }
        out
    }
}
