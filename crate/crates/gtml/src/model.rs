//! Signal-conditioned Markov behavior models.
//!
//! A behavior model holds one `|B| x |B|` row-stochastic matrix per signal:
//! entry `(b, b')` of matrix `h` is the probability that the agents move to
//! behavior `b'` when they currently play `b` and receive signal `h`.

use crate::error::{Error, Result};

/// Row-sum tolerance for stochasticity checks.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// One transition matrix per signal label.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorModel {
    matrices: Vec<Vec<Vec<f64>>>,
}

impl BehaviorModel {
    /// Builds a model from `matrices[h][b][b']`. Only shapes are enforced
    /// here; probabilistic validity is reported by [`validate_model`] so
    /// that defective models can be constructed and inspected.
    pub fn new(matrices: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::InvalidInput("model needs at least one signal matrix".into()));
        }
        let n = matrices[0].len();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "behavior matrices must be at least 2x2, got {n} rows"
            )));
        }
        for (h, m) in matrices.iter().enumerate() {
            if m.len() != n {
                return Err(Error::InvalidInput(format!(
                    "signal {h} matrix has {} rows, expected {n}",
                    m.len()
                )));
            }
            for (b, row) in m.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::InvalidInput(format!(
                        "signal {h} row {b} has {} entries, expected {n}",
                        row.len()
                    )));
                }
                if row.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "signal {h} row {b} contains a non-finite entry"
                    )));
                }
            }
        }
        Ok(Self { matrices })
    }

    /// Model with every row uniform, for every signal.
    pub fn uniform(n_behaviors: usize, n_signals: usize) -> Result<Self> {
        let row = vec![1.0 / n_behaviors as f64; n_behaviors];
        let m = vec![vec![row; n_behaviors]; n_signals];
        Self::new(m)
    }

    pub fn n_behaviors(&self) -> usize {
        self.matrices[0].len()
    }

    pub fn n_signals(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrix(&self, signal: usize) -> &Vec<Vec<f64>> {
        &self.matrices[signal]
    }

    pub fn row(&self, signal: usize, behavior: usize) -> &[f64] {
        &self.matrices[signal][behavior]
    }

    pub fn matrices(&self) -> &[Vec<Vec<f64>>] {
        &self.matrices
    }

    /// True when [`validate_model`] reports nothing.
    pub fn is_valid(&self) -> bool {
        validate_model(self).is_empty()
    }
}

/// A single stochasticity defect found in a model.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelViolation {
    /// Row `(signal, row)` sums to `sum` instead of 1.
    RowSum { signal: usize, row: usize, sum: f64 },
    /// Entry `(signal, row, col)` is negative.
    NegativeEntry { signal: usize, row: usize, col: usize, value: f64 },
}

impl std::fmt::Display for ModelViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelViolation::RowSum { signal, row, sum } => {
                write!(f, "signal {signal} row {row} sums to {sum}")
            }
            ModelViolation::NegativeEntry { signal, row, col, value } => {
                write!(f, "signal {signal} entry ({row}, {col}) is negative: {value}")
            }
        }
    }
}

/// Checks every row of every signal matrix for non-negativity and a row sum
/// within [`STOCHASTIC_TOL`] of one. Violations are data, not failures: the
/// list is empty exactly when the model is a valid conditional transition
/// model.
pub fn validate_model(model: &BehaviorModel) -> Vec<ModelViolation> {
    let mut out = Vec::new();
    for (h, m) in model.matrices.iter().enumerate() {
        for (b, row) in m.iter().enumerate() {
            for (c, &x) in row.iter().enumerate() {
                if x < 0.0 {
                    out.push(ModelViolation::NegativeEntry {
                        signal: h,
                        row: b,
                        col: c,
                        value: x,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                out.push(ModelViolation::RowSum { signal: h, row: b, sum });
            }
        }
    }
    out
}
