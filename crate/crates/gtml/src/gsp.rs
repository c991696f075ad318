//! Two-slot GSP auctions with query-dependent reserve prices.
//!
//! Behaviors are joint bid profiles on a finite grid, mechanisms map each
//! query to a reserve price, and the platform's loss is the negated auction
//! revenue. Click-through rates are absorbed into the bid prices, so
//! ranking is by bid alone.
//!
//! Revenue of reserve `r` against the sorted top bids `b1 >= b2 >= b3`
//! (missing bids are zero) and click vector `(c1, c2)`:
//!
//! ```text
//! r > b1        -> 0                       (no ad clears the reserve)
//! b2 <= r <= b1 -> r*c1                    (one slot shown)
//! b3 <= r <  b2 -> b2*c1 + r*c2            (two shown, slot 2 pays reserve)
//! r  <  b3      -> b2*c1 + b3*c2           (two shown, slot 2 pays 3rd bid)
//! ```
//!
//! The branch intervals are half open from below with the topmost closed,
//! so exactly one branch fires for every `r`; the values of the two branches
//! meeting at `r = b3` coincide there. Equivalently: slot 1 is shown when
//! `b1 >= r`, slot 2 when `b2 > r`, and a shown slot pays
//! `max(next bid, r)` per click.
//!
//! The signal encodes `(ads shown, clicks on shown ads)` over
//! `{0,1,2} x {0,1,2}`; clicks on slots that were not shown are masked.
//! All nine labels exist (`s0c0` .. `s2c2`) in that fixed order; masking
//! guarantees the emitted pair is always feasible.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mechanism::{Environment, Mechanism, MechanismSpace};
use crate::model::BehaviorModel;
use crate::spaces::{
    BehaviorSpace, Query, SignalSpace, UserDistribution, UserSample, SLOTS,
};
use crate::task_rng;

/// Number of distinct signal labels: shown count in {0,1,2} times click
/// count in {0,1,2}.
pub const N_SIGNALS: usize = 9;

/// A joint bid profile: one bid per advertiser plus the derived top three
/// (padded with zeros when there are fewer than three advertisers).
#[derive(Debug, Clone, PartialEq)]
pub struct BidProfile {
    pub bids: Vec<f64>,
    pub top3: [f64; 3],
}

impl BidProfile {
    pub fn new(bids: Vec<f64>) -> Result<Self> {
        if bids.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::InvalidInput("bids must be finite and non-negative".into()));
        }
        let mut sorted = bids.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut top3 = [0.0; 3];
        for (slot, b) in sorted.iter().take(3).enumerate() {
            top3[slot] = *b;
        }
        Ok(Self { bids, top3 })
    }
}

/// Revenue of one auction round.
pub fn gsp_revenue(reserve: f64, profile: &BidProfile, clicks: [bool; SLOTS]) -> Result<f64> {
    if !(reserve >= 0.0) {
        return Err(Error::InvalidInput(format!("reserve must be non-negative, got {reserve}")));
    }
    let [b1, b2, b3] = profile.top3;
    let c1 = f64::from(u8::from(clicks[0]));
    let c2 = f64::from(u8::from(clicks[1]));
    let rev = if reserve > b1 {
        0.0
    } else if reserve >= b2 {
        reserve * c1
    } else if reserve >= b3 {
        b2 * c1 + reserve * c2
    } else {
        b2 * c1 + b3 * c2
    };
    Ok(rev)
}

/// How many of the two slots are shown at this reserve.
pub fn shown_count(reserve: f64, profile: &BidProfile) -> usize {
    let [b1, b2, _] = profile.top3;
    if reserve > b1 {
        0
    } else if reserve >= b2 {
        1
    } else {
        2
    }
}

/// Signal index for `(shown, clicks on shown slots)`; clicks on slots that
/// were not shown never count.
pub fn gsp_signal_index(reserve: f64, profile: &BidProfile, clicks: [bool; SLOTS]) -> usize {
    let shown = shown_count(reserve, profile);
    let clicked = clicks.iter().take(shown).filter(|&&c| c).count();
    shown * 3 + clicked
}

/// Specification of one query in the auction configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    pub name: String,
    pub prob: f64,
    pub click_probs: [f64; SLOTS],
}

/// Static configuration of the auction environment.
#[derive(Debug, Clone, PartialEq)]
pub struct GspConfig {
    pub advertisers: usize,
    pub bid_levels: Vec<f64>,
    /// Reserve grid per query; the mechanism space is the cartesian product.
    pub reserve_levels: Vec<f64>,
    pub queries: Vec<QuerySpec>,
}

/// The GSP environment: derived spaces plus the per-behavior bid profiles.
///
/// Behavior labels enumerate advertiser bid tuples in lexicographic order
/// with the first advertiser slowest; the label joins the bid values with
/// `|`. Signal labels are `s<shown>c<clicks>` ordered by
/// `shown * 3 + clicks`. Mechanism parameters are reserves in query order
/// and the mechanism distance is the maximum per-query reserve difference.
#[derive(Debug, Clone)]
pub struct GspEnv {
    behaviors: BehaviorSpace,
    signals: SignalSpace,
    users: UserDistribution,
    profiles: Vec<BidProfile>,
    reserve_levels: Vec<f64>,
    max_bid: f64,
}

impl GspEnv {
    pub fn new(cfg: &GspConfig) -> Result<Self> {
        if cfg.advertisers == 0 {
            return Err(Error::InvalidInput("need at least one advertiser".into()));
        }
        if cfg.bid_levels.is_empty() {
            return Err(Error::InvalidInput("bid grid must be non-empty".into()));
        }
        if cfg.bid_levels.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::InvalidInput("bid levels must be finite and non-negative".into()));
        }
        let max_bid = cfg.bid_levels.iter().cloned().fold(0.0, f64::max);
        if max_bid <= 0.0 {
            return Err(Error::InvalidInput("maximum bid must be positive".into()));
        }
        if cfg.reserve_levels.is_empty() {
            return Err(Error::InvalidInput("reserve grid must be non-empty".into()));
        }
        for &r in &cfg.reserve_levels {
            if !(0.0..=max_bid).contains(&r) {
                return Err(Error::InvalidInput(format!(
                    "reserve level {r} outside [0, {max_bid}]"
                )));
            }
        }

        let n_profiles = cfg.bid_levels.len().pow(cfg.advertisers as u32);
        let mut labels = Vec::with_capacity(n_profiles);
        let mut profiles = Vec::with_capacity(n_profiles);
        for idx in 0..n_profiles {
            let mut rem = idx;
            let mut bids = vec![0.0; cfg.advertisers];
            // first advertiser varies slowest
            for slot in (0..cfg.advertisers).rev() {
                bids[slot] = cfg.bid_levels[rem % cfg.bid_levels.len()];
                rem /= cfg.bid_levels.len();
            }
            let label = bids
                .iter()
                .map(|b| format!("{b}"))
                .collect::<Vec<_>>()
                .join("|");
            labels.push(label);
            profiles.push(BidProfile::new(bids)?);
        }
        let behaviors = BehaviorSpace::with_default_embedding(labels)?;

        let signal_labels =
            (0..N_SIGNALS).map(|i| format!("s{}c{}", i / 3, i % 3)).collect();
        let signals = SignalSpace::with_default_embedding(signal_labels)?;

        let users = UserDistribution::new(
            cfg.queries
                .iter()
                .map(|q| Query {
                    name: q.name.clone(),
                    prob: q.prob,
                    click_probs: q.click_probs,
                })
                .collect(),
        )?;

        Ok(Self {
            behaviors,
            signals,
            users,
            profiles,
            reserve_levels: cfg.reserve_levels.clone(),
            max_bid,
        })
    }

    pub fn behavior_space(&self) -> &BehaviorSpace {
        &self.behaviors
    }

    pub fn signal_space(&self) -> &SignalSpace {
        &self.signals
    }

    pub fn users(&self) -> &UserDistribution {
        &self.users
    }

    pub fn n_behaviors(&self) -> usize {
        self.profiles.len()
    }

    pub fn max_bid(&self) -> f64 {
        self.max_bid
    }

    pub fn bid_profile(&self, b: usize) -> &BidProfile {
        &self.profiles[b]
    }

    /// Reserve of mechanism `a` for a query, checked against the domain.
    pub fn reserve(&self, a: &Mechanism, query: usize) -> Result<f64> {
        a.params().get(query).copied().ok_or_else(|| {
            Error::InvalidInput(format!(
                "mechanism {} has no reserve for query {query}",
                a.key()
            ))
        })
    }

    /// Builds a reserve mechanism, validating domain and range.
    pub fn reserve_mechanism(&self, reserves: &[f64]) -> Result<Mechanism> {
        if reserves.len() != self.users.n_queries() {
            return Err(Error::InvalidInput(format!(
                "need one reserve per query ({}), got {}",
                self.users.n_queries(),
                reserves.len()
            )));
        }
        for &r in reserves {
            if !(0.0..=self.max_bid).contains(&r) {
                return Err(Error::InvalidInput(format!(
                    "reserve {r} outside [0, {}]",
                    self.max_bid
                )));
            }
        }
        Mechanism::new(reserves.to_vec())
    }

    /// The full mechanism space: the cartesian product of the reserve grid
    /// over queries, enumerated with the first query slowest.
    pub fn reserve_space(&self) -> MechanismSpace {
        let q = self.users.n_queries();
        let g = self.reserve_levels.len();
        let mut members = Vec::with_capacity(g.pow(q as u32));
        for idx in 0..g.pow(q as u32) {
            let mut rem = idx;
            let mut reserves = vec![0.0; q];
            for slot in (0..q).rev() {
                reserves[slot] = self.reserve_levels[rem % g];
                rem /= g;
            }
            members.push(Mechanism::new(reserves).expect("grid reserves are finite"));
        }
        MechanismSpace::new(members)
    }

    /// Signals that the encoder can emit at all (clicks never exceed shown).
    pub fn structurally_feasible_signals(&self) -> Vec<bool> {
        (0..N_SIGNALS).map(|i| i % 3 <= i / 3).collect()
    }

    /// `(b, h)` pairs with positive probability under mechanism `a`:
    /// rows outside this set are never observed in training data collected
    /// under `a`.
    pub fn reachable_rows(&self, a: &Mechanism) -> Result<Vec<Vec<bool>>> {
        let mut reach = vec![vec![false; N_SIGNALS]; self.profiles.len()];
        let support = self.users.support();
        for (b, row) in reach.iter_mut().enumerate() {
            for (u, p) in &support {
                if *p > 0.0 {
                    let r = self.reserve(a, u.query)?;
                    row[gsp_signal_index(r, &self.profiles[b], u.clicks)] = true;
                }
            }
        }
        Ok(reach)
    }
}

impl Environment for GspEnv {
    fn signal(&self, a: &Mechanism, b: usize, u: &UserSample) -> usize {
        let r = a.params()[u.query];
        gsp_signal_index(r, &self.profiles[b], u.clicks)
    }

    fn loss(&self, a: &Mechanism, b: usize, u: &UserSample) -> f64 {
        let r = a.params()[u.query];
        -gsp_revenue(r, &self.profiles[b], u.clicks).expect("grid reserves are non-negative")
    }

    fn loss_bound(&self) -> f64 {
        2.0 * self.max_bid
    }

    fn mechanism_distance(&self, a: &Mechanism, b: &Mechanism) -> f64 {
        a.params()
            .iter()
            .zip(b.params().iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

fn random_positive_row<R: Rng + ?Sized>(n: usize, floor: f64, rng: &mut R) -> Vec<f64> {
    let free = 1.0 - floor * n as f64;
    let mut weights: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w = floor + free * (*w / total));
    weights
}

/// Random ground-truth model: one row-stochastic matrix per signal with
/// every entry at least `floor`, which forces uniform ergodicity with a
/// one-step certificate. Deterministic under the seed.
pub fn make_true_model(
    n_behaviors: usize,
    n_signals: usize,
    floor: f64,
    seed: u64,
) -> Result<BehaviorModel> {
    if floor <= 0.0 || floor * n_behaviors as f64 > 1.0 {
        return Err(Error::InvalidInput(format!(
            "positivity floor {floor} must be in (0, 1/{n_behaviors}]"
        )));
    }
    let mut rng = task_rng(seed, 0);
    let matrices = (0..n_signals)
        .map(|_| {
            (0..n_behaviors)
                .map(|_| random_positive_row(n_behaviors, floor, &mut rng))
                .collect()
        })
        .collect();
    BehaviorModel::new(matrices)
}

/// Random ground truth whose transitions ignore the signal: every signal
/// shares one matrix, so the induced chain (and its stationary
/// distribution) is the same under every mechanism.
pub fn make_signal_independent_model(
    n_behaviors: usize,
    n_signals: usize,
    floor: f64,
    seed: u64,
) -> Result<BehaviorModel> {
    if floor <= 0.0 || floor * n_behaviors as f64 > 1.0 {
        return Err(Error::InvalidInput(format!(
            "positivity floor {floor} must be in (0, 1/{n_behaviors}]"
        )));
    }
    let mut rng = task_rng(seed, 0);
    let shared: Vec<Vec<f64>> = (0..n_behaviors)
        .map(|_| random_positive_row(n_behaviors, floor, &mut rng))
        .collect();
    BehaviorModel::new(vec![shared; n_signals])
}

/// Random ground truth aligned with a data-collection mechanism: rows that
/// can never be visited under `a0` (the signal has zero probability from
/// that behavior) are fixed to uniform. Such rows are unidentifiable from
/// training data, and fixing them to the estimator's uniform fallback makes
/// truth and estimate agree exactly where no data can ever exist, while
/// leaving the dynamics under every mechanism unchanged on visited rows.
pub fn make_aligned_true_model(
    env: &GspEnv,
    a0: &Mechanism,
    floor: f64,
    seed: u64,
) -> Result<BehaviorModel> {
    let n = env.n_behaviors();
    if floor <= 0.0 || floor * n as f64 > 1.0 {
        return Err(Error::InvalidInput(format!(
            "positivity floor {floor} must be in (0, 1/{n}]"
        )));
    }
    let reach = env.reachable_rows(a0)?;
    let mut rng = task_rng(seed, 0);
    let uniform = vec![1.0 / n as f64; n];
    let mut matrices = vec![vec![Vec::new(); n]; N_SIGNALS];
    // draw in (h, b) order so the layout is stable under the seed
    for (h, mat) in matrices.iter_mut().enumerate() {
        for (b, row) in mat.iter_mut().enumerate() {
            *row = if reach[b][h] {
                random_positive_row(n, floor, &mut rng)
            } else {
                uniform.clone()
            };
        }
    }
    BehaviorModel::new(matrices)
}
