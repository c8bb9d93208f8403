//! Finite discrete distributions and the information-theoretic primitives
//! used throughout the engine.
//!
//! A [`FiniteDistribution`] is an explicit table of `(value, probability)`
//! pairs. Entries are kept sorted by value and duplicate values are merged
//! at construction, so two equal distributions always compare and serialize
//! identically. All information quantities are in nats.

use std::fmt;

use ordered_float::OrderedFloat;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::gamma::ln_gamma;

use crate::error::DistError;

/// Tolerance on the total mass of a distribution.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A probability table over a finite, totally ordered set of values.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution<K> {
    entries: Vec<(K, f64)>,
}

impl<K: Ord + Clone> FiniteDistribution<K> {
    /// Builds a distribution from explicit probabilities.
    ///
    /// Duplicate values are merged by summing their probability. The total
    /// must be within [`MASS_TOLERANCE`] of one.
    pub fn new(entries: impl IntoIterator<Item = (K, f64)>) -> Result<Self, DistError> {
        let entries = merge_sorted(entries)?;
        let total: f64 = entries.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(DistError::NotNormalized(total));
        }
        Ok(Self { entries })
    }

    /// All mass on a single value.
    pub fn point(value: K) -> Self {
        Self {
            entries: vec![(value, 1.0)],
        }
    }

    /// Equal mass on every (distinct) value.
    pub fn uniform(values: impl IntoIterator<Item = K>) -> Result<Self, DistError> {
        normalize(values.into_iter().map(|v| (v, 1.0)))
    }

    /// Probability of `value`; zero when it is outside the support.
    pub fn prob(&self, value: &K) -> f64 {
        match self.entries.binary_search_by(|(k, _)| k.cmp(value)) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn entries(&self) -> &[(K, f64)] {
        &self.entries
    }

    pub fn support(&self) -> impl Iterator<Item = &K> {
        self.entries.iter().map(|(k, _)| k)
    }

    pub fn probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, p)| *p)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.probs().sum()
    }

    /// Pushes the distribution through `f`, merging values that collide.
    pub fn map<K2: Ord + Clone>(&self, mut f: impl FnMut(&K) -> K2) -> FiniteDistribution<K2> {
        let entries = merge_sorted(self.entries.iter().map(|(k, p)| (f(k), *p)))
            .expect("probabilities of a valid distribution are nonnegative");
        FiniteDistribution { entries }
    }

    /// Largest absolute probability difference over the union of supports.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mine = self.entries.iter().map(|(k, p)| (p - other.prob(k)).abs());
        let theirs = other.entries.iter().map(|(k, p)| (p - self.prob(k)).abs());
        mine.chain(theirs).fold(0.0, f64::max)
    }
}

fn merge_sorted<K: Ord>(entries: impl IntoIterator<Item = (K, f64)>) -> Result<Vec<(K, f64)>, DistError> {
    let mut entries: Vec<(K, f64)> = entries.into_iter().collect();
    if let Some(&(_, w)) = entries.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
        return Err(DistError::InvalidWeight(w));
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let mut merged: Vec<(K, f64)> = Vec::with_capacity(entries.len());
    for (k, w) in entries {
        match merged.last_mut() {
            Some((last, acc)) if *last == k => *acc += w,
            _ => merged.push((k, w)),
        }
    }
    Ok(merged)
}

/// Normalizes nonnegative weights into a distribution.
///
/// Zero-weight values stay in the support with probability zero.
pub fn normalize<K: Ord + Clone>(
    weights: impl IntoIterator<Item = (K, f64)>,
) -> Result<FiniteDistribution<K>, DistError> {
    let mut entries = merge_sorted(weights)?;
    let total: f64 = entries.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(DistError::AllZeroWeights);
    }
    for (_, w) in &mut entries {
        *w /= total;
    }
    Ok(FiniteDistribution { entries })
}

/// Kullback-Leibler divergence `D(p || q)` in nats.
///
/// Terms with `p(v) = 0` contribute nothing. Fails when `p` puts mass on a
/// value `q` rules out.
pub fn kl_divergence<K: Ord + Clone>(p: &FiniteDistribution<K>, q: &FiniteDistribution<K>) -> Result<f64, DistError> {
    let mut total = 0.0;
    for (value, pv) in p.entries() {
        if *pv == 0.0 {
            continue;
        }
        let qv = q.prob(value);
        if qv == 0.0 {
            return Err(DistError::SupportMismatch { p: *pv });
        }
        total += pv * (pv / qv).ln();
    }
    Ok(total.max(0.0))
}

/// KL divergence between two probability vectors over the same index set.
///
/// Used on hot paths where the support is implicit.
pub(crate) fn kl_dense(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (pv, qv) in p.iter().zip(q) {
        if *pv > 0.0 {
            total += pv * (pv / qv).ln();
        }
    }
    total.max(0.0)
}

/// Values that can be averaged by [`expectation`].
pub trait RealValued {
    fn real(&self) -> f64;
}

macro_rules! real_valued_int {
    ($($t:ty),*) => {
        $(impl RealValued for $t {
            fn real(&self) -> f64 {
                *self as f64
            }
        })*
    };
}

real_valued_int!(u8, u16, u32, u64, usize, i32, i64);

impl RealValued for OrderedFloat<f64> {
    fn real(&self) -> f64 {
        self.0
    }
}

/// Mean of a distribution over numbers.
pub fn expectation<K: Ord + Clone + RealValued>(d: &FiniteDistribution<K>) -> f64 {
    d.entries().iter().map(|(v, p)| p * v.real()).sum()
}

/// Largest `n` for which binomial coefficients are computed exactly.
const EXACT_CHOOSE_LIMIT: u64 = 120;

/// `C(n, k)` in integers; exact for `n <= EXACT_CHOOSE_LIMIT`.
fn choose_exact(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |c, i| c * u128::from(n - i) / u128::from(i + 1))
}

/// Natural log of the binomial coefficient `C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    if n <= EXACT_CHOOSE_LIMIT {
        return (choose_exact(n, k) as f64).ln();
    }
    let k = k.min(n - k);
    ln_gamma((n + 1) as f64) - ln_gamma((k + 1) as f64) - ln_gamma((n - k + 1) as f64)
}

/// `C(n,k) p^k (1-p)^(n-k)`.
pub fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
    binomial_pmf_split(n, k, p, 1.0 - p)
}

/// Natural log of the binomial mass, finite wherever the mass is positive.
pub fn ln_binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let term = |count: u64, prob: f64| if count == 0 { 0.0 } else { count as f64 * prob.ln() };
    ln_choose(n, k) + term(k, p) + term(n - k, 1.0 - p)
}

/// Binomial mass with the success and failure probabilities supplied
/// separately, so that `(k, p, q)` and `(n - k, q, p)` evaluate to the same
/// bits.
pub(crate) fn binomial_pmf_split(n: u64, k: u64, p: f64, q: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if n <= EXACT_CHOOSE_LIMIT {
        let (ki, fi) = (k as i32, (n - k) as i32);
        return choose_exact(n, k) as f64 * (p.powi(ki) * q.powi(fi));
    }
    let successes = if k == 0 { 0.0 } else { k as f64 * p.ln() };
    let failures = if k == n { 0.0 } else { (n - k) as f64 * q.ln() };
    if successes == f64::NEG_INFINITY || failures == f64::NEG_INFINITY {
        return 0.0;
    }
    (ln_choose(n, k) + (successes + failures)).exp()
}

/// Shape parameters of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    alpha: f64,
    beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, DistError> {
        if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
            return Err(DistError::InvalidBeta { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }

    /// Beta(1, 1), the uniform prior on the unit interval.
    pub fn uniform() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Probability that the next Bernoulli trial succeeds after conjugate
/// updating of `prior` on the observed counts.
pub fn beta_posterior_predictive(prior: BetaParams, successes: u64, failures: u64) -> f64 {
    (prior.alpha + successes as f64) / (prior.alpha + prior.beta + (successes + failures) as f64)
}

#[derive(Serialize, Deserialize)]
struct Wire<K> {
    support: Vec<K>,
    probs: Vec<f64>,
}

impl<K: Serialize + Clone> Serialize for FiniteDistribution<K> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        Wire {
            support: self.entries.iter().map(|(k, _)| k.clone()).collect(),
            probs: self.entries.iter().map(|(_, p)| *p).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de, K: Deserialize<'de> + Ord + Clone> Deserialize<'de> for FiniteDistribution<K> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = Wire::<K>::deserialize(deserializer)?;
        if wire.support.len() != wire.probs.len() {
            return Err(D::Error::custom("support and probs differ in length"));
        }
        FiniteDistribution::new(wire.support.into_iter().zip(wire.probs)).map_err(D::Error::custom)
    }
}

impl<K: fmt::Display> fmt::Display for FiniteDistribution<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (k, p)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}: {p:.6}")?;
        }
        write!(f, "}}")
    }
}
