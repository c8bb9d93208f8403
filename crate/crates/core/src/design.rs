//! The experiment-design engine.
//!
//! For an experiment `x` the expected information gain is
//!
//! ```text
//! EIG(x) = sum_y p(y; x) * KL( P(M | x, y) || P(M) )
//! ```
//!
//! where the outcome prior `p(y; x)` is either uniform over the declared
//! response space or the model-averaged predictive distribution. Every
//! experiment is scored exhaustively and the ranking is a deterministic sort.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{binomial_pmf_split, kl_dense, kl_divergence, normalize, FiniteDistribution};
use crate::error::OedError;
use crate::model::{
    product_masses, BinaryResponse, Experiment, GroupExperiment, ItemResponses, Model, ModelSpace, NamedModel,
};

/// Reports whose EIG differ by at most this much (relative to max(1, eig))
/// are treated as tied and ordered by experiment key.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Log-likelihood-ratio values closer than this are merged in the
/// factorized path.
pub const LLR_QUANTUM: f64 = 1e-9;

/// Atom budget for the factorized path. Single-participant designs over up
/// to 16 binary items never exceed it and stay exact; beyond it atoms are
/// pooled into equal-width log-likelihood-ratio bins.
pub const MAX_ATOMS: usize = 1 << 16;

/// Largest item count accepted by the dense enumerator.
pub const MAX_DENSE_ITEMS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomePrior {
    /// Equal weight on every declared response.
    Uniform,
    /// `p(y; x) = sum_m P(m) p_m(y | x)`.
    Predictive,
}

impl fmt::Display for OutcomePrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Predictive => "predictive",
        })
    }
}

impl FromStr for OutcomePrior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "predictive" => Ok(Self::Predictive),
            other => Err(format!(
                "unknown outcome prior `{other}` (expected uniform or predictive)"
            )),
        }
    }
}

/// One response's share of an experiment's EIG.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeContribution<R> {
    pub response: R,
    pub probability: f64,
    pub kl: f64,
    /// Every model assigns this response probability zero.
    pub impossible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignReport<X, R> {
    pub rank: usize,
    pub key: String,
    pub experiment: X,
    pub eig: f64,
    /// Per-response breakdown. Absent for reports produced by the
    /// factorized path, whose response space is too large to list.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_outcome: Option<Vec<OutcomeContribution<R>>>,
}

impl<X, R> DesignReport<X, R> {
    /// Number of responses flagged impossible under every model.
    pub fn impossible_outcomes(&self) -> usize {
        self.per_outcome
            .as_ref()
            .map_or(0, |v| v.iter().filter(|c| c.impossible).count())
    }
}

fn likelihoods<X, R: Ord + Clone>(
    space: &ModelSpace<Model<X, R>>,
    x: &X,
) -> Result<Vec<FiniteDistribution<R>>, OedError> {
    space.models().iter().map(|m| m.predict(x)).collect()
}

fn posterior_from(weights: &[f64], lik: &[f64]) -> Option<(Vec<f64>, f64)> {
    let joint: Vec<f64> = weights.iter().zip(lik).map(|(w, l)| w * l).collect();
    let z: f64 = joint.iter().sum();
    if z <= 0.0 {
        return None;
    }
    Some((joint.into_iter().map(|j| j / z).collect(), z))
}

/// `P(m | x, y)`, proportional to `P(m) p_m(y | x)`.
pub fn model_posterior<X, R: Ord + Clone>(
    space: &ModelSpace<Model<X, R>>,
    x: &X,
    y: &R,
) -> Result<FiniteDistribution<String>, OedError> {
    let preds = likelihoods(space, x)?;
    let weights = space
        .names()
        .into_iter()
        .zip(space.prior_weights())
        .zip(&preds)
        .map(|((name, w), d)| (name, w * d.prob(y)));
    normalize(weights).map_err(|_| OedError::AllZeroLikelihood)
}

/// Posterior model weights from per-model log-likelihoods of an observation.
/// Works in log space so long count vectors do not underflow.
pub fn posterior_from_log_likelihoods(prior: &[f64], log_lik: &[f64]) -> Result<Vec<f64>, OedError> {
    if prior.len() != log_lik.len() {
        return Err(OedError::LengthMismatch(prior.len(), log_lik.len()));
    }
    let joint: Vec<f64> = prior
        .iter()
        .zip(log_lik)
        .map(|(w, l)| if *w > 0.0 { w.ln() + l } else { f64::NEG_INFINITY })
        .collect();
    let top = joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(OedError::AllZeroLikelihood);
    }
    let scaled: Vec<f64> = joint.iter().map(|j| (j - top).exp()).collect();
    let z: f64 = scaled.iter().sum();
    Ok(scaled.into_iter().map(|s| s / z).collect())
}

/// KL of a posterior (dense, same model order) from the prior.
pub fn information_gain(posterior: &[f64], prior: &[f64]) -> f64 {
    kl_dense(posterior, prior)
}

/// KL of the realized posterior from the prior, in nats.
pub fn actual_information_gain<X, R: Ord + Clone>(
    space: &ModelSpace<Model<X, R>>,
    x: &X,
    y: &R,
) -> Result<f64, OedError> {
    let post = model_posterior(space, x, y)?;
    Ok(kl_divergence(&post, space.prior())?)
}

/// Scores one experiment against a finite response space.
///
/// Responses every model rules out contribute zero and are flagged.
pub fn expected_information_gain<X: Experiment, R: Ord + Clone>(
    space: &ModelSpace<Model<X, R>>,
    x: &X,
    outcome_prior: OutcomePrior,
    response_space: &[R],
) -> Result<DesignReport<X, R>, OedError> {
    let responses: BTreeSet<&R> = response_space.iter().collect();
    if responses.is_empty() {
        return Err(OedError::EmptyResponseSpace);
    }
    let preds = likelihoods(space, x)?;
    for (model, d) in space.models().iter().zip(&preds) {
        if d.entries().iter().any(|(r, p)| *p > 0.0 && !responses.contains(r)) {
            return Err(OedError::ResponseOutsideSpace {
                model: model.name().to_string(),
            });
        }
    }
    let weights = space.prior_weights();
    let uniform = 1.0 / responses.len() as f64;
    let mut per_outcome = Vec::with_capacity(responses.len());
    let mut lik = vec![0.0; preds.len()];
    for y in responses {
        for (l, d) in lik.iter_mut().zip(&preds) {
            *l = d.prob(y);
        }
        let contribution = match posterior_from(weights, &lik) {
            Some((post, z)) => OutcomeContribution {
                response: y.clone(),
                probability: match outcome_prior {
                    OutcomePrior::Uniform => uniform,
                    OutcomePrior::Predictive => z,
                },
                kl: kl_dense(&post, weights),
                impossible: false,
            },
            None => OutcomeContribution {
                response: y.clone(),
                probability: match outcome_prior {
                    OutcomePrior::Uniform => uniform,
                    OutcomePrior::Predictive => 0.0,
                },
                kl: 0.0,
                impossible: true,
            },
        };
        per_outcome.push(contribution);
    }
    let eig = per_outcome.iter().map(|c| c.probability * c.kl).sum();
    Ok(DesignReport {
        rank: 1,
        key: x.key(),
        experiment: x.clone(),
        eig,
        per_outcome: Some(per_outcome),
    })
}

/// Sorts reports by EIG (descending) and assigns ranks 1..=len. Near-equal
/// EIG values (see [`TIE_TOLERANCE`]) are ordered by experiment key.
pub fn assign_ranks<X, R>(reports: &mut [DesignReport<X, R>]) {
    reports.sort_by(|a, b| b.eig.total_cmp(&a.eig).then_with(|| a.key.cmp(&b.key)));
    let mut start = 0;
    while start < reports.len() {
        let head = reports[start].eig;
        let tol = TIE_TOLERANCE * head.abs().max(1.0);
        let mut end = start + 1;
        while end < reports.len() && head - reports[end].eig <= tol {
            end += 1;
        }
        reports[start..end].sort_by(|a, b| a.key.cmp(&b.key));
        start = end;
    }
    for (i, r) in reports.iter_mut().enumerate() {
        r.rank = i + 1;
    }
}

/// Scores every experiment and returns the reports ranked, best first.
///
/// Experiments are evaluated in parallel; each EIG is summed in a fixed
/// order, so the output does not depend on scheduling.
pub fn rank_experiments<X, R, F>(
    space: &ModelSpace<Model<X, R>>,
    xs: &[X],
    outcome_prior: OutcomePrior,
    response_space: F,
) -> Result<Vec<DesignReport<X, R>>, OedError>
where
    X: Experiment,
    R: Ord + Clone + Send,
    F: Fn(&X) -> Vec<R> + Sync,
{
    if xs.is_empty() {
        return Err(OedError::NoExperiments);
    }
    let mut reports = xs
        .par_iter()
        .map(|x| expected_information_gain(space, x, outcome_prior, &response_space(x)))
        .collect::<Result<Vec<_>, _>>()?;
    assign_ranks(&mut reports);
    Ok(reports)
}

/// EIG of one per-participant experiment as a function of group size, using
/// the i.i.d. lift and the count response space `0..=n`.
pub fn eig_curve<X, R>(
    space: &ModelSpace<Model<X, R>>,
    inner: &X,
    n_range: &[u32],
    outcome_prior: OutcomePrior,
) -> Result<Vec<(u32, f64)>, OedError>
where
    X: Experiment + 'static,
    R: BinaryResponse + Ord + Clone + 'static,
{
    let group = space.groupify();
    n_range
        .iter()
        .map(|&n| {
            let x = GroupExperiment::new(n, inner.clone())?;
            let report = expected_information_gain(&group, &x, outcome_prior, &(0..=n).collect::<Vec<_>>())?;
            Ok((n, report.eig))
        })
        .collect()
}

/// One item's possible outcomes, each as (probability under model 1,
/// probability under model 2).
pub type ItemOutcomes = Vec<(f64, f64)>;

#[derive(Debug, Clone, Copy)]
struct Atom {
    llr: f64,
    mass1: f64,
    mass2: f64,
    uniform: f64,
}

fn check_probability(p: f64) -> Result<(), OedError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(OedError::InvalidProbability(p))
    }
}

fn two_model_prior(prior: &[f64]) -> Result<[f64; 2], OedError> {
    match prior {
        [a, b] => {
            let d = normalize([(0u8, *a), (1, *b)])?;
            Ok([d.prob(&0), d.prob(&1)])
        }
        other => Err(OedError::UnsupportedModelCount(other.len())),
    }
}

/// Exact two-model EIG for responses that factor into independent items.
///
/// The posterior depends on a response only through the summed
/// log-likelihood ratio, so the response space collapses to the support of
/// that statistic, built one item at a time by convolution. Each support
/// point carries the total mass of its responses under both models, which
/// gives both the outcome weight and the exact posterior.
///
/// When the support outgrows [`MAX_ATOMS`] (many items with many outcomes
/// each, such as per-item counts for large groups) neighbouring support
/// points are pooled and the result becomes a close approximation.
pub fn eig_factorized(items: &[ItemOutcomes], prior: &[f64], outcome_prior: OutcomePrior) -> Result<f64, OedError> {
    eig_factorized_capped(items, prior, outcome_prior, MAX_ATOMS)
}

fn eig_factorized_capped(
    items: &[ItemOutcomes],
    prior: &[f64],
    outcome_prior: OutcomePrior,
    max_atoms: usize,
) -> Result<f64, OedError> {
    let [pi1, pi2] = two_model_prior(prior)?;
    let mut atoms = vec![Atom {
        llr: 0.0,
        mass1: 1.0,
        mass2: 1.0,
        uniform: 1.0,
    }];
    for item in items {
        if item.is_empty() {
            return Err(OedError::EmptyResponseSpace);
        }
        let share = 1.0 / item.len() as f64;
        let mut next = Vec::with_capacity(atoms.len() * item.len());
        for atom in &atoms {
            for &(a, b) in item {
                let llr = atom.llr + (a.ln() - b.ln());
                if llr.is_nan() {
                    // ruled out by both models
                    continue;
                }
                next.push(Atom {
                    llr,
                    mass1: atom.mass1 * a,
                    mass2: atom.mass2 * b,
                    uniform: atom.uniform * share,
                });
            }
        }
        atoms = merge_atoms(next);
        if atoms.len() > max_atoms {
            atoms = pool_atoms(atoms, max_atoms);
        }
    }
    let prior = [pi1, pi2];
    let mut eig = 0.0;
    for atom in &atoms {
        let j1 = pi1 * atom.mass1;
        let j2 = pi2 * atom.mass2;
        let z = j1 + j2;
        if z <= 0.0 {
            continue;
        }
        let weight = match outcome_prior {
            OutcomePrior::Uniform => atom.uniform,
            OutcomePrior::Predictive => z,
        };
        eig += weight * kl_dense(&[j1 / z, j2 / z], &prior);
    }
    Ok(eig)
}

fn merge_atoms(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort_by(|a, b| a.llr.total_cmp(&b.llr));
    let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
    let mut head = f64::NAN;
    for atom in atoms {
        match merged.last_mut() {
            Some(last) if atom.llr == head || (atom.llr - head).abs() <= LLR_QUANTUM => {
                last.mass1 += atom.mass1;
                last.mass2 += atom.mass2;
                last.uniform += atom.uniform;
            }
            _ => {
                head = atom.llr;
                merged.push(atom);
            }
        }
    }
    merged
}

/// Pools sorted atoms into `bins` equal-width bins over the finite LLR
/// range. Infinite LLRs (responses one model rules out) stay separate.
fn pool_atoms(atoms: Vec<Atom>, bins: usize) -> Vec<Atom> {
    let finite = || atoms.iter().filter(|a| a.llr.is_finite()).map(|a| a.llr);
    let lo = finite().fold(f64::INFINITY, f64::min);
    let hi = finite().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let bin_of = |llr: f64| {
        if llr.is_finite() && width > 0.0 {
            Some(((llr - lo) / width).floor().min(bins as f64 - 1.0) as i64)
        } else {
            None
        }
    };
    let mut pooled: Vec<Atom> = Vec::with_capacity(bins + 2);
    let mut current: Option<Option<i64>> = None;
    for atom in atoms {
        let bin = bin_of(atom.llr);
        match pooled.last_mut() {
            Some(last) if current == Some(bin) && (bin.is_some() || last.llr == atom.llr) => {
                last.mass1 += atom.mass1;
                last.mass2 += atom.mass2;
                last.uniform += atom.uniform;
            }
            _ => {
                current = Some(bin);
                pooled.push(atom);
            }
        }
    }
    pooled
}

fn binary_items(p1: &[f64], p2: &[f64], n: u32) -> Result<Vec<ItemOutcomes>, OedError> {
    if p1.len() != p2.len() {
        return Err(OedError::LengthMismatch(p1.len(), p2.len()));
    }
    if n == 0 {
        return Err(OedError::ZeroGroupSize);
    }
    let n = u64::from(n);
    p1.iter()
        .zip(p2)
        .map(|(&a, &b)| {
            check_probability(a)?;
            check_probability(b)?;
            Ok((0..=n)
                .map(|k| {
                    (
                        binomial_pmf_split(n, k, a, 1.0 - a),
                        binomial_pmf_split(n, k, b, 1.0 - b),
                    )
                })
                .collect())
        })
        .collect()
}

/// Two-model EIG over binary label vectors with independent items.
///
/// `prior` holds the two model weights; any other count is rejected so the
/// caller can fall back to [`eig_itemwise_dense`].
pub fn eig_factorized_two_model(
    p1: &[f64],
    p2: &[f64],
    prior: &[f64],
    outcome_prior: OutcomePrior,
) -> Result<f64, OedError> {
    eig_factorized(&binary_items(p1, p2, 1)?, prior, outcome_prior)
}

/// As [`eig_factorized_two_model`] with `n` i.i.d. participants, each item's
/// response being its success count.
pub fn eig_factorized_grouped(
    p1: &[f64],
    p2: &[f64],
    n: u32,
    prior: &[f64],
    outcome_prior: OutcomePrior,
) -> Result<f64, OedError> {
    eig_factorized(&binary_items(p1, p2, n)?, prior, outcome_prior)
}

/// EIG over all 2^K label vectors by direct enumeration, for any number of
/// models and for mixture responses.
pub fn eig_itemwise_dense(
    models: &[ItemResponses],
    prior: &[f64],
    outcome_prior: OutcomePrior,
) -> Result<f64, OedError> {
    if prior.len() != models.len() {
        return Err(OedError::PriorLength {
            expected: models.len(),
            got: prior.len(),
        });
    }
    let k = models.first().map_or(0, ItemResponses::item_count);
    if k > MAX_DENSE_ITEMS {
        return Err(OedError::LengthMismatch(k, MAX_DENSE_ITEMS));
    }
    let pmfs = models
        .iter()
        .map(|m| {
            let components: Vec<(f64, &Vec<f64>)> = match m {
                ItemResponses::Independent(p) => vec![(1.0, p)],
                ItemResponses::Mixture(c) => c.iter().map(|(w, p)| (*w, p)).collect(),
            };
            let mut mass = vec![0.0; 1usize << k];
            for (w, p) in components {
                if p.len() != k {
                    return Err(OedError::LengthMismatch(p.len(), k));
                }
                for &pi in p {
                    check_probability(pi)?;
                }
                for (acc, m) in mass.iter_mut().zip(product_masses(p)) {
                    *acc += w * m;
                }
            }
            Ok(mass)
        })
        .collect::<Result<Vec<_>, OedError>>()?;
    let weights = normalize(prior.iter().copied().enumerate())?;
    let weights: Vec<f64> = weights.probs().collect();
    let uniform = 1.0 / (1usize << k) as f64;
    let mut lik = vec![0.0; pmfs.len()];
    let mut eig = 0.0;
    for y in 0..(1usize << k) {
        for (l, pmf) in lik.iter_mut().zip(&pmfs) {
            *l = pmf[y];
        }
        if let Some((post, z)) = posterior_from(&weights, &lik) {
            let w = match outcome_prior {
                OutcomePrior::Uniform => uniform,
                OutcomePrior::Predictive => z,
            };
            eig += w * kl_dense(&post, &weights);
        }
    }
    Ok(eig)
}

/// EIG for label-vector models on `n` participants, choosing the factorized
/// path when it applies and dense enumeration otherwise.
pub fn eig_itemwise(
    models: &[ItemResponses],
    prior: &[f64],
    n: u32,
    outcome_prior: OutcomePrior,
) -> Result<f64, OedError> {
    match models {
        [ItemResponses::Independent(p1), ItemResponses::Independent(p2)] => {
            eig_factorized_grouped(p1, p2, n, prior, outcome_prior)
        }
        _ if n == 1 => eig_itemwise_dense(models, prior, outcome_prior),
        _ if models.iter().any(|m| matches!(m, ItemResponses::Mixture(_))) => Err(OedError::MixtureGroup(n)),
        _ => Err(OedError::UnsupportedModelCount(models.len())),
    }
}

/// Draws one report with probability proportional to `exp(eig / temperature)`.
pub fn softmax_sample<'a, X, R>(
    reports: &'a [DesignReport<X, R>],
    temperature: f64,
    rng: &mut impl Rng,
) -> Option<&'a DesignReport<X, R>> {
    let max = reports.iter().map(|r| r.eig).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = reports.iter().map(|r| ((r.eig - max) / temperature).exp()).collect();
    let index = WeightedIndex::new(&weights).ok()?;
    reports.get(index.sample(rng))
}
