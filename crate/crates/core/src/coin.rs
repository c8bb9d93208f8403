//! Sequence prediction: participants see four flips of a coin and predict
//! the fifth. Three accounts of how they predict are provided.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::design::{eig_curve, rank_experiments, DesignReport, OutcomePrior};
use crate::dist::{beta_posterior_predictive, BetaParams, FiniteDistribution};
use crate::error::OedError;
use crate::model::{BinaryResponse, Experiment, GroupExperiment, Model, ModelSpace};

pub const SEQUENCE_LENGTH: usize = 4;

/// Names accepted by [`coin_model`].
pub const MODEL_NAMES: [&str; 3] = ["fair", "bias", "markov"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Flip {
    H,
    T,
}

impl Flip {
    pub fn mirror(self) -> Self {
        match self {
            Flip::H => Flip::T,
            Flip::T => Flip::H,
        }
    }
}

impl BinaryResponse for Flip {
    fn as_success(&self) -> Option<bool> {
        Some(*self == Flip::H)
    }
}

impl fmt::Display for Flip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flip::H => "H",
            Flip::T => "T",
        })
    }
}

impl Serialize for Flip {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Four observed flips, rendered as e.g. `HHTH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoinSequence([Flip; SEQUENCE_LENGTH]);

impl CoinSequence {
    pub fn new(flips: [Flip; SEQUENCE_LENGTH]) -> Self {
        Self(flips)
    }

    pub fn flips(&self) -> &[Flip; SEQUENCE_LENGTH] {
        &self.0
    }

    pub fn heads(&self) -> u64 {
        self.0.iter().filter(|f| **f == Flip::H).count() as u64
    }

    /// Adjacent pairs whose flips differ.
    pub fn transitions(&self) -> u64 {
        self.0.windows(2).filter(|w| w[0] != w[1]).count() as u64
    }

    pub fn last(&self) -> Flip {
        self.0[SEQUENCE_LENGTH - 1]
    }

    pub fn mirror(&self) -> Self {
        Self(self.0.map(Flip::mirror))
    }
}

impl fmt::Display for CoinSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|flip| write!(f, "{flip}"))
    }
}

impl FromStr for CoinSequence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let flips: Vec<Flip> = s
            .chars()
            .map(|c| match c {
                'H' => Ok(Flip::H),
                'T' => Ok(Flip::T),
                other => Err(format!("invalid flip `{other}` in `{s}`")),
            })
            .collect::<Result<_, _>>()?;
        let flips: [Flip; SEQUENCE_LENGTH] = flips
            .try_into()
            .map_err(|_| format!("sequence `{s}` must have exactly {SEQUENCE_LENGTH} flips"))?;
        Ok(Self(flips))
    }
}

impl Serialize for CoinSequence {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CoinSequence {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

impl Experiment for CoinSequence {
    fn key(&self) -> String {
        self.to_string()
    }
}

pub type CoinExperiment = GroupExperiment<CoinSequence>;

/// All 16 sequences, `HHHH` first, leftmost flip most significant.
pub fn all_sequences() -> Vec<CoinSequence> {
    (0..1u8 << SEQUENCE_LENGTH)
        .map(|i| {
            CoinSequence(std::array::from_fn(|j| {
                if i >> (SEQUENCE_LENGTH - 1 - j) & 1 == 0 {
                    Flip::H
                } else {
                    Flip::T
                }
            }))
        })
        .collect()
}

fn heads_tails(p_heads: f64, p_tails: f64) -> FiniteDistribution<Flip> {
    FiniteDistribution::new([(Flip::H, p_heads), (Flip::T, p_tails)]).expect("complementary probabilities")
}

/// People assume the coin is fair.
pub fn fair_coin(_seq: &CoinSequence) -> FiniteDistribution<Flip> {
    heads_tails(0.5, 0.5)
}

/// People learn the coin's weight under a uniform prior and predict with
/// the posterior mean.
pub fn bias_coin(seq: &CoinSequence) -> FiniteDistribution<Flip> {
    let heads = seq.heads();
    let tails = SEQUENCE_LENGTH as u64 - heads;
    let prior = BetaParams::uniform();
    heads_tails(
        beta_posterior_predictive(prior, heads, tails),
        beta_posterior_predictive(prior, tails, heads),
    )
}

/// People learn how often consecutive flips switch (uniform prior over the
/// switch probability, three adjacent pairs as trials) and predict whether
/// the next flip switches away from the last one.
pub fn markov_coin(seq: &CoinSequence) -> FiniteDistribution<Flip> {
    let trials = SEQUENCE_LENGTH as u64 - 1;
    let switches = seq.transitions();
    let prior = BetaParams::uniform();
    let p_switch = beta_posterior_predictive(prior, switches, trials - switches);
    let p_stay = beta_posterior_predictive(prior, trials - switches, switches);
    match seq.last() {
        Flip::H => heads_tails(p_stay, p_switch),
        Flip::T => heads_tails(p_switch, p_stay),
    }
}

/// Looks up a coin model by name.
pub fn coin_model(name: &str) -> Option<Model<CoinSequence, Flip>> {
    let predict: fn(&CoinSequence) -> FiniteDistribution<Flip> = match name {
        "fair" => fair_coin,
        "bias" => bias_coin,
        "markov" => markov_coin,
        _ => return None,
    };
    Some(Model::new(name, move |s: &CoinSequence| Ok(predict(s))))
}

/// Builds a single-participant space from model names.
pub fn coin_space(
    names: &[&str],
    prior: Option<&[f64]>,
) -> Result<ModelSpace<Model<CoinSequence, Flip>>, CoinSpaceError> {
    let models = names
        .iter()
        .map(|n| coin_model(n).ok_or_else(|| CoinSpaceError::UnknownModel(n.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ModelSpace::new(models, prior)?)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoinSpaceError {
    #[error("unknown coin model `{0}` (expected one of fair, bias, markov)")]
    UnknownModel(String),
    #[error(transparent)]
    Oed(#[from] OedError),
}

/// Ranks all 16 sequences for `n` participants with the head-count
/// response space `0..=n`.
pub fn rank_sequences(
    space: &ModelSpace<Model<CoinSequence, Flip>>,
    n: u32,
    outcome_prior: OutcomePrior,
) -> Result<Vec<DesignReport<CoinExperiment, u32>>, OedError> {
    let group = space.groupify();
    let xs = all_sequences()
        .into_iter()
        .map(|s| CoinExperiment::new(n, s))
        .collect::<Result<Vec<_>, _>>()?;
    rank_experiments(&group, &xs, outcome_prior, |x| (0..=x.n).collect())
}

/// EIG against group size for one sequence.
pub fn sequence_curve(
    space: &ModelSpace<Model<CoinSequence, Flip>>,
    seq: &CoinSequence,
    n_range: &[u32],
    outcome_prior: OutcomePrior,
) -> Result<Vec<(u32, f64)>, OedError> {
    eig_curve(space, seq, n_range, outcome_prior)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> CoinSequence {
        s.parse().unwrap()
    }

    fn p_heads(d: &FiniteDistribution<Flip>) -> f64 {
        d.prob(&Flip::H)
    }

    #[test]
    fn fair_examples() {
        for s in ["HHHH", "HTHT", "TTTT"] {
            assert_eq!(p_heads(&fair_coin(&seq(s))), 0.5);
        }
    }

    #[test]
    fn bias_examples() {
        assert!((p_heads(&bias_coin(&seq("HHHH"))) - 5.0 / 6.0).abs() < 1e-15);
        assert!((p_heads(&bias_coin(&seq("HHTT"))) - 0.5).abs() < 1e-15);
        assert!((p_heads(&bias_coin(&seq("HHHT"))) - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn markov_examples() {
        assert!((p_heads(&markov_coin(&seq("HTHT"))) - 0.8).abs() < 1e-15);
        assert!((p_heads(&markov_coin(&seq("HHHH"))) - 0.8).abs() < 1e-15);
        assert!((p_heads(&markov_coin(&seq("HHTT"))) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn sequences_are_canonical() {
        let all = all_sequences();
        assert_eq!(all.len(), 16);
        assert_eq!(all[0].to_string(), "HHHH");
        assert_eq!(all[1].to_string(), "HHHT");
        assert_eq!(all[15].to_string(), "TTTT");
        let mut dedup = all.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 16);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn parse_rejects_bad_sequences() {
        assert!("HHH".parse::<CoinSequence>().is_err());
        assert!("HHHHH".parse::<CoinSequence>().is_err());
        assert!("HHXH".parse::<CoinSequence>().is_err());
    }

    #[test]
    fn mirror_symmetry_all_models() {
        for name in MODEL_NAMES {
            let m = coin_model(name).unwrap();
            for s in all_sequences() {
                let a = m.predict(&s).unwrap();
                let b = m.predict(&s.mirror()).unwrap();
                assert!((a.prob(&Flip::H) - b.prob(&Flip::T)).abs() < 1e-12, "{name} {s}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn mirrored_sequences_score_equally(
            idx in 0usize..16,
            n in 1u32..=60,
            pair in proptest::sample::subsequence(MODEL_NAMES.to_vec(), 2..=3),
            predictive in proptest::bool::ANY,
        ) {
            let space = coin_space(&pair, None).unwrap();
            let op = if predictive { OutcomePrior::Predictive } else { OutcomePrior::Uniform };
            let s = all_sequences()[idx];
            let r = rank_sequences(&space, n, op).unwrap();
            let eig = |k: String| r.iter().find(|x| x.key == k).unwrap().eig;
            proptest::prop_assert!((eig(s.to_string()) - eig(s.mirror().to_string())).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_depends_only_on_head_count() {
        for a in all_sequences() {
            for b in all_sequences().into_iter().filter(|b| b.heads() == a.heads()) {
                assert_eq!(bias_coin(&a), bias_coin(&b));
            }
        }
    }

    #[test]
    fn markov_depends_only_on_transitions_and_last() {
        for a in all_sequences() {
            for b in all_sequences() {
                if a.transitions() == b.transitions() && a.last() == b.last() {
                    assert_eq!(markov_coin(&a), markov_coin(&b));
                }
            }
        }
    }

    #[test]
    fn predictions_are_proper() {
        for name in MODEL_NAMES {
            let m = coin_model(name).unwrap();
            for s in all_sequences() {
                assert!((m.predict(&s).unwrap().total_mass() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unknown_model_name() {
        assert!(matches!(
            coin_space(&["fair", "lucky"], None),
            Err(CoinSpaceError::UnknownModel(_))
        ));
    }
}
