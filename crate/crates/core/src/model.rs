//! Models as conditional response distributions, model spaces with priors,
//! and the i.i.d. lift from single-participant to group experiments.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::dist::{binomial_pmf_split, normalize, FiniteDistribution};
use crate::error::OedError;

/// A design point. `key` is the canonical serialization used in reports and
/// for deterministic tie-breaking.
pub trait Experiment: Clone + Send + Sync {
    fn key(&self) -> String;
}

pub type Prediction<R> = Result<FiniteDistribution<R>, OedError>;

type PredictFn<X, R> = dyn Fn(&X) -> Prediction<R> + Send + Sync;

/// A named conditional distribution over responses given an experiment.
pub struct Model<X, R> {
    name: String,
    predict: Arc<PredictFn<X, R>>,
}

impl<X, R> Clone for Model<X, R> {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            predict: Arc::clone(&self.predict),
        }
    }
}

impl<X, R> fmt::Debug for Model<X, R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

impl<X, R> Model<X, R> {
    pub fn new(name: impl Into<String>, predict: impl Fn(&X) -> Prediction<R> + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            predict: Arc::new(predict),
        }
    }

    pub fn predict(&self, x: &X) -> Prediction<R> {
        (self.predict)(x)
    }
}

/// Anything that can sit in a [`ModelSpace`].
pub trait NamedModel {
    fn name(&self) -> &str;
}

impl<X, R> NamedModel for Model<X, R> {
    fn name(&self) -> &str {
        &self.name
    }
}

/// Responses with two values, one of which counts as a success.
pub trait BinaryResponse {
    /// `Some(true)` for the success value, `Some(false)` for the failure
    /// value, `None` for anything else.
    fn as_success(&self) -> Option<bool>;
}

impl BinaryResponse for bool {
    fn as_success(&self) -> Option<bool> {
        Some(*self)
    }
}

impl BinaryResponse for u32 {
    fn as_success(&self) -> Option<bool> {
        match self {
            0 => Some(false),
            1 => Some(true),
            _ => None,
        }
    }
}

/// An experiment run on `n` participants who each see `inner`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GroupExperiment<X> {
    pub n: u32,
    pub inner: X,
}

impl<X> GroupExperiment<X> {
    pub fn new(n: u32, inner: X) -> Result<Self, OedError> {
        if n == 0 {
            return Err(OedError::ZeroGroupSize);
        }
        Ok(Self { n, inner })
    }
}

/// The group key is the inner key; `n` is reported separately.
impl<X: Experiment> Experiment for GroupExperiment<X> {
    fn key(&self) -> String {
        self.inner.key()
    }
}

/// Lifts a single-participant binary model to i.i.d. groups. The lifted
/// response is the number of successes, distributed Binomial(n, p).
pub fn groupify<X, R>(single: &Model<X, R>) -> Model<GroupExperiment<X>, u32>
where
    X: 'static,
    R: BinaryResponse + Ord + Clone + 'static,
{
    let inner = single.clone();
    Model::new(single.name.clone(), move |gx: &GroupExperiment<X>| {
        if gx.n == 0 {
            return Err(OedError::ZeroGroupSize);
        }
        let d = inner.predict(&gx.inner)?;
        let (mut success, mut failure) = (0.0, 0.0);
        for (r, p) in d.entries() {
            match r.as_success() {
                Some(true) => success += p,
                Some(false) => failure += p,
                None => {
                    return Err(OedError::NonBinaryResponse {
                        model: inner.name.clone(),
                    })
                }
            }
        }
        let n = u64::from(gx.n);
        Ok(normalize(
            (0..=gx.n).map(|k| (k, binomial_pmf_split(n, u64::from(k), success, failure))),
        )?)
    })
}

/// Per-item success probabilities for a model whose response is a vector of
/// binary labels.
#[derive(Debug, Clone, PartialEq)]
pub enum ItemResponses {
    /// Labels independent across items.
    Independent(Vec<f64>),
    /// A weighted mixture of independent components; labels are dependent
    /// across items once the mixture is marginalized.
    Mixture(Vec<(f64, Vec<f64>)>),
}

impl ItemResponses {
    pub fn item_count(&self) -> usize {
        match self {
            Self::Independent(p) => p.len(),
            Self::Mixture(c) => c.first().map_or(0, |(_, p)| p.len()),
        }
    }

    /// Log-probability of per-item success counts among `n` participants.
    /// Mixtures are only defined for `n = 1`.
    pub fn count_log_likelihood(&self, counts: &[u32], n: u32) -> Result<f64, OedError> {
        if counts.len() != self.item_count() {
            return Err(OedError::ResponseLength {
                expected: self.item_count(),
                got: counts.len(),
            });
        }
        if n == 0 {
            return Err(OedError::ZeroGroupSize);
        }
        if let Some(&count) = counts.iter().find(|c| **c > n) {
            return Err(OedError::CountExceedsGroup { count, n });
        }
        let independent = |p: &[f64]| -> f64 {
            p.iter()
                .zip(counts)
                .map(|(&pk, &c)| binomial_pmf_split(u64::from(n), u64::from(c), pk, 1.0 - pk).ln())
                .sum()
        };
        match self {
            Self::Independent(p) => Ok(independent(p)),
            Self::Mixture(_) if n > 1 => Err(OedError::MixtureGroup(n)),
            Self::Mixture(c) => Ok(c.iter().map(|(w, p)| w * independent(p).exp()).sum::<f64>().ln()),
        }
    }

    /// Full joint distribution over label vectors (`true` = success).
    pub fn joint(&self) -> FiniteDistribution<Vec<bool>> {
        let components: Vec<(f64, &[f64])> = match self {
            Self::Independent(p) => vec![(1.0, p.as_slice())],
            Self::Mixture(c) => c.iter().map(|(w, p)| (*w, p.as_slice())).collect(),
        };
        let k = self.item_count();
        let mut mass = vec![0.0; 1usize << k];
        for (w, p) in components {
            for (i, m) in product_masses(p).into_iter().enumerate() {
                mass[i] += w * m;
            }
        }
        let entries = mass
            .into_iter()
            .enumerate()
            .map(|(i, m)| ((0..k).map(|j| i >> j & 1 == 1).collect::<Vec<_>>(), m));
        normalize(entries).expect("mixture of proper distributions has positive mass")
    }
}

/// Masses of all 2^K label vectors under independent items, indexed so that
/// bit `j` of the index is item `j`'s label.
pub(crate) fn product_masses(p: &[f64]) -> Vec<f64> {
    let mut mass = Vec::with_capacity(1usize << p.len());
    mass.push(1.0);
    for (j, &pj) in p.iter().enumerate() {
        let half = 1usize << j;
        mass.resize(2 * half, 0.0);
        for i in 0..half {
            let m = mass[i];
            mass[i] = m * (1.0 - pj);
            mass[i | half] = m * pj;
        }
    }
    mass
}

type ItemFn<X> = dyn Fn(&X) -> Result<ItemResponses, OedError> + Send + Sync;

/// A model whose single-participant response is a vector of binary labels.
pub struct VectorModel<X> {
    name: String,
    predict: Arc<ItemFn<X>>,
}

impl<X> Clone for VectorModel<X> {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            predict: Arc::clone(&self.predict),
        }
    }
}

impl<X> fmt::Debug for VectorModel<X> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorModel")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

impl<X> NamedModel for VectorModel<X> {
    fn name(&self) -> &str {
        &self.name
    }
}

impl<X: 'static> VectorModel<X> {
    pub fn new(
        name: impl Into<String>,
        predict: impl Fn(&X) -> Result<ItemResponses, OedError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            predict: Arc::new(predict),
        }
    }

    pub fn items(&self, x: &X) -> Result<ItemResponses, OedError> {
        (self.predict)(x)
    }

    /// The same model as a generic distribution over label vectors.
    pub fn to_model(&self) -> Model<X, Vec<bool>> {
        let me = self.clone();
        Model::new(self.name.clone(), move |x: &X| Ok(me.items(x)?.joint()))
    }
}

/// Lifts a vector model to i.i.d. groups: the response is the per-item count
/// of successes, each Binomial(n, p_item) and independent across items.
pub fn groupify_vector<X: 'static>(single: &VectorModel<X>) -> Model<GroupExperiment<X>, Vec<u32>> {
    let inner = single.clone();
    Model::new(single.name.clone(), move |gx: &GroupExperiment<X>| {
        if gx.n == 0 {
            return Err(OedError::ZeroGroupSize);
        }
        let p = match inner.items(&gx.inner)? {
            ItemResponses::Independent(p) => p,
            ItemResponses::Mixture(_) => {
                return Err(OedError::NonFactorizableResponse {
                    model: inner.name.clone(),
                })
            }
        };
        let n = u64::from(gx.n);
        let mut table: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 1.0)];
        for &pi in &p {
            let item: Vec<f64> = (0..=n).map(|k| binomial_pmf_split(n, k, pi, 1.0 - pi)).collect();
            table = table
                .into_iter()
                .flat_map(|(counts, m)| {
                    item.iter().enumerate().map(move |(k, pk)| {
                        let mut c = counts.clone();
                        c.push(k as u32);
                        (c, m * pk)
                    })
                })
                .collect();
        }
        Ok(normalize(table)?)
    })
}

/// A set of uniquely named models with a prior over them.
#[derive(Debug, Clone)]
pub struct ModelSpace<M> {
    models: Vec<M>,
    prior: FiniteDistribution<String>,
    weights: Vec<f64>,
}

impl<M: NamedModel> ModelSpace<M> {
    /// Builds a space; `prior` holds unnormalized weights in model order and
    /// defaults to uniform.
    pub fn new(models: Vec<M>, prior: Option<&[f64]>) -> Result<Self, OedError> {
        if models.len() < 2 {
            return Err(OedError::TooFewModels(models.len()));
        }
        Self::build(models, prior)
    }

    fn build(models: Vec<M>, prior: Option<&[f64]>) -> Result<Self, OedError> {
        let mut seen = BTreeSet::new();
        for m in &models {
            if !seen.insert(m.name().to_string()) {
                return Err(OedError::DuplicateModel(m.name().to_string()));
            }
        }
        let raw: Vec<f64> = match prior {
            Some(w) if w.len() != models.len() => {
                return Err(OedError::PriorLength {
                    expected: models.len(),
                    got: w.len(),
                })
            }
            Some(w) => w.to_vec(),
            None => vec![1.0; models.len()],
        };
        let prior = normalize(models.iter().map(|m| m.name().to_string()).zip(raw.iter().copied()))?;
        let weights = models.iter().map(|m| prior.prob(&m.name().to_string())).collect();
        Ok(Self { models, prior, weights })
    }

    #[cfg(test)]
    pub(crate) fn single_for_tests(model: M) -> Self {
        Self::build(vec![model], None).unwrap()
    }

    pub fn models(&self) -> &[M] {
        &self.models
    }

    pub fn prior(&self) -> &FiniteDistribution<String> {
        &self.prior
    }

    /// Prior probabilities aligned with [`models`](Self::models).
    pub fn prior_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn names(&self) -> Vec<String> {
        self.models.iter().map(|m| m.name().to_string()).collect()
    }

    /// Applies `f` to every model, keeping names and prior.
    pub fn map<N: NamedModel>(&self, f: impl Fn(&M) -> N) -> ModelSpace<N> {
        ModelSpace {
            models: self.models.iter().map(f).collect(),
            prior: self.prior.clone(),
            weights: self.weights.clone(),
        }
    }
}

impl<X: 'static, R: BinaryResponse + Ord + Clone + 'static> ModelSpace<Model<X, R>> {
    pub fn groupify(&self) -> ModelSpace<Model<GroupExperiment<X>, u32>> {
        self.map(groupify)
    }
}

impl<X: 'static> ModelSpace<VectorModel<X>> {
    pub fn groupify_vector(&self) -> ModelSpace<Model<GroupExperiment<X>, Vec<u32>>> {
        self.map(groupify_vector)
    }

    pub fn to_models(&self) -> ModelSpace<Model<X, Vec<bool>>> {
        self.map(VectorModel::to_model)
    }
}
