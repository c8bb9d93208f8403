//! Category learning over four binary stimulus dimensions.
//!
//! A training structure assigns five objects to category A and four to B.
//! Admissible structures are linearly separable and have modal objects
//! `1111` (A) and `0000` (B). The exemplar model categorizes a probe by its
//! summed similarity to every stored exemplar; the prototype model by its
//! similarity to each category's modal object. Both predict the test phase,
//! in which every one of the 16 objects is labelled.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::design::{assign_ranks, eig_itemwise, DesignReport, OutcomePrior};
use crate::error::OedError;
use crate::model::{Experiment, ItemResponses, ModelSpace, NamedModel, VectorModel};

pub const DIMENSIONS: usize = 4;
pub const OBJECT_COUNT: usize = 1 << DIMENSIONS;
pub const A_SIZE: usize = 5;
pub const B_SIZE: usize = 4;

/// Names accepted by [`category_model`].
pub const MODEL_NAMES: [&str; 2] = ["exemplar", "prototype"];

/// Default per-dimension mismatch similarity.
pub const DEFAULT_SIMILARITY: f64 = 0.3;

/// Per-dimension grid used when similarity parameters are marginalized.
pub const SIMILARITY_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Largest weight magnitude tried by the integer separability search.
pub const MAX_INTEGER_WEIGHT: i32 = 16;

const BUNDLED_MS54: &str = include_str!("../data/ms54.json");

/// A stimulus; bit `3 - d` holds dimension `d` (color, shape, size, count),
/// so the rendered string reads left to right in dimension order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StimulusObject(u8);

impl StimulusObject {
    pub fn new(index: u8) -> Option<Self> {
        (usize::from(index) < OBJECT_COUNT).then_some(Self(index))
    }

    pub fn from_features(features: [bool; DIMENSIONS]) -> Self {
        Self(features.iter().fold(0, |acc, &f| acc << 1 | u8::from(f)))
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn feature(self, dim: usize) -> bool {
        self.0 >> (DIMENSIONS - 1 - dim) & 1 == 1
    }

    pub fn features(self) -> [bool; DIMENSIONS] {
        std::array::from_fn(|d| self.feature(d))
    }

    pub fn complement(self) -> Self {
        Self(!self.0 & 0x0f)
    }

    /// Reorders dimensions: dimension `d` of the result is dimension
    /// `perm[d]` of `self`.
    pub fn permute(self, perm: &[usize; DIMENSIONS]) -> Self {
        Self::from_features(std::array::from_fn(|d| self.feature(perm[d])))
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..OBJECT_COUNT as u8).map(Self)
    }
}

impl fmt::Display for StimulusObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.features()
            .iter()
            .try_for_each(|&b| f.write_str(if b { "1" } else { "0" }))
    }
}

impl FromStr for StimulusObject {
    type Err = StructureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits: Vec<bool> = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(StructureError::Parse(format!("invalid object `{s}`"))),
            })
            .collect::<Result<_, _>>()?;
        let bits: [bool; DIMENSIONS] = bits
            .try_into()
            .map_err(|_| StructureError::Parse(format!("object `{s}` must have {DIMENSIONS} bits")))?;
        Ok(Self::from_features(bits))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StructureError {
    #[error("training sets must have {A_SIZE} A and {B_SIZE} B objects, got {a} and {b}")]
    WrongSize { a: usize, b: usize },
    #[error("object {0} appears more than once")]
    Overlap(StimulusObject),
    #[error("value 1 is not the majority of category A on dimension {0}")]
    ModalA(usize),
    #[error("value 0 is not a mode of category B on dimension {0}")]
    ModalB(usize),
    #[error("training sets are not linearly separable")]
    NotSeparable,
    #[error("{0}")]
    Parse(String),
    #[error("bundled structure is invalid: {0}")]
    InvalidBundledStructure(String),
}

/// A 5-4 training assignment. Objects are stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CategoryStructure {
    train_a: Vec<StimulusObject>,
    train_b: Vec<StimulusObject>,
}

impl CategoryStructure {
    /// Builds and validates a structure.
    pub fn new(train_a: Vec<StimulusObject>, train_b: Vec<StimulusObject>) -> Result<Self, StructureError> {
        let s = Self::unchecked(train_a, train_b);
        s.validate()?;
        Ok(s)
    }

    fn unchecked(mut train_a: Vec<StimulusObject>, mut train_b: Vec<StimulusObject>) -> Self {
        train_a.sort();
        train_b.sort();
        Self { train_a, train_b }
    }

    pub fn train_a(&self) -> &[StimulusObject] {
        &self.train_a
    }

    pub fn train_b(&self) -> &[StimulusObject] {
        &self.train_b
    }

    /// Checks size, disjointness, modal objects and separability.
    pub fn validate(&self) -> Result<(), StructureError> {
        if self.train_a.len() != A_SIZE || self.train_b.len() != B_SIZE {
            return Err(StructureError::WrongSize {
                a: self.train_a.len(),
                b: self.train_b.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for o in self.train_a.iter().chain(&self.train_b) {
            if !seen.insert(*o) {
                return Err(StructureError::Overlap(*o));
            }
        }
        check_modal(&self.train_a, &self.train_b)?;
        if !is_linearly_separable(&self.train_a, &self.train_b) {
            return Err(StructureError::NotSeparable);
        }
        Ok(())
    }

    /// Lexicographically smallest member of this structure's orbit under
    /// dimension permutations.
    pub fn canonical(&self) -> Self {
        dimension_permutations()
            .iter()
            .map(|perm| self.permuted(perm))
            .min()
            .expect("permutation group is nonempty")
    }

    pub fn permuted(&self, perm: &[usize; DIMENSIONS]) -> Self {
        Self::unchecked(
            self.train_a.iter().map(|o| o.permute(perm)).collect(),
            self.train_b.iter().map(|o| o.permute(perm)).collect(),
        )
    }

    /// Loads `{"trainA": [...], "trainB": [...]}` and validates it.
    pub fn from_json(json: &str) -> Result<Self, StructureError> {
        let s: Self = serde_json::from_str(json).map_err(|e| StructureError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }
}

fn check_modal(train_a: &[StimulusObject], train_b: &[StimulusObject]) -> Result<(), StructureError> {
    for d in 0..DIMENSIONS {
        let ones_a = train_a.iter().filter(|o| o.feature(d)).count();
        if 2 * ones_a <= train_a.len() {
            return Err(StructureError::ModalA(d));
        }
        // 0 must be a mode of B; an even split still has 0 as a mode
        let ones_b = train_b.iter().filter(|o| o.feature(d)).count();
        if 2 * ones_b > train_b.len() {
            return Err(StructureError::ModalB(d));
        }
    }
    Ok(())
}

fn join(objs: &[StimulusObject]) -> String {
    objs.iter().map(ToString::to_string).collect::<Vec<_>>().join(".")
}

/// Rendered as `A:0111.1010.1011.1101.1110|B:0000.0001.0110.1100`.
impl fmt::Display for CategoryStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A:{}|B:{}", join(&self.train_a), join(&self.train_b))
    }
}

impl FromStr for CategoryStructure {
    type Err = StructureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || StructureError::Parse(format!("invalid structure key `{s}`"));
        let (a, b) = s.split_once('|').ok_or_else(bad)?;
        let a = a.strip_prefix("A:").ok_or_else(bad)?;
        let b = b.strip_prefix("B:").ok_or_else(bad)?;
        let parse = |part: &str| {
            part.split('.')
                .map(str::parse)
                .collect::<Result<Vec<StimulusObject>, _>>()
        };
        Self::new(parse(a)?, parse(b)?)
    }
}

impl Experiment for CategoryStructure {
    fn key(&self) -> String {
        self.to_string()
    }
}

#[derive(Serialize, Deserialize)]
struct StructureWire {
    #[serde(rename = "trainA")]
    train_a: Vec<String>,
    #[serde(rename = "trainB")]
    train_b: Vec<String>,
}

impl Serialize for CategoryStructure {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        StructureWire {
            train_a: self.train_a.iter().map(ToString::to_string).collect(),
            train_b: self.train_b.iter().map(ToString::to_string).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CategoryStructure {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = StructureWire::deserialize(d)?;
        let parse = |v: &[String]| {
            v.iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<StimulusObject>, _>>()
                .map_err(serde::de::Error::custom)
        };
        Ok(Self::unchecked(parse(&wire.train_a)?, parse(&wire.train_b)?))
    }
}

/// The 5-4 structure of Medin & Schaffer, loaded from the bundled data file.
pub fn ms54_structure() -> Result<CategoryStructure, StructureError> {
    CategoryStructure::from_json(BUNDLED_MS54).map_err(|e| StructureError::InvalidBundledStructure(e.to_string()))
}

/// All 24 orderings of the four dimensions.
pub fn dimension_permutations() -> &'static [[usize; DIMENSIONS]] {
    static PERMS: OnceLock<Vec<[usize; DIMENSIONS]>> = OnceLock::new();
    PERMS.get_or_init(|| {
        let mut out = Vec::with_capacity(24);
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        let p = [a, b, c, d];
                        if (0..4).all(|i| p.contains(&i)) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out
    })
}

/// Per-dimension mismatch similarities, each in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams([f64; DIMENSIONS]);

impl SimilarityParams {
    pub fn new(s: [f64; DIMENSIONS]) -> Result<Self, OedError> {
        match s.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            Some(bad) => Err(OedError::InvalidProbability(*bad)),
            None => Ok(Self(s)),
        }
    }

    pub fn uniform(s: f64) -> Result<Self, OedError> {
        Self::new([s; DIMENSIONS])
    }

    pub fn values(&self) -> [f64; DIMENSIONS] {
        self.0
    }
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self([DEFAULT_SIMILARITY; DIMENSIONS])
    }
}

/// Product of `s_d` over the dimensions where `a` and `b` differ.
pub fn similarity(a: StimulusObject, b: StimulusObject, params: &SimilarityParams) -> f64 {
    (0..DIMENSIONS)
        .filter(|&d| a.feature(d) != b.feature(d))
        .map(|d| params.0[d])
        .product()
}

fn summed_similarity(probe: StimulusObject, exemplars: &[StimulusObject], params: &SimilarityParams) -> f64 {
    exemplars.iter().map(|&e| similarity(probe, e, params)).sum()
}

/// P(label = A) for each of the 16 objects, by summed similarity to the
/// stored exemplars of each category.
pub fn exemplar_probabilities(structure: &CategoryStructure, params: &SimilarityParams) -> Result<Vec<f64>, OedError> {
    StimulusObject::all()
        .map(|o| {
            let a = summed_similarity(o, &structure.train_a, params);
            let b = summed_similarity(o, &structure.train_b, params);
            if a + b <= 0.0 {
                return Err(OedError::DegenerateEvidence);
            }
            Ok(a / (a + b))
        })
        .collect()
}

/// P(label = A) for each of the 16 objects, by similarity to the modal
/// objects `1111` and `0000`.
pub fn prototype_probabilities(params: &SimilarityParams) -> Vec<f64> {
    let proto_a = StimulusObject::from_features([true; DIMENSIONS]);
    let proto_b = StimulusObject::from_features([false; DIMENSIONS]);
    StimulusObject::all()
        .map(|o| {
            let a = similarity(o, proto_a, params);
            let b = similarity(o, proto_b, params);
            a / (a + b)
        })
        .collect()
}

/// How similarity parameters enter the models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParameterMode {
    /// Fixed parameters; labels are independent across objects.
    Point(SimilarityParams),
    /// Uniform prior over [`SIMILARITY_GRID`] on each dimension, mixed out.
    Marginalized,
}

impl Default for ParameterMode {
    fn default() -> Self {
        Self::Point(SimilarityParams::default())
    }
}

fn grid_params() -> &'static [SimilarityParams] {
    static GRID: OnceLock<Vec<SimilarityParams>> = OnceLock::new();
    GRID.get_or_init(|| {
        let g = SIMILARITY_GRID;
        let mut out = Vec::with_capacity(g.len().pow(DIMENSIONS as u32));
        for a in g {
            for b in g {
                for c in g {
                    for d in g {
                        out.push(SimilarityParams([a, b, c, d]));
                    }
                }
            }
        }
        out
    })
}

fn item_responses(
    mode: ParameterMode,
    probs: impl Fn(&SimilarityParams) -> Result<Vec<f64>, OedError>,
) -> Result<ItemResponses, OedError> {
    match mode {
        ParameterMode::Point(params) => Ok(ItemResponses::Independent(probs(&params)?)),
        ParameterMode::Marginalized => {
            let grid = grid_params();
            let w = 1.0 / grid.len() as f64;
            let components = grid
                .iter()
                .map(|p| Ok((w, probs(p)?)))
                .collect::<Result<_, OedError>>()?;
            Ok(ItemResponses::Mixture(components))
        }
    }
}

pub fn exemplar_model(mode: ParameterMode) -> VectorModel<CategoryStructure> {
    VectorModel::new("exemplar", move |s: &CategoryStructure| {
        item_responses(mode, |p| exemplar_probabilities(s, p))
    })
}

pub fn prototype_model(mode: ParameterMode) -> VectorModel<CategoryStructure> {
    VectorModel::new("prototype", move |_: &CategoryStructure| {
        item_responses(mode, |p| Ok(prototype_probabilities(p)))
    })
}

pub fn category_model(name: &str, mode: ParameterMode) -> Option<VectorModel<CategoryStructure>> {
    match name {
        "exemplar" => Some(exemplar_model(mode)),
        "prototype" => Some(prototype_model(mode)),
        _ => None,
    }
}

/// Builds a space from model names, `None` if a name is unknown.
pub fn category_space(
    names: &[&str],
    prior: Option<&[f64]>,
    mode: ParameterMode,
) -> Option<Result<ModelSpace<VectorModel<CategoryStructure>>, OedError>> {
    let models = names
        .iter()
        .map(|n| category_model(n, mode))
        .collect::<Option<Vec<_>>>()?;
    Some(ModelSpace::new(models, prior))
}

/// Every dichotomy of the 16 objects cut out by a hyperplane, as bitmasks of
/// the positive side, found by integer weight search.
fn threshold_masks() -> &'static [u16] {
    static MASKS: OnceLock<Vec<u16>> = OnceLock::new();
    MASKS.get_or_init(|| {
        let features: Vec<[i32; DIMENSIONS]> = StimulusObject::all().map(|o| o.features().map(i32::from)).collect();
        let mut seen = vec![false; 1 << OBJECT_COUNT];
        let w_range = -MAX_INTEGER_WEIGHT..=MAX_INTEGER_WEIGHT;
        for w0 in w_range.clone() {
            for w1 in w_range.clone() {
                for w2 in w_range.clone() {
                    for w3 in w_range.clone() {
                        let w = [w0, w1, w2, w3];
                        let scores: Vec<i32> = features
                            .iter()
                            .map(|f| f.iter().zip(&w).map(|(x, wi)| x * wi).sum())
                            .collect();
                        for &cut in &scores {
                            let mask = scores
                                .iter()
                                .enumerate()
                                .filter(|(_, s)| **s >= cut)
                                .fold(0u16, |m, (i, _)| m | 1 << i);
                            seen[usize::from(mask)] = true;
                        }
                    }
                }
            }
        }
        (0..=u16::MAX).filter(|m| seen[usize::from(*m)]).collect()
    })
}

fn mask(objs: &[StimulusObject]) -> u16 {
    objs.iter().fold(0, |m, o| m | 1 << o.index())
}

/// Whether some integer weight vector in `[-16, 16]^4` and threshold put
/// every `a` strictly above and every `b` strictly below the hyperplane.
pub fn is_linearly_separable(train_a: &[StimulusObject], train_b: &[StimulusObject]) -> bool {
    let (a, b) = (mask(train_a), mask(train_b));
    threshold_masks().iter().any(|&t| t & a == a && t & b == 0)
}

/// The same decision via linear programming: feasibility of
/// `w.a - c >= 1` for A and `w.b - c <= -1` for B over real `w`, `c`.
pub fn is_linearly_separable_lp(train_a: &[StimulusObject], train_b: &[StimulusObject]) -> bool {
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let w: Vec<_> = (0..DIMENSIONS)
        .map(|_| problem.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let c = problem.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY));
    let row = |o: &StimulusObject| {
        let mut terms: Vec<_> = w
            .iter()
            .zip(o.features())
            .map(|(&v, f)| (v, f64::from(u8::from(f))))
            .collect();
        terms.push((c, -1.0));
        terms
    };
    for o in train_a {
        problem.add_constraint(row(o).as_slice(), ComparisonOp::Ge, 1.0);
    }
    for o in train_b {
        problem.add_constraint(row(o).as_slice(), ComparisonOp::Le, -1.0);
    }
    problem.solve().is_ok()
}

/// All admissible 5-4 structures, one canonical representative per orbit
/// under dimension permutations, in ascending order.
pub fn enumerate_structures() -> Vec<CategoryStructure> {
    let objects: Vec<StimulusObject> = StimulusObject::all().collect();
    let subsets = |pool: &[StimulusObject], k: usize| -> Vec<Vec<StimulusObject>> {
        let mut out = Vec::new();
        let mut stack = Vec::with_capacity(k);
        fn rec(
            pool: &[StimulusObject],
            k: usize,
            start: usize,
            stack: &mut Vec<StimulusObject>,
            out: &mut Vec<Vec<StimulusObject>>,
        ) {
            if stack.len() == k {
                out.push(stack.clone());
                return;
            }
            for i in start..pool.len() {
                stack.push(pool[i]);
                rec(pool, k, i + 1, stack, out);
                stack.pop();
            }
        }
        rec(pool, k, 0, &mut stack, &mut out);
        out
    };
    let a_sets: Vec<_> = subsets(&objects, A_SIZE)
        .into_iter()
        .filter(|a| (0..DIMENSIONS).all(|d| 2 * a.iter().filter(|o| o.feature(d)).count() > A_SIZE))
        .collect();
    let found: BTreeSet<CategoryStructure> = a_sets
        .par_iter()
        .flat_map_iter(|a| {
            let rest: Vec<_> = objects.iter().copied().filter(|o| !a.contains(o)).collect();
            subsets(&rest, B_SIZE)
                .into_iter()
                .filter(|b| check_modal(a, b).is_ok() && is_linearly_separable(a, b))
                .map(|b| CategoryStructure::unchecked(a.clone(), b).canonical())
                .collect::<Vec<_>>()
        })
        .collect();
    found.into_iter().collect()
}

/// Scores every structure; the response is the per-object count of A labels
/// among `n` participants.
pub fn rank_structures(
    space: &ModelSpace<VectorModel<CategoryStructure>>,
    structures: &[CategoryStructure],
    n: u32,
    outcome_prior: OutcomePrior,
) -> Result<Vec<DesignReport<CategoryStructure, ()>>, OedError> {
    if structures.is_empty() {
        return Err(OedError::NoExperiments);
    }
    let mut reports = structures
        .par_iter()
        .map(|s| {
            let eig = structure_eig(space, s, n, outcome_prior)?;
            Ok(DesignReport {
                rank: 1,
                key: s.key(),
                experiment: s.clone(),
                eig,
                per_outcome: None,
            })
        })
        .collect::<Result<Vec<_>, OedError>>()?;
    assign_ranks(&mut reports);
    Ok(reports)
}

/// EIG of one structure for `n` participants.
pub fn structure_eig(
    space: &ModelSpace<VectorModel<CategoryStructure>>,
    structure: &CategoryStructure,
    n: u32,
    outcome_prior: OutcomePrior,
) -> Result<f64, OedError> {
    let items = space
        .models()
        .iter()
        .map(|m| m.items(structure))
        .collect::<Result<Vec<_>, _>>()?;
    eig_itemwise(&items, space.prior_weights(), n, outcome_prior)
}

/// Names of a space's models, for reports.
pub fn model_names<M: NamedModel>(space: &ModelSpace<M>) -> Vec<String> {
    space.names()
}
