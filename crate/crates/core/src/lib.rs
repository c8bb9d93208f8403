//! Optimal experimental design for discriminating cognitive models.
//!
//! Models map an experiment to a distribution over responses. A
//! [`ModelSpace`] holds competing models with prior weights, and the design
//! engine scores experiments by expected information gain about which model
//! generated the data. Two suites are included: predicting the next flip of
//! a coin ([`coin`]) and learning two categories of binary stimuli
//! ([`category`]).

pub mod category;
pub mod coin;
pub mod design;
pub mod dist;
pub mod error;
pub mod model;

pub use category::{CategoryStructure, ParameterMode, SimilarityParams, StimulusObject, StructureError};
pub use coin::{CoinExperiment, CoinSequence, Flip};
pub use design::{DesignReport, OutcomeContribution, OutcomePrior};
pub use dist::{BetaParams, FiniteDistribution};
pub use error::{DistError, OedError};
pub use model::{
    BinaryResponse, Experiment, GroupExperiment, ItemResponses, Model, ModelSpace, NamedModel, VectorModel,
};
