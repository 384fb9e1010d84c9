//! Discrete-choice modeling toolkit for subscription-service design.
//!
//! The crate estimates how service attributes drive purchase probability
//! (multinomial logit, latent-class, and mixed-logit estimators), monetizes
//! attribute improvements through willingness-to-pay, and optimizes service
//! design and price for expected revenue. A seeded synthetic-market module
//! provides the ground-truth data every estimator is validated against.
//!
//! Heavy loops (likelihood sums, simulated probabilities, data generation)
//! run data-parallel when the `parallel` feature is enabled (the default)
//! and fall back to sequential execution otherwise; both paths produce
//! bit-identical numbers.

pub mod analytics;
pub mod chain;
pub mod design;
pub mod error;
pub mod estimate;
pub mod exec;
pub mod linalg;
pub mod logit;
pub mod model;
pub mod rng;
pub mod schema;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    AttributeVector, ChoiceDataset, ChoiceObservation, ChoiceScenario, ParameterVector,
};
pub use schema::AttributeSchema;
