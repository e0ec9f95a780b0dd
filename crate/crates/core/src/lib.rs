//! Distributional trait encoding and group/individual aesthetic-assessment
//! tooling: dataset construction, leak-free splits, metrics, the
//! group-versus-individual loss inequality, a small trainable predictor, and a
//! synthetic rater population for transfer experiments.

pub mod augment;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod output;
pub mod rng;
pub mod scale;
pub mod schema;
pub mod synth;
pub mod theory;

pub use error::{Error, Result};
pub use scale::{assemble_score_distribution, mean_score, ScoreDistribution, ScoreScale};
pub use schema::{average_trait_vectors, encode_trait, schema_dimension, Rater, TraitSchema};
