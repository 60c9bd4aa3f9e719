//! Rating prediction via latent-component decomposition.
//!
//! An observed rating is modeled as the sum of c hidden component ratings.
//! Training runs in two phases: c biased matrix-factorization models are
//! first trained jointly against softmax-weighted shares of each rating
//! while the weights are accumulated per rating, then each model keeps
//! training on its normalized share. Prediction sums the component models.
//!
//! The crate also ships the surrounding experiment kit: rating-file parsing
//! and holdout splits ([`dataset`]), the plain biased-MF baseline ([`bmf`]),
//! Slope One and averaged-ensemble comparators ([`baselines`]), RMSE
//! protocols with sweeps, traces and benchmarks ([`eval`]), binary model
//! files ([`serialize`]), seeded synthetic datasets ([`synth`]) and the
//! `lcr` command-line binary.

pub mod baselines;
pub mod bmf;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod lcr;
pub mod model;
pub mod serialize;
pub mod synth;

pub use bmf::{BmfModel, Hyperparams};
pub use dataset::{
    build_dataset, load_ratings_path, parse_ratings, DataSplit, Format, RatingDataset,
    RatingRecord, Scale,
};
pub use error::{LcrError, Result};
pub use lcr::{train_lcr, LcrConfig, LcrModel};
pub use model::{ModelSpec, TrainedModel};
