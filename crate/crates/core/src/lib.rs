//! Forecasting the translational impact of biomedical papers from
//! bibliographic metadata, citation structure and title/abstract text.

pub mod analysis;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod features;
pub mod linkage;
pub mod matrix;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod rankings;
pub mod synth;
mod par;

pub use error::{Error, Result};
pub use par::init_threads_from_env;
