//! Short-horizon epidemic forecasting from a single observed series by delay
//! embedding and sparse random-feature regression, together with
//! compartmental-model baselines (SEIR, SμEIR, SEIR with a time-varying
//! transmission rate), backtested prediction intervals and an experiment CLI.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod cli;
pub mod embedding;
pub mod error;
pub mod exec;
pub mod intervals;
pub mod ode;
pub mod optim;
pub mod rfm;
pub mod seeding;
pub mod spade4;
pub mod timeseries;

pub use error::{Error, Result};
pub use exec::Exec;
