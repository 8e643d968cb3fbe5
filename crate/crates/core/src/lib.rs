//! Quantal response statistical equilibrium (QRSE) estimation for
//! cross-sectional return distributions, with the stationarity and
//! time-irreversibility diagnostics used to check the equilibrium premise.
//!
//! Pipeline: [`ingest`] price panels into truncated log returns, build an
//! index and label [`regimes`], fit the [`model`] over rolling windows with
//! [`fit`], and run the [`diagnostics`] battery on the index.

pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod ingest;
pub mod model;
pub mod regimes;
pub mod stats;

pub use error::{QrseError, Result};
