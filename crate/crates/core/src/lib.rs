//! Interventional mediation analysis with multivariable missing binary data.
//!
//! The crate is `no_std` (with `alloc`) so the numerical core can be embedded
//! anywhere; all floating-point transcendental functions go through `libm`,
//! which keeps results bit-identical with and without the `std` feature.
//!
//! Module map:
//!
//! - [`glm`]: logistic regression by IRLS, prediction, coefficient draws.
//! - [`data`]: binary datasets with an explicit missingness mask, cell tables.
//! - [`datagen`]: synthetic cohorts and m-DAG missingness mechanisms.
//! - [`mediation`]: doubly robust and Monte Carlo g-computation, exact oracle.
//! - [`impute`]: complete-case analysis, chained-equation MI and SMC-FCS.
//! - [`variance`]: bootstrap, Rubin pooling, MI-Boot and Boot-MI.
//! - [`simstudy`]: single-replication analysis, truth and performance metrics.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod datagen;
pub mod glm;
pub mod impute;
pub mod mediation;
pub mod rng;
pub mod simstudy;
pub mod variance;

mod math;

pub use data::{CellTable, Dataset, Var};
pub use glm::{FittedGlm, ModelFormula, Term};
pub use mediation::{AnalysisSpec, MediationEstimate};
pub use rng::{SimRng, StreamSeed};
