//! Estimation and modelling of extremal spatial dependence.
//!
//! The crate covers the full chain from replicated site observations to
//! dependence summaries:
//!
//! - [`dataset`]: site tables, replication matrices and distance binning;
//! - [`margins`]: GEV margins, PWM fitting, unit-Fréchet and rank transforms;
//! - [`copulas`]: parametric and empirical bivariate copulas;
//! - [`dependence`]: madograms and extremal coefficients;
//! - [`extremogram`]: copula-limit and empirical (cross-)extremograms;
//! - [`taildep`]: tail-dependence coefficient, scale and extremal variogram;
//! - [`discordance`]: partition discordance degrees;
//! - [`sim`]: seeded simulators with known dependence.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise. Results do
//! not depend on the number of worker threads.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod copulas;
pub mod dataset;
pub mod dependence;
pub mod discordance;
pub mod error;
pub mod extremogram;
pub mod margins;
pub mod numeric;
pub mod par;
pub mod sim;
pub mod taildep;

pub use copulas::{empirical_copula, CopulaModel, EmpiricalCopula};
pub use dataset::{bin_pairs, load_dataset, load_dataset_paths, DistanceBins, Site, SpatialDataset};
pub use error::{Error, Result};
pub use margins::{fit_gev, pseudo_observations, to_unit_frechet, GevFit, GevParams};
pub use dependence::{CurveKind, CurvePoint, DependenceCurve, MadogramMargin};
pub use discordance::Partition;
pub use extremogram::TailSide;
pub use sim::{simulate, SimKind, SimSpec};
pub use taildep::{TailDepFit, TailDepMode};
