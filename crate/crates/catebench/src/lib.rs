//! catebench: benchmark how reliably SHAP attributions of conditional
//! average treatment effect (CATE) estimators recover the biomarkers that
//! truly modify a treatment effect.
//!
//! The crate bundles:
//! - a small exact-split gradient boosting engine ([`gbt`]),
//! - exact path-dependent TreeSHAP, KernelSHAP, and a brute-force Shapley
//!   oracle ([`shap`]),
//! - T/S/X/R/DR meta-learners plus an honest causal forest
//!   ([`learners`], [`cforest`]),
//! - simulation scenarios with known ground truth ([`simgen`]),
//! - biomarker-recovery metrics ([`metrics`]) and a deterministic
//!   benchmark harness with a CLI ([`bench`]).

pub mod bench;
pub mod cforest;
pub mod data;
pub mod error;
pub mod gbt;
pub mod learners;
pub mod metrics;
pub mod shap;
pub mod simgen;

pub use error::{Error, Result};
