//! Shapley-value attribution engines and their test oracles.

pub mod kernel;
pub mod oracle;
pub mod tree;

use std::io::Write as _;
use std::path::Path;

use crate::data::{fmt_f64, Matrix};
use crate::error::{Error, Result};

pub use kernel::{kernel_shap, KernelShapConfig, MaskMode};
pub use tree::tree_shap;

/// Per-instance attributions for one explained model.
///
/// Invariant: base_value + sum of a row's phi reproduces that row's
/// prediction (exactly for tree_shap, up to solver tolerance for
/// kernel_shap unless `degenerate` is set).
#[derive(Clone, Debug)]
pub struct ShapMatrix {
    pub phi: Matrix,
    pub base_value: f64,
    pub predictions: Vec<f64>,
    pub feature_names: Vec<String>,
    /// Sampled kernel explanations of a constant surface carry no signal;
    /// flagged so downstream ranking treats the row as all-zero on purpose.
    pub degenerate: bool,
}

impl ShapMatrix {
    pub fn n_instances(&self) -> usize {
        self.phi.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.phi.n_cols()
    }

    pub fn with_feature_names(mut self, names: &[String]) -> Result<Self> {
        if names.len() != self.phi.n_cols() {
            return Err(Error::Shap(format!(
                "{} feature names for {} attribution columns",
                names.len(),
                self.phi.n_cols()
            )));
        }
        self.feature_names = names.to_vec();
        Ok(self)
    }

    /// Largest |base + sum(phi_i) - prediction_i| across instances.
    pub fn max_local_accuracy_violation(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.phi.n_rows() {
            let total: f64 = (0..self.phi.n_cols()).map(|j| self.phi.get(i, j)).sum();
            worst = worst.max((self.base_value + total - self.predictions[i]).abs());
        }
        worst
    }

    /// Long-format CSV: instance, feature, phi. The base value and the
    /// reconstructed predictions ride along so the file is self-contained.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["instance", "feature", "phi", "base_value", "prediction"])?;
        for i in 0..self.phi.n_rows() {
            for j in 0..self.phi.n_cols() {
                w.write_record([
                    i.to_string(),
                    self.feature_names[j].clone(),
                    fmt_f64(self.phi.get(i, j)),
                    fmt_f64(self.base_value),
                    fmt_f64(self.predictions[i]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Cohort-level importance: mean |phi| per feature plus its min-max
/// normalization. A constant importance vector normalizes to all zeros.
#[derive(Clone, Debug)]
pub struct SummaryShap {
    pub importance: Vec<f64>,
    pub normalized: Vec<f64>,
}

pub fn summary_shap(shap: &ShapMatrix) -> SummaryShap {
    let n = shap.phi.n_rows().max(1);
    let p = shap.phi.n_cols();
    let mut importance = vec![0.0; p];
    for i in 0..shap.phi.n_rows() {
        for j in 0..p {
            importance[j] += shap.phi.get(i, j).abs();
        }
    }
    for v in &mut importance {
        *v /= n as f64;
    }
    let normalized = min_max_normalize(&importance);
    SummaryShap { importance, normalized }
}

/// Rescale to [0, 1]; a constant vector (no spread) maps to all zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo).is_finite() || hi - lo <= 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

pub fn write_summary_csv(
    path: &Path,
    feature_names: &[String],
    summary: &SummaryShap,
) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "feature,importance,normalized")?;
    for (j, name) in feature_names.iter().enumerate() {
        writeln!(
            file,
            "{},{},{}",
            name,
            fmt_f64(summary.importance[j]),
            fmt_f64(summary.normalized[j])
        )?;
    }
    Ok(())
}
