//! Discovery-quality metrics over importance vectors and attribution
//! matrices: does the top-ranked covariate actually drive the effect, and
//! by how much does it separate from the noise?

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{pearson, Matrix};
use crate::error::{Error, Result};
use crate::shap::ShapMatrix;
use crate::simgen::{g1, g2};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub scores: Vec<f64>,
    /// Indices sorted by |score| descending; ties keep the lower index first.
    pub order: Vec<usize>,
    pub predictive: BTreeSet<usize>,
    pub nonpredictive: BTreeSet<usize>,
}

impl ImportanceRanking {
    pub fn new(scores: Vec<f64>, predictive: &BTreeSet<usize>) -> Result<Self> {
        check_sets(scores.len(), predictive)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b].abs().partial_cmp(&scores[a].abs()).unwrap().then(a.cmp(&b))
        });
        let nonpredictive =
            (0..scores.len()).filter(|j| !predictive.contains(j)).collect();
        Ok(ImportanceRanking {
            scores,
            order,
            predictive: predictive.clone(),
            nonpredictive,
        })
    }
}

fn check_sets(p: usize, predictive: &BTreeSet<usize>) -> Result<()> {
    if predictive.is_empty() {
        return Err(Error::Config("predictive set is empty".into()));
    }
    if let Some(&j) = predictive.iter().find(|&&j| j >= p) {
        return Err(Error::Config(format!(
            "predictive column {j} out of range for {p} scores"
        )));
    }
    if predictive.len() >= p {
        return Err(Error::Config("no nonpredictive columns left".into()));
    }
    Ok(())
}

fn split_maxima(scores: &[f64], predictive: &BTreeSet<usize>) -> (f64, f64) {
    let mut max_p = f64::NEG_INFINITY;
    let mut max_np = f64::NEG_INFINITY;
    for (j, s) in scores.iter().enumerate() {
        let v = s.abs();
        if predictive.contains(&j) {
            max_p = max_p.max(v);
        } else {
            max_np = max_np.max(v);
        }
    }
    (max_p, max_np)
}

/// 1 when the strongest predictive score is at least as large as the
/// strongest nonpredictive one.
pub fn top1(scores: &[f64], predictive: &BTreeSet<usize>) -> Result<f64> {
    check_sets(scores.len(), predictive)?;
    let (max_p, max_np) = split_maxima(scores, predictive);
    Ok(f64::from(u8::from(max_p >= max_np)))
}

/// 1 when a predictive column reaches the top three. Ties at the third
/// place are included generously: everything matching the third-largest
/// magnitude counts as ranked.
pub fn net3(scores: &[f64], predictive: &BTreeSet<usize>) -> Result<f64> {
    check_sets(scores.len(), predictive)?;
    let mut mags: Vec<f64> = scores.iter().map(|s| s.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let cutoff = mags[mags.len().min(3) - 1];
    let hit = predictive.iter().any(|&j| scores[j].abs() >= cutoff);
    Ok(f64::from(u8::from(hit)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    MinMax,
    MaxDivision,
}

/// Rescale magnitudes to [0,1]. Constant vectors map to all zeros.
pub fn normalize_scores(scores: &[f64], how: Normalization) -> Vec<f64> {
    let mags: Vec<f64> = scores.iter().map(|s| s.abs()).collect();
    let max = mags.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    match how {
        Normalization::MinMax => {
            let min = mags.iter().cloned().fold(f64::INFINITY, f64::min);
            if max - min <= 0.0 {
                return vec![0.0; mags.len()];
            }
            mags.iter().map(|v| (v - min) / (max - min)).collect()
        }
        Normalization::MaxDivision => {
            if max <= 0.0 {
                return vec![0.0; mags.len()];
            }
            mags.iter().map(|v| v / max).collect()
        }
    }
}

/// Separation between the best predictive and best nonpredictive entry of
/// an already-normalized score vector; lands in [-1, 1].
pub fn margin(normalized: &[f64], predictive: &BTreeSet<usize>) -> Result<f64> {
    check_sets(normalized.len(), predictive)?;
    let (max_p, max_np) = split_maxima(normalized, predictive);
    Ok(max_p - max_np)
}

/// Normalize then difference, the usual one-call path.
pub fn margin_normalized(
    scores: &[f64],
    predictive: &BTreeSet<usize>,
    how: Normalization,
) -> Result<f64> {
    margin(&normalize_scores(scores, how), predictive)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceLevelStats {
    /// |cor(phi_j, tau_hat)| per column; zero-variance columns score 0.
    pub rho: Vec<f64>,
    pub max_p: f64,
    pub max_np: f64,
    /// 1 when max_p >= max_np.
    pub p_win: f64,
}

/// How well each attribution column tracks the effect estimates across
/// instances, summarized by the best predictive vs nonpredictive column.
pub fn instance_stats(
    shap: &ShapMatrix,
    tau_hat: &[f64],
    predictive: &BTreeSet<usize>,
) -> Result<InstanceLevelStats> {
    let p = shap.n_features();
    check_sets(p, predictive)?;
    if tau_hat.len() != shap.n_instances() {
        return Err(Error::Data(format!(
            "{} effect estimates for {} attribution rows",
            tau_hat.len(),
            shap.n_instances()
        )));
    }
    let rho: Vec<f64> =
        (0..p).map(|j| pearson(shap.phi.col(j), tau_hat).abs()).collect();
    let (max_p, max_np) = split_maxima(&rho, predictive);
    Ok(InstanceLevelStats { rho, max_p, max_np, p_win: f64::from(u8::from(max_p >= max_np)) })
}

/// Correlation between the attribution columns of the two effect-carrying
/// biomarkers and the signal shapes they should recover. Assumes the
/// biomarker design's column layout (x3 at column 3, x4 at column 4).
pub fn recovery_corr(shap: &ShapMatrix, features: &Matrix) -> Result<(f64, f64)> {
    if features.n_cols() < 5 || shap.n_features() < 5 {
        return Err(Error::Data("recovery correlations need the biomarker layout".into()));
    }
    if features.n_rows() != shap.n_instances() {
        return Err(Error::Data(format!(
            "{} feature rows for {} attribution rows",
            features.n_rows(),
            shap.n_instances()
        )));
    }
    let sig3: Vec<f64> = features.col(3).iter().map(|&x| g1(x)).collect();
    let sig4: Vec<f64> = features.col(4).iter().map(|&x| g2(x)).collect();
    let cor3 = pearson(shap.phi.col(3), &sig3).abs();
    let cor4 = pearson(shap.phi.col(4), &sig4).abs();
    Ok((cor3, cor4))
}
