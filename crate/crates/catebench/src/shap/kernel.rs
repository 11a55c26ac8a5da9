//! Model-agnostic KernelSHAP: Shapley values recovered as the solution of
//! an efficiency-constrained weighted least squares over feature
//! coalitions, with absent features marginalized over a background sample.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::shap::ShapMatrix;

/// How coalitions are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Every proper nonempty coalition. Exact Shapley values; cost 2^p - 2.
    Exact,
    /// Multinomial paired sampling with the given number of coalition
    /// evaluations (rounded down to even, must be at least 2p + 2).
    Sampled(usize),
    /// Exact when p <= 12, otherwise Sampled(min(2^p - 2, 2048)).
    Auto,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelShapConfig {
    pub mode: MaskMode,
    pub seed: u64,
}

impl Default for KernelShapConfig {
    fn default() -> Self {
        KernelShapConfig { mode: MaskMode::Auto, seed: 0 }
    }
}

const EXACT_FEATURE_LIMIT: usize = 20;
const DEGENERATE_EPS: f64 = 1e-12;

/// Explain `predict` at each row of `instances`, marginalizing absent
/// features over `background`. Degenerate (constant-surface) instances get
/// an all-zero row; in sampled mode the matrix-level flag records that.
pub fn kernel_shap<F>(
    predict: &F,
    background: &Matrix,
    instances: &Matrix,
    config: &KernelShapConfig,
) -> Result<ShapMatrix>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    let p = instances.n_cols();
    if p == 0 {
        return Err(Error::Shap("no feature columns to attribute".into()));
    }
    if p > 127 {
        return Err(Error::Shap(format!("{p} features exceed the 127-feature mask limit")));
    }
    if background.n_cols() != p {
        return Err(Error::Shap(format!(
            "background has {} columns, instances have {p}",
            background.n_cols()
        )));
    }
    if background.n_rows() == 0 {
        return Err(Error::Shap("background sample is empty".into()));
    }

    let base_value = mean(&checked_predict(predict, background)?);
    let fx = checked_predict(predict, instances)?;
    let n = instances.n_rows();
    let mut phi = Matrix::zeros(n, p);
    let feature_names: Vec<String> = (0..p).map(|j| format!("f{j}")).collect();

    if p == 1 {
        // Single player takes the whole surplus; no system to solve.
        for i in 0..n {
            phi.set(i, 0, fx[i] - base_value);
        }
        return Ok(ShapMatrix { phi, base_value, predictions: fx, feature_names, degenerate: false });
    }

    enum Plan {
        Exact(Vec<u128>, Vec<f64>),
        Sampled(usize),
    }
    let plan = match config.mode {
        MaskMode::Exact => Plan::Exact(enumerate_masks(p)?, exact_weights(p)),
        MaskMode::Sampled(n_c) => Plan::Sampled(validate_budget(p, n_c)?),
        MaskMode::Auto => {
            if p <= 12 {
                Plan::Exact(enumerate_masks(p)?, exact_weights(p))
            } else {
                let cap = if p >= 63 { 2048 } else { ((1u64 << p) - 2).min(2048) as usize };
                Plan::Sampled(validate_budget(p, cap)?)
            }
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut synth = Matrix::zeros(background.n_rows(), p);
    let mut degenerate = false;
    let mut x = vec![0.0; p];

    for i in 0..n {
        for j in 0..p {
            x[j] = instances.get(i, j);
        }
        let (masks, weights): (Vec<u128>, Vec<f64>) = match &plan {
            Plan::Exact(masks, weights) => (masks.clone(), weights.clone()),
            Plan::Sampled(n_c) => {
                let counts = sample_coalitions(p, *n_c, &mut rng);
                counts.into_iter().unzip()
            }
        };
        let mut centered = Vec::with_capacity(masks.len());
        for &mask in &masks {
            fill_synthetic(&mut synth, background, &x, mask);
            centered.push(mean(&checked_predict(predict, &synth)?) - base_value);
        }
        let t = fx[i] - base_value;
        let flat = centered.iter().fold(0.0_f64, |m, v| m.max(v.abs())) < DEGENERATE_EPS
            && t.abs() < DEGENERATE_EPS;
        if flat {
            if matches!(plan, Plan::Sampled(_)) {
                degenerate = true;
            }
            continue;
        }
        let row = shapley_from_wls(&masks, &weights, &centered, p, t)?;
        for (j, v) in row.iter().enumerate() {
            phi.set(i, j, *v);
        }
    }

    Ok(ShapMatrix { phi, base_value, predictions: fx, feature_names, degenerate })
}

fn checked_predict<F>(predict: &F, features: &Matrix) -> Result<Vec<f64>>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    let out = predict(features)?;
    if out.len() != features.n_rows() {
        return Err(Error::Shap(format!(
            "model returned {} predictions for {} rows",
            out.len(),
            features.n_rows()
        )));
    }
    Ok(out)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn validate_budget(p: usize, n_c: usize) -> Result<usize> {
    let floor = 2 * p + 2;
    if n_c < floor {
        return Err(Error::Config(format!(
            "n_coalitions {n_c} is below the minimum {floor} for {p} features"
        )));
    }
    Ok(n_c - n_c % 2)
}

fn enumerate_masks(p: usize) -> Result<Vec<u128>> {
    if p > EXACT_FEATURE_LIMIT {
        return Err(Error::Config(format!(
            "exact enumeration over 2^{p} coalitions is impractical; use sampled mode"
        )));
    }
    let full = (1u128 << p) - 1;
    Ok((1..full).collect())
}

/// Shapley kernel weight of one coalition of size s among p features.
pub fn kernel_weight(p: usize, s: usize) -> f64 {
    (p as f64 - 1.0) / (choose(p, s) * s as f64 * (p - s) as f64)
}

fn choose(p: usize, s: usize) -> f64 {
    let s = s.min(p - s);
    let mut c = 1.0;
    for i in 0..s {
        c = c * (p - i) as f64 / (i + 1) as f64;
    }
    c
}

fn exact_weights(p: usize) -> Vec<f64> {
    let per_size: Vec<f64> = (0..=p).map(|s| if s == 0 || s == p { 0.0 } else { kernel_weight(p, s) }).collect();
    let full = (1u128 << p) - 1;
    (1..full).map(|mask| per_size[mask.count_ones() as usize]).collect()
}

/// Draw n_c coalitions (n_c even) as complement pairs: size from the
/// aggregate kernel mass (p-1)/(s(p-s)), then a uniform subset of that
/// size together with its complement. Multiplicity counts double as the
/// least-squares weights, so the estimate converges on the exact solution.
fn sample_coalitions(p: usize, n_c: usize, rng: &mut ChaCha8Rng) -> BTreeMap<u128, f64> {
    let size_mass: Vec<f64> =
        (1..p).map(|s| (p as f64 - 1.0) / ((s * (p - s)) as f64)).collect();
    let size_dist = WeightedIndex::new(&size_mass).expect("positive size masses");
    let full = (1u128 << p) - 1;
    let mut counts: BTreeMap<u128, f64> = BTreeMap::new();
    for _ in 0..n_c / 2 {
        let s = size_dist.sample(rng) + 1;
        let mut mask = 0u128;
        for j in rand::seq::index::sample(rng, p, s) {
            mask |= 1 << j;
        }
        *counts.entry(mask).or_insert(0.0) += 1.0;
        *counts.entry(full ^ mask).or_insert(0.0) += 1.0;
    }
    counts
}

fn fill_synthetic(synth: &mut Matrix, background: &Matrix, x: &[f64], mask: u128) {
    for (j, &xj) in x.iter().enumerate() {
        if mask >> j & 1 == 1 {
            synth.col_mut(j).fill(xj);
        } else {
            synth.col_mut(j).copy_from_slice(background.col(j));
        }
    }
}

/// Solve the efficiency-constrained WLS by eliminating the last feature:
/// phi_last = t - sum(others), regressors become m_j - m_last.
fn shapley_from_wls(
    masks: &[u128],
    weights: &[f64],
    centered: &[f64],
    p: usize,
    t: f64,
) -> Result<Vec<f64>> {
    let q = p - 1;
    let mut a = vec![0.0; q * q];
    let mut b = vec![0.0; q];
    for (k, &mask) in masks.iter().enumerate() {
        let w = weights[k];
        let last = (mask >> q & 1) as f64;
        let adj = centered[k] - last * t;
        for j in 0..q {
            let rj = (mask >> j & 1) as f64 - last;
            if rj == 0.0 {
                continue;
            }
            b[j] += w * rj * adj;
            for l in j..q {
                let rl = (mask >> l & 1) as f64 - last;
                a[j * q + l] += w * rj * rl;
            }
        }
    }
    for j in 0..q {
        for l in 0..j {
            a[j * q + l] = a[l * q + j];
        }
    }
    let beta = match solve_linear(a.clone(), b.clone(), q) {
        Ok(x) => x,
        Err(_) => {
            let trace: f64 = (0..q).map(|d| a[d * q + d]).sum();
            let ridge = 1e-10 * (1.0 + trace.abs() / q as f64);
            let mut damped = a;
            for d in 0..q {
                damped[d * q + d] += ridge;
            }
            solve_linear(damped, b, q)?
        }
    };
    let head_sum: f64 = beta.iter().sum();
    let mut phi = beta;
    phi.push(t - head_sum);
    Ok(phi)
}

fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-12 {
            return Err(Error::Shap("singular coalition system".into()));
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for c in col + 1..n {
            s -= a[col * n + c] * x[c];
        }
        x[col] = s / a[col * n + col];
    }
    Ok(x)
}
