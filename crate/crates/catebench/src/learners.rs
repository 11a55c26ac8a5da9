//! Treatment-effect meta-learners on boosted trees.
//!
//! Five estimators share one surface: T and S difference outcome models,
//! X blends imputed arm effects by propensity, R and DR regress
//! pseudo-outcomes produced with cross-fitted nuisances, and CF wraps the
//! honest causal forest. Each fitted model predicts per-row effects and
//! can be explained by one of three attribution routes.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cforest::{fit_causal_forest, predict_cf, CausalForest, CfParams};
use crate::data::{split_folds, Dataset, FoldAssignment, Matrix};
use crate::error::{Error, Result};
use crate::gbt::{
    compact_grid, fit_gbt, fit_gbt_early_stopped, tune_cv, Hyperparams, Loss, TreeEnsemble,
};
use crate::shap::{kernel_shap, tree_shap, KernelShapConfig, ShapMatrix};

pub const DEFAULT_CLIP: (f64, f64) = (0.025, 0.975);

/// Stage seeds are spread out so reordering fits cannot alias streams.
fn stage_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub(crate) const TAG_M0: u64 = 1;
pub(crate) const TAG_M1: u64 = 2;
pub(crate) const TAG_S: u64 = 3;
pub(crate) const TAG_TAU0: u64 = 4;
pub(crate) const TAG_TAU1: u64 = 5;
const TAG_FOLDS: u64 = 6;
pub(crate) const TAG_RESPONSE: u64 = 7;
pub(crate) const TAG_FINAL: u64 = 8;
const TAG_PROP_FOLDS: u64 = 9;
const TAG_PROP: u64 = 10;
pub(crate) const TAG_SURROGATE: u64 = 11;
const TAG_CF: u64 = 12;

/// Tag for a named stage of the given learner, used to pin per-stage
/// hyperparameters through `FitOptions::stage_hp`.
pub(crate) fn stage_tag(kind: LearnerKind, stage: &str) -> Option<u64> {
    match (kind, stage) {
        (LearnerKind::T | LearnerKind::X | LearnerKind::Dr, "m0") => Some(TAG_M0),
        (LearnerKind::T | LearnerKind::X | LearnerKind::Dr, "m1") => Some(TAG_M1),
        (LearnerKind::S, "m") => Some(TAG_S),
        (LearnerKind::X, "tau0") => Some(TAG_TAU0),
        (LearnerKind::X, "tau1") => Some(TAG_TAU1),
        (LearnerKind::R, "response") => Some(TAG_RESPONSE),
        (LearnerKind::R | LearnerKind::Dr, "final") => Some(TAG_FINAL),
        _ => None,
    }
}

/// Stages fit to pseudo-outcomes rather than observed outcomes: the X
/// imputed-effect regressions and the R/DR final stages.
pub(crate) fn pseudo_outcome_stage(tag: u64) -> bool {
    matches!(tag, TAG_TAU0 | TAG_TAU1 | TAG_FINAL)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitOptions {
    /// Candidate hyperparameters per stage; a single entry skips tuning.
    pub grid: Vec<Hyperparams>,
    /// Grid for the pseudo-outcome stages; None reuses `grid`. Pseudo
    /// outcomes carry nuisance-model residual noise several times the
    /// effect scale, so those stages often want heavier averaging than
    /// the observed-outcome stages tolerate.
    #[serde(default)]
    pub pseudo_grid: Option<Vec<Hyperparams>>,
    pub tune_folds: usize,
    /// K for the cross-fitted nuisances of R and DR.
    pub nuisance_folds: usize,
    pub val_fraction: f64,
    pub patience: usize,
    pub cf_params: CfParams,
    /// Per-stage hyperparameters that bypass grid tuning, keyed by stage
    /// tag; round counts are still chosen by early stopping.
    #[serde(default)]
    pub stage_hp: BTreeMap<u64, Hyperparams>,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grid: compact_grid(200),
            pseudo_grid: None,
            tune_folds: 3,
            nuisance_folds: 5,
            val_fraction: 0.2,
            patience: 20,
            cf_params: CfParams::default(),
            stage_hp: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl FitOptions {
    pub fn with_seed(seed: u64) -> Self {
        FitOptions { seed, ..FitOptions::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("hyperparameter grid is empty".into()));
        }
        if matches!(&self.pseudo_grid, Some(g) if g.is_empty()) {
            return Err(Error::Config("pseudo-outcome grid is empty".into()));
        }
        if self.nuisance_folds < 2 {
            return Err(Error::Config("cross-fitting needs at least 2 folds".into()));
        }
        Ok(())
    }

    /// Candidate set for one stage: the pseudo-outcome stages use
    /// `pseudo_grid` when it is set, everything else uses `grid`.
    fn stage_grid(&self, tag: u64) -> &[Hyperparams] {
        match &self.pseudo_grid {
            Some(g) if pseudo_outcome_stage(tag) => g,
            _ => &self.grid,
        }
    }
}

/// Tune on the grid when it has alternatives, then fit with the round
/// count chosen on a held-out slice.
fn tuned_fit(
    features: &Matrix,
    targets: &[f64],
    weights: Option<&[f64]>,
    loss: Loss,
    opts: &FitOptions,
    tag: u64,
) -> Result<(TreeEnsemble, Hyperparams)> {
    let mut rng = stage_rng(opts.seed, tag);
    let grid = opts.stage_grid(tag);
    let hp = if let Some(pinned) = opts.stage_hp.get(&tag) {
        pinned.clone()
    } else if grid.len() > 1 {
        tune_cv(features, targets, weights, loss, grid, opts.tune_folds, &mut rng)?
    } else {
        grid[0].clone()
    };
    let (ensemble, rounds) = fit_gbt_early_stopped(
        features,
        targets,
        weights,
        &hp,
        loss,
        opts.val_fraction,
        opts.patience,
        &mut rng,
    )?;
    Ok((ensemble, Hyperparams { n_rounds: rounds, ..hp }))
}

// ---------------------------------------------------------------------
// Propensity
// ---------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum PropensityMode {
    KnownConstant(f64),
    Estimated {
        model: TreeEnsemble,
        /// Out-of-fold probabilities for the training rows, already clipped.
        oof: Vec<f64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropensityModel {
    pub mode: PropensityMode,
    pub clip: (f64, f64),
}

impl PropensityModel {
    pub fn known_constant(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) || !p.is_finite() {
            return Err(Error::Config(format!("constant propensity {p} outside (0,1)")));
        }
        Ok(PropensityModel { mode: PropensityMode::KnownConstant(p), clip: DEFAULT_CLIP })
    }

    fn clip_value(&self, v: f64) -> f64 {
        v.clamp(self.clip.0, self.clip.1)
    }

    /// Probabilities for the rows the model was fitted on: the constant,
    /// or the out-of-fold estimates.
    pub fn training_probs(&self, n: usize) -> Result<Vec<f64>> {
        match &self.mode {
            PropensityMode::KnownConstant(p) => Ok(vec![self.clip_value(*p); n]),
            PropensityMode::Estimated { oof, .. } => {
                if oof.len() != n {
                    return Err(Error::Data(format!(
                        "propensity was cross-fitted on {} rows, asked for {n}",
                        oof.len()
                    )));
                }
                Ok(oof.clone())
            }
        }
    }

    /// Probabilities for arbitrary rows via the full model.
    pub fn predict(&self, features: &Matrix) -> Result<Vec<f64>> {
        match &self.mode {
            PropensityMode::KnownConstant(p) => {
                Ok(vec![self.clip_value(*p); features.n_rows()])
            }
            PropensityMode::Estimated { model, .. } => {
                let probs = model.predict(features)?;
                Ok(probs.into_iter().map(|v| self.clip_value(v)).collect())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensitySpec {
    KnownConstant(f64),
    Estimate,
}

pub fn fit_propensity(ds: &Dataset, spec: PropensitySpec, opts: &FitOptions) -> Result<PropensityModel> {
    match spec {
        PropensitySpec::KnownConstant(p) => PropensityModel::known_constant(p),
        PropensitySpec::Estimate => {
            let mut fold_rng = stage_rng(opts.seed, TAG_PROP_FOLDS);
            let folds = split_folds(ds.n(), opts.nuisance_folds, &mut fold_rng)?;
            fit_propensity_with_folds(ds, &folds, opts)
        }
    }
}

/// Cross-fitted logistic ensemble on treatment assignment. Exposed with
/// explicit folds so tests can force degenerate partitions.
pub fn fit_propensity_with_folds(
    ds: &Dataset,
    folds: &FoldAssignment,
    opts: &FitOptions,
) -> Result<PropensityModel> {
    opts.validate()?;
    let targets: Vec<f64> = ds.treatment.iter().map(|&a| f64::from(a)).collect();
    let mut rng = stage_rng(opts.seed, TAG_PROP);
    let hp = if opts.grid.len() > 1 {
        tune_cv(&ds.features, &targets, None, Loss::Logistic, &opts.grid, opts.tune_folds, &mut rng)?
    } else {
        opts.grid[0].clone()
    };

    let clip = DEFAULT_CLIP;
    let mut oof = vec![f64::NAN; ds.n()];
    for fold in 0..folds.k {
        let train = folds.train_rows(fold);
        let held = folds.fold_rows(fold);
        let has = |arm: u8| train.iter().any(|&i| ds.treatment[i] == arm);
        if !has(0) || !has(1) {
            return Err(Error::Data(format!(
                "propensity fold {fold} leaves a single-arm training sample"
            )));
        }
        let tf = ds.features.select_rows(&train);
        let tt: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
        let mut fold_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let model = fit_gbt(&tf, &tt, None, &hp, Loss::Logistic, &mut fold_rng)?;
        let hf = ds.features.select_rows(&held);
        for (slot, prob) in held.iter().zip(model.predict(&hf)?) {
            oof[*slot] = prob.clamp(clip.0, clip.1);
        }
    }

    let mut full_rng = ChaCha8Rng::seed_from_u64(rng.gen());
    let model = fit_gbt(&ds.features, &targets, None, &hp, Loss::Logistic, &mut full_rng)?;
    Ok(PropensityModel { mode: PropensityMode::Estimated { model, oof }, clip })
}

// ---------------------------------------------------------------------
// Pseudo-outcomes
// ---------------------------------------------------------------------

fn check_probs(p_hat: &[f64]) -> Result<()> {
    for &p in p_hat {
        if !(p > 0.0 && p < 1.0) || !p.is_finite() {
            return Err(Error::Data(format!("propensity {p} outside (0,1)")));
        }
    }
    Ok(())
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Data(format!("{name} has {got} entries, expected {want}")));
    }
    Ok(())
}

/// Residual-on-residual transform: psi = (y - m)/(a - p) with weights
/// (a - p)^2, so the weighted regression of psi on x targets the effect.
pub fn r_pseudo_outcomes(
    y: &[f64],
    a: &[u8],
    m_hat: &[f64],
    p_hat: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("treatment", a.len(), y.len())?;
    check_len("response predictions", m_hat.len(), y.len())?;
    check_len("propensities", p_hat.len(), y.len())?;
    check_probs(p_hat)?;
    let mut psi = Vec::with_capacity(y.len());
    let mut w = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        let denom = f64::from(a[i]) - p_hat[i];
        psi.push((y[i] - m_hat[i]) / denom);
        w.push(denom * denom);
    }
    Ok((psi, w))
}

/// Doubly robust scores: arm-model difference plus inverse-probability
/// weighted residual of the observed arm.
pub fn dr_pseudo_outcomes(
    y: &[f64],
    a: &[u8],
    m0_hat: &[f64],
    m1_hat: &[f64],
    p_hat: &[f64],
) -> Result<Vec<f64>> {
    check_len("treatment", a.len(), y.len())?;
    check_len("control-arm predictions", m0_hat.len(), y.len())?;
    check_len("treated-arm predictions", m1_hat.len(), y.len())?;
    check_len("propensities", p_hat.len(), y.len())?;
    check_probs(p_hat)?;
    let mut psi = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        let base = m1_hat[i] - m0_hat[i];
        let aug = if a[i] == 1 {
            (y[i] - m1_hat[i]) / p_hat[i]
        } else {
            -(y[i] - m0_hat[i]) / (1.0 - p_hat[i])
        };
        psi.push(base + aug);
    }
    Ok(psi)
}

/// Pure inverse-probability transform of the raw outcome.
pub fn ipw_pseudo_outcomes(y: &[f64], a: &[u8], p_hat: &[f64]) -> Result<Vec<f64>> {
    check_len("treatment", a.len(), y.len())?;
    check_len("propensities", p_hat.len(), y.len())?;
    check_probs(p_hat)?;
    Ok((0..y.len())
        .map(|i| y[i] * (f64::from(a[i]) - p_hat[i]) / (p_hat[i] * (1.0 - p_hat[i])))
        .collect())
}

// ---------------------------------------------------------------------
// Model container
// ---------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    T,
    S,
    X,
    R,
    Dr,
    Cf,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 6] = [
        LearnerKind::T,
        LearnerKind::S,
        LearnerKind::X,
        LearnerKind::R,
        LearnerKind::Dr,
        LearnerKind::Cf,
    ];

    /// Whether the last fitting stage is a single tree ensemble that can
    /// be explained directly.
    pub fn has_final_stage(self) -> bool {
        matches!(self, LearnerKind::R | LearnerKind::Dr)
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LearnerKind::T => "T",
            LearnerKind::S => "S",
            LearnerKind::X => "X",
            LearnerKind::R => "R",
            LearnerKind::Dr => "DR",
            LearnerKind::Cf => "CF",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t" => Ok(LearnerKind::T),
            "s" => Ok(LearnerKind::S),
            "x" => Ok(LearnerKind::X),
            "r" => Ok(LearnerKind::R),
            "dr" => Ok(LearnerKind::Dr),
            "cf" => Ok(LearnerKind::Cf),
            other => Err(Error::Config(format!("unknown learner '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub n_train: usize,
    pub p: usize,
    pub feature_names: Vec<String>,
    pub stage_hyperparams: BTreeMap<String, Hyperparams>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CateModel {
    pub kind: LearnerKind,
    pub stages: BTreeMap<String, TreeEnsemble>,
    pub forest: Option<CausalForest>,
    pub propensity: PropensityModel,
    pub final_stage: Option<TreeEnsemble>,
    pub metadata: ModelMetadata,
}

impl CateModel {
    fn stage(&self, name: &str) -> Result<&TreeEnsemble> {
        self.stages
            .get(name)
            .ok_or_else(|| Error::Fit(format!("model is missing its '{name}' stage")))
    }

    pub fn predict_cate(&self, features: &Matrix) -> Result<Vec<f64>> {
        if features.n_cols() != self.metadata.p {
            return Err(Error::Data(format!(
                "model expects {} feature columns, got {}",
                self.metadata.p,
                features.n_cols()
            )));
        }
        match self.kind {
            LearnerKind::T => {
                let m1 = self.stage("m1")?.predict(features)?;
                let m0 = self.stage("m0")?.predict(features)?;
                Ok(m1.iter().zip(&m0).map(|(a, b)| a - b).collect())
            }
            LearnerKind::S => {
                let m = self.stage("m")?;
                let treated = m.predict(&build_s_matrix_at(features, 1))?;
                let control = m.predict(&build_s_matrix_at(features, 0))?;
                Ok(treated.iter().zip(&control).map(|(a, b)| a - b).collect())
            }
            LearnerKind::X => {
                let tau0 = self.stage("tau0")?.predict(features)?;
                let tau1 = self.stage("tau1")?.predict(features)?;
                let w = self.propensity.predict(features)?;
                Ok(combine_x(&tau0, &tau1, &w))
            }
            LearnerKind::R | LearnerKind::Dr => self
                .final_stage
                .as_ref()
                .ok_or_else(|| Error::Fit("reducible learner lost its final stage".into()))?
                .predict(features),
            LearnerKind::Cf => {
                let forest = self
                    .forest
                    .as_ref()
                    .ok_or_else(|| Error::Fit("forest model has no forest".into()))?;
                predict_cf(forest, features)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Effect estimates as CSV rows (instance_id, tau_hat[, oracle_tau]).
    pub fn write_tau_csv<Wr: std::io::Write>(
        &self,
        features: &Matrix,
        oracle_tau: Option<&[f64]>,
        out: Wr,
    ) -> Result<()> {
        let tau = self.predict_cate(features)?;
        if let Some(oracle) = oracle_tau {
            check_len("oracle effects", oracle.len(), tau.len())?;
        }
        let mut w = csv::Writer::from_writer(out);
        if oracle_tau.is_some() {
            w.write_record(["instance_id", "tau_hat", "oracle_tau"])?;
        } else {
            w.write_record(["instance_id", "tau_hat"])?;
        }
        for (i, t) in tau.iter().enumerate() {
            let mut rec = vec![i.to_string(), crate::data::fmt_f64(*t)];
            if let Some(oracle) = oracle_tau {
                rec.push(crate::data::fmt_f64(oracle[i]));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Convex blend of the two imputed effect surfaces.
pub fn combine_x(tau0: &[f64], tau1: &[f64], w: &[f64]) -> Vec<f64> {
    tau0.iter()
        .zip(tau1)
        .zip(w)
        .map(|((t0, t1), wi)| wi * t0 + (1.0 - wi) * t1)
        .collect()
}

/// Augmented design (x, A, x*I[A=0], x*I[A=1]): width 3p+1. The explicit
/// interaction blocks let depth-limited trees reach arm-specific slopes.
pub fn build_s_matrix(features: &Matrix, treatment: &[u8]) -> Matrix {
    let (n, p) = (features.n_rows(), features.n_cols());
    let mut w = Matrix::zeros(n, 3 * p + 1);
    for j in 0..p {
        w.col_mut(j).copy_from_slice(features.col(j));
    }
    for (i, &a) in treatment.iter().enumerate() {
        w.set(i, p, f64::from(a));
        for j in 0..p {
            let x = features.get(i, j);
            if a == 0 {
                w.set(i, p + 1 + j, x);
            } else {
                w.set(i, 2 * p + 1 + j, x);
            }
        }
    }
    w
}

/// The same augmentation with every row forced to one arm.
pub fn build_s_matrix_at(features: &Matrix, arm: u8) -> Matrix {
    build_s_matrix(features, &vec![arm; features.n_rows()])
}

// ---------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------

fn arm_slices(ds: &Dataset, arm: u8) -> (Matrix, Vec<f64>) {
    let rows: Vec<usize> =
        (0..ds.n()).filter(|&i| ds.treatment[i] == arm).collect();
    let f = ds.features.select_rows(&rows);
    let y = rows.iter().map(|&i| ds.outcome[i]).collect();
    (f, y)
}

fn base_metadata(ds: &Dataset, opts: &FitOptions) -> ModelMetadata {
    ModelMetadata {
        seed: opts.seed,
        n_train: ds.n(),
        p: ds.p(),
        feature_names: ds.feature_names.clone(),
        stage_hyperparams: BTreeMap::new(),
    }
}

pub fn fit_t_learner(
    ds: &Dataset,
    propensity: &PropensityModel,
    opts: &FitOptions,
) -> Result<CateModel> {
    opts.validate()?;
    let (f0, y0) = arm_slices(ds, 0);
    let (f1, y1) = arm_slices(ds, 1);
    let (m0, hp0) = tuned_fit(&f0, &y0, None, Loss::Squared, opts, TAG_M0)?;
    let (m1, hp1) = tuned_fit(&f1, &y1, None, Loss::Squared, opts, TAG_M1)?;
    let mut metadata = base_metadata(ds, opts);
    metadata.stage_hyperparams.insert("m0".into(), hp0);
    metadata.stage_hyperparams.insert("m1".into(), hp1);
    Ok(CateModel {
        kind: LearnerKind::T,
        stages: BTreeMap::from([("m0".to_string(), m0), ("m1".to_string(), m1)]),
        forest: None,
        propensity: propensity.clone(),
        final_stage: None,
        metadata,
    })
}

pub fn fit_s_learner(
    ds: &Dataset,
    propensity: &PropensityModel,
    opts: &FitOptions,
) -> Result<CateModel> {
    opts.validate()?;
    let w = build_s_matrix(&ds.features, &ds.treatment);
    let (m, hp) = tuned_fit(&w, &ds.outcome, None, Loss::Squared, opts, TAG_S)?;
    let mut metadata = base_metadata(ds, opts);
    metadata.stage_hyperparams.insert("m".into(), hp);
    Ok(CateModel {
        kind: LearnerKind::S,
        stages: BTreeMap::from([("m".to_string(), m)]),
        forest: None,
        propensity: propensity.clone(),
        final_stage: None,
        metadata,
    })
}

pub fn fit_x_learner(
    ds: &Dataset,
    propensity: &PropensityModel,
    opts: &FitOptions,
) -> Result<CateModel> {
    opts.validate()?;
    let (f0, y0) = arm_slices(ds, 0);
    let (f1, y1) = arm_slices(ds, 1);
    let (m0, hp_m0) = tuned_fit(&f0, &y0, None, Loss::Squared, opts, TAG_M0)?;
    let (m1, hp_m1) = tuned_fit(&f1, &y1, None, Loss::Squared, opts, TAG_M1)?;

    // Imputed effects: treated rows against the control surface, control
    // rows against the treated surface.
    let d1: Vec<f64> =
        y1.iter().zip(m0.predict(&f1)?).map(|(y, m)| y - m).collect();
    let d0: Vec<f64> =
        m1.predict(&f0)?.iter().zip(&y0).map(|(m, y)| m - y).collect();
    let (tau1, hp_t1) = tuned_fit(&f1, &d1, None, Loss::Squared, opts, TAG_TAU1)?;
    let (tau0, hp_t0) = tuned_fit(&f0, &d0, None, Loss::Squared, opts, TAG_TAU0)?;

    let mut metadata = base_metadata(ds, opts);
    metadata.stage_hyperparams.insert("m0".into(), hp_m0);
    metadata.stage_hyperparams.insert("m1".into(), hp_m1);
    metadata.stage_hyperparams.insert("tau0".into(), hp_t0);
    metadata.stage_hyperparams.insert("tau1".into(), hp_t1);
    Ok(CateModel {
        kind: LearnerKind::X,
        stages: BTreeMap::from([
            ("m0".to_string(), m0),
            ("m1".to_string(), m1),
            ("tau0".to_string(), tau0),
            ("tau1".to_string(), tau1),
        ]),
        forest: None,
        propensity: propensity.clone(),
        final_stage: None,
        metadata,
    })
}

/// Out-of-fold predictions of a regression tuned once on the full data
/// and refit per fold, so no row is scored by a model that saw it.
pub(crate) fn cross_fit_regression(
    features: &Matrix,
    targets: &[f64],
    folds: &FoldAssignment,
    opts: &FitOptions,
    tag: u64,
) -> Result<(Vec<f64>, Hyperparams)> {
    let mut rng = stage_rng(opts.seed, tag);
    let grid = opts.stage_grid(tag);
    let hp = if let Some(pinned) = opts.stage_hp.get(&tag) {
        pinned.clone()
    } else if grid.len() > 1 {
        tune_cv(features, targets, None, Loss::Squared, grid, opts.tune_folds, &mut rng)?
    } else {
        grid[0].clone()
    };
    let mut oof = vec![f64::NAN; features.n_rows()];
    for fold in 0..folds.k {
        let train = folds.train_rows(fold);
        let held = folds.fold_rows(fold);
        let tf = features.select_rows(&train);
        let tt: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
        let mut fold_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let model = fit_gbt(&tf, &tt, None, &hp, Loss::Squared, &mut fold_rng)?;
        let hf = features.select_rows(&held);
        for (slot, pred) in held.iter().zip(model.predict(&hf)?) {
            oof[*slot] = pred;
        }
    }
    Ok((oof, hp))
}

pub fn fit_r_learner(
    ds: &Dataset,
    propensity: &PropensityModel,
    opts: &FitOptions,
) -> Result<CateModel> {
    opts.validate()?;
    let mut fold_rng = stage_rng(opts.seed, TAG_FOLDS);
    let folds = split_folds(ds.n(), opts.nuisance_folds, &mut fold_rng)?;
    let (m_oof, hp_m) =
        cross_fit_regression(&ds.features, &ds.outcome, &folds, opts, TAG_RESPONSE)?;
    let p_hat = propensity.training_probs(ds.n())?;
    let (psi, weights) = r_pseudo_outcomes(&ds.outcome, &ds.treatment, &m_oof, &p_hat)?;
    let (final_stage, hp_f) =
        tuned_fit(&ds.features, &psi, Some(&weights), Loss::WeightedSquared, opts, TAG_FINAL)?;

    let mut metadata = base_metadata(ds, opts);
    metadata.stage_hyperparams.insert("response".into(), hp_m);
    metadata.stage_hyperparams.insert("final".into(), hp_f);
    Ok(CateModel {
        kind: LearnerKind::R,
        stages: BTreeMap::new(),
        forest: None,
        propensity: propensity.clone(),
        final_stage: Some(final_stage),
        metadata,
    })
}

pub fn fit_dr_learner(
    ds: &Dataset,
    propensity: &PropensityModel,
    opts: &FitOptions,
) -> Result<CateModel> {
    opts.validate()?;
    let mut fold_rng = stage_rng(opts.seed, TAG_FOLDS);
    let folds = split_folds(ds.n(), opts.nuisance_folds, &mut fold_rng)?;

    // Arm models are tuned once on their full arm, then refit per fold on
    // the fold's training slice of that arm.
    let (f0_all, y0_all) = arm_slices(ds, 0);
    let (f1_all, y1_all) = arm_slices(ds, 1);
    let mut rng0 = stage_rng(opts.seed, TAG_M0);
    let mut rng1 = stage_rng(opts.seed, TAG_M1);
    let arm_hp = |pinned: Option<&Hyperparams>,
                  f: &Matrix,
                  y: &[f64],
                  rng: &mut ChaCha8Rng|
     -> Result<Hyperparams> {
        if let Some(hp) = pinned {
            Ok(hp.clone())
        } else if opts.grid.len() > 1 {
            tune_cv(f, y, None, Loss::Squared, &opts.grid, opts.tune_folds, rng)
        } else {
            Ok(opts.grid[0].clone())
        }
    };
    let hp0 = arm_hp(opts.stage_hp.get(&TAG_M0), &f0_all, &y0_all, &mut rng0)?;
    let hp1 = arm_hp(opts.stage_hp.get(&TAG_M1), &f1_all, &y1_all, &mut rng1)?;

    let mut m0_oof = vec![f64::NAN; ds.n()];
    let mut m1_oof = vec![f64::NAN; ds.n()];
    for fold in 0..folds.k {
        let train = folds.train_rows(fold);
        let held = folds.fold_rows(fold);
        let t0: Vec<usize> = train.iter().copied().filter(|&i| ds.treatment[i] == 0).collect();
        let t1: Vec<usize> = train.iter().copied().filter(|&i| ds.treatment[i] == 1).collect();
        if t0.is_empty() || t1.is_empty() {
            return Err(Error::Data(format!(
                "cross-fitting fold {fold} leaves an empty arm"
            )));
        }
        let hf = ds.features.select_rows(&held);
        for (rows, hp, rng, oof) in [
            (&t0, &hp0, &mut rng0, &mut m0_oof),
            (&t1, &hp1, &mut rng1, &mut m1_oof),
        ] {
            let tf = ds.features.select_rows(rows);
            let tt: Vec<f64> = rows.iter().map(|&i| ds.outcome[i]).collect();
            let mut fold_rng = ChaCha8Rng::seed_from_u64(rng.gen());
            let model = fit_gbt(&tf, &tt, None, hp, Loss::Squared, &mut fold_rng)?;
            for (slot, pred) in held.iter().zip(model.predict(&hf)?) {
                oof[*slot] = pred;
            }
        }
    }

    let p_hat = propensity.training_probs(ds.n())?;
    let psi = dr_pseudo_outcomes(&ds.outcome, &ds.treatment, &m0_oof, &m1_oof, &p_hat)?;
    let (final_stage, hp_f) =
        tuned_fit(&ds.features, &psi, None, Loss::Squared, opts, TAG_FINAL)?;

    let mut metadata = base_metadata(ds, opts);
    metadata.stage_hyperparams.insert("m0".into(), hp0);
    metadata.stage_hyperparams.insert("m1".into(), hp1);
    metadata.stage_hyperparams.insert("final".into(), hp_f);
    Ok(CateModel {
        kind: LearnerKind::Dr,
        stages: BTreeMap::new(),
        forest: None,
        propensity: propensity.clone(),
        final_stage: Some(final_stage),
        metadata,
    })
}

pub fn fit_cf_learner(
    ds: &Dataset,
    propensity: &PropensityModel,
    opts: &FitOptions,
) -> Result<CateModel> {
    opts.validate()?;
    let seed = stage_rng(opts.seed, TAG_CF).gen();
    let forest = fit_causal_forest(ds, &opts.cf_params, seed)?;
    Ok(CateModel {
        kind: LearnerKind::Cf,
        stages: BTreeMap::new(),
        forest: Some(forest),
        propensity: propensity.clone(),
        final_stage: None,
        metadata: base_metadata(ds, opts),
    })
}

pub fn fit_cate(
    ds: &Dataset,
    kind: LearnerKind,
    propensity: &PropensityModel,
    opts: &FitOptions,
) -> Result<CateModel> {
    match kind {
        LearnerKind::T => fit_t_learner(ds, propensity, opts),
        LearnerKind::S => fit_s_learner(ds, propensity, opts),
        LearnerKind::X => fit_x_learner(ds, propensity, opts),
        LearnerKind::R => fit_r_learner(ds, propensity, opts),
        LearnerKind::Dr => fit_dr_learner(ds, propensity, opts),
        LearnerKind::Cf => fit_cf_learner(ds, propensity, opts),
    }
}

// ---------------------------------------------------------------------
// Attribution strategies
// ---------------------------------------------------------------------

/// Model-agnostic route: kernel attribution of the effect surface itself.
pub fn shap_strategy1(
    model: &CateModel,
    background: &Matrix,
    instances: &Matrix,
    config: &KernelShapConfig,
) -> Result<ShapMatrix> {
    let f = |m: &Matrix| model.predict_cate(m);
    kernel_shap(&f, background, instances, config)?
        .with_feature_names(&model.metadata.feature_names)
}

/// Exact tree attribution of the final pseudo-outcome regression; only
/// learners that reduce to one supervised model support it.
pub fn shap_strategy2(model: &CateModel, instances: &Matrix) -> Result<ShapMatrix> {
    let Some(final_stage) = model.final_stage.as_ref() else {
        return Err(Error::Config(format!(
            "strategy 2 needs a final-stage ensemble; the {} learner has none",
            model.kind
        )));
    };
    tree_shap(final_stage, instances)?.with_feature_names(&model.metadata.feature_names)
}

/// Surrogate route: fit a plain regression of the model's own effect
/// estimates on the covariates, then explain the surrogate exactly.
pub fn shap_strategy3(
    model: &CateModel,
    train_features: &Matrix,
    instances: &Matrix,
    opts: &FitOptions,
) -> Result<(TreeEnsemble, ShapMatrix)> {
    opts.validate()?;
    let tau = model.predict_cate(train_features)?;
    let (surrogate, _) =
        tuned_fit(train_features, &tau, None, Loss::Squared, opts, TAG_SURROGATE)?;
    let shap =
        tree_shap(&surrogate, instances)?.with_feature_names(&model.metadata.feature_names)?;
    Ok((surrogate, shap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::pearson;
    use crate::shap::MaskMode;
    use crate::simgen::{simulate, Scenario, ScenarioKind};
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Normal};

    fn quick_opts(seed: u64) -> FitOptions {
        FitOptions {
            grid: vec![Hyperparams {
                n_rounds: 120,
                min_child_weight: 5.0,
                ..Hyperparams::default()
            }],
            patience: 15,
            seed,
            ..FitOptions::default()
        }
    }

    /// y = x0 + effect(x)*A + noise, A ~ Bern(0.5).
    fn synth(n: usize, p: usize, effect: impl Fn(&[f64]) -> f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut a = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..p).map(|_| norm.sample(&mut rng)).collect();
            let t = u8::from(rng.gen::<f64>() < 0.5);
            y.push(x[0] + effect(&x) * f64::from(t) + 0.3 * norm.sample(&mut rng));
            rows.push(x);
            a.push(t);
        }
        Dataset::new(
            Matrix::from_rows(&rows).unwrap(),
            (1..=p).map(|j| format!("x{j}")).collect(),
            Default::default(),
            a,
            y,
            None,
            None,
        )
        .unwrap()
    }

    fn known_half() -> PropensityModel {
        PropensityModel::known_constant(0.5).unwrap()
    }

    #[test]
    fn s_matrix_layout_matches_hand_example() {
        let f = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let w = build_s_matrix(&f, &[1, 0]);
        assert_eq!(w.n_cols(), 7);
        assert_eq!(w.row(0), vec![1.0, 2.0, 1.0, 0.0, 0.0, 1.0, 2.0]);
        assert_eq!(w.row(1), vec![3.0, 4.0, 0.0, 3.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn s_matrix_width_is_3p_plus_1() {
        let f = Matrix::zeros(4, 19);
        assert_eq!(build_s_matrix(&f, &[0, 1, 0, 1]).n_cols(), 58);
    }

    #[test]
    fn r_pseudo_outcome_hand_values() {
        let (psi, w) = r_pseudo_outcomes(&[2.0], &[1], &[1.0], &[0.75]).unwrap();
        assert_abs_diff_eq!(psi[0], 4.0);
        assert_abs_diff_eq!(w[0], 0.0625);

        let (psi, _) = r_pseudo_outcomes(&[1.5], &[1], &[1.5], &[0.3]).unwrap();
        assert_abs_diff_eq!(psi[0], 0.0);

        let (psi, w) = r_pseudo_outcomes(&[1.0], &[0], &[0.0], &[0.5]).unwrap();
        assert_abs_diff_eq!(psi[0], -2.0);
        assert_abs_diff_eq!(w[0], 0.25);

        assert!(r_pseudo_outcomes(&[1.0], &[1], &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn dr_pseudo_outcome_hand_values() {
        let psi = dr_pseudo_outcomes(&[2.0], &[1], &[0.0], &[1.0], &[0.5]).unwrap();
        assert_abs_diff_eq!(psi[0], 3.0);

        // Outcomes equal to the observed arm's model: residual terms vanish.
        let psi =
            dr_pseudo_outcomes(&[4.0, 1.0], &[1, 0], &[1.0, 1.0], &[4.0, 4.0], &[0.3, 0.3])
                .unwrap();
        assert_abs_diff_eq!(psi[0], 3.0);
        assert_abs_diff_eq!(psi[1], 3.0);

        assert!(dr_pseudo_outcomes(&[1.0], &[1], &[0.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn ipw_pseudo_outcome_hand_values() {
        let psi = ipw_pseudo_outcomes(&[2.0, 0.0], &[1, 1], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(psi[0], 4.0);
        assert_abs_diff_eq!(psi[1], 0.0);
    }

    #[test]
    fn ipw_mean_reproduces_difference_in_means() {
        let ds = synth(400, 3, |x| x[1], 7);
        let n1 = ds.treated_rows().len();
        let p = n1 as f64 / ds.n() as f64;
        let psi = ipw_pseudo_outcomes(&ds.outcome, &ds.treatment, &vec![p; ds.n()]).unwrap();
        let mean_psi = psi.iter().sum::<f64>() / psi.len() as f64;
        let mean =
            |rows: &[usize]| rows.iter().map(|&i| ds.outcome[i]).sum::<f64>() / rows.len() as f64;
        let dim = mean(&ds.treated_rows()) - mean(&ds.control_rows());
        assert_abs_diff_eq!(mean_psi, dim, epsilon = 1e-10);
    }

    #[test]
    fn known_constant_propensity_is_flat_and_validated() {
        let pm = PropensityModel::known_constant(0.75).unwrap();
        assert_eq!(pm.training_probs(3).unwrap(), vec![0.75; 3]);
        assert_eq!(pm.predict(&Matrix::zeros(2, 4)).unwrap(), vec![0.75; 2]);
        assert!(PropensityModel::known_constant(0.0).is_err());
        assert!(PropensityModel::known_constant(1.0).is_err());
    }

    #[test]
    fn estimated_propensity_tracks_null_assignment_rate() {
        let ds = synth(600, 4, |_| 0.0, 11);
        let pm = fit_propensity(&ds, PropensitySpec::Estimate, &quick_opts(1)).unwrap();
        let probs = pm.training_probs(ds.n()).unwrap();
        let frac = ds.treated_rows().len() as f64 / ds.n() as f64;
        let mean = probs.iter().sum::<f64>() / probs.len() as f64;
        assert!((mean - frac).abs() < 0.05, "mean p-hat {mean} vs fraction {frac}");
        for pr in probs {
            assert!(pr >= DEFAULT_CLIP.0 && pr <= DEFAULT_CLIP.1);
        }
    }

    #[test]
    fn estimated_propensity_recovers_confounded_rate() {
        let ds =
            simulate(&Scenario { n: 3000, ..Scenario::new(ScenarioKind::S3, 5) }).unwrap();
        let pm = fit_propensity(&ds, PropensitySpec::Estimate, &quick_opts(2)).unwrap();
        let probs = pm.training_probs(ds.n()).unwrap();
        let mean = probs.iter().sum::<f64>() / probs.len() as f64;
        assert!((mean - 0.25).abs() < 0.02, "mean estimated propensity {mean}");
    }

    #[test]
    fn single_arm_fold_is_rejected() {
        let ds = synth(60, 3, |_| 0.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let folds = split_folds(ds.n(), 5, &mut rng).unwrap();
        // Relabel so every treated row sits in fold 0: its training
        // complement exists, but every other fold trains single-arm-free
        // while fold 0's own training slice has no treated rows at all.
        let mut ds2 = ds;
        for i in 0..ds2.n() {
            ds2.treatment[i] = u8::from(folds.fold_of[i] == 0);
        }
        let err = fit_propensity_with_folds(&ds2, &folds, &quick_opts(4));
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn cross_fitting_ignores_each_rows_own_target() {
        let ds = synth(200, 3, |x| x[1], 13);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let folds = split_folds(ds.n(), 5, &mut rng).unwrap();
        let opts = quick_opts(6);
        let (oof_a, _) =
            cross_fit_regression(&ds.features, &ds.outcome, &folds, &opts, TAG_RESPONSE)
                .unwrap();
        let mut poisoned = ds.outcome.clone();
        poisoned[17] += 1.0e6;
        let (oof_b, _) =
            cross_fit_regression(&ds.features, &poisoned, &folds, &opts, TAG_RESPONSE).unwrap();
        assert_eq!(oof_a[17], oof_b[17]);
        assert!(oof_a.iter().zip(&oof_b).any(|(a, b)| a != b));
    }

    #[test]
    fn t_learner_shift_in_treated_outcomes_moves_tau_by_c() {
        let ds = synth(500, 4, |x| x[1], 17);
        let opts = quick_opts(8);
        let base = fit_t_learner(&ds, &known_half(), &opts).unwrap();
        let tau_a = base.predict_cate(&ds.features).unwrap();

        let mut shifted = ds.clone();
        for i in 0..shifted.n() {
            if shifted.treatment[i] == 1 {
                shifted.outcome[i] += 5.0;
            }
        }
        let moved = fit_t_learner(&shifted, &known_half(), &opts).unwrap();
        let tau_b = moved.predict_cate(&ds.features).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let delta = mean(&tau_b) - mean(&tau_a);
        assert!((delta - 5.0).abs() < 0.5, "mean shift {delta}");
    }

    #[test]
    fn null_effect_gives_near_zero_t_and_s_estimates() {
        let ds = synth(500, 4, |_| 0.0, 19);
        let opts = quick_opts(10);
        for kind in [LearnerKind::T, LearnerKind::S] {
            let model = fit_cate(&ds, kind, &known_half(), &opts).unwrap();
            let tau = model.predict_cate(&ds.features).unwrap();
            let mean = tau.iter().sum::<f64>() / tau.len() as f64;
            assert!(mean.abs() < 0.1, "{kind} learner mean {mean}");
        }
    }

    #[test]
    fn s_learner_arm_relabel_flips_the_sign() {
        let ds = synth(500, 4, |x| 1.0 + x[1], 23);
        let opts = quick_opts(12);
        let fwd = fit_s_learner(&ds, &known_half(), &opts).unwrap();
        let tau_f = fwd.predict_cate(&ds.features).unwrap();

        let mut flipped = ds.clone();
        for a in flipped.treatment.iter_mut() {
            *a = 1 - *a;
        }
        let rev = fit_s_learner(&flipped, &known_half(), &opts).unwrap();
        let tau_r = rev.predict_cate(&ds.features).unwrap();

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(pearson(&tau_f, &tau_r) < -0.9);
        assert!((mean(&tau_f) + mean(&tau_r)).abs() < 0.15);
    }

    #[test]
    fn x_combiner_respects_degenerate_weights() {
        let tau0 = vec![1.0, 2.0];
        let tau1 = vec![3.0, 5.0];
        assert_eq!(combine_x(&tau0, &tau1, &[0.0, 0.0]), tau1);
        assert_eq!(combine_x(&tau0, &tau1, &[1.0, 1.0]), tau0);
        assert_eq!(combine_x(&tau0, &tau0, &[0.3, 0.8]), tau0);
    }

    #[test]
    fn x_learner_prediction_lies_between_imputed_surfaces() {
        let ds = synth(500, 4, |x| x[1].max(0.0), 29);
        let model = fit_x_learner(&ds, &known_half(), &quick_opts(14)).unwrap();
        let tau = model.predict_cate(&ds.features).unwrap();
        let t0 = model.stages["tau0"].predict(&ds.features).unwrap();
        let t1 = model.stages["tau1"].predict(&ds.features).unwrap();
        for i in 0..ds.n() {
            let lo = t0[i].min(t1[i]) - 1e-12;
            let hi = t0[i].max(t1[i]) + 1e-12;
            assert!(tau[i] >= lo && tau[i] <= hi);
        }
    }

    #[test]
    fn r_learner_null_effect_stays_below_noise_floor() {
        let ds = synth(600, 4, |_| 0.0, 31);
        let model = fit_r_learner(&ds, &known_half(), &quick_opts(16)).unwrap();
        let tau = model.predict_cate(&ds.features).unwrap();
        let mean_abs = tau.iter().map(|t| t.abs()).sum::<f64>() / tau.len() as f64;
        assert!(mean_abs < 0.15, "mean |tau| {mean_abs}");
    }

    #[test]
    fn r_learner_scales_with_doubled_outcomes() {
        let ds = synth(500, 4, |x| x[1], 37);
        let opts = quick_opts(18);
        let base = fit_r_learner(&ds, &known_half(), &opts).unwrap();
        let tau_a = base.predict_cate(&ds.features).unwrap();

        let mut doubled = ds.clone();
        for y in doubled.outcome.iter_mut() {
            *y *= 2.0;
        }
        let scaled = fit_r_learner(&doubled, &known_half(), &opts).unwrap();
        let tau_b = scaled.predict_cate(&ds.features).unwrap();
        let twice: Vec<f64> = tau_a.iter().map(|t| 2.0 * t).collect();
        assert!(pearson(&twice, &tau_b) > 0.99);
    }

    #[test]
    fn dr_learner_known_and_estimated_propensity_agree_on_rct() {
        let ds = synth(700, 4, |x| 2.0 * f64::from(x[1] > 0.0), 41);
        let opts = quick_opts(20);
        let known = fit_dr_learner(&ds, &known_half(), &opts).unwrap();
        let est_pm = fit_propensity(&ds, PropensitySpec::Estimate, &opts).unwrap();
        let est = fit_dr_learner(&ds, &est_pm, &opts).unwrap();
        let tau_k = known.predict_cate(&ds.features).unwrap();
        let tau_e = est.predict_cate(&ds.features).unwrap();
        assert!(pearson(&tau_k, &tau_e) > 0.95);
    }

    #[test]
    fn dr_scores_with_true_nuisances_average_to_the_oracle_effect() {
        let n = 400_000;
        let sc = Scenario { n, ..Scenario::new(ScenarioKind::S2, 43) };
        let ds = simulate(&sc).unwrap();
        let tau = ds.oracle_tau.as_ref().unwrap();
        // True arm means: reconstruct the prognostic part from the
        // modeling columns and the dummy coding.
        let codes = crate::simgen::DEFAULT_X2_CODES;
        let mut m0 = Vec::with_capacity(n);
        let mut m1 = Vec::with_capacity(n);
        for i in 0..n {
            let x1 = ds.features.get(i, 0);
            let lvl =
                if ds.features.get(i, 1) == 1.0 { 1 } else { usize::from(ds.features.get(i, 2) == 1.0) * 2 };
            let spread: f64 = (4..9).map(|j| ds.features.get(i, j)).sum();
            let k1 = -(x1 + 5.0 * codes[lvl]) + 2.0 * spread;
            m0.push(100.0 + k1);
            m1.push(100.0 + k1 + tau[i]);
        }
        let psi =
            dr_pseudo_outcomes(&ds.outcome, &ds.treatment, &m0, &m1, &vec![0.75; n]).unwrap();
        let mean = psi.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.0119).abs() < 0.015, "mean DR score {mean}");
    }

    #[test]
    fn predictions_are_deterministic_given_seed() {
        let ds = synth(400, 4, |x| x[1], 47);
        let opts = quick_opts(22);
        let a = fit_dr_learner(&ds, &known_half(), &opts).unwrap();
        let b = fit_dr_learner(&ds, &known_half(), &opts).unwrap();
        assert_eq!(
            a.predict_cate(&ds.features).unwrap(),
            b.predict_cate(&ds.features).unwrap()
        );
    }

    #[test]
    fn model_json_round_trip_preserves_predictions() {
        let ds = synth(300, 3, |x| x[1], 53);
        let model = fit_s_learner(&ds, &known_half(), &quick_opts(24)).unwrap();
        let back = CateModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(
            model.predict_cate(&ds.features).unwrap(),
            back.predict_cate(&ds.features).unwrap()
        );
    }

    fn constant_surface_model(ds: &Dataset, opts: &FitOptions) -> CateModel {
        // Constant targets make every stage collapse to its base score.
        let mut flat = ds.clone();
        for (i, y) in flat.outcome.iter_mut().enumerate() {
            *y = if flat.treatment[i] == 1 { 3.0 } else { 1.0 };
        }
        let mut model = fit_t_learner(&flat, &known_half(), opts).unwrap();
        // Give it a final stage over a constant pseudo-outcome so every
        // strategy has something to chew on.
        let psi = vec![2.0; flat.n()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let final_stage =
            fit_gbt(&flat.features, &psi, None, &opts.grid[0], Loss::Squared, &mut rng).unwrap();
        model.final_stage = Some(final_stage);
        model.kind = LearnerKind::R;
        model
    }

    #[test]
    fn constant_effect_surface_zeroes_every_strategy() {
        let ds = synth(120, 4, |_| 0.0, 59);
        let opts = quick_opts(26);
        let model = constant_surface_model(&ds, &opts);
        let tau = model.predict_cate(&ds.features).unwrap();
        for t in &tau {
            assert_abs_diff_eq!(*t, 2.0, epsilon = 1e-9);
        }

        let background = ds.features.select_rows(&(0..40).collect::<Vec<_>>());
        let inst = ds.features.select_rows(&[0, 1, 2]);
        let cfg = KernelShapConfig { mode: MaskMode::Exact, seed: 0 };
        let s1 = shap_strategy1(&model, &background, &inst, &cfg).unwrap();
        let s2 = shap_strategy2(&model, &inst).unwrap();
        let (_, s3) = shap_strategy3(&model, &ds.features, &inst, &opts).unwrap();
        for sm in [&s1, &s2, &s3] {
            for i in 0..sm.phi.n_rows() {
                for j in 0..sm.phi.n_cols() {
                    assert!(sm.phi.get(i, j).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn strategy2_requires_a_reducible_learner() {
        let ds = synth(300, 3, |x| x[1], 61);
        let model = fit_t_learner(&ds, &known_half(), &quick_opts(28)).unwrap();
        assert!(matches!(
            shap_strategy2(&model, &ds.features),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn strategies_satisfy_local_accuracy_on_their_surfaces() {
        let ds = synth(500, 4, |x| x[1].max(0.0), 67);
        let opts = quick_opts(30);
        let model = fit_r_learner(&ds, &known_half(), &opts).unwrap();
        let inst = ds.features.select_rows(&(0..25).collect::<Vec<_>>());
        let s2 = shap_strategy2(&model, &inst).unwrap();
        assert!(s2.max_local_accuracy_violation() < 1e-8);
        let (surrogate, s3) = shap_strategy3(&model, &ds.features, &inst, &opts).unwrap();
        assert!(s3.max_local_accuracy_violation() < 1e-8);
        assert_eq!(s3.predictions, surrogate.predict(&inst).unwrap());
    }
}
