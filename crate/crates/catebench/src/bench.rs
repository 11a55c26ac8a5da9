//! Seeded multi-iteration benchmark over (scenario x learner x
//! attribution route), with per-cell failure isolation, ordered parallel
//! execution, and mean +/- SE aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cforest::{cf_vip, CF_VIP_DECAY, CF_VIP_DEPTH};
use crate::data::{fmt_f64, mean_se, pearson, Dataset, Matrix};
use crate::error::{Error, Result};
use crate::gbt::{compact_grid, fit_gbt, noisy_target_grid, tune_cv, Hyperparams, Loss};
use crate::learners::{
    fit_cate, fit_propensity, pseudo_outcome_stage, shap_strategy1, shap_strategy2,
    shap_strategy3, stage_tag, CateModel, FitOptions, LearnerKind, PropensitySpec,
    TAG_SURROGATE,
};
use crate::metrics::{
    instance_stats, margin_normalized, net3, recovery_corr, top1, Normalization,
};
use crate::shap::{summary_shap, KernelShapConfig, ShapMatrix};
use crate::simgen::{simulate, Scenario, ScenarioKind, DEFAULT_X2_CODES};

fn default_scenarios() -> Vec<ScenarioKind> {
    vec![ScenarioKind::S2]
}

fn default_n_values() -> Vec<usize> {
    vec![1000]
}

fn default_beta_values() -> Vec<f64> {
    vec![1.0]
}

fn default_iterations() -> usize {
    50
}

fn default_learners() -> Vec<LearnerKind> {
    LearnerKind::ALL.to_vec()
}

fn default_strategies() -> Vec<u8> {
    vec![3]
}

fn default_folds() -> usize {
    5
}

fn default_test_n() -> usize {
    10_000
}

fn default_kernel_background() -> usize {
    100
}

fn default_strategy1_instances() -> usize {
    100
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("bench_out")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchConfig {
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<ScenarioKind>,
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_beta_values")]
    pub beta_values: Vec<f64>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_learners")]
    pub learners: Vec<LearnerKind>,
    /// Attribution routes to run: 1 kernel on the effect surface, 2 exact
    /// on the final stage (R/DR only), 3 exact on a surrogate.
    #[serde(default = "default_strategies")]
    pub strategies: Vec<u8>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_folds")]
    pub nuisance_folds: usize,
    /// Tune stage hyperparameters on a pilot draw only, instead of every
    /// iteration.
    #[serde(default)]
    pub tune_once: bool,
    /// Stage tuning grid; None means the built-in compact grid.
    #[serde(default)]
    pub grid: Option<Vec<Hyperparams>>,
    /// Grid for the pseudo-outcome stages; None means the compact grid
    /// extended with heavy-averaging candidates (see
    /// `default_pseudo_grid`).
    #[serde(default)]
    pub pseudo_grid: Option<Vec<Hyperparams>>,
    #[serde(default)]
    pub kernel: KernelShapConfig,
    /// Background rows for the kernel route, taken from the head of the
    /// training draw.
    #[serde(default = "default_kernel_background")]
    pub kernel_background: usize,
    /// Instances explained by the kernel route (it is the costly one);
    /// the exact routes always explain the full training draw.
    #[serde(default = "default_strategy1_instances")]
    pub strategy1_instances: usize,
    /// Size of the independent draw used for cor(tau, tau_hat).
    #[serde(default = "default_test_n")]
    pub test_n: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub normalization: Normalization,
    /// Forces one propensity treatment for every scenario; None keeps the
    /// per-scenario default (known constant for randomized designs,
    /// estimated for the confounded one).
    #[serde(default)]
    pub propensity_override: Option<PropensitySpec>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: BenchConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.scenarios.is_empty() || self.n_values.is_empty() || self.beta_values.is_empty() {
            return Err(Error::Config("scenarios, n_values, beta_values must be nonempty".into()));
        }
        if self.learners.is_empty() {
            return Err(Error::Config("no learners requested".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("no attribution strategies requested".into()));
        }
        for &s in &self.strategies {
            if !(1..=3).contains(&s) {
                return Err(Error::Config(format!("unknown strategy {s}")));
            }
        }
        if self.strategies.contains(&2)
            && !self.learners.iter().any(|k| k.has_final_stage())
        {
            return Err(Error::Config(
                "strategy 2 needs a learner with a final stage (R or DR)".into(),
            ));
        }
        for &kind in &self.scenarios {
            if kind == ScenarioKind::SinToy {
                return Err(Error::Config(
                    "the sine toy has no treatment effect to benchmark".into(),
                ));
            }
            for &n in &self.n_values {
                for &beta in &self.beta_values {
                    Scenario { kind, n, beta, seed: 0, x2_codes: DEFAULT_X2_CODES }.validate()?;
                }
            }
        }
        if self.test_n < 2 {
            return Err(Error::Config("test_n must be at least 2".into()));
        }
        if self.kernel_background < 1 || self.strategy1_instances < 2 {
            return Err(Error::Config(
                "kernel route needs at least 1 background row and 2 instances".into(),
            ));
        }
        if self.nuisance_folds < 2 {
            return Err(Error::Config("cross-fitting needs at least 2 folds".into()));
        }
        Ok(())
    }

    fn grid(&self) -> Vec<Hyperparams> {
        self.grid.clone().unwrap_or_else(|| compact_grid(200))
    }

    fn pseudo_grid(&self) -> Vec<Hyperparams> {
        self.pseudo_grid.clone().unwrap_or_else(noisy_target_grid)
    }

    fn fit_options(&self, seed: u64) -> FitOptions {
        FitOptions {
            grid: self.grid(),
            pseudo_grid: Some(self.pseudo_grid()),
            nuisance_folds: self.nuisance_folds,
            seed,
            ..FitOptions::default()
        }
    }
}

/// One benchmark cell: a learner and attribution route on one simulated
/// iteration. Timing fields are observational and excluded from the
/// deterministic records file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: usize,
    pub scenario: String,
    pub n: usize,
    pub beta: f64,
    pub learner: String,
    /// "1", "2", "3", or "vip" for the forest's split-count ranking.
    pub strategy: String,
    pub status: String,
    pub top1: Option<f64>,
    pub net3: Option<f64>,
    pub margin: Option<f64>,
    pub cor_tau_tauhat: Option<f64>,
    pub max_p: Option<f64>,
    pub max_np: Option<f64>,
    pub p_win: Option<f64>,
    pub cor3: Option<f64>,
    pub cor4: Option<f64>,
    pub sim_ms: u64,
    pub fit_ms: u64,
    pub shap_ms: u64,
    pub total_ms: u64,
    pub error: Option<String>,
}

impl MetricRecord {
    fn blank(combo: &Combo, iteration: usize, learner: LearnerKind, strategy: &str) -> Self {
        MetricRecord {
            iteration,
            scenario: combo.kind.to_string(),
            n: combo.n,
            beta: combo.beta,
            learner: learner.to_string(),
            strategy: strategy.to_string(),
            status: "ok".into(),
            top1: None,
            net3: None,
            margin: None,
            cor_tau_tauhat: None,
            max_p: None,
            max_np: None,
            p_win: None,
            cor3: None,
            cor4: None,
            sim_ms: 0,
            fit_ms: 0,
            shap_ms: 0,
            total_ms: 0,
            error: None,
        }
    }

    fn failed(mut self, err: &Error) -> Self {
        self.status = "failed".into();
        self.error = Some(err.to_string());
        self
    }
}

#[derive(Clone, Copy, Debug)]
struct Combo {
    kind: ScenarioKind,
    n: usize,
    beta: f64,
}

/// Expected strategy cells for a learner under this config, in emission
/// order. The forest's own ranking rides along as a free extra cell.
fn cell_strategies(cfg: &BenchConfig, learner: LearnerKind) -> Vec<String> {
    let mut out = Vec::new();
    for &s in &cfg.strategies {
        if s == 2 && !learner.has_final_stage() {
            continue;
        }
        out.push(s.to_string());
    }
    if learner == LearnerKind::Cf {
        out.push("vip".to_string());
    }
    out
}

pub struct BenchOutcome {
    pub records: Vec<MetricRecord>,
    pub summary: Vec<SummaryRow>,
    pub failed_cells: usize,
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchOutcome> {
    cfg.validate()?;
    let mut combos = Vec::new();
    for &kind in &cfg.scenarios {
        for &n in &cfg.n_values {
            for &beta in &cfg.beta_values {
                combos.push(Combo { kind, n, beta });
            }
        }
    }

    let pinned: Vec<BTreeMap<LearnerKind, BTreeMap<u64, Hyperparams>>> = if cfg.tune_once {
        combos.iter().map(|c| pilot_tuning(cfg, c)).collect::<Result<_>>()?
    } else {
        vec![BTreeMap::new(); combos.len()]
    };

    let tasks: Vec<(usize, usize)> = combos
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| (0..cfg.iterations).map(move |it| (ci, it)))
        .collect();

    let record_groups: Vec<Vec<MetricRecord>> = tasks
        .par_iter()
        .map(|&(ci, iteration)| run_task(cfg, &combos[ci], iteration, &pinned[ci]))
        .collect();

    let records: Vec<MetricRecord> = record_groups.into_iter().flatten().collect();
    let failed_cells = records.iter().filter(|r| r.status == "failed").count();
    let summary = aggregate(&records);
    Ok(BenchOutcome { records, summary, failed_cells })
}

/// Tune each learner's stages once on the iteration-0 draw and pin the
/// winning settings (round counts stay adaptive). The kernel and exact
/// routes need no tuning; the surrogate route gets its own pinned entry.
fn pilot_tuning(
    cfg: &BenchConfig,
    combo: &Combo,
) -> Result<BTreeMap<LearnerKind, BTreeMap<u64, Hyperparams>>> {
    let seed = cfg.master_seed;
    let sc = Scenario {
        kind: combo.kind,
        n: combo.n,
        beta: combo.beta,
        seed,
        x2_codes: DEFAULT_X2_CODES,
    };
    let ds = simulate(&sc)?;
    let opts = cfg.fit_options(seed);
    let prop = fit_propensity(&ds, propensity_spec(cfg, &sc), &opts)?;
    let cap_over = |g: &[Hyperparams]| g.iter().map(|h| h.n_rounds).max().unwrap_or(200);
    let round_cap = cap_over(&opts.grid);
    let pseudo_cap = opts.pseudo_grid.as_deref().map_or(round_cap, cap_over);

    let mut out = BTreeMap::new();
    for &learner in &cfg.learners {
        let model = fit_cate(&ds, learner, &prop, &opts)?;
        let mut pinned = BTreeMap::new();
        for (name, hp) in &model.metadata.stage_hyperparams {
            if let Some(tag) = stage_tag(learner, name) {
                let cap = if pseudo_outcome_stage(tag) { pseudo_cap } else { round_cap };
                pinned.insert(tag, Hyperparams { n_rounds: cap, ..hp.clone() });
            }
        }
        if cfg.strategies.contains(&3) {
            let tau = model.predict_cate(&ds.features)?;
            let mut rng = rand::SeedableRng::seed_from_u64(seed ^ 0x5eed);
            let hp = tune_cv(
                &ds.features,
                &tau,
                None,
                Loss::Squared,
                &opts.grid,
                opts.tune_folds,
                &mut rng,
            )?;
            pinned.insert(TAG_SURROGATE, Hyperparams { n_rounds: round_cap, ..hp });
        }
        out.insert(learner, pinned);
    }
    Ok(out)
}

fn propensity_spec(cfg: &BenchConfig, sc: &Scenario) -> PropensitySpec {
    if let Some(spec) = cfg.propensity_override {
        return spec;
    }
    match sc.known_propensity() {
        Some(p) => PropensitySpec::KnownConstant(p),
        None => PropensitySpec::Estimate,
    }
}

fn run_task(
    cfg: &BenchConfig,
    combo: &Combo,
    iteration: usize,
    pinned: &BTreeMap<LearnerKind, BTreeMap<u64, Hyperparams>>,
) -> Vec<MetricRecord> {
    let seed = cfg.master_seed ^ iteration as u64;
    let mut records = Vec::new();

    let all_failed = |err: Error, sim_ms: u64| -> Vec<MetricRecord> {
        let mut out = Vec::new();
        for &learner in &cfg.learners {
            for strategy in cell_strategies(cfg, learner) {
                let mut r =
                    MetricRecord::blank(combo, iteration, learner, &strategy).failed(&err);
                r.sim_ms = sim_ms;
                r.total_ms = sim_ms;
                out.push(r);
            }
        }
        out
    };

    let t_sim = Instant::now();
    let train_sc = Scenario {
        kind: combo.kind,
        n: combo.n,
        beta: combo.beta,
        seed,
        x2_codes: DEFAULT_X2_CODES,
    };
    let test_sc = Scenario {
        kind: combo.kind,
        n: cfg.test_n,
        beta: combo.beta,
        seed: seed ^ 0x9E37_79B9_7F4A_7C15,
        x2_codes: DEFAULT_X2_CODES,
    };
    let (ds, ds_test) = match simulate(&train_sc).and_then(|a| Ok((a, simulate(&test_sc)?))) {
        Ok(pair) => pair,
        Err(e) => return all_failed(e, t_sim.elapsed().as_millis() as u64),
    };
    let sim_ms = t_sim.elapsed().as_millis() as u64;

    let predictive = match ds.oracle_predictive_set.clone() {
        Some(s) => s,
        None => {
            return all_failed(
                Error::Data("scenario carries no predictive set".into()),
                sim_ms,
            )
        }
    };

    let opts_base = cfg.fit_options(seed);
    let prop = match fit_propensity(&ds, propensity_spec(cfg, &train_sc), &opts_base) {
        Ok(p) => p,
        Err(e) => return all_failed(e, sim_ms),
    };

    for &learner in &cfg.learners {
        let opts = FitOptions {
            stage_hp: pinned.get(&learner).cloned().unwrap_or_default(),
            ..opts_base.clone()
        };
        let t_fit = Instant::now();
        let fitted = fit_cate(&ds, learner, &prop, &opts).and_then(|model| {
            let tau_train = model.predict_cate(&ds.features)?;
            let tau_test = model.predict_cate(&ds_test.features)?;
            Ok((model, tau_train, tau_test))
        });
        let fit_ms = t_fit.elapsed().as_millis() as u64;

        let (model, tau_train, tau_test) = match fitted {
            Ok(tuple) => tuple,
            Err(e) => {
                for strategy in cell_strategies(cfg, learner) {
                    let mut r =
                        MetricRecord::blank(combo, iteration, learner, &strategy).failed(&e);
                    r.sim_ms = sim_ms;
                    r.fit_ms = fit_ms;
                    r.total_ms = sim_ms + fit_ms;
                    records.push(r);
                }
                continue;
            }
        };
        let cor_tau = ds_test
            .oracle_tau
            .as_ref()
            .map(|oracle| pearson(oracle, &tau_test));

        for strategy in cell_strategies(cfg, learner) {
            let t_shap = Instant::now();
            let cell = score_cell(
                cfg, combo, &ds, &model, &tau_train, &predictive, &strategy, &opts,
            );
            let shap_ms = t_shap.elapsed().as_millis() as u64;
            let mut r = MetricRecord::blank(combo, iteration, learner, &strategy);
            r.sim_ms = sim_ms;
            r.fit_ms = fit_ms;
            r.shap_ms = shap_ms;
            r.total_ms = sim_ms + fit_ms + shap_ms;
            r.cor_tau_tauhat = cor_tau;
            match cell {
                Ok(scored) => {
                    r.top1 = Some(scored.top1);
                    r.net3 = Some(scored.net3);
                    r.margin = Some(scored.margin);
                    r.max_p = scored.max_p;
                    r.max_np = scored.max_np;
                    r.p_win = scored.p_win;
                    r.cor3 = scored.cor3;
                    r.cor4 = scored.cor4;
                }
                Err(e) => r = r.failed(&e),
            }
            records.push(r);
        }
    }
    records
}

struct ScoredCell {
    top1: f64,
    net3: f64,
    margin: f64,
    max_p: Option<f64>,
    max_np: Option<f64>,
    p_win: Option<f64>,
    cor3: Option<f64>,
    cor4: Option<f64>,
}

fn score_cell(
    cfg: &BenchConfig,
    combo: &Combo,
    ds: &Dataset,
    model: &CateModel,
    tau_train: &[f64],
    predictive: &BTreeSet<usize>,
    strategy: &str,
    opts: &FitOptions,
) -> Result<ScoredCell> {
    // The forest ranking has no per-instance attributions: rank-level
    // metrics only.
    if strategy == "vip" {
        let forest = model
            .forest
            .as_ref()
            .ok_or_else(|| Error::Fit("vip cell without a forest".into()))?;
        let importance = cf_vip(forest, CF_VIP_DEPTH, CF_VIP_DECAY);
        return Ok(ScoredCell {
            top1: top1(&importance, predictive)?,
            net3: net3(&importance, predictive)?,
            margin: margin_normalized(&importance, predictive, cfg.normalization)?,
            max_p: None,
            max_np: None,
            p_win: None,
            cor3: None,
            cor4: None,
        });
    }

    let (shap, instance_rows): (ShapMatrix, Vec<usize>) = match strategy {
        "1" => {
            let b = cfg.kernel_background.min(ds.n());
            let m = cfg.strategy1_instances.min(ds.n());
            let background = ds.features.select_rows(&(0..b).collect::<Vec<_>>());
            let rows: Vec<usize> = (0..m).collect();
            let instances = ds.features.select_rows(&rows);
            (shap_strategy1(model, &background, &instances, &cfg.kernel)?, rows)
        }
        "2" => (shap_strategy2(model, &ds.features)?, (0..ds.n()).collect()),
        "3" => {
            let (_, shap) = shap_strategy3(model, &ds.features, &ds.features, opts)?;
            (shap, (0..ds.n()).collect())
        }
        other => return Err(Error::Config(format!("unknown strategy {other}"))),
    };

    let summary = summary_shap(&shap);
    let tau_slice: Vec<f64> = instance_rows.iter().map(|&i| tau_train[i]).collect();
    let stats = instance_stats(&shap, &tau_slice, predictive)?;
    let (cor3, cor4) = if combo.kind.is_biomarker() {
        let feats = ds.features.select_rows(&instance_rows);
        let (c3, c4) = recovery_corr(&shap, &feats)?;
        (Some(c3), Some(c4))
    } else {
        (None, None)
    };

    Ok(ScoredCell {
        top1: top1(&summary.importance, predictive)?,
        net3: net3(&summary.importance, predictive)?,
        margin: margin_normalized(&summary.importance, predictive, cfg.normalization)?,
        max_p: Some(stats.max_p),
        max_np: Some(stats.max_np),
        p_win: Some(stats.p_win),
        cor3,
        cor4,
    })
}

// ---------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub n: usize,
    pub beta: f64,
    pub learner: String,
    pub strategy: String,
    pub ok: usize,
    pub failed: usize,
    pub top1: Option<(f64, f64)>,
    pub net3: Option<(f64, f64)>,
    pub margin: Option<(f64, f64)>,
    pub cor_tau_tauhat: Option<(f64, f64)>,
    pub p_win: Option<(f64, f64)>,
    pub cor3: Option<(f64, f64)>,
    pub cor4: Option<(f64, f64)>,
}

fn agg_field(
    records: &[&MetricRecord],
    field: impl Fn(&MetricRecord) -> Option<f64>,
) -> Option<(f64, f64)> {
    let values: Vec<f64> = records.iter().filter_map(|r| field(r)).collect();
    if values.is_empty() {
        None
    } else {
        Some(mean_se(&values))
    }
}

/// Mean +/- SE per (scenario, n, beta, learner, strategy) over successful
/// cells; failures are counted but never pooled.
pub fn aggregate(records: &[MetricRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, usize, u64, String, String)> = Vec::new();
    let mut buckets: BTreeMap<(String, usize, u64, String, String), Vec<&MetricRecord>> =
        BTreeMap::new();
    for r in records {
        let key =
            (r.scenario.clone(), r.n, r.beta.to_bits(), r.learner.clone(), r.strategy.clone());
        if !buckets.contains_key(&key) {
            order.push(key.clone());
        }
        buckets.entry(key).or_default().push(r);
    }

    order
        .into_iter()
        .map(|key| {
            let rows = &buckets[&key];
            let ok: Vec<&MetricRecord> =
                rows.iter().copied().filter(|r| r.status == "ok").collect();
            SummaryRow {
                scenario: key.0.clone(),
                n: key.1,
                beta: f64::from_bits(key.2),
                learner: key.3.clone(),
                strategy: key.4.clone(),
                ok: ok.len(),
                failed: rows.len() - ok.len(),
                top1: agg_field(&ok, |r| r.top1),
                net3: agg_field(&ok, |r| r.net3),
                margin: agg_field(&ok, |r| r.margin),
                cor_tau_tauhat: agg_field(&ok, |r| r.cor_tau_tauhat),
                p_win: agg_field(&ok, |r| r.p_win),
                cor3: agg_field(&ok, |r| r.cor3),
                cor4: agg_field(&ok, |r| r.cor4),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Deterministic per-cell rows. Timing lives in the separate timings
/// file so reruns of one config stay byte-identical.
pub const RECORD_COLUMNS: [&str; 17] = [
    "iteration",
    "scenario",
    "n",
    "beta",
    "learner",
    "strategy",
    "status",
    "top1",
    "net3",
    "margin",
    "cor_tau_tauhat",
    "max_p",
    "max_np",
    "p_win",
    "cor3",
    "cor4",
    "error",
];

pub fn write_records_csv<W: std::io::Write>(records: &[MetricRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record(&[
            r.iteration.to_string(),
            r.scenario.clone(),
            r.n.to_string(),
            fmt_f64(r.beta),
            r.learner.clone(),
            r.strategy.clone(),
            r.status.clone(),
            opt(r.top1),
            opt(r.net3),
            opt(r.margin),
            opt(r.cor_tau_tauhat),
            opt(r.max_p),
            opt(r.max_np),
            opt(r.p_win),
            opt(r.cor3),
            opt(r.cor4),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv<W: std::io::Write>(records: &[MetricRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "iteration", "scenario", "n", "beta", "learner", "strategy", "sim_ms", "fit_ms",
        "shap_ms", "total_ms",
    ])?;
    for r in records {
        w.write_record(&[
            r.iteration.to_string(),
            r.scenario.clone(),
            r.n.to_string(),
            fmt_f64(r.beta),
            r.learner.clone(),
            r.strategy.clone(),
            r.sim_ms.to_string(),
            r.fit_ms.to_string(),
            r.shap_ms.to_string(),
            r.total_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: std::io::Write>(summary: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "scenario".to_string(),
        "n".into(),
        "beta".into(),
        "learner".into(),
        "strategy".into(),
        "ok".into(),
        "failed".into(),
    ];
    for m in ["top1", "net3", "margin", "cor_tau_tauhat", "p_win", "cor3", "cor4"] {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_se"));
    }
    w.write_record(&header)?;
    for s in summary {
        let mut rec = vec![
            s.scenario.clone(),
            s.n.to_string(),
            fmt_f64(s.beta),
            s.learner.clone(),
            s.strategy.clone(),
            s.ok.to_string(),
            s.failed.to_string(),
        ];
        for pair in [s.top1, s.net3, s.margin, s.cor_tau_tauhat, s.p_win, s.cor3, s.cor4] {
            match pair {
                Some((m, se)) => {
                    rec.push(fmt_f64(m));
                    rec.push(fmt_f64(se));
                }
                None => {
                    rec.push(String::new());
                    rec.push(String::new());
                }
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------
// Cost probe
// ---------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostProbeEntry {
    /// Multiplier over the minimum viable coalition count 2p+2.
    pub grid_entry: usize,
    pub coalitions: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostProbeResult {
    pub p: usize,
    pub n: usize,
    pub kernel_instances: usize,
    pub background_rows: usize,
    pub kernel: Vec<CostProbeEntry>,
    /// Exact route timed on the same instances the kernel route explains.
    pub tree_wall_ms: f64,
    /// Exact route timed over all n rows, as a throughput reference.
    pub tree_all_rows_ms: f64,
    pub kernel_monotone_increasing: bool,
    /// Smallest kernel time divided by the exact-route time at equal
    /// instance counts.
    pub min_kernel_over_tree: f64,
}

/// Times the kernel route at increasing sampled-coalition budgets against
/// the exact route on one shared surrogate. Budgets are multiples of the
/// smallest workable coalition count (2p+2 paired draws).
pub fn cost_probe(p: usize, grid: &[usize], n: usize, seed: u64) -> Result<CostProbeResult> {
    if grid.is_empty() {
        return Err(Error::Config("empty probe grid".into()));
    }
    if p < 2 || n < 32 {
        return Err(Error::Config("probe needs p >= 2 and n >= 32".into()));
    }
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut cols = Vec::with_capacity(p);
    for _ in 0..p {
        cols.push((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
    }
    let features = Matrix::from_cols(cols)?;
    let targets: Vec<f64> = (0..n)
        .map(|i| {
            features.get(i, 0) + 0.5 * features.get(i, 1) * features.get(i, 2)
                + 0.1 * rng.gen_range(-1.0..1.0)
        })
        .collect();
    let hp = Hyperparams { max_depth: 6, n_rounds: 200, ..Hyperparams::default() };
    let surrogate = fit_gbt(&features, &targets, None, &hp, Loss::Squared, &mut rng)?;

    let kernel_instances = 5.min(n);
    let background_rows = 16.min(n);
    let instances = features.select_rows(&(0..kernel_instances).collect::<Vec<_>>());
    let background = features.select_rows(&(0..background_rows).collect::<Vec<_>>());
    let predict = |m: &Matrix| surrogate.predict(m);

    let floor = 2 * p + 2;
    let mut kernel = Vec::new();
    for &entry in grid {
        if entry == 0 {
            return Err(Error::Config("probe grid entries must be positive".into()));
        }
        let coalitions = entry * floor;
        let config = KernelShapConfig {
            mode: crate::shap::MaskMode::Sampled(coalitions),
            seed,
        };
        let t = Instant::now();
        kernel_shap_probe(&predict, &background, &instances, &config)?;
        kernel.push(CostProbeEntry {
            grid_entry: entry,
            coalitions,
            wall_ms: t.elapsed().as_secs_f64() * 1e3,
        });
    }

    let t = Instant::now();
    crate::shap::tree_shap(&surrogate, &instances)?;
    let tree_wall_ms = t.elapsed().as_secs_f64() * 1e3;
    let t = Instant::now();
    crate::shap::tree_shap(&surrogate, &features)?;
    let tree_all_rows_ms = t.elapsed().as_secs_f64() * 1e3;

    let kernel_monotone_increasing =
        kernel.windows(2).all(|w| w[1].wall_ms > w[0].wall_ms);
    let min_kernel =
        kernel.iter().map(|e| e.wall_ms).fold(f64::INFINITY, f64::min);
    Ok(CostProbeResult {
        p,
        n,
        kernel_instances,
        background_rows,
        kernel,
        tree_wall_ms,
        tree_all_rows_ms,
        kernel_monotone_increasing,
        min_kernel_over_tree: min_kernel / tree_wall_ms.max(1e-9),
    })
}

fn kernel_shap_probe<F>(
    predict: &F,
    background: &Matrix,
    instances: &Matrix,
    config: &KernelShapConfig,
) -> Result<ShapMatrix>
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    crate::shap::kernel_shap(predict, background, instances, config)
}
