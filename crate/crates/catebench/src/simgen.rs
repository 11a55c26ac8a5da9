//! Seeded trial simulators with known ground truth.
//!
//! Every scenario draws from three independent RNG streams (covariates,
//! treatment, noise) so that changing the prognostic strength `beta`
//! leaves covariates, assignments, and residuals bitwise identical.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gbt::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// y = sin(pi*x1) + e among 50 noise covariates; no treatment effect.
    SinToy,
    /// y = -1 + x1 + x2 + 2*I(x3>0)*A + e; five covariates, 1:1 arms.
    TlearnToy,
    /// y = -1 + 3*(x1+..+x5) + I(x7>0, x8>0)*A + e; twenty covariates,
    /// arms split exactly in half.
    HeadToHead,
    /// Biomarker trial: y = 100 + beta*k1 + k2*A + e with 3:1 randomized
    /// treatment; k2 = g1(x3) + g2(x4) is the only treatment-modifying
    /// signal among 19 raw biomarkers (20 modeling columns).
    S2,
    /// Same outcome law as S2 with confounded assignment:
    /// logit Pr(A=1|x) = -2.4 - 0.2*k1(x), about one patient in four treated.
    S3,
}

impl ScenarioKind {
    pub fn default_n(self) -> usize {
        match self {
            ScenarioKind::SinToy => 400,
            ScenarioKind::TlearnToy => 600,
            ScenarioKind::HeadToHead => 800,
            ScenarioKind::S2 | ScenarioKind::S3 => 1000,
        }
    }

    pub fn is_biomarker(self) -> bool {
        matches!(self, ScenarioKind::S2 | ScenarioKind::S3)
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ScenarioKind::SinToy => "sin_toy",
            ScenarioKind::TlearnToy => "tlearn_toy",
            ScenarioKind::HeadToHead => "head_to_head",
            ScenarioKind::S2 => "s2",
            ScenarioKind::S3 => "s3",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sin_toy" => Ok(ScenarioKind::SinToy),
            "tlearn_toy" => Ok(ScenarioKind::TlearnToy),
            "head_to_head" => Ok(ScenarioKind::HeadToHead),
            "s2" => Ok(ScenarioKind::S2),
            "s3" => Ok(ScenarioKind::S3),
            other => Err(Error::Config(format!("unknown scenario kind '{other}'"))),
        }
    }
}

pub const G1_A: f64 = 0.625;
pub const G1_B: f64 = 5.0;
pub const G2_C: f64 = 0.625;
pub const G2_D: f64 = 20.0;

/// Numeric codes the three x2 levels contribute inside k1. The dummy
/// columns in the modeling matrix are unaffected; only the outcome and
/// assignment laws read these. Unit spacing fixes the signal shape; the
/// offset is calibrated by Monte Carlo so the confounded scenario's
/// logistic assignment (intercept -2.4, slope -0.2) treats 25.0% of the
/// population.
pub const DEFAULT_X2_CODES: [f64; 3] = [0.883, 1.883, 2.883];

fn default_x2_codes() -> [f64; 3] {
    DEFAULT_X2_CODES
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub n: usize,
    /// Prognostic strength multiplying k1; biomarker scenarios only.
    #[serde(default = "one")]
    pub beta: f64,
    pub seed: u64,
    #[serde(default = "default_x2_codes")]
    pub x2_codes: [f64; 3],
}

impl Scenario {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Scenario { kind, n: kind.default_n(), beta: 1.0, seed, x2_codes: DEFAULT_X2_CODES }
    }

    /// The assignment probability when it is a known trial constant;
    /// None for confounded assignment, which must be estimated.
    pub fn known_propensity(&self) -> Option<f64> {
        match self.kind {
            ScenarioKind::S2 => Some(0.75),
            ScenarioKind::S3 => None,
            _ => Some(0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 50 {
            return Err(Error::Config(format!("scenario size {} is below the minimum 50", self.n)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!("beta must be finite and nonnegative, got {}", self.beta)));
        }
        if !self.kind.is_biomarker() && self.beta != 1.0 {
            return Err(Error::Config("beta applies only to the biomarker scenarios".into()));
        }
        if self.x2_codes.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("x2 codes must be finite".into()));
        }
        Ok(())
    }
}

/// Quadratic bump: negative outside [0,1], peaking at g1(0.5) = a.
pub fn g1(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        G1_A - G1_B * (x - 0.5) * (x - 0.5)
    } else {
        G1_A - G1_B * 0.25
    }
}

/// Steep sigmoid ramp from 0 to c over [0,1].
pub fn g2(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if x > 1.0 {
        G2_C
    } else {
        G2_C / (1.0 + (-G2_D * (x - 0.5)).exp())
    }
}

const COVARIATE_STREAM: u64 = 0;
const TREATMENT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One biomarker draw: 19 raw covariates with x2 already numerically
/// coded, plus its level index for the dummy columns.
struct BiomarkerRow {
    raw: [f64; 19],
    x2_level: usize,
}

impl BiomarkerRow {
    fn draw(rng: &mut ChaCha8Rng, codes: &[f64; 3]) -> Self {
        let shifted = Normal::new(0.5, 1.0).unwrap();
        let standard = Normal::new(0.0, 1.0).unwrap();
        let mut raw = [0.0; 19];
        raw[0] = shifted.sample(rng);
        let x2_level = rng.gen_range(0..3usize);
        raw[1] = codes[x2_level];
        for v in raw.iter_mut().take(9).skip(2) {
            *v = shifted.sample(rng);
        }
        for v in raw.iter_mut().skip(9) {
            *v = standard.sample(rng);
        }
        BiomarkerRow { raw, x2_level }
    }

    fn k1(&self) -> f64 {
        -(self.raw[0] + 5.0 * self.raw[1])
            + 2.0 * (self.raw[4] + self.raw[5] + self.raw[6] + self.raw[7] + self.raw[8])
    }

    fn k2(&self) -> f64 {
        g1(self.raw[2]) + g2(self.raw[3])
    }

    /// Modeling layout: x1, the two x2 dummies (level 0 is the reference),
    /// then x3..x19.
    fn modeling_row(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(20);
        row.push(self.raw[0]);
        row.push(if self.x2_level == 1 { 1.0 } else { 0.0 });
        row.push(if self.x2_level == 2 { 1.0 } else { 0.0 });
        row.extend_from_slice(&self.raw[2..]);
        row
    }
}

fn biomarker_feature_names() -> Vec<String> {
    let mut names = vec!["x1".to_string(), "x2=1".to_string(), "x2=2".to_string()];
    for j in 3..=19 {
        names.push(format!("x{j}"));
    }
    names
}

/// Column indices of the truly treatment-modifying biomarkers in the
/// modeling layout: x3 and x4.
pub const BIOMARKER_PREDICTIVE_SET: [usize; 2] = [3, 4];

pub fn simulate(sc: &Scenario) -> Result<Dataset> {
    sc.validate()?;
    match sc.kind {
        ScenarioKind::S2 | ScenarioKind::S3 => simulate_biomarker(sc),
        ScenarioKind::SinToy => {
            simulate_toy(sc, 50, 1.0, |_x, _a| 0.0, |x| (std::f64::consts::PI * x[0]).sin(), None)
        }
        ScenarioKind::TlearnToy => simulate_toy(
            sc,
            5,
            0.1,
            |x, _a| if x[2] > 0.0 { 2.0 } else { 0.0 },
            |x| -1.0 + x[0] + x[1],
            Some(vec![2]),
        ),
        ScenarioKind::HeadToHead => simulate_toy(
            sc,
            20,
            0.5,
            |x, _a| if x[6] > 0.0 && x[7] > 0.0 { 1.0 } else { 0.0 },
            |x| -1.0 + 3.0 * (x[0] + x[1] + x[2] + x[3] + x[4]),
            Some(vec![6, 7]),
        ),
    }
}

fn simulate_biomarker(sc: &Scenario) -> Result<Dataset> {
    let mut cov = stream_rng(sc.seed, COVARIATE_STREAM);
    let mut trt = stream_rng(sc.seed, TREATMENT_STREAM);
    let mut noise = stream_rng(sc.seed, NOISE_STREAM);
    let eps = Normal::new(0.0, 1.0).unwrap();

    let mut rows = Vec::with_capacity(sc.n);
    let mut treatment = Vec::with_capacity(sc.n);
    let mut outcome = Vec::with_capacity(sc.n);
    let mut tau = Vec::with_capacity(sc.n);
    for _ in 0..sc.n {
        let row = BiomarkerRow::draw(&mut cov, &sc.x2_codes);
        let k1 = row.k1();
        let k2 = row.k2();
        let p_treat = match sc.kind {
            ScenarioKind::S2 => 0.75,
            ScenarioKind::S3 => sigmoid(-2.4 - 0.2 * k1),
            _ => unreachable!(),
        };
        let a = u8::from(trt.gen::<f64>() < p_treat);
        let y = 100.0 + sc.beta * k1 + k2 * f64::from(a) + eps.sample(&mut noise);
        rows.push(row.modeling_row());
        treatment.push(a);
        outcome.push(y);
        tau.push(k2);
    }

    let features = crate::data::Matrix::from_rows(&rows)?;
    let mut categorical_map = BTreeMap::new();
    categorical_map.insert("x2".to_string(), vec![1usize, 2usize]);
    Dataset::new(
        features,
        biomarker_feature_names(),
        categorical_map,
        treatment,
        outcome,
        Some(tau),
        Some(BTreeSet::from(BIOMARKER_PREDICTIVE_SET)),
    )
}

fn simulate_toy(
    sc: &Scenario,
    p: usize,
    noise_sd: f64,
    tau_fn: impl Fn(&[f64], u8) -> f64,
    baseline_fn: impl Fn(&[f64]) -> f64,
    predictive: Option<Vec<usize>>,
) -> Result<Dataset> {
    let mut cov = stream_rng(sc.seed, COVARIATE_STREAM);
    let mut trt = stream_rng(sc.seed, TREATMENT_STREAM);
    let mut noise = stream_rng(sc.seed, NOISE_STREAM);
    let standard = Normal::new(0.0, 1.0).unwrap();
    let eps = Normal::new(0.0, noise_sd).unwrap();

    let treatment: Vec<u8> = if sc.kind == ScenarioKind::HeadToHead {
        // Exactly half of the sample on each arm.
        let mut a: Vec<u8> = (0..sc.n).map(|i| u8::from(i < sc.n / 2)).collect();
        a.shuffle(&mut trt);
        a
    } else {
        (0..sc.n).map(|_| u8::from(trt.gen::<f64>() < 0.5)).collect()
    };

    let mut rows = Vec::with_capacity(sc.n);
    let mut outcome = Vec::with_capacity(sc.n);
    let mut tau = Vec::with_capacity(sc.n);
    for &a in &treatment {
        let x: Vec<f64> = (0..p).map(|_| standard.sample(&mut cov)).collect();
        let t = tau_fn(&x, a);
        let y = baseline_fn(&x) + t * f64::from(a) + eps.sample(&mut noise);
        rows.push(x);
        outcome.push(y);
        tau.push(t);
    }

    let features = crate::data::Matrix::from_rows(&rows)?;
    let names: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    let oracle_tau = if sc.kind == ScenarioKind::SinToy { None } else { Some(tau) };
    let oracle_set = predictive.map(|v| v.into_iter().collect::<BTreeSet<_>>());
    Dataset::new(features, names, BTreeMap::new(), treatment, outcome, oracle_tau, oracle_set)
}

/// Population summaries of the treatment-effect surface, estimated by
/// streaming Monte Carlo so arbitrarily large n_mc stays in constant memory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleStats {
    pub mean_tau: f64,
    /// Share of the population with a strictly positive effect.
    pub prevalence: f64,
    /// Mean effect within that benefiting subgroup.
    pub subgroup_effect: f64,
    /// |cor| between tau and each of its two generating components;
    /// zero for scenarios without those components.
    pub cor_tau_g1: f64,
    pub cor_tau_g2: f64,
    pub treated_fraction: f64,
}

struct CorrAccum {
    n: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl CorrAccum {
    fn new() -> Self {
        CorrAccum { n: 0.0, sx: 0.0, sy: 0.0, sxx: 0.0, syy: 0.0, sxy: 0.0 }
    }

    fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    fn corr(&self) -> f64 {
        let cov = self.n * self.sxy - self.sx * self.sy;
        let vx = self.n * self.sxx - self.sx * self.sx;
        let vy = self.n * self.syy - self.sy * self.sy;
        if vx <= 0.0 || vy <= 0.0 {
            return 0.0;
        }
        cov / (vx * vy).sqrt()
    }
}

pub fn oracle_stats(sc: &Scenario, n_mc: usize) -> Result<OracleStats> {
    sc.validate()?;
    if n_mc == 0 {
        return Err(Error::Config("n_mc must be positive".into()));
    }
    if sc.kind == ScenarioKind::SinToy {
        return Err(Error::Config("sin_toy has no treatment-effect oracle".into()));
    }

    let mut cov = stream_rng(sc.seed, COVARIATE_STREAM);
    let mut trt = stream_rng(sc.seed, TREATMENT_STREAM);
    let standard = Normal::new(0.0, 1.0).unwrap();

    let mut sum_tau = 0.0;
    let mut positives = 0usize;
    let mut sum_pos = 0.0;
    let mut treated = 0usize;
    let mut c1 = CorrAccum::new();
    let mut c2 = CorrAccum::new();

    for _ in 0..n_mc {
        let (tau, a) = match sc.kind {
            ScenarioKind::S2 | ScenarioKind::S3 => {
                let row = BiomarkerRow::draw(&mut cov, &sc.x2_codes);
                let tau = row.k2();
                let p_treat = if sc.kind == ScenarioKind::S2 {
                    0.75
                } else {
                    sigmoid(-2.4 - 0.2 * row.k1())
                };
                c1.push(tau, g1(row.raw[2]));
                c2.push(tau, g2(row.raw[3]));
                (tau, trt.gen::<f64>() < p_treat)
            }
            ScenarioKind::TlearnToy => {
                let x: Vec<f64> = (0..5).map(|_| standard.sample(&mut cov)).collect();
                (if x[2] > 0.0 { 2.0 } else { 0.0 }, trt.gen::<f64>() < 0.5)
            }
            ScenarioKind::HeadToHead => {
                let x: Vec<f64> = (0..20).map(|_| standard.sample(&mut cov)).collect();
                (
                    if x[6] > 0.0 && x[7] > 0.0 { 1.0 } else { 0.0 },
                    trt.gen::<f64>() < 0.5,
                )
            }
            ScenarioKind::SinToy => unreachable!(),
        };
        sum_tau += tau;
        if tau > 0.0 {
            positives += 1;
            sum_pos += tau;
        }
        treated += usize::from(a);
    }

    let n = n_mc as f64;
    Ok(OracleStats {
        mean_tau: sum_tau / n,
        prevalence: positives as f64 / n,
        subgroup_effect: if positives > 0 { sum_pos / positives as f64 } else { 0.0 },
        cor_tau_g1: c1.corr().abs(),
        cor_tau_g2: c2.corr().abs(),
        treated_fraction: treated as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g1_shape_and_continuity() {
        assert_eq!(g1(-1.0), -0.625);
        assert_eq!(g1(0.5), 0.625);
        assert_eq!(g1(0.0), -0.625);
        assert_eq!(g1(1.0), -0.625);
        assert!((g1(0.0) - g1(-1e-9)).abs() < 1e-9);
        assert!((g1(1.0) - g1(1.0 + 1e-9)).abs() < 1e-9);
    }

    #[test]
    fn g2_shape_and_small_jumps() {
        assert_eq!(g2(-3.0), 0.0);
        assert!((g2(0.5) - 0.3125).abs() < 1e-15);
        assert_eq!(g2(2.0), 0.625);
        assert!((g2(0.0) - g2(-1e-12)).abs() < 1e-4);
        assert!((g2(1.0) - g2(1.0 + 1e-12)).abs() < 1e-4);
    }

    #[test]
    fn biomarker_layout_and_dummies() {
        let sc = Scenario::new(ScenarioKind::S2, 4);
        let ds = simulate(&sc).unwrap();
        assert_eq!(ds.p(), 20);
        assert_eq!(ds.n(), 1000);
        assert_eq!(ds.feature_names[0], "x1");
        assert_eq!(ds.feature_names[1], "x2=1");
        assert_eq!(ds.feature_names[2], "x2=2");
        assert_eq!(ds.feature_names[3], "x3");
        assert_eq!(ds.feature_names[19], "x19");
        assert_eq!(ds.categorical_map.get("x2"), Some(&vec![1, 2]));
        assert_eq!(
            ds.oracle_predictive_set.as_ref().unwrap().iter().copied().collect::<Vec<_>>(),
            vec![3, 4]
        );
        for i in 0..ds.n() {
            let d1 = ds.features.get(i, 1);
            let d2 = ds.features.get(i, 2);
            assert!(d1 == 0.0 || d1 == 1.0);
            assert!(d2 == 0.0 || d2 == 1.0);
            assert!(d1 + d2 <= 1.0);
        }
        let tau = ds.oracle_tau.as_ref().unwrap();
        for i in 0..ds.n() {
            let expect = g1(ds.features.get(i, 3)) + g2(ds.features.get(i, 4));
            assert!((tau[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_changes_only_the_outcome() {
        let mut lo = Scenario::new(ScenarioKind::S2, 11);
        lo.beta = 0.0;
        let mut hi = lo.clone();
        hi.beta = 2.0;
        let d0 = simulate(&lo).unwrap();
        let d2 = simulate(&hi).unwrap();
        assert_eq!(d0.features.data(), d2.features.data());
        assert_eq!(d0.treatment, d2.treatment);
        assert_eq!(d0.oracle_tau, d2.oracle_tau);
        // Outcome difference recovers 2*k1 exactly: noise and k2*A cancel.
        for i in 0..d0.n() {
            let (dum1, dum2) = (d0.features.get(i, 1), d0.features.get(i, 2));
            let level = if dum1 == 1.0 { 1 } else { usize::from(dum2 == 1.0) * 2 };
            let code = DEFAULT_X2_CODES[level];
            let k1 = -(d0.features.get(i, 0) + 5.0 * code)
                + 2.0 * (5..=9).map(|c| d0.features.get(i, c)).sum::<f64>();
            assert!(
                (d2.outcome[i] - d0.outcome[i] - 2.0 * k1).abs() < 1e-9,
                "row {i}: {} vs {}",
                d2.outcome[i] - d0.outcome[i],
                2.0 * k1
            );
        }
    }

    #[test]
    fn s3_treats_poor_prognosis_more_often() {
        let sc = Scenario { n: 20000, ..Scenario::new(ScenarioKind::S3, 7) };
        let ds = simulate(&sc).unwrap();
        let frac = ds.treated_rows().len() as f64 / ds.n() as f64;
        assert!((frac - 0.25).abs() < 0.02, "treated fraction {frac}");
    }

    #[test]
    fn s2_randomization_and_mean_tau() {
        let sc = Scenario { n: 100_000, ..Scenario::new(ScenarioKind::S2, 19) };
        let ds = simulate(&sc).unwrap();
        let frac = ds.treated_rows().len() as f64 / ds.n() as f64;
        assert!((frac - 0.75).abs() < 0.01, "treated fraction {frac}");
        let tau = ds.oracle_tau.as_ref().unwrap();
        let mean = tau.iter().sum::<f64>() / tau.len() as f64;
        assert!((mean - 0.0119).abs() < 0.01, "mean tau {mean}");
    }

    #[test]
    fn toy_scenarios_match_their_laws() {
        let sin = simulate(&Scenario::new(ScenarioKind::SinToy, 1)).unwrap();
        assert_eq!(sin.p(), 50);
        assert_eq!(sin.n(), 400);
        assert!(sin.oracle_tau.is_none());
        assert!(sin.oracle_predictive_set.is_none());

        let tl = simulate(&Scenario::new(ScenarioKind::TlearnToy, 2)).unwrap();
        assert_eq!((tl.n(), tl.p()), (600, 5));
        let tau = tl.oracle_tau.as_ref().unwrap();
        for i in 0..tl.n() {
            let expect = if tl.features.get(i, 2) > 0.0 { 2.0 } else { 0.0 };
            assert_eq!(tau[i], expect);
        }

        let hh = simulate(&Scenario::new(ScenarioKind::HeadToHead, 3)).unwrap();
        assert_eq!((hh.n(), hh.p()), (800, 20));
        assert_eq!(hh.treated_rows().len(), 400);
        assert_eq!(
            hh.oracle_predictive_set.as_ref().unwrap().iter().copied().collect::<Vec<_>>(),
            vec![6, 7]
        );
    }

    #[test]
    fn determinism_and_seed_sensitivity() {
        let sc = Scenario::new(ScenarioKind::S2, 33);
        let a = simulate(&sc).unwrap();
        let b = simulate(&sc).unwrap();
        assert_eq!(a.features.data(), b.features.data());
        assert_eq!(a.outcome, b.outcome);
        let c = simulate(&Scenario::new(ScenarioKind::S2, 34)).unwrap();
        assert_ne!(a.outcome, c.outcome);
    }

    #[test]
    fn oracle_stats_on_toys_have_closed_forms() {
        let tl = oracle_stats(&Scenario::new(ScenarioKind::TlearnToy, 5), 200_000).unwrap();
        assert!((tl.prevalence - 0.5).abs() < 0.01);
        assert!((tl.subgroup_effect - 2.0).abs() < 1e-12);
        assert!((tl.mean_tau - 1.0).abs() < 0.02);
        assert!((tl.treated_fraction - 0.5).abs() < 0.01);

        let hh = oracle_stats(&Scenario::new(ScenarioKind::HeadToHead, 6), 200_000).unwrap();
        assert!((hh.prevalence - 0.25).abs() < 0.01);
        assert!((hh.subgroup_effect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_stats_biomarker_quick_check() {
        let st = oracle_stats(&Scenario::new(ScenarioKind::S2, 9), 150_000).unwrap();
        assert!((st.mean_tau - 0.0119).abs() < 0.01, "{}", st.mean_tau);
        assert!((st.prevalence - 0.330).abs() < 0.01, "{}", st.prevalence);
        assert!((st.subgroup_effect - 0.665).abs() < 0.02, "{}", st.subgroup_effect);
        assert!((st.cor_tau_g1 - 0.843).abs() < 0.02, "{}", st.cor_tau_g1);
        assert!((st.cor_tau_g2 - 0.537).abs() < 0.02, "{}", st.cor_tau_g2);
        assert!((st.treated_fraction - 0.75).abs() < 0.01);
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut sc = Scenario::new(ScenarioKind::S2, 0);
        sc.n = 10;
        assert!(simulate(&sc).is_err());
        let mut sc = Scenario::new(ScenarioKind::TlearnToy, 0);
        sc.beta = 2.0;
        assert!(simulate(&sc).is_err());
        let mut sc = Scenario::new(ScenarioKind::S2, 0);
        sc.beta = -1.0;
        assert!(simulate(&sc).is_err());
        assert!(oracle_stats(&Scenario::new(ScenarioKind::SinToy, 0), 1000).is_err());
    }
}
