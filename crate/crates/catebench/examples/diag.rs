// Scratch diagnostic, not part of the crate surface.
use std::collections::BTreeSet;
use std::time::Instant;

use catebench::data::{pearson, Dataset, Matrix};
use catebench::gbt::{compact_grid, noisy_target_grid, Hyperparams};
use catebench::learners::{
    fit_cate, fit_propensity, shap_strategy2, shap_strategy3, FitOptions, LearnerKind,
    PropensityMode, PropensityModel, PropensitySpec, DEFAULT_CLIP,
};
use catebench::metrics::{net3, top1};
use catebench::shap::summary_shap;
use catebench::simgen::{simulate, Scenario, ScenarioKind, DEFAULT_X2_CODES};

fn true_propensity(ds: &Dataset) -> Vec<f64> {
    let m = &ds.features;
    (0..m.n_rows())
        .map(|i| {
            let x1 = m.get(i, 0);
            let code = DEFAULT_X2_CODES[0] + m.get(i, 1) + 2.0 * m.get(i, 2);
            let s: f64 = (5..10).map(|j| m.get(i, j)).sum();
            let k1 = -(x1 + 5.0 * code) + 2.0 * s;
            1.0 / (1.0 + (2.4 + 0.2 * k1).exp())
        })
        .collect()
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn sd(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn single(eta: f64, depth: usize, mcw: f64, rounds: usize) -> Vec<Hyperparams> {
    vec![Hyperparams {
        eta,
        max_depth: depth,
        min_child_weight: mcw,
        n_rounds: rounds,
        ..Hyperparams::default()
    }]
}

fn single_cs(
    eta: f64,
    depth: usize,
    mcw: f64,
    rounds: usize,
    colsample: f64,
    subsample: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<Hyperparams> {
    vec![Hyperparams {
        eta,
        max_depth: depth,
        min_child_weight: mcw,
        n_rounds: rounds,
        colsample,
        subsample,
        gamma,
        lambda,
    }]
}

fn opts(grid: Vec<Hyperparams>, seed: u64) -> FitOptions {
    FitOptions { grid, ..FitOptions::with_seed(seed) }
}

fn eval_learner(
    label: &str,
    kind: LearnerKind,
    ds: &Dataset,
    prop: &PropensityModel,
    o: &FitOptions,
    test: &Dataset,
) {
    let t0 = Instant::now();
    let model = fit_cate(ds, kind, prop, o).unwrap();
    let tau_hat = model.predict_cate(&test.features).unwrap();
    let tau = test.oracle_tau.as_ref().unwrap();
    let predictive: BTreeSet<usize> = ds.oracle_predictive_set.clone().unwrap();

    let (s3_surr, s3_shap) = shap_strategy3(&model, &ds.features, &test.features, o).unwrap();
    let _ = s3_surr;
    let imp3 = summary_shap(&s3_shap).importance;
    let (t1_3, n3_3) = (top1(&imp3, &predictive).unwrap(), net3(&imp3, &predictive).unwrap());

    let (t1_2, n3_2) = if kind.has_final_stage() {
        let shap2 = shap_strategy2(&model, &test.features).unwrap();
        let imp2 = summary_shap(&shap2).importance;
        (top1(&imp2, &predictive).unwrap(), net3(&imp2, &predictive).unwrap())
    } else {
        (f64::NAN, f64::NAN)
    };

    let bias = tau_hat.iter().sum::<f64>() / tau_hat.len() as f64
        - tau.iter().sum::<f64>() / tau.len() as f64;
    println!(
        "{label:<34} cor={:+.3} sd_hat={:.3} bias={:+.3} s3(top1={t1_3:.0} net3={n3_3:.2}) s2(top1={t1_2:.0} net3={n3_2:.2}) [{:.1}s]",
        pearson(&tau_hat, tau),
        sd(&tau_hat),
        bias,
        t0.elapsed().as_secs_f64()
    );
}

fn k1_of(ds: &Dataset) -> Vec<f64> {
    let m = &ds.features;
    (0..m.n_rows())
        .map(|i| {
            let x1 = m.get(i, 0);
            let code = DEFAULT_X2_CODES[0] + m.get(i, 1) + 2.0 * m.get(i, 2);
            let s: f64 = (5..10).map(|j| m.get(i, j)).sum();
            -(x1 + 5.0 * code) + 2.0 * s
        })
        .collect()
}

fn rank_report(label: &str, kind: LearnerKind, ds: &Dataset, prop: &PropensityModel, o: &FitOptions, test: &Dataset) {
    let model = fit_cate(ds, kind, prop, o).unwrap();
    let tau_hat = model.predict_cate(&test.features).unwrap();
    let tau = test.oracle_tau.as_ref().unwrap();
    let k1 = k1_of(test);
    // projection of tau_hat on k1 and on tau
    let ck1 = pearson(&tau_hat, &k1);
    let ct = pearson(&tau_hat, tau);
    let (_, shap) = shap_strategy3(&model, &ds.features, &test.features, o).unwrap();
    let imp = summary_shap(&shap).importance;
    let names = &model.metadata.feature_names;
    let mut order: Vec<usize> = (0..imp.len()).collect();
    order.sort_by(|&a, &b| imp[b].partial_cmp(&imp[a]).unwrap());
    let top: Vec<String> = order.iter().take(6).map(|&j| format!("{}={:.3}", names[j], imp[j])).collect();
    println!("{label:<28} cor(tau)={ct:+.3} cor(k1)={ck1:+.3}  top: {}", top.join(" "));
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "all".into());

    if mode == "fam" {
        // Production configuration: compact grid for outcome stages,
        // noisy-target grid for pseudo-outcome stages.
        for sk in [ScenarioKind::S2, ScenarioKind::S3] {
            for seed in [9u64, 10, 11] {
                let mut sc = Scenario::new(sk, seed);
                sc.n = 1000;
                let ds = simulate(&sc).unwrap();
                let mut tc = Scenario::new(sk, 900 + seed);
                tc.n = 4000;
                let test = simulate(&tc).unwrap();
                let o = FitOptions {
                    grid: compact_grid(200),
                    pseudo_grid: Some(noisy_target_grid()),
                    ..FitOptions::with_seed(seed)
                };
                let prop = match sk {
                    ScenarioKind::S2 => PropensityModel::known_constant(0.75).unwrap(),
                    _ => fit_propensity(&ds, PropensitySpec::Estimate, &o).unwrap(),
                };
                for (lbl, kind) in [
                    ("T", LearnerKind::T),
                    ("S", LearnerKind::S),
                    ("X", LearnerKind::X),
                    ("R", LearnerKind::R),
                    ("DR", LearnerKind::Dr),
                    ("CF", LearnerKind::Cf),
                ] {
                    eval_learner(
                        &format!("{lbl} {sk} seed{seed} fam"),
                        kind,
                        &ds,
                        &prop,
                        &o,
                        &test,
                    );
                }
            }
        }
        return;
    }

    if mode == "rank" {
        for (kind_label, kindv) in [("S", LearnerKind::S), ("DR", LearnerKind::Dr), ("R", LearnerKind::R)] {
            for (sc_label, sk) in [("s2", ScenarioKind::S2), ("s3", ScenarioKind::S3)] {
                let mut sc = Scenario::new(sk, 9);
                sc.n = 1000;
                let ds = simulate(&sc).unwrap();
                let mut tc = Scenario::new(sk, 909);
                tc.n = 4000;
                let test = simulate(&tc).unwrap();
                let o = opts(compact_grid(200), 9);
                let prop = match sk {
                    ScenarioKind::S2 => PropensityModel::known_constant(0.75).unwrap(),
                    _ => fit_propensity(&ds, PropensitySpec::Estimate, &o).unwrap(),
                };
                rank_report(&format!("{kind_label} {sc_label} compact200"), kindv, &ds, &prop, &o, &test);
                let o2 = opts(single_cs(0.05, 3, 5.0, 800, 0.5, 0.8, 1.0, 10.0), 9);
                rank_report(&format!("{kind_label} {sc_label} cs0.5 reg"), kindv, &ds, &prop, &o2, &test);
            }
        }
        return;
    }

    if mode == "smcw" {
        for sk in [ScenarioKind::S3, ScenarioKind::S2] {
            for seed in [9u64, 10, 11] {
                let mut sc = Scenario::new(sk, seed);
                sc.n = 1000;
                let ds = simulate(&sc).unwrap();
                let mut tc = Scenario::new(sk, 900 + seed);
                tc.n = 4000;
                let test = simulate(&tc).unwrap();
                let o0 = opts(compact_grid(200), seed);
                let prop = match sk {
                    ScenarioKind::S2 => PropensityModel::known_constant(0.75).unwrap(),
                    _ => fit_propensity(&ds, PropensitySpec::Estimate, &o0).unwrap(),
                };
                for (tag, hp) in [
                    ("A e.05 d2 m50 r1500 c.5 s.5", single_cs(0.05, 2, 50.0, 1500, 0.5, 0.5, 0.0, 1.0)),
                    ("B e.05 d2 m100 r1500 c.5 s.5", single_cs(0.05, 2, 100.0, 1500, 0.5, 0.5, 0.0, 1.0)),
                    ("C e.05 d3 m50 r800 c.5 s.5", single_cs(0.05, 3, 50.0, 800, 0.5, 0.5, 0.0, 1.0)),
                    ("D e.02 d2 m50 r2500 c.5 s.5", single_cs(0.02, 2, 50.0, 2500, 0.5, 0.5, 0.0, 1.0)),
                    ("E e.05 d2 m25 r1500 c.5 s.5", single_cs(0.05, 2, 25.0, 1500, 0.5, 0.5, 0.0, 1.0)),
                ] {
                    let o = opts(hp, seed);
                    rank_report(
                        &format!("S {sk} seed{seed} {tag}"),
                        LearnerKind::S,
                        &ds,
                        &prop,
                        &o,
                        &test,
                    );
                }
            }
        }
        return;
    }

    if mode == "grid" {
        // Candidate bench grid: compact coverage, high-capacity entries for
        // the outcome regressions, and strongly averaged entries for noisy
        // pseudo-outcome stages.
        let mut rich = compact_grid(200);
        for &(eta, depth, rounds) in &[(0.05, 2usize, 800usize), (0.05, 3, 800)] {
            rich.push(Hyperparams {
                eta,
                max_depth: depth,
                min_child_weight: 5.0,
                n_rounds: rounds,
                colsample: 0.8,
                subsample: 0.8,
                gamma: 0.0,
                lambda: 1.0,
            });
        }
        for &mcw in &[25.0, 100.0] {
            for &(eta, depth, rounds) in &[(0.05, 2usize, 600usize), (0.1, 3, 400)] {
                rich.push(Hyperparams {
                    eta,
                    max_depth: depth,
                    min_child_weight: mcw,
                    n_rounds: rounds,
                    colsample: 0.8,
                    subsample: 0.8,
                    gamma: 0.0,
                    lambda: 1.0,
                });
            }
        }
        println!("grid size = {}", rich.len());
        for (kind, sk) in [
            (LearnerKind::Dr, ScenarioKind::S2),
            (LearnerKind::Dr, ScenarioKind::S3),
            (LearnerKind::R, ScenarioKind::S2),
            (LearnerKind::S, ScenarioKind::S3),
            (LearnerKind::X, ScenarioKind::S2),
        ] {
            for seed in [9u64, 10, 11] {
                let mut sc = Scenario::new(sk, seed);
                sc.n = 1000;
                let ds = simulate(&sc).unwrap();
                let mut tc = Scenario::new(sk, 900 + seed);
                tc.n = 4000;
                let test = simulate(&tc).unwrap();
                let o = opts(rich.clone(), seed);
                let prop = match sk {
                    ScenarioKind::S2 => PropensityModel::known_constant(0.75).unwrap(),
                    _ => fit_propensity(&ds, PropensitySpec::Estimate, &o).unwrap(),
                };
                eval_learner(&format!("{kind} {sk} rich10 seed{seed}"), kind, &ds, &prop, &o, &test);
            }
        }
        return;
    }

    if mode == "resid" {
        // How small can the per-arm outcome residual get? This bounds the
        // pseudo-outcome noise for DR (and the centered outcome for R).
        use catebench::gbt::{fit_gbt, fit_gbt_early_stopped, Loss};
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        let mut sc = Scenario::new(ScenarioKind::S2, 9);
        sc.n = 1000;
        let ds = simulate(&sc).unwrap();
        for arm in [0u8, 1u8] {
            let rows: Vec<usize> =
                (0..ds.n()).filter(|&i| ds.treatment[i] == arm).collect();
            let sub = ds.select_rows(&rows);
            let n = sub.n();
            let cut = n * 4 / 5;
            let tr: Vec<usize> = (0..cut).collect();
            let va: Vec<usize> = (cut..n).collect();
            let ftr = sub.features.select_rows(&tr);
            let ytr: Vec<f64> = tr.iter().map(|&i| sub.outcome[i]).collect();
            let fva = sub.features.select_rows(&va);
            let yva: Vec<f64> = va.iter().map(|&i| sub.outcome[i]).collect();
            let ysd = sd(&yva);
            println!("arm {arm}: n={n} sd(holdout y)={ysd:.2}");
            for (label, hp) in [
                ("e0.3 d3 mcw5 r300", single(0.3, 3, 5.0, 300).remove(0)),
                ("e0.1 d3 mcw5 r1000", single(0.1, 3, 5.0, 1000).remove(0)),
                ("e0.1 d2 mcw5 r1500", single(0.1, 2, 5.0, 1500).remove(0)),
                (
                    "e0.05 d3 cs.8 ss.8 r2000",
                    single_cs(0.05, 3, 5.0, 2000, 0.8, 0.8, 0.0, 1.0).remove(0),
                ),
                (
                    "e0.1 d6 cs.8 ss.8 r400",
                    single_cs(0.1, 6, 5.0, 400, 0.8, 0.8, 0.0, 1.0).remove(0),
                ),
            ] {
                let mut rng = ChaCha8Rng::seed_from_u64(7);
                let m = fit_gbt(&ftr, &ytr, None, &hp, Loss::Squared, &mut rng).unwrap();
                let pred = m.predict(&fva).unwrap();
                let resid: Vec<f64> =
                    pred.iter().zip(&yva).map(|(p, y)| y - p).collect();
                let tr_pred = m.predict(&ftr).unwrap();
                let tr_res: Vec<f64> =
                    tr_pred.iter().zip(&ytr).map(|(p, y)| y - p).collect();
                println!(
                    "  {label:<26} holdout rmse={:.3} train rmse={:.3}",
                    (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt(),
                    (tr_res.iter().map(|r| r * r).sum::<f64>() / tr_res.len() as f64).sqrt()
                );
            }
            let hp = single(0.05, 3, 5.0, 4000).remove(0);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let (m, best) =
                fit_gbt_early_stopped(&ftr, &ytr, None, &hp, Loss::Squared, 0.2, 50, &mut rng)
                    .unwrap();
            let pred = m.predict(&fva).unwrap();
            let resid: Vec<f64> = pred.iter().zip(&yva).map(|(p, y)| y - p).collect();
            println!(
                "  early e0.05 d3 cap4000        holdout rmse={:.3} rounds={best}",
                (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt()
            );
        }
        return;
    }

    // ---- Part A: S3 propensity estimation quality ----
    if mode == "all" || mode == "prop" {
        println!("== A: estimated vs true propensity on s3, n=1000 ==");
        for seed in [9u64, 10, 11] {
            let mut sc = Scenario::new(ScenarioKind::S3, seed);
            sc.n = 1000;
            let ds = simulate(&sc).unwrap();
            let p_true = true_propensity(&ds);
            let frac = ds.treatment.iter().map(|&a| f64::from(a)).sum::<f64>() / ds.n() as f64;
            println!(
                "  seed {seed}: treated={frac:.3} p_true range [{:.3},{:.3}] sd={:.3}",
                p_true.iter().cloned().fold(f64::INFINITY, f64::min),
                p_true.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                sd(&p_true),
            );
            for (tag, grid) in [
                ("compact200", compact_grid(200)),
                ("single e0.1 d3 r800", single(0.1, 3, 5.0, 800)),
            ] {
                let o = opts(grid, seed);
                let t0 = Instant::now();
                let pm = fit_propensity(&ds, PropensitySpec::Estimate, &o).unwrap();
                let oof = pm.training_probs(ds.n()).unwrap();
                let full = pm.predict(&ds.features).unwrap();
                println!(
                    "    {tag:<22} oof: cor={:.3} rmse={:.3} range [{:.3},{:.3}] | full: cor={:.3} rmse={:.3} [{:.1}s]",
                    pearson(&oof, &p_true),
                    rmse(&oof, &p_true),
                    oof.iter().cloned().fold(f64::INFINITY, f64::min),
                    oof.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    pearson(&full, &p_true),
                    rmse(&full, &p_true),
                    t0.elapsed().as_secs_f64()
                );
            }
        }
    }

    // ---- Part B: S-learner capacity sweep on S3 ----
    if mode == "all" || mode == "s" {
        println!("== B: S-learner on s3 under different budgets ==");
        let mut sc = Scenario::new(ScenarioKind::S3, 9);
        sc.n = 1000;
        let ds = simulate(&sc).unwrap();
        let mut tc = Scenario::new(ScenarioKind::S3, 909);
        tc.n = 4000;
        let test = simulate(&tc).unwrap();
        let prop = fit_propensity(&ds, PropensitySpec::Estimate, &opts(compact_grid(200), 9)).unwrap();
        for (label, grid) in [
            ("compact200 (bench today)", compact_grid(200)),
            ("e0.1 d3 mcw5 r800", single(0.1, 3, 5.0, 800)),
            ("e0.1 d4 mcw5 r800", single(0.1, 4, 5.0, 800)),
            ("e0.05 d4 mcw5 r1500", single(0.05, 4, 5.0, 1500)),
            ("cs0.5 ss0.8 e0.05 d3 r800", single_cs(0.05, 3, 5.0, 800, 0.5, 0.8, 0.0, 1.0)),
            ("cs0.3 ss0.8 e0.05 d3 r800", single_cs(0.05, 3, 5.0, 800, 0.3, 0.8, 0.0, 1.0)),
            ("cs0.5 ss0.8 e0.05 d2 r1200", single_cs(0.05, 2, 5.0, 1200, 0.5, 0.8, 0.0, 1.0)),
            ("g1 l10 e0.05 d3 r800", single_cs(0.05, 3, 5.0, 800, 1.0, 1.0, 1.0, 10.0)),
            ("cs0.5 g1 l10 e0.05 d3 r800", single_cs(0.05, 3, 5.0, 800, 0.5, 0.8, 1.0, 10.0)),
        ] {
            eval_learner(label, LearnerKind::S, &ds, &prop, &opts(grid, 9), &test);
        }
    }

    // ---- Part C: DR on S3, true vs estimated propensity ----
    if mode == "all" || mode == "dr3" {
        println!("== C: DR on s3: estimated vs true propensity ==");
        let mut sc = Scenario::new(ScenarioKind::S3, 9);
        sc.n = 1000;
        let ds = simulate(&sc).unwrap();
        let mut tc = Scenario::new(ScenarioKind::S3, 909);
        tc.n = 4000;
        let test = simulate(&tc).unwrap();
        let est = fit_propensity(&ds, PropensitySpec::Estimate, &opts(compact_grid(200), 9)).unwrap();
        let p_true: Vec<f64> = true_propensity(&ds)
            .into_iter()
            .map(|p| p.clamp(DEFAULT_CLIP.0, DEFAULT_CLIP.1))
            .collect();
        let dummy = match &est.mode {
            PropensityMode::Estimated { model, .. } => model.clone(),
            PropensityMode::KnownConstant(_) => unreachable!(),
        };
        let truth = PropensityModel {
            mode: PropensityMode::Estimated { model: dummy, oof: p_true },
            clip: DEFAULT_CLIP,
        };
        for (label, grid) in [
            ("DR est-p compact200", compact_grid(200)),
            ("DR est-p r800", single(0.1, 3, 5.0, 800)),
        ] {
            eval_learner(label, LearnerKind::Dr, &ds, &est, &opts(grid, 9), &test);
        }
        for (label, grid) in [
            ("DR true-p compact200", compact_grid(200)),
            ("DR true-p r800", single(0.1, 3, 5.0, 800)),
        ] {
            eval_learner(label, LearnerKind::Dr, &ds, &truth, &opts(grid, 9), &test);
        }
    }

    // ---- Part D: R and DR on S2 under bigger budgets ----
    if mode == "all" || mode == "s2" {
        println!("== D: R/DR on s2 (known p=0.75) under different budgets ==");
        let mut sc = Scenario::new(ScenarioKind::S2, 9);
        sc.n = 1000;
        let ds = simulate(&sc).unwrap();
        let mut tc = Scenario::new(ScenarioKind::S2, 909);
        tc.n = 4000;
        let test = simulate(&tc).unwrap();
        let prop = PropensityModel::known_constant(0.75).unwrap();
        for kind in [LearnerKind::R, LearnerKind::Dr] {
            for (label, grid) in [
                ("compact200", compact_grid(200)),
                ("e0.1 d3 mcw5 r800", single(0.1, 3, 5.0, 800)),
            ] {
                eval_learner(&format!("{kind} {label}"), kind, &ds, &prop, &opts(grid, 9), &test);
            }
        }
    }
}
