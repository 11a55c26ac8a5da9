//! End-to-end acceptance suite. Each test prints one PASS line with its
//! headline numbers, or panics with a FAIL line naming every violated
//! bound. Tests 05/08/09/10 share one benchmark run (see `shared_run`).

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use catebench::bench::{
    cost_probe, run_benchmark, write_records_csv, BenchConfig, BenchOutcome, SummaryRow,
};
use catebench::data::{pearson, Matrix};
use catebench::gbt::{fit_gbt, Hyperparams, Loss};
use catebench::learners::LearnerKind;
use catebench::shap::oracle::{
    brute_force_shap, ensemble_cover_value, marginal_value, random_ensemble,
};
use catebench::shap::{kernel_shap, tree_shap, KernelShapConfig, MaskMode};
use catebench::simgen::{oracle_stats, Scenario, ScenarioKind};

fn finish(name: &str, failures: Vec<String>, detail: String) {
    if failures.is_empty() {
        println!("{name}: PASS — {detail}");
    } else {
        panic!("{name}: FAIL — {}", failures.join("; "));
    }
}

fn check(failures: &mut Vec<String>, ok: bool, msg: String) {
    if !ok {
        failures.push(msg);
    }
}

// -----------------------------------------------------------------------
// 01: axioms of the exhaustive attribution oracle
// -----------------------------------------------------------------------

#[test]
fn criterion_01_shapley_axioms() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut failures = Vec::new();
    let tol = 1e-10;

    for game in 0..200 {
        let p = rng.gen_range(2..=8usize);
        let full = (1usize << p) - 1;
        let v1: Vec<f64> = (0..=full).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let v2: Vec<f64> = (0..=full).map(|_| rng.gen_range(-5.0..5.0)).collect();

        // Efficiency on a raw random game.
        let phi = brute_force_shap(|m| v1[m as usize], p).unwrap();
        let eff = (phi.iter().sum::<f64>() - (v1[full] - v1[0])).abs();
        check(&mut failures, eff <= tol, format!("game {game}: efficiency off by {eff:.2e}"));

        // Symmetry: symmetrize v1 over a random pair (i, j); their shares
        // must coincide.
        let i = rng.gen_range(0..p);
        let j = (i + rng.gen_range(1..p)) % p;
        let swap = |mask: u128| -> u128 {
            let bi = mask >> i & 1;
            let bj = mask >> j & 1;
            (mask & !((1 << i) | (1 << j))) | (bj << i) | (bi << j)
        };
        let phi_sym =
            brute_force_shap(|m| 0.5 * (v1[m as usize] + v1[swap(m) as usize]), p).unwrap();
        let gap = (phi_sym[i] - phi_sym[j]).abs();
        check(&mut failures, gap <= tol, format!("game {game}: symmetry gap {gap:.2e}"));

        // Dummy: a player whose marginal contribution is the constant
        // delta receives exactly delta.
        let d = rng.gen_range(0..p);
        let delta: f64 = rng.gen_range(-2.0..2.0);
        let dummy_game = |mask: u128| -> f64 {
            let without = mask & !(1 << d);
            v1[without as usize] + if mask >> d & 1 == 1 { delta } else { 0.0 }
        };
        let phi_dummy = brute_force_shap(dummy_game, p).unwrap();
        let derr = (phi_dummy[d] - delta).abs();
        check(&mut failures, derr <= tol, format!("game {game}: dummy off by {derr:.2e}"));

        // Additivity across two independent games.
        let phi_a = brute_force_shap(|m| v1[m as usize], p).unwrap();
        let phi_b = brute_force_shap(|m| v2[m as usize], p).unwrap();
        let phi_ab = brute_force_shap(|m| v1[m as usize] + v2[m as usize], p).unwrap();
        let aerr = (0..p)
            .map(|k| (phi_ab[k] - phi_a[k] - phi_b[k]).abs())
            .fold(0.0f64, f64::max);
        check(&mut failures, aerr <= tol, format!("game {game}: additivity off by {aerr:.2e}"));
    }

    let secs = t0.elapsed().as_secs_f64();
    check(&mut failures, secs < 10.0, format!("took {secs:.1}s (limit 10s)"));
    finish(
        "criterion 01 (shapley axioms)",
        failures,
        format!("200 games, 4 axioms each at 1e-10, {secs:.2}s"),
    );
}

// -----------------------------------------------------------------------
// 02: exact tree attribution equals exhaustive enumeration
// -----------------------------------------------------------------------

#[test]
fn criterion_02_tree_shap_exactness() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut failures = Vec::new();
    let mut worst_gap = 0.0f64;
    let mut worst_local = 0.0f64;

    for trial in 0..200 {
        let p = rng.gen_range(2..=8usize);
        let n_trees = rng.gen_range(1..=5usize);
        let max_depth = rng.gen_range(1..=3usize);
        let ensemble = random_ensemble(p, n_trees, max_depth, &mut rng);

        let rows: Vec<Vec<f64>> =
            (0..3).map(|_| (0..p).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();
        let instances = Matrix::from_rows(&rows).unwrap();
        let shap = tree_shap(&ensemble, &instances).unwrap();
        worst_local = worst_local.max(shap.max_local_accuracy_violation());

        for (i, x) in rows.iter().enumerate() {
            let oracle =
                brute_force_shap(|mask| ensemble_cover_value(&ensemble, x, mask), p).unwrap();
            for j in 0..p {
                let gap = (shap.phi.get(i, j) - oracle[j]).abs();
                worst_gap = worst_gap.max(gap);
                check(
                    &mut failures,
                    gap <= 1e-9,
                    format!("trial {trial} instance {i} feature {j}: gap {gap:.2e}"),
                );
            }
        }
    }

    check(
        &mut failures,
        worst_local <= 1e-8,
        format!("local accuracy violated by {worst_local:.2e}"),
    );
    let secs = t0.elapsed().as_secs_f64();
    check(&mut failures, secs < 60.0, format!("took {secs:.1}s (limit 60s)"));
    finish(
        "criterion 02 (tree shap exactness)",
        failures,
        format!(
            "200 ensembles x 3 instances, max gap {worst_gap:.2e}, max local-accuracy residual {worst_local:.2e}, {secs:.2}s"
        ),
    );
}

// -----------------------------------------------------------------------
// 03: kernel route, exact mode == enumeration; sampled error shrinks
// -----------------------------------------------------------------------

#[test]
fn criterion_03_kernel_shap_equivalence() {
    let t0 = Instant::now();
    let mut failures = Vec::new();
    let p = 5;
    let n = 200;

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut cols = Vec::new();
    for _ in 0..p {
        cols.push((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
    }
    let features = Matrix::from_cols(cols).unwrap();
    let targets: Vec<f64> = (0..n)
        .map(|i| {
            let x = features.row(i);
            x[0] + x[1] * x[2] - 0.5 * x[3].max(0.0) + 0.05 * rng.gen_range(-1.0..1.0)
        })
        .collect();
    let hp = Hyperparams { n_rounds: 100, ..Hyperparams::default() };
    let model = fit_gbt(&features, &targets, None, &hp, Loss::Squared, &mut rng).unwrap();
    let predict = |m: &Matrix| model.predict(m);

    let n_inst = 8;
    let instances = features.select_rows(&(0..n_inst).collect::<Vec<_>>());
    let exact = kernel_shap(
        &predict,
        &features,
        &instances,
        &KernelShapConfig { mode: MaskMode::Exact, seed: 0 },
    )
    .unwrap();

    // Enumeration oracle on the marginal-expectation game, full-training
    // background.
    let mut worst = 0.0f64;
    for i in 0..n_inst {
        let x: Vec<f64> = features.row(i).to_vec();
        let oracle = brute_force_shap(
            |mask| marginal_value(&predict, &features, &x, mask).unwrap(),
            p,
        )
        .unwrap();
        for j in 0..p {
            worst = worst.max((exact.phi.get(i, j) - oracle[j]).abs());
        }
    }
    check(
        &mut failures,
        worst <= 1e-6,
        format!("exact mode deviates from enumeration by {worst:.2e}"),
    );

    // Sampled-mode error must shrink as the coalition budget grows.
    let mut errs = Vec::new();
    for &n_c in &[64usize, 256, 1024] {
        let sampled = kernel_shap(
            &predict,
            &features,
            &instances,
            &KernelShapConfig { mode: MaskMode::Sampled(n_c), seed: 7 },
        )
        .unwrap();
        let mut total = 0.0;
        for i in 0..n_inst {
            for j in 0..p {
                total += (sampled.phi.get(i, j) - exact.phi.get(i, j)).abs();
            }
        }
        errs.push(total / (n_inst * p) as f64);
    }
    check(
        &mut failures,
        errs[0] > errs[1] && errs[1] > errs[2],
        format!("sampled errors not strictly decreasing: {errs:?}"),
    );

    let secs = t0.elapsed().as_secs_f64();
    check(&mut failures, secs < 300.0, format!("took {secs:.1}s (limit 5min)"));
    finish(
        "criterion 03 (kernel equivalence)",
        failures,
        format!("exact gap {worst:.2e}; sampled errors {errs:?}; {secs:.1}s"),
    );
}

// -----------------------------------------------------------------------
// 04: simulated-trial calibration against closed targets
// -----------------------------------------------------------------------

#[test]
fn criterion_04_simulation_calibration() {
    let t0 = Instant::now();
    let mut failures = Vec::new();
    let n_mc = 1_000_000;

    let s2 = oracle_stats(&Scenario::new(ScenarioKind::S2, 404), n_mc).unwrap();
    let s3 = oracle_stats(&Scenario::new(ScenarioKind::S3, 405), n_mc).unwrap();

    let mut within = |name: &str, got: f64, want: f64, tol: f64| {
        check(
            &mut failures,
            (got - want).abs() <= tol,
            format!("{name} = {got:.4}, want {want} +/- {tol}"),
        );
    };
    within("mean effect", s2.mean_tau, 0.0119, 0.003);
    within("benefit prevalence", s2.prevalence, 0.330, 0.005);
    within("benefit-subgroup effect", s2.subgroup_effect, 0.665, 0.01);
    within("randomized treated share", s2.treated_fraction, 0.75, 0.002);
    within("confounded treated share", s3.treated_fraction, 0.25, 0.002);
    within("cor(effect, component 1)", s2.cor_tau_g1, 0.843, 0.01);
    within("cor(effect, component 2)", s2.cor_tau_g2, 0.537, 0.01);

    let secs = t0.elapsed().as_secs_f64();
    check(&mut failures, secs < 120.0, format!("took {secs:.1}s (limit 2min)"));
    finish(
        "criterion 04 (simulation calibration)",
        failures,
        format!(
            "mean {:.4}, prevalence {:.3}, subgroup {:.3}, treated {:.3}/{:.3}, cors {:.3}/{:.3}, {secs:.1}s",
            s2.mean_tau,
            s2.prevalence,
            s2.subgroup_effect,
            s2.treated_fraction,
            s3.treated_fraction,
            s2.cor_tau_g1,
            s2.cor_tau_g2
        ),
    );
}

// -----------------------------------------------------------------------
// Shared benchmark run for criteria 05, 08, 09, 10
// -----------------------------------------------------------------------

static SHARED: OnceLock<BenchOutcome> = OnceLock::new();

fn shared_run() -> &'static BenchOutcome {
    SHARED.get_or_init(|| {
        let cfg = BenchConfig {
            scenarios: vec![ScenarioKind::S2, ScenarioKind::S3],
            n_values: vec![1000],
            beta_values: vec![1.0],
            iterations: 50,
            learners: LearnerKind::ALL.to_vec(),
            strategies: vec![2, 3],
            master_seed: 41,
            tune_once: true,
            test_n: 10_000,
            ..BenchConfig::default()
        };
        let out = run_benchmark(&cfg).expect("shared benchmark run");
        assert_eq!(out.failed_cells, 0, "shared run had failed cells");
        out
    })
}

fn row<'a>(out: &'a BenchOutcome, scenario: &str, learner: &str, strategy: &str) -> &'a SummaryRow {
    out.summary
        .iter()
        .find(|s| s.scenario == scenario && s.learner == learner && s.strategy == strategy)
        .unwrap_or_else(|| panic!("no summary row for {scenario}/{learner}/{strategy}"))
}

fn mean_of(pair: Option<(f64, f64)>) -> f64 {
    pair.expect("metric was never populated").0
}

// -----------------------------------------------------------------------
// 05: ranking quality per learner on both trial designs
// -----------------------------------------------------------------------

#[test]
fn criterion_05_ranking_table() {
    let t0 = Instant::now();
    let out = shared_run();
    let mut failures = Vec::new();

    let top1 = |sc: &str, l: &str| mean_of(row(out, sc, l, "3").top1);
    let s_s2 = top1("s2", "S");
    let r_s3 = top1("s3", "R");
    let dr_net3_s2 = mean_of(row(out, "s2", "DR", "3").net3);

    check(&mut failures, s_s2 >= 0.90, format!("S on s2 top1 {s_s2:.3} < 0.90"));
    check(&mut failures, r_s3 >= 0.78, format!("R on s3 top1 {r_s3:.3} < 0.78"));
    check(&mut failures, dr_net3_s2 >= 0.95, format!("DR on s2 net3 {dr_net3_s2:.3} < 0.95"));

    let (t_s2, x_s2, r_s2, dr_s2, cf_s2) =
        (top1("s2", "T"), top1("s2", "X"), top1("s2", "R"), top1("s2", "DR"), top1("s2", "CF"));
    check(
        &mut failures,
        s_s2 >= r_s2.max(dr_s2),
        format!("s2 order: S {s_s2:.3} < max(R {r_s2:.3}, DR {dr_s2:.3})"),
    );
    check(
        &mut failures,
        r_s2.max(dr_s2) >= x_s2,
        format!("s2 order: max(R {r_s2:.3}, DR {dr_s2:.3}) < X {x_s2:.3}"),
    );
    check(
        &mut failures,
        x_s2 > t_s2.max(cf_s2),
        format!("s2 order: X {x_s2:.3} <= max(T {t_s2:.3}, CF {cf_s2:.3})"),
    );

    let (t_s3, s_s3, x_s3, dr_s3, cf_s3) =
        (top1("s3", "T"), top1("s3", "S"), top1("s3", "X"), top1("s3", "DR"), top1("s3", "CF"));
    check(
        &mut failures,
        r_s3.max(dr_s3).max(x_s3) > s_s3,
        format!("s3 order: max(R {r_s3:.3}, DR {dr_s3:.3}, X {x_s3:.3}) <= S {s_s3:.3}"),
    );
    check(
        &mut failures,
        s_s3 > t_s3.max(cf_s3),
        format!("s3 order: S {s_s3:.3} <= max(T {t_s3:.3}, CF {cf_s3:.3})"),
    );

    let secs = t0.elapsed().as_secs_f64();
    finish(
        "criterion 05 (ranking table)",
        failures,
        format!(
            "s2 top1 T/S/X/R/DR/CF = {t_s2:.2}/{s_s2:.2}/{x_s2:.2}/{r_s2:.2}/{dr_s2:.2}/{cf_s2:.2}; s3 = {t_s3:.2}/{s_s3:.2}/{x_s3:.2}/{r_s3:.2}/{dr_s3:.2}/{cf_s3:.2}; DR s2 net3 {dr_net3_s2:.2}; {secs:.0}s"
        ),
    );
}

// -----------------------------------------------------------------------
// 06: strong prognostic signal buries the two-model learner
// -----------------------------------------------------------------------

#[test]
fn criterion_06_prognostic_strength_sweep() {
    let t0 = Instant::now();
    let cfg = BenchConfig {
        scenarios: vec![ScenarioKind::S2],
        n_values: vec![1000],
        beta_values: vec![0.0, 2.0],
        iterations: 50,
        learners: vec![LearnerKind::T],
        strategies: vec![3],
        master_seed: 43,
        tune_once: true,
        test_n: 2000,
        ..BenchConfig::default()
    };
    let out = run_benchmark(&cfg).unwrap();
    let mut failures = Vec::new();
    check(&mut failures, out.failed_cells == 0, format!("{} failed cells", out.failed_cells));

    let mean_top1 = |beta: f64| {
        out.summary
            .iter()
            .find(|s| s.beta == beta && s.strategy == "3")
            .map(|s| mean_of(s.top1))
            .unwrap_or_else(|| panic!("no summary for beta {beta}"))
    };
    let at0 = mean_top1(0.0);
    let at2 = mean_top1(2.0);
    check(&mut failures, at2 < 0.10, format!("top1 at beta=2 is {at2:.3}, want < 0.10"));
    check(&mut failures, at0 >= at2, format!("top1 beta=0 {at0:.3} < beta=2 {at2:.3}"));

    let secs = t0.elapsed().as_secs_f64();
    finish(
        "criterion 06 (prognostic sweep)",
        failures,
        format!("T top1 at beta 0/2 = {at0:.3}/{at2:.3}; {secs:.0}s"),
    );
}

// -----------------------------------------------------------------------
// 07: surrogate attribution of the forest beats its own split counts
// -----------------------------------------------------------------------

#[test]
fn criterion_07_surrogate_beats_split_counts() {
    let t0 = Instant::now();
    let cfg = BenchConfig {
        scenarios: vec![ScenarioKind::S2],
        n_values: vec![1000],
        beta_values: vec![1.0],
        iterations: 100,
        learners: vec![LearnerKind::Cf],
        strategies: vec![3],
        master_seed: 47,
        tune_once: true,
        test_n: 2000,
        ..BenchConfig::default()
    };
    let out = run_benchmark(&cfg).unwrap();
    let mut failures = Vec::new();
    check(&mut failures, out.failed_cells == 0, format!("{} failed cells", out.failed_cells));

    let shap_top1 = mean_of(row(&out, "s2", "CF", "3").top1);
    let shap_net3 = mean_of(row(&out, "s2", "CF", "3").net3);
    let vip_top1 = mean_of(row(&out, "s2", "CF", "vip").top1);
    let vip_net3 = mean_of(row(&out, "s2", "CF", "vip").net3);

    check(
        &mut failures,
        shap_top1 > vip_top1,
        format!("surrogate top1 {shap_top1:.3} <= split-count top1 {vip_top1:.3}"),
    );
    check(
        &mut failures,
        shap_net3 > vip_net3,
        format!("surrogate net3 {shap_net3:.3} <= split-count net3 {vip_net3:.3}"),
    );

    let secs = t0.elapsed().as_secs_f64();
    finish(
        "criterion 07 (surrogate vs split counts)",
        failures,
        format!(
            "top1 {shap_top1:.3} vs {vip_top1:.3}, net3 {shap_net3:.3} vs {vip_net3:.3}; {secs:.0}s"
        ),
    );
}

// -----------------------------------------------------------------------
// 08: the two exact routes agree for final-stage learners
// -----------------------------------------------------------------------

#[test]
fn criterion_08_final_stage_vs_surrogate_routes() {
    let t0 = Instant::now();
    let out = shared_run();
    let mut failures = Vec::new();
    let mut max_z = 0.0f64;

    for scenario in ["s2", "s3"] {
        for learner in ["R", "DR"] {
            let a = row(out, scenario, learner, "2");
            let b = row(out, scenario, learner, "3");
            for (metric, pa, pb) in
                [("top1", a.top1, b.top1), ("net3", a.net3, b.net3), ("margin", a.margin, b.margin)]
            {
                let (ma, sa) = pa.expect("strategy-2 metric");
                let (mb, sb) = pb.expect("strategy-3 metric");
                let pooled = (sa * sa + sb * sb).sqrt();
                let diff = (ma - mb).abs();
                // A zero pooled SE with a zero diff is agreement, not a
                // division hazard.
                let z = if diff == 0.0 { 0.0 } else { diff / pooled.max(1e-12) };
                max_z = max_z.max(z);
                check(
                    &mut failures,
                    diff < 3.0 * pooled || diff == 0.0,
                    format!(
                        "{scenario}/{learner}/{metric}: |{ma:.3} - {mb:.3}| = {diff:.3} >= 3 x pooled SE {pooled:.3}"
                    ),
                );
            }
        }
    }

    let secs = t0.elapsed().as_secs_f64();
    finish(
        "criterion 08 (route agreement)",
        failures,
        format!("max |diff|/SE = {max_z:.2} over 12 comparisons (bound 3); {secs:.0}s"),
    );
}

// -----------------------------------------------------------------------
// 09: instance-level attribution behavior
// -----------------------------------------------------------------------

#[test]
fn criterion_09_instance_level_stats() {
    let t0 = Instant::now();
    let out = shared_run();
    let mut failures = Vec::new();

    let t_cor3 = mean_of(row(out, "s2", "T", "3").cor3);
    let s_pwin = mean_of(row(out, "s2", "S", "3").p_win);
    let t_pwin = mean_of(row(out, "s2", "T", "3").p_win);

    check(
        &mut failures,
        (t_cor3 - 0.867).abs() <= 0.05,
        format!("T cor3 {t_cor3:.3} not within 0.05 of 0.867"),
    );
    check(&mut failures, s_pwin >= 0.90, format!("S p_win {s_pwin:.3} < 0.90"));
    check(&mut failures, t_pwin <= 0.15, format!("T p_win {t_pwin:.3} > 0.15"));

    let secs = t0.elapsed().as_secs_f64();
    finish(
        "criterion 09 (instance-level stats)",
        failures,
        format!("T cor3 {t_cor3:.3}, S p_win {s_pwin:.3}, T p_win {t_pwin:.3}; {secs:.0}s"),
    );
}

// -----------------------------------------------------------------------
// 10: separation margins track estimation quality
// -----------------------------------------------------------------------

#[test]
fn criterion_10_margin_tracks_estimation_quality() {
    let t0 = Instant::now();
    let out = shared_run();
    let mut failures = Vec::new();

    let mut margins = Vec::new();
    let mut cors = Vec::new();
    for r in &out.records {
        if r.scenario == "s2" && r.strategy == "3" && r.status == "ok" {
            if let (Some(m), Some(c)) = (r.margin, r.cor_tau_tauhat) {
                margins.push(m);
                cors.push(c);
            }
        }
    }
    check(
        &mut failures,
        margins.len() >= 200,
        format!("only {} pooled runs", margins.len()),
    );
    let rho = pearson(&margins, &cors);
    check(&mut failures, rho > 0.3, format!("cor(margin, effect-recovery) = {rho:.3} <= 0.3"));

    let secs = t0.elapsed().as_secs_f64();
    finish(
        "criterion 10 (margin tracks estimation)",
        failures,
        format!("pooled cor = {rho:.3} over {} runs; {secs:.0}s", margins.len()),
    );
}

// -----------------------------------------------------------------------
// 11: cost scaling of the two attribution engines
// -----------------------------------------------------------------------

#[test]
fn criterion_11_cost_probe() {
    let t0 = Instant::now();
    let probe = cost_probe(100, &[2, 10, 200], 600, 11).unwrap();
    let mut failures = Vec::new();

    check(
        &mut failures,
        probe.kernel_monotone_increasing,
        format!(
            "kernel times not strictly increasing: {:?}",
            probe.kernel.iter().map(|e| e.wall_ms).collect::<Vec<_>>()
        ),
    );
    check(
        &mut failures,
        probe.min_kernel_over_tree >= 10.0,
        format!("tree route only {:.1}x faster than smallest kernel", probe.min_kernel_over_tree),
    );

    let secs = t0.elapsed().as_secs_f64();
    let times: Vec<String> =
        probe.kernel.iter().map(|e| format!("{}x: {:.0}ms", e.grid_entry, e.wall_ms)).collect();
    finish(
        "criterion 11 (cost probe)",
        failures,
        format!(
            "kernel {} | tree {:.0}ms | ratio {:.0}x; {secs:.0}s",
            times.join(", "),
            probe.tree_wall_ms,
            probe.min_kernel_over_tree
        ),
    );
}

// -----------------------------------------------------------------------
// 12: record files are byte-identical across reruns and worker counts
// -----------------------------------------------------------------------

#[test]
fn criterion_12_determinism() {
    let t0 = Instant::now();
    let cfg = BenchConfig {
        scenarios: vec![ScenarioKind::TlearnToy, ScenarioKind::HeadToHead],
        n_values: vec![200],
        beta_values: vec![1.0],
        iterations: 2,
        learners: vec![LearnerKind::T, LearnerKind::R],
        strategies: vec![2, 3],
        master_seed: 12,
        test_n: 500,
        grid: Some(vec![Hyperparams {
            n_rounds: 60,
            min_child_weight: 5.0,
            ..Hyperparams::default()
        }]),
        ..BenchConfig::default()
    };

    let bytes = |out: &BenchOutcome| -> Vec<u8> {
        let mut buf = Vec::new();
        write_records_csv(&out.records, &mut buf).unwrap();
        buf
    };
    let first = bytes(&run_benchmark(&cfg).unwrap());
    let second = bytes(&run_benchmark(&cfg).unwrap());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
    let third = bytes(&pool.install(|| run_benchmark(&cfg)).unwrap());

    let mut failures = Vec::new();
    check(&mut failures, first == second, "rerun changed records.csv".into());
    check(&mut failures, first == third, "8-worker pool changed records.csv".into());
    check(&mut failures, !first.is_empty(), "empty records".into());

    // The file really contains the failure-isolation schema it claims.
    let header = String::from_utf8(first.split(|&b| b == b'\n').next().unwrap().to_vec()).unwrap();
    check(
        &mut failures,
        header == "iteration,scenario,n,beta,learner,strategy,status,top1,net3,margin,cor_tau_tauhat,max_p,max_np,p_win,cor3,cor4,error",
        format!("unexpected header: {header}"),
    );

    let secs = t0.elapsed().as_secs_f64();
    finish(
        "criterion 12 (determinism)",
        failures,
        format!("{} bytes identical across 2 reruns + 8-worker pool; {secs:.0}s", first.len()),
    );
}

// -----------------------------------------------------------------------
// Sanity: shared-run guardrail used by 05/08/09/10
// -----------------------------------------------------------------------

#[test]
fn shared_run_covers_expected_cells() {
    let out = shared_run();
    // 2 scenarios x 50 iterations x (T,S,X 1 row; R,DR 2 rows; CF 2 rows).
    assert_eq!(out.records.len(), 2 * 50 * 9);
    let strategies: BTreeSet<&str> =
        out.records.iter().map(|r| r.strategy.as_str()).collect();
    assert_eq!(strategies, BTreeSet::from(["2", "3", "vip"]));
    assert!(out.records.iter().all(|r| r.status == "ok"));
}
