//! Smallest full pass through the toolkit: simulate a trial, fit two
//! effect estimators, explain one with each attribution route, and score
//! how well the attributions point at the real effect modifiers.

use catebench::data::pearson;
use catebench::learners::{
    fit_cate, fit_propensity, FitOptions, LearnerKind, PropensitySpec,
};
use catebench::metrics::{
    instance_stats, margin_normalized, net3, recovery_corr, top1, Normalization,
};
use catebench::shap::{summary_shap, KernelShapConfig};
use catebench::simgen::{simulate, Scenario, ScenarioKind};
use catebench::learners::{shap_strategy1, shap_strategy2, shap_strategy3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario { n: 600, ..Scenario::new(ScenarioKind::S2, 7) };
    let ds = simulate(&scenario)?;
    let predictive = ds.oracle_predictive_set.clone().unwrap();
    println!("simulated {} rows x {} columns", ds.n(), ds.p());

    let opts = FitOptions::with_seed(7);
    let prop = fit_propensity(
        &ds,
        PropensitySpec::KnownConstant(scenario.known_propensity().unwrap()),
        &opts,
    )?;

    for kind in [LearnerKind::S, LearnerKind::R] {
        let model = fit_cate(&ds, kind, &prop, &opts)?;
        let tau_hat = model.predict_cate(&ds.features)?;
        let oracle = ds.oracle_tau.as_ref().unwrap();
        println!(
            "{kind} learner: cor(tau, tau_hat) = {:.3}",
            pearson(oracle, &tau_hat)
        );

        // Surrogate route works for every learner.
        let (_, shap3) = shap_strategy3(&model, &ds.features, &ds.features, &opts)?;
        let summary = summary_shap(&shap3);
        let t1 = top1(&summary.importance, &predictive)?;
        let n3 = net3(&summary.importance, &predictive)?;
        let m = margin_normalized(&summary.importance, &predictive, Normalization::MinMax)?;
        let inst = instance_stats(&shap3, &tau_hat, &predictive)?;
        let (cor3, cor4) = recovery_corr(&shap3, &ds.features)?;
        println!(
            "  surrogate route: top1={t1} net3={n3} margin={m:.3} p_win={} cor3={cor3:.3} cor4={cor4:.3}",
            inst.p_win
        );

        if kind.has_final_stage() {
            let shap2 = shap_strategy2(&model, &ds.features)?;
            let s2 = summary_shap(&shap2);
            println!(
                "  final-stage route: top1={} margin={:.3}",
                top1(&s2.importance, &predictive)?,
                margin_normalized(&s2.importance, &predictive, Normalization::MinMax)?
            );
        }

        // Kernel route on a small slice: it is the expensive one.
        let background = ds.features.select_rows(&(0..60).collect::<Vec<_>>());
        let slice = ds.features.select_rows(&(0..40).collect::<Vec<_>>());
        let shap1 = shap_strategy1(&model, &background, &slice, &KernelShapConfig::default())?;
        let s1 = summary_shap(&shap1);
        println!(
            "  model-agnostic route: top1={} (40-row slice)",
            top1(&s1.importance, &predictive)?
        );
    }
    Ok(())
}
