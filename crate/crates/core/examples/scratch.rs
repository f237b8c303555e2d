//! Dev scratch: quick bias probes of the estimator grid (not a test).

use gsurv_core::estimators::{estimate_tmle_crossfit, EstimateOptions};
use gsurv_core::intervene::{make_multiplicative_shift, InterventionSpec};
use gsurv_core::oracle::{generate_panel, Dgp};
use gsurv_core::seed::derive_seed;
use gsurv_core::simlab::*;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("study1");
    match which {
        "study1" => study1(),
        "study2" => study2(),
        _ => panic!("unknown probe"),
    }
}

fn study1() {
    let reps = 40;
    let n = 2500;
    for (est, scen) in [
        (EstimatorId::Wice, ModelScenario::AllCorrect),
        (EstimatorId::Wice, ModelScenario::OutcomeOnly),
        (EstimatorId::Wice, ModelScenario::TreatmentCensoringOnly),
        (EstimatorId::Ice, ModelScenario::AllCorrect),
        (EstimatorId::Ice, ModelScenario::TreatmentCensoringOnly),
        (EstimatorId::Ipw, ModelScenario::AllCorrect),
        (EstimatorId::Ipw, ModelScenario::OutcomeOnly),
    ] {
        let mut cfg = ScenarioConfig::new(
            "probe",
            DgpId::Study1 { horizon: 5, censoring: true },
            n,
            0.5,
            est,
        );
        cfg.scenario = scen.clone();
        cfg.replicates = reps;
        cfg.seed = 1234;
        let t0 = Instant::now();
        let (row, _) = run_scenario(&cfg).unwrap();
        println!(
            "{:<5} {:<25} truth={:.4} bias={:+.4} se={:.4} se_mean={:.4} t={:?}",
            est.tag(),
            scen.tag(),
            row.truth,
            row.bias,
            row.se,
            row.se / (reps as f64).sqrt(),
            t0.elapsed() / reps as u32
        );
    }
    // k-split at J=3, censor-free
    for k in 0..=3 {
        let mut cfg = ScenarioConfig::new(
            "ksplit",
            DgpId::Study1 { horizon: 3, censoring: false },
            2500,
            0.5,
            EstimatorId::Wice,
        );
        cfg.scenario = ModelScenario::KSplit(k);
        cfg.replicates = 40;
        cfg.seed = 77;
        let (row, _) = run_scenario(&cfg).unwrap();
        println!(
            "wice  ksplit k={k}            truth={:.4} bias={:+.4} se_mean={:.4}",
            row.truth,
            row.bias,
            row.se / (40f64).sqrt()
        );
    }
}

fn study2() {
    let n = 1000;
    let reps = 24;
    let dgp = Study2Dgp::default();
    let spec = InterventionSpec::Structured(make_multiplicative_shift(0.5, 3).unwrap());
    let truth = 0.6313;
    for est in [EstimatorId::Tmle, EstimatorId::Ice, EstimatorId::Ipw] {
        let t0 = Instant::now();
        let mut psis = Vec::new();
        let mut cover = 0usize;
        for rep in 0..reps {
            let rep_seed = derive_seed(4321, 0x5EED, rep as u64);
            let panel = generate_panel(&dgp, n, rep_seed);
            let bundle = study2_bundle(
                &dgp,
                gsurv_core::nuisance::EnsembleConfig::default().with_cv_folds(2),
            );
            let opts = EstimateOptions {
                seed: derive_seed(rep_seed, 0xE57, 0),
                ..Default::default()
            };
            let r = match est {
                EstimatorId::Tmle => {
                    estimate_tmle_crossfit(&panel, &spec, &bundle, 2, &opts).unwrap()
                }
                EstimatorId::Ice => {
                    gsurv_core::estimators::estimate_ice(&panel, &spec, &bundle, &opts).unwrap()
                }
                _ => gsurv_core::estimators::estimate_ipw(&panel, &spec, &bundle, &opts).unwrap(),
            };
            if let (Some(lo), Some(hi)) = (r.ci_low, r.ci_high) {
                if lo <= truth && truth <= hi {
                    cover += 1;
                }
            }
            psis.push(r.psi_hat);
        }
        let mean = psis.iter().sum::<f64>() / reps as f64;
        let sd = (psis.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / reps as f64).sqrt();
        println!(
            "{:<5} bias={:+.4} se={:.4} se_mean={:.4} cover={}/{} t={:?}",
            est.tag(),
            mean - truth,
            sd,
            sd / (reps as f64).sqrt(),
            cover,
            reps,
            t0.elapsed() / reps as u32
        );
    }
    let _ = dgp.indicator_index();
}
