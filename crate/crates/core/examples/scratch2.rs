//! Dev scratch: focused high-replicate bias probes.
use gsurv_core::simlab::*;
use std::time::Instant;

fn main() {
    let reps = 200;
    for (est, scen, seed) in [
        (EstimatorId::Wice, ModelScenario::AllCorrect, 900u64),
        (EstimatorId::Ice, ModelScenario::AllCorrect, 901),
        (EstimatorId::Ipw, ModelScenario::AllCorrect, 902),
        (EstimatorId::Ipw, ModelScenario::OutcomeOnly, 903),
        (EstimatorId::Wice, ModelScenario::OutcomeOnly, 904),
    ] {
        let mut cfg = ScenarioConfig::new(
            "probe",
            DgpId::Study1 { horizon: 5, censoring: true },
            2500,
            0.5,
            est,
        );
        cfg.scenario = scen.clone();
        cfg.replicates = reps;
        cfg.seed = seed;
        let t0 = Instant::now();
        let (row, _) = run_scenario(&cfg).unwrap();
        println!(
            "{:<5} {:<25} truth={:.4} bias={:+.5} se={:.4} se_mean={:.5} z={:+.1} t={:?}",
            est.tag(),
            scen.tag(),
            row.truth,
            row.bias,
            row.se,
            row.se / (reps as f64).sqrt(),
            row.bias / (row.se / (reps as f64).sqrt()),
            t0.elapsed()
        );
    }
}
