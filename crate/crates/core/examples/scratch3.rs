//! Dev scratch: EIF mean-zero at true nuisances (censored Study 1).
use gsurv_core::eif::{eif_variance, evaluate_eif, EifInputs};
use gsurv_core::intervene::make_multiplicative_shift;
use gsurv_core::oracle::{generate_panel, Dgp, ExactTq, GenCtx};
use gsurv_core::simlab::Study1Dgp;
use std::time::Instant;

fn main() {
    let dgp = Study1Dgp::default();
    let n = 100_000;
    let panel = generate_panel(&dgp, n, 2024);
    for delta in [0.25, 0.5, 0.75] {
        let t0 = Instant::now();
        let spec = make_multiplicative_shift(delta, 0).unwrap();
        let tq = ExactTq::new(&dgp, &spec).unwrap();
        let f_hat = |s: usize, j: usize| -> Vec<f64> {
            let traj = &panel.subjects[s];
            let ctx = GenCtx {
                past: &traj.records[..j],
                current: &traj.records[j].covariates,
                current_treatment: None,
            };
            let f1 = dgp.treatment_prob(&ctx);
            vec![1.0 - f1, f1]
        };
        let hazard = |s: usize, j: usize| -> f64 {
            let traj = &panel.subjects[s];
            let ctx = GenCtx {
                past: &traj.records[..j],
                current: &traj.records[j].covariates,
                current_treatment: Some(traj.records[j].treatment),
            };
            dgp.censor_prob(&ctx)
        };
        let q_hat = |s: usize, j: usize, a: Option<f64>| -> f64 {
            tq.q(&panel.subjects[s], j, a)
        };
        let summary = evaluate_eif(&EifInputs {
            spec: &spec,
            panel: &panel,
            f_hat: &f_hat,
            censor_hazard: Some(&hazard),
            q_hat: &q_hat,
        })
        .unwrap();
        let vals: Vec<f64> = summary.values.iter().map(|v| v.value).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = eif_variance(&vals).unwrap();
        let sd_of_mean = var.variance_of_mean.sqrt();
        println!(
            "delta={delta}: psi_hat={:.5} mean(EIF)={:+.6} 3*sd/sqrt(n)={:.6} ok={} t={:?}",
            summary.psi_hat,
            mean,
            3.0 * sd_of_mean,
            mean.abs() < 3.0 * sd_of_mean,
            t0.elapsed()
        );
        // decomposition identity on a few subjects
        for s in [0usize, 17, 4242] {
            let v = &summary.values[s];
            let resum: f64 =
                v.interval_terms.iter().sum::<f64>() + v.terminal + v.t0 - summary.psi_hat;
            assert!((resum - v.value).abs() < 1e-12);
        }
    }
}
