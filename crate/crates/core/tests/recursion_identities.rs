//! Cross-checks of the T/Q recursion against the point-treatment closed
//! forms, the plug-in equivalence of saturated ICE, and the reference-term
//! pathway.

use gsurv_core::data::{IntervalRecord, Panel, Trajectory};
use gsurv_core::eif::{evaluate_eif, point, EifInputs};
use gsurv_core::estimators::{estimate_ice, EstimateOptions, LearnerMode, ModelBundle};
use gsurv_core::intervene::{
    make_grace_uniform, make_multiplicative_shift, make_static, InterventionSpec,
};
use gsurv_core::nuisance::FormulaSpec;
use gsurv_core::oracle::{empirical_plugin, generate_panel, mc_truth, Dgp, ExactTq, GenCtx};
use gsurv_core::fixtures::{ToyLawT1, ToyLawT2};
use gsurv_core::seed::stream_rng;
use rand::Rng;

/// One-interval panel with arbitrary (m, f) tables: the generic recursion at
/// J = 1 must reproduce the displayed closed forms pointwise.
#[test]
fn theorem2_at_j1_matches_example3_closed_form() {
    let mut rng = stream_rng(42, 1, 0);
    let n = 2000;
    let mut subjects = Vec::with_capacity(n);
    let mut m_obs = Vec::with_capacity(n);
    let mut m_at = Vec::with_capacity(n); // (m(0,L), m(1,L))
    let mut f1s = Vec::with_capacity(n);
    for _ in 0..n {
        let lstar = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
        let a = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
        let y = rng.random::<f64>() < 0.6;
        let m0: f64 = rng.random_range(0.05..0.95);
        let m1: f64 = rng.random_range(0.05..0.95);
        let f1: f64 = rng.random_range(0.05..0.95);
        subjects.push(Trajectory::new(
            vec![IntervalRecord::new(vec![lstar], a, false, Some(y))],
            1,
        ));
        m_obs.push(if a == 1.0 { m1 } else { m0 });
        m_at.push((m0, m1));
        f1s.push(f1);
    }
    let panel = Panel::new(
        (0..n as u64).collect(),
        subjects,
        1,
        vec!["lstar".to_string()],
        0,
    );

    for delta in [0.0, 0.3, 0.7, 1.0] {
        let spec = make_multiplicative_shift(delta, 0).unwrap();
        let f_hat = |s: usize, _j: usize| vec![1.0 - f1s[s], f1s[s]];
        let q_hat = |s: usize, _j: usize, a: Option<f64>| -> f64 {
            match a {
                None => m_obs[s],
                Some(level) => {
                    if level == 1.0 {
                        m_at[s].1
                    } else {
                        m_at[s].0
                    }
                }
            }
        };
        let summary = evaluate_eif(&EifInputs {
            spec: &spec,
            panel: &panel,
            f_hat: &f_hat,
            censor_hazard: None,
            q_hat: &q_hat,
        })
        .unwrap();
        for s in 0..n {
            let rec = &panel.subjects[s].records[0];
            let y = if rec.alive_next == Some(true) { 1.0 } else { 0.0 };
            let closed = point::example3(
                y,
                rec.treatment,
                rec.covariates[0],
                m_obs[s],
                m_at[s].1,
                f1s[s],
                delta,
                summary.psi_hat,
            );
            assert!(
                (summary.values[s].value - closed).abs() < 1e-12,
                "delta={delta} s={s}: {} vs {closed}",
                summary.values[s].value
            );
            if delta == 0.0 {
                let ex1 = point::example1(
                    y,
                    rec.treatment,
                    rec.covariates[0],
                    m_obs[s],
                    m_at[s].1,
                    f1s[s],
                    summary.psi_hat,
                );
                assert!((summary.values[s].value - ex1).abs() < 1e-12);
            }
        }
    }
}

/// The static-rule recursion at J = 1 equals the classic AIPW influence
/// function with the indicator ratio.
#[test]
fn theorem2_at_j1_matches_static_closed_form() {
    let mut rng = stream_rng(43, 2, 0);
    let n = 500;
    let mut subjects = Vec::with_capacity(n);
    let mut m_at1 = Vec::with_capacity(n);
    let mut m_obs = Vec::with_capacity(n);
    let mut f1s = Vec::with_capacity(n);
    for _ in 0..n {
        let a = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
        let y = rng.random::<f64>() < 0.5;
        let m0: f64 = rng.random_range(0.1..0.9);
        let m1: f64 = rng.random_range(0.1..0.9);
        let f1: f64 = rng.random_range(0.1..0.9);
        subjects.push(Trajectory::new(
            vec![IntervalRecord::new(vec![0.0], a, false, Some(y))],
            1,
        ));
        m_obs.push(if a == 1.0 { m1 } else { m0 });
        m_at1.push(m1);
        f1s.push(f1);
    }
    let panel =
        Panel::new((0..n as u64).collect(), subjects, 1, vec!["lstar".to_string()], 0);
    let spec = make_static(1.0, vec![0.0, 1.0]);
    let f_hat = |s: usize, _j: usize| vec![1.0 - f1s[s], f1s[s]];
    let q_hat = |s: usize, _j: usize, a: Option<f64>| -> f64 {
        match a {
            None => m_obs[s],
            Some(level) => {
                if level == 1.0 {
                    m_at1[s]
                } else {
                    unreachable!("static spec only touches a* = 1")
                }
            }
        }
    };
    let summary = evaluate_eif(&EifInputs {
        spec: &spec,
        panel: &panel,
        f_hat: &f_hat,
        censor_hazard: None,
        q_hat: &q_hat,
    })
    .unwrap();
    for s in 0..n {
        let rec = &panel.subjects[s].records[0];
        let y = if rec.alive_next == Some(true) { 1.0 } else { 0.0 };
        let ind = if rec.treatment == 1.0 { 1.0 } else { 0.0 };
        let f_obs = if rec.treatment == 1.0 { f1s[s] } else { 1.0 - f1s[s] };
        let closed = ind / f_obs * (y - m_obs[s]) + m_at1[s] - summary.psi_hat;
        assert!((summary.values[s].value - closed).abs() < 1e-12);
    }
}

/// ICE with saturated history models reproduces the empirical plug-in of
/// the g-formula exactly on small discrete panels.
#[test]
fn saturated_ice_equals_empirical_plugin_on_t1() {
    let law = ToyLawT1;
    let spec = InterventionSpec::Structured(make_multiplicative_shift(0.5, 0).unwrap());
    let bundle = ModelBundle {
        treatment_formulas: vec![
            FormulaSpec::parse(&["saturated(l)"]).unwrap(),
            FormulaSpec::parse(&["saturated(l, l@1, a@1)"]).unwrap(),
        ],
        censoring_formulas: None,
        outcome_formulas: vec![
            FormulaSpec::parse(&["saturated(a, l)"]).unwrap(),
            FormulaSpec::parse(&["saturated(a, l, a@1, l@1)"]).unwrap(),
        ],
        learner_mode: LearnerMode::Parametric,
        treatment_absorbing: false,
    };
    for panel_seed in [100u64, 101, 102, 103, 104] {
        let panel = generate_panel(&law, 200, panel_seed);
        let plugin = empirical_plugin(&panel, &spec).unwrap();
        let ice = estimate_ice(&panel, &spec, &bundle, &EstimateOptions::default()).unwrap();
        assert!(
            (ice.psi_hat - plugin).abs() < 1e-10,
            "seed {panel_seed}: ice {} vs plugin {plugin}",
            ice.psi_hat
        );
    }
}

/// Reference-term pathway: the exact T/Q oracle for the uniform-grace spec
/// agrees with Monte Carlo truth, and the influence function is mean-zero
/// at the true nuisances.
#[test]
fn grace_uniform_reference_term_recursion() {
    let law = ToyLawT2;
    let spec = make_grace_uniform(2, 0);
    let wrapped = InterventionSpec::Structured(spec.clone());
    let tq = ExactTq::new(&law, &spec).unwrap();
    let psi = tq.psi();
    let mc = mc_truth(&law, &wrapped, 300_000, 9).unwrap();
    assert!(
        (psi - mc.psi).abs() < 3.0 * mc.mc_se,
        "exact {psi} vs mc {} (se {})",
        mc.psi,
        mc.mc_se
    );

    let n = 40_000;
    let panel = generate_panel(&law, n, 77);
    let f_hat = |s: usize, j: usize| -> Vec<f64> {
        let traj = &panel.subjects[s];
        let ctx = GenCtx {
            past: &traj.records[..j],
            current: &traj.records[j].covariates,
            current_treatment: None,
        };
        let f1 = law.treatment_prob(&ctx);
        vec![1.0 - f1, f1]
    };
    let q_hat = |s: usize, j: usize, a: Option<f64>| tq.q(&panel.subjects[s], j, a);
    let summary = evaluate_eif(&EifInputs {
        spec: &spec,
        panel: &panel,
        f_hat: &f_hat,
        censor_hazard: None,
        q_hat: &q_hat,
    })
    .unwrap();
    // center the values at the exact psi so both the correction terms and
    // the plug-in part are exercised
    let vals: Vec<f64> = summary
        .values
        .iter()
        .map(|v| v.value + summary.psi_hat - psi)
        .collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!(
        mean.abs() < 3.0 * sd / (n as f64).sqrt(),
        "mean {mean} vs band {}",
        3.0 * sd / (n as f64).sqrt()
    );
}
