//! Hand-built panels and tabulated toy laws shared by tests across the
//! workspace. Everything here is fixed data, no randomness.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{IntervalRecord, Panel, Trajectory};
use crate::oracle::{Dgp, GenCtx};

fn schema2() -> Vec<String> {
    vec![String::from("lstar"), String::from("x")]
}

/// P1: well-formed three-subject panel, J = 2, schema (lstar, x).
/// Subject 10 survives, subject 11 dies at Y_1, subject 12 is censored at C_2.
pub fn panel_p1() -> Panel {
    let subjects = vec![
        Trajectory::new(
            vec![
                IntervalRecord::new(vec![1.0, 0.5], 1.0, false, Some(true)),
                IntervalRecord::new(vec![0.0, 0.2], 1.0, false, Some(true)),
            ],
            2,
        ),
        Trajectory::new(
            vec![IntervalRecord::new(vec![0.0, -0.3], 0.0, false, Some(false))],
            2,
        ),
        Trajectory::new(
            vec![
                IntervalRecord::new(vec![1.0, 1.5], 0.0, false, Some(true)),
                IntervalRecord::new(vec![1.0, 0.9], 0.0, true, None),
            ],
            2,
        ),
    ];
    Panel::new(vec![10, 11, 12], subjects, 2, schema2(), 0)
}

/// P2: three subjects, J = 2, designed for hand-computed weight tables
/// (multiplicative shift, hand-set propensities and censoring hazards).
pub fn panel_p2() -> Panel {
    let subjects = vec![
        Trajectory::new(
            vec![
                IntervalRecord::new(vec![1.0, 0.0], 1.0, false, Some(true)),
                IntervalRecord::new(vec![0.0, 0.0], 0.0, false, Some(true)),
            ],
            2,
        ),
        Trajectory::new(
            vec![
                IntervalRecord::new(vec![0.0, 1.0], 0.0, false, Some(true)),
                IntervalRecord::new(vec![1.0, 1.0], 1.0, false, Some(false)),
            ],
            2,
        ),
        Trajectory::new(
            vec![
                IntervalRecord::new(vec![1.0, 0.0], 0.0, false, Some(true)),
                IntervalRecord::new(vec![1.0, 1.0], 1.0, true, None),
            ],
            2,
        ),
    ];
    Panel::new(vec![0, 1, 2], subjects, 2, schema2(), 0)
}

/// T1: fully tabulated discrete law, J = 2, one binary confounder `l`
/// (doubling as the indication indicator), no censoring. Conditionals are
/// kept in mid-range so realized history cells stay populated at n = 200.
#[derive(Debug, Clone, Copy)]
pub struct ToyLawT1;

impl Dgp for ToyLawT1 {
    fn horizon(&self) -> usize {
        2
    }
    fn schema(&self) -> Vec<String> {
        vec![String::from("l")]
    }
    fn indicator_index(&self) -> usize {
        0
    }
    fn covariate_support(&self, _coord: usize) -> Option<Vec<f64>> {
        Some(vec![0.0, 1.0])
    }
    fn covariate_pmf(&self, _coord: usize, ctx: &GenCtx<'_>) -> Option<Vec<f64>> {
        let p1 = if ctx.j() == 0 {
            0.6
        } else {
            // l_1 | l_0, a_0 among survivors
            match (ctx.cov(0, 1) as usize, ctx.treat(1) as usize) {
                (0, 0) => 0.3,
                (0, 1) => 0.2,
                (1, 0) => 0.7,
                _ => 0.55,
            }
        };
        Some(vec![1.0 - p1, p1])
    }
    fn treatment_prob(&self, ctx: &GenCtx<'_>) -> f64 {
        if ctx.j() == 0 {
            0.3 + 0.3 * ctx.cov(0, 0)
        } else if ctx.treat(1) == 1.0 {
            0.8
        } else {
            0.25 + 0.3 * ctx.cov(0, 0)
        }
    }
    fn survival_prob(&self, ctx: &GenCtx<'_>) -> f64 {
        if ctx.j() == 0 {
            match (ctx.cov(0, 0) as usize, ctx.treat(0) as usize) {
                (0, 0) => 0.75,
                (0, 1) => 0.9,
                (1, 0) => 0.55,
                _ => 0.8,
            }
        } else {
            0.6 + 0.2 * ctx.treat(0) - 0.15 * ctx.cov(0, 0) + 0.05 * ctx.treat(1)
        }
    }
}

/// T2: J = 3 discrete law with an absorbing indication indicator, absorbing
/// treatment, and `f(1 | l* = 0) = 0` (nobody initiates before indication),
/// no censoring. Built for grace-period interventions.
#[derive(Debug, Clone, Copy)]
pub struct ToyLawT2;

impl Dgp for ToyLawT2 {
    fn horizon(&self) -> usize {
        3
    }
    fn schema(&self) -> Vec<String> {
        vec![String::from("lstar")]
    }
    fn indicator_index(&self) -> usize {
        0
    }
    fn covariate_support(&self, _coord: usize) -> Option<Vec<f64>> {
        Some(vec![0.0, 1.0])
    }
    fn covariate_pmf(&self, _coord: usize, ctx: &GenCtx<'_>) -> Option<Vec<f64>> {
        let p1 = if ctx.j() == 0 {
            0.4
        } else if ctx.cov(0, 1) == 1.0 {
            1.0
        } else {
            0.35
        };
        Some(vec![1.0 - p1, p1])
    }
    fn treatment_prob(&self, ctx: &GenCtx<'_>) -> f64 {
        if ctx.j() > 0 && ctx.treat(1) == 1.0 {
            1.0
        } else if ctx.cov(0, 0) == 1.0 {
            0.5
        } else {
            0.0
        }
    }
    fn survival_prob(&self, ctx: &GenCtx<'_>) -> f64 {
        0.55 + 0.25 * ctx.treat(0) - 0.2 * ctx.cov(0, 0)
    }
}
