//! The two-dimensional synthetic benchmark with known class moments.

use std::fmt::Write as _;

use nalgebra::{dmatrix, dvector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::measures::MeasureSpec;
use crate::moments::ClassMoments;
use crate::solver::{solve, worst_case_rates, AlphaGrid, MomentProblem, SolverOptions};

pub const PROPORTIONS: [f64; 7] = [0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.01];
pub const BETAS: [f64; 2] = [1.0, 3.0];
/// Rate-grid spacing used for the benchmark table.
pub const TABLE_GRID_STEP: f64 = 0.01;

/// `μ_P = (3, 1)`, `μ_N = (−1, −2)`, `Σ_P = [[1, ½], [½, 1]]`, `Σ_N = [[1, ⅓], [⅓, 1]]`.
pub fn synthetic_moments(p: f64) -> Result<ClassMoments> {
    ClassMoments::new(
        dvector![3.0, 1.0],
        dmatrix![1.0, 0.5; 0.5, 1.0],
        dvector![-1.0, -2.0],
        dmatrix![1.0, 1.0 / 3.0; 1.0 / 3.0, 1.0],
        p,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRow {
    pub p: f64,
    pub beta: f64,
    pub alpha_p: f64,
    pub alpha_n: f64,
    pub q_value: f64,
    pub rounds: usize,
}

pub fn table_options() -> SolverOptions {
    SolverOptions {
        grid: AlphaGrid::Step(TABLE_GRID_STEP),
        ..Default::default()
    }
}

/// Solves one cell and reports the worst-case rates of the solved direction.
pub fn synthetic_row(p: f64, beta: f64, options: &SolverOptions) -> Result<SyntheticRow> {
    let problem = MomentProblem::linear(&synthetic_moments(p)?, MeasureSpec::f_beta(beta)?)?;
    let result = solve(&problem, options, None)?;
    let pair = worst_case_rates(&problem, &result.w, options)?;
    Ok(SyntheticRow {
        p,
        beta,
        alpha_p: pair.alpha_p,
        alpha_n: pair.alpha_n,
        q_value: pair.q,
        rounds: result.rounds(),
    })
}

/// All `p × β` cells, `p` major.
pub fn synthetic_table(options: &SolverOptions) -> Result<Vec<SyntheticRow>> {
    let mut rows = Vec::with_capacity(PROPORTIONS.len() * BETAS.len());
    for p in PROPORTIONS {
        for beta in BETAS {
            rows.push(synthetic_row(p, beta, options)?);
        }
    }
    Ok(rows)
}

pub fn table_csv(rows: &[SyntheticRow]) -> String {
    let mut out = String::from("p,beta,alpha_p,alpha_n,q_value,rounds\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.p, r.beta, r.alpha_p, r.alpha_n, r.q_value, r.rounds
        )
        .unwrap();
    }
    out
}
