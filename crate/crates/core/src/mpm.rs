//! Classic accuracy-rate minimax probability machine, used as a baseline.
//!
//! Minimizes `h(w) = √(w'Σ_P w) + √(w'Σ_N w)` over `w'(μ_P − μ_N) = 1` by
//! projected subgradient descent with steps `‖w‖/k` and halving backtracking.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::MeasureSpec;
use crate::moments::{quadratic_form, ClassMoments};
use crate::solver::LinearModel;

const MAX_HALVINGS: usize = 30;
const MAX_REJECTED: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpmOptions {
    pub max_steps: usize,
    /// Stop when the projected subgradient norm falls to `tol · max(1, ‖∇h‖)`.
    pub tol: f64,
}

impl Default for MpmOptions {
    fn default() -> Self {
        Self {
            max_steps: 20_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpmResult {
    /// Feasible point with `w'(μ_P − μ_N) = 1`.
    #[serde(with = "crate::serde_util::vector")]
    pub w: DVector<f64>,
    pub bias: f64,
    pub h: f64,
    pub kappa: f64,
    /// Worst-case probability of correct classification.
    pub alpha_star: f64,
    pub steps: usize,
    pub converged: bool,
}

/// Baseline model file: the linear model fields plus the MPM bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpmModel {
    #[serde(flatten)]
    pub model: LinearModel,
    pub alpha_star: f64,
    pub kappa: f64,
}

impl MpmResult {
    /// Unit-direction model with the same decisions; both worst-case error
    /// rates equal `1 − α*`.
    pub fn to_model(&self) -> MpmModel {
        let norm = self.w.norm();
        let err = 1.0 - self.alpha_star;
        MpmModel {
            model: LinearModel {
                w: &self.w / norm,
                bias: self.bias / norm,
                measure: MeasureSpec::Ar,
                alpha_p: err,
                alpha_n: err,
                q_value: err,
            },
            alpha_star: self.alpha_star,
            kappa: self.kappa,
        }
    }
}

fn h_value(moments: &ClassMoments, w: &DVector<f64>) -> Result<(f64, f64, f64)> {
    let a = quadratic_form(moments.sigma_p(), w)?.sqrt();
    let b = quadratic_form(moments.sigma_n(), w)?.sqrt();
    Ok((a + b, a, b))
}

fn subgradient(moments: &ClassMoments, w: &DVector<f64>, a: f64, b: f64) -> DVector<f64> {
    let mut grad = DVector::zeros(w.len());
    if a > 0.0 {
        grad += moments.sigma_p() * w / a;
    }
    if b > 0.0 {
        grad += moments.sigma_n() * w / b;
    }
    grad
}

pub fn solve_mpm(moments: &ClassMoments, options: &MpmOptions) -> Result<MpmResult> {
    if options.max_steps == 0 || !(options.tol > 0.0) {
        return Err(Error::invalid("mpm needs positive max_steps and tol"));
    }
    let g = moments.mean_gap();
    let g2 = g.norm_squared();
    if !(g2 > 0.0) {
        return Err(Error::DegenerateData("class means coincide".into()));
    }
    let project = |v: &DVector<f64>| v - &g * (v.dot(&g) / g2);
    let restore = |v: DVector<f64>| {
        let slack = 1.0 - v.dot(&g);
        v + &g * (slack / g2)
    };

    let mut w = &g / g2;
    let (mut h, mut a, mut b) = h_value(moments, &w)?;
    if !(h > 0.0) {
        return Err(Error::VanishingForm("sigma_p + sigma_n"));
    }
    let mut converged = false;
    let mut rejected = 0;
    let mut steps = 0;
    for k in 1..=options.max_steps {
        steps = k;
        let grad = subgradient(moments, &w, a, b);
        let d = project(&grad);
        let d_norm = d.norm();
        if d_norm <= options.tol * grad.norm().max(1.0) {
            converged = true;
            break;
        }
        let mut step = w.norm() / (k as f64 * d_norm);
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate = restore(&w - &d * step);
            let (h_new, a_new, b_new) = h_value(moments, &candidate)?;
            if !h_new.is_finite() {
                return Err(Error::Solver("mpm objective diverged".into()));
            }
            if h_new < h {
                w = candidate;
                (h, a, b) = (h_new, a_new, b_new);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if accepted {
            rejected = 0;
        } else {
            rejected += 1;
            if rejected >= MAX_REJECTED {
                log::debug!("mpm: no descent for {MAX_REJECTED} steps at h = {h}");
                break;
            }
        }
    }
    if !converged {
        log::warn!("mpm stopped after {steps} steps without meeting the stationarity tolerance");
    }
    let kappa = 1.0 / h;
    let bias = w.dot(moments.mu_p()) - kappa * a;
    Ok(MpmResult {
        w,
        bias,
        h,
        kappa,
        alpha_star: kappa * kappa / (1.0 + kappa * kappa),
        steps,
        converged,
    })
}
