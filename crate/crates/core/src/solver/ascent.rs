use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{MomentProblem, SolverOptions};
use crate::error::{Error, Result};

const MAX_STEP_HALVINGS: usize = 10;

/// `λ(w) = (w'g − τ√(w'S_P w)) / √(w'S_N w)`.
pub fn lambda_value(problem: &MomentProblem, w: &DVector<f64>, tau: f64) -> Result<f64> {
    let (a, b, c) = problem.abc(w)?;
    if b == 0.0 {
        return Err(Error::VanishingForm("form_n"));
    }
    Ok((c - tau * a) / b)
}

/// `f(w) = w'g − τ√(w'S_P w) − η√(w'S_N w)`: concave, positively homogeneous,
/// and zero at the direction that defined `η`.
pub fn ascent_objective(
    problem: &MomentProblem,
    w: &DVector<f64>,
    tau: f64,
    eta: f64,
) -> Result<f64> {
    let (a, b, c) = problem.abc(w)?;
    Ok(c - tau * a - eta * b)
}

/// `∇f(w) = g − τ S_P w / √(w'S_P w) − η S_N w / √(w'S_N w)`.
pub fn ascent_gradient(
    problem: &MomentProblem,
    w: &DVector<f64>,
    tau: f64,
    eta: f64,
) -> Result<DVector<f64>> {
    let mut grad = problem.mean_gap().clone();
    for (name, form, coef) in [
        ("form_p", problem.form_p(), tau),
        ("form_n", problem.form_n(), eta),
    ] {
        if coef == 0.0 {
            continue;
        }
        let root = form.value(w)?.sqrt();
        if root == 0.0 {
            return Err(Error::VanishingForm(name));
        }
        grad -= form.apply(w) * (coef / root);
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("non-finite ascent gradient".into()));
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AscentStatus {
    /// Gradient already below tolerance at the start; direction kept.
    Stationary,
    /// Stopping rule met: two consecutive nonnegative `f` values and a small gradient.
    Converged,
    /// Step cap reached; the best iterate with `f > 0` is returned.
    Capped,
    /// No iterate with `f > 0` was found; the start direction is returned.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ascent {
    pub w: DVector<f64>,
    pub steps: usize,
    pub status: AscentStatus,
}

/// Projected gradient ascent of `f` on the unit sphere starting from `w_t`,
/// with step size `1/k` and renormalization after every step.
///
/// The returned direction always satisfies `f ≥ 0`, hence `λ(w) ≥ η`.
pub fn ascend_direction(
    problem: &MomentProblem,
    w_t: &DVector<f64>,
    tau: f64,
    eta: f64,
    options: &SolverOptions,
) -> Result<Ascent> {
    let objective = |w: &DVector<f64>| ascent_objective(problem, w, tau, eta);
    let gradient = |w: &DVector<f64>| ascent_gradient(problem, w, tau, eta);

    let mut grad = gradient(w_t)?;
    if grad.norm() <= options.grad_tol {
        return Ok(Ascent {
            w: w_t.clone(),
            steps: 0,
            status: AscentStatus::Stationary,
        });
    }

    let mut v = w_t.clone();
    let mut f_v = objective(&v)?;
    let mut best: Option<(f64, DVector<f64>)> = None;

    for k in 1..=options.inner_max_steps {
        let mut step = 1.0 / k as f64;
        let mut u = &v + &grad * step;
        let mut halvings = 0;
        while !(u.norm() > 0.0 && u.norm().is_finite()) {
            halvings += 1;
            if halvings > MAX_STEP_HALVINGS {
                return Ok(finish(best, w_t, k));
            }
            step *= 0.5;
            u = &v + &grad * step;
        }
        let v_next = &u / u.norm();
        let f_next = objective(&v_next)?;
        if f_next > 0.0 && best.as_ref().is_none_or(|(f, _)| f_next > *f) {
            best = Some((f_next, v_next.clone()));
        }
        let grad_next = gradient(&v_next)?;
        if f_v >= 0.0 && f_next >= 0.0 && grad_next.norm() <= options.grad_tol {
            return Ok(Ascent {
                w: v_next,
                steps: k,
                status: AscentStatus::Converged,
            });
        }
        v = v_next;
        f_v = f_next;
        grad = grad_next;
    }
    Ok(finish(best, w_t, options.inner_max_steps))
}

fn finish(best: Option<(f64, DVector<f64>)>, w_t: &DVector<f64>, steps: usize) -> Ascent {
    match best {
        Some((_, w)) => Ascent {
            w,
            steps,
            status: AscentStatus::Capped,
        },
        None => Ascent {
            w: w_t.clone(),
            steps,
            status: AscentStatus::Stalled,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::MeasureSpec;
    use crate::solver::QuadForm;
    use nalgebra::{dvector, DMatrix};

    fn identity_problem(g: DVector<f64>) -> MomentProblem {
        let d = g.len();
        MomentProblem::new(
            g,
            QuadForm::Dense(DMatrix::identity(d, d)),
            QuadForm::Dense(DMatrix::identity(d, d)),
            0.5,
            MeasureSpec::FBeta { beta: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn lambda_examples() {
        let problem = identity_problem(dvector![2.0, 0.0]);
        assert_eq!(
            lambda_value(&problem, &dvector![1.0, 0.0], 1.0).unwrap(),
            1.0
        );
        // orthogonal to g with τ = 0: numerator 0
        assert_eq!(
            lambda_value(&problem, &dvector![0.0, 1.0], 0.0).unwrap(),
            0.0
        );
        assert!(lambda_value(&problem, &dvector![0.0, 1.0], 0.5).unwrap() < 0.0);
        let scaled = identity_problem(dvector![6.0, 0.0]);
        let w = dvector![0.6, 0.8];
        let base = lambda_value(&problem, &w, 0.0).unwrap();
        assert!((lambda_value(&scaled, &w, 0.0).unwrap() - 3.0 * base).abs() < 1e-12);
    }

    #[test]
    fn lambda_rejects_vanishing_denominator() {
        let problem = MomentProblem::new(
            dvector![1.0, 0.0],
            QuadForm::Dense(DMatrix::identity(2, 2)),
            QuadForm::Dense(nalgebra::dmatrix![0.0, 0.0; 0.0, 1.0]),
            0.5,
            MeasureSpec::Am,
        )
        .unwrap();
        assert!(matches!(
            lambda_value(&problem, &dvector![1.0, 0.0], 1.0),
            Err(Error::VanishingForm("form_n"))
        ));
    }

    #[test]
    fn stationary_start_is_kept() {
        // at w = (1,0): ∇f = g − τ w − η w = (2 − 1 − 1, 0) = 0
        let problem = identity_problem(dvector![2.0, 0.0]);
        let w = dvector![1.0, 0.0];
        let eta = lambda_value(&problem, &w, 1.0).unwrap();
        let out = ascend_direction(&problem, &w, 1.0, eta, &SolverOptions::default()).unwrap();
        assert_eq!(out.status, AscentStatus::Stationary);
        assert_eq!(out.w, w);
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn climbs_towards_closed_form_maximizer() {
        // f(w) = 2w₁ − 1.6‖w‖ on the unit ball peaks at (1, 0)
        let problem = identity_problem(dvector![2.0, 0.0]);
        let w = dvector![0.8, 0.6];
        let eta = lambda_value(&problem, &w, 1.0).unwrap();
        assert!((eta - 0.6).abs() < 1e-15);
        assert!(ascent_objective(&problem, &w, 1.0, eta).unwrap().abs() < 1e-8);
        let out = ascend_direction(&problem, &w, 1.0, eta, &SolverOptions::default()).unwrap();
        assert!((out.w.norm() - 1.0).abs() < 1e-12);
        assert!(lambda_value(&problem, &out.w, 1.0).unwrap() >= 0.6);
        assert!(out.w[0] > 0.999, "{:?}", out.w);
    }

    #[test]
    fn objective_is_concave_and_homogeneous() {
        let problem = MomentProblem::new(
            dvector![1.0, 2.0, -0.5],
            QuadForm::Dense(nalgebra::dmatrix![2.0, 0.3, 0.0; 0.3, 1.0, 0.2; 0.0, 0.2, 0.5]),
            QuadForm::Dense(nalgebra::dmatrix![1.0, -0.4, 0.1; -0.4, 1.5, 0.0; 0.1, 0.0, 0.8]),
            0.3,
            MeasureSpec::Am,
        )
        .unwrap();
        let w0 = problem.mean_gap() / problem.mean_gap().norm();
        let tau = 0.7;
        let eta = lambda_value(&problem, &w0, tau).unwrap();
        let out = ascend_direction(&problem, &w0, tau, eta, &SolverOptions::default()).unwrap();
        let f = |w: &DVector<f64>| ascent_objective(&problem, w, tau, eta).unwrap();
        for theta in [0.25, 0.5, 0.75] {
            let mix = &out.w * theta + &w0 * (1.0 - theta);
            assert!(f(&mix) >= theta * f(&out.w) + (1.0 - theta) * f(&w0) - 1e-10);
        }
        for c in [0.5, 2.0] {
            assert_eq!(f(&(&out.w * c)).signum(), f(&out.w).signum());
        }
        assert!(f(&out.w) >= 0.0);
    }
}
