//! Alternating descent for minimax probability machines under a
//! non-decomposable measure.
//!
//! The engine works on a [`MomentProblem`]: a mean-gap vector `g` and two
//! PSD quadratic forms `S_P`, `S_N`. Every round it
//!
//! 1. grid-searches the worst-case error pair `(α_P, α_N)` that minimizes the
//!    measure objective for the current unit direction `w`, under
//!    `π(α_N)·√(w'S_N w) + π(α_P)·√(w'S_P w) = w'g`;
//! 2. fixes `α_P` and moves `w` on the unit sphere to raise the fractional
//!    objective `λ(w) = (w'g − τ√(w'S_P w)) / √(w'S_N w)`, lowering `α_N`.
//!
//! The linear classifier and the kernel classifier differ only in how the
//! problem is assembled.

mod alpha;
mod ascent;
mod model;

pub use alpha::{alpha_step, kappa, pi, AlphaPair};
pub use ascent::{
    ascend_direction, ascent_gradient, ascent_objective, lambda_value, Ascent, AscentStatus,
};
pub use model::{bias, train_linear, tune_bias, LinearModel, TunedThreshold};

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{q_objective, MeasureSpec};
use crate::moments::{check_psd, clamp_form, ClassMoments};

/// A PSD quadratic form `w ↦ w'Sw`.
#[derive(Debug, Clone, PartialEq)]
pub enum QuadForm {
    /// Explicit symmetric matrix `S`.
    Dense(DMatrix<f64>),
    /// `S = F'F + ridge·I`, evaluated without forming `F'F`.
    Factor { factor: DMatrix<f64>, ridge: f64 },
}

impl QuadForm {
    pub fn dim(&self) -> usize {
        match self {
            QuadForm::Dense(s) => s.ncols(),
            QuadForm::Factor { factor, .. } => factor.ncols(),
        }
    }

    /// `w'Sw`, clamped at zero for rounding residue.
    pub fn value(&self, w: &DVector<f64>) -> Result<f64> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: w.len(),
            });
        }
        match self {
            QuadForm::Dense(s) => crate::moments::quadratic_form(s, w),
            QuadForm::Factor { factor, ridge } => {
                let fw = factor * w;
                clamp_form(fw.norm_squared() + ridge * w.norm_squared(), || 1.0)
            }
        }
    }

    /// `S w`.
    pub fn apply(&self, w: &DVector<f64>) -> DVector<f64> {
        match self {
            QuadForm::Dense(s) => s * w,
            QuadForm::Factor { factor, ridge } => factor.tr_mul(&(factor * w)) + w * *ridge,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            QuadForm::Dense(s) => s.clone(),
            QuadForm::Factor { factor, ridge } => {
                factor.tr_mul(factor) + DMatrix::identity(factor.ncols(), factor.ncols()) * *ridge
            }
        }
    }

    /// Smallest eigenvalue of `S`.
    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.to_dense()).eigenvalues.min()
    }
}

/// Solver input: mean gap, the two class forms, class proportion and measure.
#[derive(Debug, Clone)]
pub struct MomentProblem {
    mean_gap: DVector<f64>,
    form_p: QuadForm,
    form_n: QuadForm,
    p: f64,
    measure: MeasureSpec,
}

impl MomentProblem {
    pub fn new(
        mean_gap: DVector<f64>,
        form_p: QuadForm,
        form_n: QuadForm,
        p: f64,
        measure: MeasureSpec,
    ) -> Result<Self> {
        let d = mean_gap.len();
        for form in [&form_p, &form_n] {
            if form.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: form.dim(),
                });
            }
        }
        if mean_gap.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mean gap must be finite"));
        }
        if !(mean_gap.norm() > 0.0) {
            return Err(Error::DegenerateData("mean gap is zero".into()));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!(
                "positive proportion must lie in (0, 1), got {p}"
            )));
        }
        if let QuadForm::Dense(s) = &form_p {
            check_psd(s, "form_p")?;
        }
        if let QuadForm::Dense(s) = &form_n {
            check_psd(s, "form_n")?;
        }
        for (name, form) in [("form_p", &form_p), ("form_n", &form_n)] {
            if let QuadForm::Factor { factor, ridge } = form {
                if factor.iter().any(|v| !v.is_finite()) || !(*ridge >= 0.0) {
                    return Err(Error::NotPositiveSemidefinite(format!(
                        "{name} factor is invalid"
                    )));
                }
            }
        }
        if let MeasureSpec::FBeta { beta } = measure {
            MeasureSpec::f_beta(beta)?;
        }
        Ok(Self {
            mean_gap,
            form_p,
            form_n,
            p,
            measure,
        })
    }

    /// Linear instance: `g = μ_P − μ_N`, forms `Σ_P`, `Σ_N`.
    pub fn linear(moments: &ClassMoments, measure: MeasureSpec) -> Result<Self> {
        Self::new(
            moments.mean_gap(),
            QuadForm::Dense(moments.sigma_p().clone()),
            QuadForm::Dense(moments.sigma_n().clone()),
            moments.p(),
            measure,
        )
    }

    pub fn mean_gap(&self) -> &DVector<f64> {
        &self.mean_gap
    }
    pub fn form_p(&self) -> &QuadForm {
        &self.form_p
    }
    pub fn form_n(&self) -> &QuadForm {
        &self.form_n
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn measure(&self) -> MeasureSpec {
        self.measure
    }
    pub fn dim(&self) -> usize {
        self.mean_gap.len()
    }

    /// `(A, B, C) = (√(w'S_P w), √(w'S_N w), w'g)`.
    pub fn abc(&self, w: &DVector<f64>) -> Result<(f64, f64, f64)> {
        Ok((
            self.form_p.value(w)?.sqrt(),
            self.form_n.value(w)?.sqrt(),
            w.dot(&self.mean_gap),
        ))
    }

    /// Measure objective at a rate pair.
    pub fn objective(&self, alpha_p: f64, alpha_n: f64) -> Result<f64> {
        q_objective(self.measure, alpha_p, alpha_n, self.p)
    }

    /// `|π(α_N)·B + π(α_P)·A − C|` at direction `w`.
    pub fn constraint_residual(&self, w: &DVector<f64>, alpha_p: f64, alpha_n: f64) -> Result<f64> {
        let (a, b, c) = self.abc(w)?;
        Ok((pi(alpha_n)? * b + pi(alpha_p)? * a - c).abs())
    }

    /// Lower bounds on the error rates at direction `w`.
    pub fn alpha_lower_bounds(&self, w: &DVector<f64>) -> Result<AlphaLowerBounds> {
        let (a, b, c) = self.abc(w)?;
        let w_norm2 = w.norm_squared();
        let eigen = |form: &QuadForm| {
            let lam = form.min_eigenvalue() * w_norm2;
            if lam > 0.0 {
                1.0 / (1.0 + c * c / lam)
            } else {
                0.0
            }
        };
        Ok(AlphaLowerBounds {
            alpha_p: a * a / (a * a + c * c),
            alpha_n: b * b / (b * b + c * c),
            alpha_p_eigen: eigen(&self.form_p),
            alpha_n_eigen: eigen(&self.form_n),
        })
    }
}

/// Lower bounds implied by the constraint at a direction. The `*_eigen`
/// variants replace `w'Sw` by the smallest eigenvalue of `S` and read the
/// numerator as `C = w'g` at the same direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaLowerBounds {
    pub alpha_p: f64,
    pub alpha_n: f64,
    pub alpha_p_eigen: f64,
    pub alpha_n_eigen: f64,
}

/// How candidate `α_P` values are laid out on `[A²/(A²+C²), alpha_ceiling]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaGrid {
    /// `n` uniformly spaced points including both endpoints.
    Points(usize),
    /// Fixed spacing starting at the lower endpoint, stopping below the ceiling.
    Step(f64),
}

impl Default for AlphaGrid {
    fn default() -> Self {
        AlphaGrid::Points(4096)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub grid: AlphaGrid,
    pub max_rounds: usize,
    pub inner_max_steps: usize,
    /// Stop once a round improves the objective by at most this much.
    pub q_tol: f64,
    /// Inner ascent stops when the gradient norm falls to this level.
    pub grad_tol: f64,
    pub alpha_ceiling: f64,
    /// Without an explicit start, also descend from `(S_P + S_N)⁻¹g` and
    /// keep that run when it ends strictly lower.
    pub fisher_start: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            grid: AlphaGrid::default(),
            max_rounds: 200,
            inner_max_steps: 1000,
            q_tol: 1e-4,
            grad_tol: 1e-4,
            alpha_ceiling: 1.0 - 1e-6,
            fisher_start: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        match self.grid {
            AlphaGrid::Points(0) => return Err(Error::invalid("grid needs at least one point")),
            AlphaGrid::Step(h) if !(h > 0.0 && h < 1.0) => {
                return Err(Error::invalid(format!(
                    "grid step must lie in (0, 1), got {h}"
                )))
            }
            _ => {}
        }
        if self.max_rounds == 0 || self.inner_max_steps == 0 {
            return Err(Error::invalid("round and step limits must be positive"));
        }
        if !(self.q_tol > 0.0) || !(self.grad_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if !(self.alpha_ceiling > 0.0 && self.alpha_ceiling < 1.0) {
            return Err(Error::invalid(format!(
                "alpha ceiling must lie in (0, 1), got {}",
                self.alpha_ceiling
            )));
        }
        Ok(())
    }
}

/// One outer round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: usize,
    pub alpha_p: f64,
    pub alpha_n: f64,
    /// Objective after the rate search at `w_t`.
    pub q_before: f64,
    /// Objective after the direction update, with `α_P` held.
    pub q_after: f64,
    /// `λ_t(w_{t+1})`.
    pub lambda: f64,
    pub inner_steps: usize,
    pub inner_status: AscentStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
}

impl SolverTrace {
    pub const CSV_HEADER: &'static str =
        "round,alpha_p,alpha_n,q_before,q_after,lambda,inner_steps";

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.round, r.alpha_p, r.alpha_n, r.q_before, r.q_after, r.lambda, r.inner_steps
            )
            .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The objective improved by no more than `q_tol` in a round.
    QTolerance,
    /// The ascent gradient vanished at the current direction.
    Stationary,
    MaxRounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    /// Unit direction.
    #[serde(with = "crate::serde_util::vector")]
    pub w: DVector<f64>,
    pub alpha_p: f64,
    pub alpha_n: f64,
    pub q_value: f64,
    pub converged: bool,
    pub termination: Termination,
    /// Rounds whose inner ascent found no improving direction.
    pub stalled_rounds: usize,
    pub trace: SolverTrace,
}

impl SolverResult {
    pub fn rounds(&self) -> usize {
        self.trace.len()
    }
}

/// Best (lowest objective) iterate seen so far.
struct Incumbent {
    w: DVector<f64>,
    alpha_p: f64,
    alpha_n: f64,
    q: f64,
}

impl Incumbent {
    fn offer(slot: &mut Option<Incumbent>, w: &DVector<f64>, alpha_p: f64, alpha_n: f64, q: f64) {
        if slot.as_ref().is_none_or(|b| q < b.q) {
            *slot = Some(Incumbent {
                w: w.clone(),
                alpha_p,
                alpha_n,
                q,
            });
        }
    }
}

/// Runs alternating descent from `w_init` (default `g/‖g‖`) and returns the
/// best iterate seen.
///
/// Each rate search also re-offers the previous round's `α_P`, so the
/// objective never increases from one round to the next even when the grid
/// moves with the direction.
///
/// With no `w_init` and `fisher_start` set, a second descent starts from
/// `(S_P + S_N)⁻¹g`; its result replaces the first only when its objective
/// is lower by more than `q_tol`.
pub fn solve(
    problem: &MomentProblem,
    options: &SolverOptions,
    w_init: Option<&DVector<f64>>,
) -> Result<SolverResult> {
    options.validate()?;
    let g = problem.mean_gap();
    if let Some(w0) = w_init {
        if w0.len() != problem.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                found: w0.len(),
            });
        }
        let n = w0.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invalid(
                "initial direction must be a nonzero finite vector",
            ));
        }
        return descend(problem, options, w0 / n);
    }
    let start = g / g.norm();
    let first = descend(problem, options, start.clone())?;
    if !options.fisher_start {
        return Ok(first);
    }
    let Some(fisher) = fisher_direction(problem) else {
        return Ok(first);
    };
    if (fisher.dot(&start) - 1.0).abs() <= 1e-12 {
        return Ok(first);
    }
    match descend(problem, options, fisher) {
        Ok(second) if second.q_value < first.q_value - options.q_tol => {
            log::debug!(
                "second start improved q from {} to {}",
                first.q_value,
                second.q_value
            );
            Ok(second)
        }
        Ok(_) => Ok(first),
        Err(e) => {
            log::debug!("second start failed: {e}");
            Ok(first)
        }
    }
}

/// Largest dimension for which the second start is formed densely.
const FISHER_MAX_DIM: usize = 2000;

/// `(S_P + S_N + εI)⁻¹g`, normalized, with `ε` a tiny multiple of the mean diagonal.
fn fisher_direction(problem: &MomentProblem) -> Option<DVector<f64>> {
    let d = problem.dim();
    if d > FISHER_MAX_DIM {
        return None;
    }
    let mut sum = problem.form_p().to_dense() + problem.form_n().to_dense();
    let scale = (sum.trace() / d as f64).max(f64::MIN_POSITIVE);
    for i in 0..d {
        sum[(i, i)] += 1e-10 * scale;
    }
    let v = sum.cholesky()?.solve(problem.mean_gap());
    let n = v.norm();
    let w = v / n;
    (n.is_finite() && n > 0.0 && w.dot(problem.mean_gap()) > 0.0).then_some(w)
}

fn descend(
    problem: &MomentProblem,
    options: &SolverOptions,
    mut w: DVector<f64>,
) -> Result<SolverResult> {
    let g = problem.mean_gap();
    let c1 = w.dot(g);
    if !(c1 > 0.0) {
        return Err(Error::NonPositiveMeanGap(c1));
    }

    let mut trace = SolverTrace::default();
    let mut best: Option<Incumbent> = None;
    let mut previous_alpha_p: Option<f64> = None;
    let mut stalled_rounds = 0;
    let mut termination = Termination::MaxRounds;

    for round in 1..=options.max_rounds {
        let (a, b, c) = problem.abc(&w)?;
        let pair = alpha::alpha_search(
            a,
            b,
            c,
            problem.measure(),
            problem.p(),
            options,
            previous_alpha_p,
        )?;
        let tau = pi(pair.alpha_p)?;
        let eta = lambda_value(problem, &w, tau)?;

        let step = ascend_direction(problem, &w, tau, eta, options)?;
        let lambda_next = lambda_value(problem, &step.w, tau)?;
        let alpha_n_next = 1.0 / (1.0 + lambda_next * lambda_next);
        let q_after = problem.objective(pair.alpha_p, alpha_n_next)?;
        if !pair.q.is_finite() || !q_after.is_finite() {
            return Err(Error::Solver(format!(
                "non-finite objective in round {round}"
            )));
        }
        if step.status == AscentStatus::Stalled {
            stalled_rounds += 1;
        }
        log::debug!(
            "round {round}: alpha_p={:.6} alpha_n={:.6} q={:.8} -> {:.8} ({:?}, {} steps)",
            pair.alpha_p,
            pair.alpha_n,
            pair.q,
            q_after,
            step.status,
            step.steps
        );
        trace.records.push(TraceRecord {
            round,
            alpha_p: pair.alpha_p,
            alpha_n: pair.alpha_n,
            q_before: pair.q,
            q_after,
            lambda: lambda_next,
            inner_steps: step.steps,
            inner_status: step.status,
        });

        Incumbent::offer(&mut best, &w, pair.alpha_p, pair.alpha_n, pair.q);
        if alpha_n_next < 1.0 {
            Incumbent::offer(&mut best, &step.w, pair.alpha_p, alpha_n_next, q_after);
        }

        let stationary = step.status == AscentStatus::Stationary;
        w = step.w;
        previous_alpha_p = Some(pair.alpha_p);

        if stationary {
            termination = Termination::Stationary;
            break;
        }
        if pair.q - q_after <= options.q_tol {
            termination = Termination::QTolerance;
            break;
        }
    }

    let best = best.expect("at least one round runs");
    Ok(SolverResult {
        w: best.w,
        alpha_p: best.alpha_p,
        alpha_n: best.alpha_n,
        q_value: best.q,
        converged: termination != Termination::MaxRounds,
        termination,
        stalled_rounds,
        trace,
    })
}

/// Worst-case rate pair of a fixed direction: the rate search alone.
pub fn worst_case_rates(
    problem: &MomentProblem,
    w: &DVector<f64>,
    options: &SolverOptions,
) -> Result<AlphaPair> {
    options.validate()?;
    let w = w / w.norm();
    let (a, b, c) = problem.abc(&w)?;
    alpha_step(a, b, c, problem.measure(), problem.p(), options)
}
