use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{pi, solve, MomentProblem, QuadForm, SolverOptions, SolverResult};
use crate::error::{Error, Result};
use crate::measures::{confusion_rates, p_measure, MeasureSpec};
use crate::moments::ClassMoments;

/// Linear decision function `x ↦ w'x − b` with the worst-case rates it was trained for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    #[serde(with = "crate::serde_util::vector")]
    pub w: DVector<f64>,
    pub bias: f64,
    pub measure: MeasureSpec,
    pub alpha_p: f64,
    pub alpha_n: f64,
    pub q_value: f64,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn score(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                found: x.len(),
            });
        }
        Ok(self.w.dot(x) - self.bias)
    }

    /// `+1` iff the score is strictly positive.
    pub fn predict(&self, x: &DVector<f64>) -> Result<i8> {
        Ok(if self.score(x)? > 0.0 { 1 } else { -1 })
    }

    /// Scores of the rows of `features`.
    pub fn scores(&self, features: &nalgebra::DMatrix<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                found: features.ncols(),
            });
        }
        Ok((features * &self.w).iter().map(|s| s - self.bias).collect())
    }
}

/// `b = w'μ_P − π(α_P)·√(w'S_P w)`.
pub fn bias(
    mean_p: &DVector<f64>,
    form_p: &QuadForm,
    w: &DVector<f64>,
    alpha_p: f64,
) -> Result<f64> {
    if mean_p.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            found: mean_p.len(),
        });
    }
    Ok(w.dot(mean_p) - pi(alpha_p)? * form_p.value(w)?.sqrt())
}

/// Solves the linear problem built from `moments` and attaches the bias.
pub fn train_linear(
    moments: &ClassMoments,
    measure: MeasureSpec,
    options: &SolverOptions,
) -> Result<(LinearModel, SolverResult)> {
    let problem = MomentProblem::linear(moments, measure)?;
    let result = solve(&problem, options, None)?;
    let b = bias(moments.mu_p(), problem.form_p(), &result.w, result.alpha_p)?;
    let model = LinearModel {
        w: result.w.clone(),
        bias: b,
        measure,
        alpha_p: result.alpha_p,
        alpha_n: result.alpha_n,
        q_value: result.q_value,
    };
    Ok((model, result))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedThreshold {
    /// Replacement bias: predict `+1` iff `raw score > threshold`.
    pub threshold: f64,
    pub value: f64,
    pub degenerate: bool,
}

/// Picks the threshold on raw scores `w'x` that maximizes `spec` on a
/// validation set.
///
/// Candidates are the midpoints between consecutive distinct scores plus
/// `±∞`; ties go to the candidate closest to `reference`.
pub fn tune_bias(
    raw_scores: &[f64],
    labels: &[i8],
    spec: MeasureSpec,
    reference: f64,
) -> Result<TunedThreshold> {
    if raw_scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: raw_scores.len(),
        });
    }
    if raw_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::DegenerateData(
            "validation labels contain a single class".into(),
        ));
    }
    let p = n_pos as f64 / labels.len() as f64;

    let mut sorted = raw_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut candidates = vec![f64::NEG_INFINITY];
    candidates.extend(
        sorted
            .windows(2)
            .map(|pair| pair[0] + (pair[1] - pair[0]) / 2.0),
    );
    candidates.push(f64::INFINITY);

    let mut best: Option<TunedThreshold> = None;
    let mut predictions = vec![0i8; labels.len()];
    for t in candidates {
        for (y, &s) in predictions.iter_mut().zip(raw_scores) {
            *y = if s > t { 1 } else { -1 };
        }
        let value = p_measure(spec, &confusion_rates(&predictions, labels)?, p)?;
        let better = match &best {
            None => true,
            Some(b) => {
                value.value > b.value
                    || (value.value == b.value
                        && (t - reference).abs() < (b.threshold - reference).abs())
            }
        };
        if better {
            best = Some(TunedThreshold {
                threshold: t,
                value: value.value,
                degenerate: value.degenerate,
            });
        }
    }
    Ok(best.expect("candidate list is nonempty"))
}
