use serde::{Deserialize, Serialize};

use super::{AlphaGrid, SolverOptions};
use crate::error::{Error, Result};
use crate::measures::{q_objective, MeasureSpec};

fn check_open_unit(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// `κ(α) = √(α / (1 − α))`.
pub fn kappa(alpha: f64) -> Result<f64> {
    check_open_unit(alpha)?;
    Ok((alpha / (1.0 - alpha)).sqrt())
}

/// `π(α) = 1 / κ(α) = √((1 − α) / α)`.
pub fn pi(alpha: f64) -> Result<f64> {
    check_open_unit(alpha)?;
    Ok(((1.0 - alpha) / alpha).sqrt())
}

/// Worst-case false-negative / false-positive rates and their objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaPair {
    pub alpha_p: f64,
    pub alpha_n: f64,
    pub q: f64,
}

fn grid_points(lower: f64, options: &SolverOptions) -> Vec<f64> {
    let upper = options.alpha_ceiling;
    if lower >= upper {
        return vec![lower];
    }
    match options.grid {
        AlphaGrid::Points(1) => vec![lower],
        AlphaGrid::Points(n) => {
            let span = upper - lower;
            let last = (n - 1) as f64;
            (0..n)
                .map(|i| {
                    if i + 1 == n {
                        upper
                    } else {
                        lower + span * (i as f64 / last)
                    }
                })
                .collect()
        }
        AlphaGrid::Step(h) => {
            let count = ((upper - lower) / h).ceil() as usize;
            (0..count)
                .map(|i| lower + i as f64 * h)
                .filter(|&a| a < upper)
                .collect()
        }
    }
}

/// `α_N` forced by the constraint once `α_P` is fixed.
fn paired_alpha_n(alpha_p: f64, a: f64, b: f64, c: f64) -> Result<Option<f64>> {
    let slack = c - pi(alpha_p)? * a;
    // below the lower endpoint the constraint has no solution; tolerate rounding at it
    if slack < -1e-12 * c {
        return Ok(None);
    }
    let slack = slack.max(0.0);
    let alpha_n = b * b / (b * b + slack * slack);
    // a vanishing slack forces α_N = 1, which no rate pair may take
    if alpha_n >= 1.0 {
        return Ok(None);
    }
    Ok(Some(alpha_n))
}

fn score(measure: MeasureSpec, p: f64, alpha_p: f64, alpha_n: f64) -> Result<Option<f64>> {
    match q_objective(measure, alpha_p, alpha_n, p) {
        Ok(q) => Ok(Some(q)),
        Err(Error::ObjectiveDiverges(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Value used to order candidates. For `F_β` this is `Q / (1 − p)`, which
/// depends on `β` and `p` only through `τ = β²p/(1 − p)`.
fn rank(measure: MeasureSpec, p: f64, alpha_p: f64, alpha_n: f64) -> Result<Option<f64>> {
    match measure {
        MeasureSpec::FBeta { beta } => {
            if alpha_p >= 1.0 {
                return Ok(None);
            }
            let tau = beta * beta * p / (1.0 - p);
            Ok(Some((alpha_n + tau * alpha_p) / (1.0 - alpha_p)))
        }
        _ => score(measure, p, alpha_p, alpha_n),
    }
}

/// Grid search for the rate pair minimizing the measure objective at a
/// fixed direction with `A = √(w'S_P w)`, `B = √(w'S_N w)`, `C = w'g`.
///
/// Candidates cover `[A²/(A²+C²), alpha_ceiling]`; ties keep the smallest `α_P`.
pub fn alpha_step(
    a: f64,
    b: f64,
    c: f64,
    measure: MeasureSpec,
    p: f64,
    options: &SolverOptions,
) -> Result<AlphaPair> {
    alpha_search(a, b, c, measure, p, options, None)
}

/// As [`alpha_step`], additionally scoring `incumbent` when it is feasible.
pub(crate) fn alpha_search(
    a: f64,
    b: f64,
    c: f64,
    measure: MeasureSpec,
    p: f64,
    options: &SolverOptions,
    incumbent: Option<f64>,
) -> Result<AlphaPair> {
    if !(c > 0.0) {
        return Err(Error::NonPositiveMeanGap(c));
    }
    if !(a > 0.0) {
        return Err(Error::VanishingForm("form_p"));
    }
    if !(b > 0.0) {
        return Err(Error::VanishingForm("form_n"));
    }
    let lower = a * a / (a * a + c * c);
    let mut best: Option<(f64, f64, f64)> = None;
    let mut consider = |alpha_p: f64| -> Result<()> {
        let Some(alpha_n) = paired_alpha_n(alpha_p, a, b, c)? else {
            return Ok(());
        };
        if let Some(r) = rank(measure, p, alpha_p, alpha_n)? {
            if best.is_none_or(|(bst, _, _)| r < bst) {
                best = Some((r, alpha_p, alpha_n));
            }
        }
        Ok(())
    };
    for alpha_p in grid_points(lower, options) {
        consider(alpha_p)?;
    }
    if let Some(alpha_p) = incumbent {
        if alpha_p >= lower && alpha_p < 1.0 {
            consider(alpha_p)?;
        }
    }
    let (_, alpha_p, alpha_n) = best.ok_or_else(|| {
        Error::ObjectiveDiverges(format!("no finite {measure} objective on the rate grid"))
    })?;
    Ok(AlphaPair {
        alpha_p,
        alpha_n,
        q: q_objective(measure, alpha_p, alpha_n, p)?,
    })
}
