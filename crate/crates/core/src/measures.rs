//! Non-decomposable performance measures.
//!
//! Each measure has two faces: the score `P(TPR, TNR)` that an evaluator
//! maximizes, and an equivalent objective `Q(FNR, FPR)` that the solver
//! minimizes. Maximizing `P` and minimizing `Q` select the same classifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A row of the measure table. `FBeta` carries its β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MeasureSpec {
    /// Accuracy rate.
    Ar,
    /// Arithmetic mean of TPR and TNR.
    Am,
    /// Quadratic mean of the error rates.
    Qm,
    FBeta {
        beta: f64,
    },
    /// Harmonic mean of TPR and TNR.
    Hm,
    /// Geometric mean of TPR and TNR.
    Gm,
    /// Geometric mean of TPR and precision.
    GTpPr,
    /// Jaccard coefficient.
    Jac,
}

impl MeasureSpec {
    pub const ALL_NAMES: [&'static str; 8] = ["ar", "am", "qm", "f1", "hm", "gm", "gtppr", "jac"];

    pub fn f_beta(beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!(
                "beta must be a positive number, got {beta}"
            )));
        }
        Ok(MeasureSpec::FBeta { beta })
    }

    /// The table rows, with `F_beta` instantiated at `beta`.
    pub fn all(beta: f64) -> Vec<MeasureSpec> {
        vec![
            MeasureSpec::Ar,
            MeasureSpec::Am,
            MeasureSpec::Qm,
            MeasureSpec::FBeta { beta },
            MeasureSpec::Hm,
            MeasureSpec::Gm,
            MeasureSpec::GTpPr,
            MeasureSpec::Jac,
        ]
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            MeasureSpec::FBeta { beta } => Some(*beta),
            _ => None,
        }
    }
}

impl fmt::Display for MeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureSpec::Ar => f.write_str("ar"),
            MeasureSpec::Am => f.write_str("am"),
            MeasureSpec::Qm => f.write_str("qm"),
            MeasureSpec::FBeta { beta } if *beta == 1.0 => f.write_str("f1"),
            MeasureSpec::FBeta { beta } if *beta == 2.0 => f.write_str("f2"),
            MeasureSpec::FBeta { beta } => write!(f, "fbeta:{beta}"),
            MeasureSpec::Hm => f.write_str("hm"),
            MeasureSpec::Gm => f.write_str("gm"),
            MeasureSpec::GTpPr => f.write_str("gtppr"),
            MeasureSpec::Jac => f.write_str("jac"),
        }
    }
}

impl FromStr for MeasureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let spec = match lower.as_str() {
            "ar" => MeasureSpec::Ar,
            "am" => MeasureSpec::Am,
            "qm" => MeasureSpec::Qm,
            "f1" => MeasureSpec::FBeta { beta: 1.0 },
            "f2" => MeasureSpec::FBeta { beta: 2.0 },
            "hm" => MeasureSpec::Hm,
            "gm" => MeasureSpec::Gm,
            "gtppr" | "gtp" | "g-tp/pr" => MeasureSpec::GTpPr,
            "jac" => MeasureSpec::Jac,
            other => {
                let beta = other
                    .strip_prefix("fbeta:")
                    .and_then(|b| b.parse::<f64>().ok())
                    .ok_or_else(|| Error::invalid(format!("unknown measure `{s}`")))?;
                MeasureSpec::f_beta(beta)?
            }
        };
        Ok(spec)
    }
}

impl TryFrom<String> for MeasureSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MeasureSpec> for String {
    fn from(m: MeasureSpec) -> String {
        m.to_string()
    }
}

/// Raw confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

/// Class-conditional error rates. `tpr = 1 - fnr` and `tnr = 1 - fpr` hold by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub fnr: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub tnr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<Counts>,
}

impl Rates {
    pub fn from_errors(fnr: f64, fpr: f64) -> Result<Self> {
        for (name, v) in [("fnr", fnr), ("fpr", fpr)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(Rates {
            fnr,
            fpr,
            tpr: 1.0 - fnr,
            tnr: 1.0 - fpr,
            counts: None,
        })
    }

    pub fn from_counts(counts: Counts) -> Result<Self> {
        let pos = counts.tp + counts.fn_;
        let neg = counts.tn + counts.fp;
        if pos == 0 || neg == 0 {
            return Err(Error::DegenerateData(
                "rates need at least one sample of each class".into(),
            ));
        }
        let fnr = counts.fn_ as f64 / pos as f64;
        let fpr = counts.fp as f64 / neg as f64;
        Ok(Rates {
            fnr,
            fpr,
            tpr: counts.tp as f64 / pos as f64,
            tnr: counts.tn as f64 / neg as f64,
            counts: Some(counts),
        })
    }
}

/// A measure value; `degenerate` marks a 0/0 form reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureValue {
    pub value: f64,
    pub degenerate: bool,
}

impl MeasureValue {
    fn ok(value: f64) -> Self {
        MeasureValue {
            value,
            degenerate: false,
        }
    }

    fn degenerate() -> Self {
        MeasureValue {
            value: 0.0,
            degenerate: true,
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "positive proportion must lie in (0, 1), got {p}"
        )));
    }
    Ok(())
}

/// Evaluates the maximization form `P(TPR, TNR)`; larger is better.
///
/// Forms that involve precision are degenerate when nothing is predicted
/// positive; HM is degenerate when `TPR + TNR = 0`.
pub fn p_measure(spec: MeasureSpec, rates: &Rates, p: f64) -> Result<MeasureValue> {
    check_p(p)?;
    let Rates {
        tpr, tnr, fnr, fpr, ..
    } = *rates;
    let predicted_pos = p * tpr + (1.0 - p) * fpr;
    let v = match spec {
        MeasureSpec::Ar => MeasureValue::ok(p * tpr + (1.0 - p) * tnr),
        MeasureSpec::Am => MeasureValue::ok((tpr + tnr) / 2.0),
        MeasureSpec::Qm => MeasureValue::ok(1.0 - (fnr * fnr + fpr * fpr) / 2.0),
        MeasureSpec::FBeta { beta } => {
            if predicted_pos == 0.0 {
                return Ok(MeasureValue::degenerate());
            }
            let b2 = beta * beta;
            let num = (1.0 + b2) * p * tpr;
            MeasureValue::ok(num / (num + (1.0 - p) * fpr + b2 * p * fnr))
        }
        MeasureSpec::Hm => {
            if tpr + tnr == 0.0 {
                return Ok(MeasureValue::degenerate());
            }
            MeasureValue::ok(2.0 * tpr * tnr / (tpr + tnr))
        }
        MeasureSpec::Gm => MeasureValue::ok((tpr * tnr).sqrt()),
        MeasureSpec::GTpPr => {
            if predicted_pos == 0.0 {
                return Ok(MeasureValue::degenerate());
            }
            let precision = p * tpr / predicted_pos;
            MeasureValue::ok((tpr * precision).sqrt())
        }
        MeasureSpec::Jac => {
            if predicted_pos == 0.0 {
                return Ok(MeasureValue::degenerate());
            }
            MeasureValue::ok(p * tpr / (p * tpr + p * fnr + (1.0 - p) * fpr))
        }
    };
    Ok(v)
}

/// Evaluates the minimization objective `Q(FNR, FPR)` in closed form;
/// smaller is better.
pub fn q_objective(spec: MeasureSpec, fnr: f64, fpr: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    if !(0.0..=1.0).contains(&fnr) || !(0.0..=1.0).contains(&fpr) {
        return Err(Error::invalid(format!(
            "rates must lie in [0, 1], got fnr={fnr} fpr={fpr}"
        )));
    }
    let series_row = matches!(
        spec,
        MeasureSpec::FBeta { .. }
            | MeasureSpec::Hm
            | MeasureSpec::Gm
            | MeasureSpec::GTpPr
            | MeasureSpec::Jac
    );
    if series_row && fnr >= 1.0 {
        return Err(Error::ObjectiveDiverges(format!(
            "{spec} objective needs fnr < 1"
        )));
    }
    if matches!(spec, MeasureSpec::Hm | MeasureSpec::Gm) && fpr >= 1.0 {
        return Err(Error::ObjectiveDiverges(format!(
            "{spec} objective needs fpr < 1"
        )));
    }
    let q = match spec {
        MeasureSpec::Ar => p * fnr + (1.0 - p) * fpr,
        MeasureSpec::Am => (fnr + fpr) / 2.0,
        MeasureSpec::Qm => (fnr * fnr + fpr * fpr) / 2.0,
        MeasureSpec::FBeta { beta } => ((1.0 - p) * fpr + beta * beta * p * fnr) / (1.0 - fnr),
        MeasureSpec::Hm => 1.0 / (1.0 - fnr) + 1.0 / (1.0 - fpr),
        MeasureSpec::Gm => 1.0 / ((1.0 - fnr) * (1.0 - fpr)),
        MeasureSpec::GTpPr => {
            let tpr = 1.0 - fnr;
            p / tpr + (1.0 - p) * fpr / (tpr * tpr)
        }
        MeasureSpec::Jac => (p * fnr + (1.0 - p) * fpr) / (1.0 - fnr),
    };
    Ok(q)
}

/// Confusion counts and rates of ±1 predictions against ±1 labels.
pub fn confusion_rates(predictions: &[i8], labels: &[i8]) -> Result<Rates> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: predictions.len(),
        });
    }
    let mut c = Counts {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&y_hat, &y) in predictions.iter().zip(labels) {
        match (y_hat, y) {
            (1, 1) => c.tp += 1,
            (1, -1) => c.fp += 1,
            (-1, -1) => c.tn += 1,
            (-1, 1) => c.fn_ += 1,
            _ => {
                return Err(Error::invalid(format!(
                    "labels must be ±1, got ({y_hat}, {y})"
                )))
            }
        }
    }
    if c.tp + c.fn_ == 0 || c.tn + c.fp == 0 {
        return Err(Error::DegenerateData(
            "labels contain a single class".into(),
        ));
    }
    Rates::from_counts(c)
}

/// Strict threshold at zero: only a positive score predicts +1.
pub fn threshold_scores(scores: &[f64]) -> Vec<i8> {
    scores
        .iter()
        .map(|&s| if s > 0.0 { 1 } else { -1 })
        .collect()
}

/// Result of scoring a classifier on labeled data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub measure: MeasureValue,
    pub rates: Rates,
    pub p: f64,
}

/// Thresholds `scores` at zero and evaluates `spec` on the empirical rates.
/// `p` comes from the labels unless overridden.
pub fn evaluate(
    scores: &[f64],
    labels: &[i8],
    spec: MeasureSpec,
    p_override: Option<f64>,
) -> Result<Evaluation> {
    let rates = confusion_rates(&threshold_scores(scores), labels)?;
    let p = match p_override {
        Some(p) => p,
        None => labels.iter().filter(|&&l| l == 1).count() as f64 / labels.len() as f64,
    };
    Ok(Evaluation {
        measure: p_measure(spec, &rates, p)?,
        rates,
        p,
    })
}
