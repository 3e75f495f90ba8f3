//! Kernelized classifier: Gram blocks, centered factors and the dual decision rule.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::BinaryDataset;
use crate::error::{Error, Result};
use crate::measures::MeasureSpec;
use crate::solver::{bias, solve, MomentProblem, QuadForm, SolverOptions, SolverResult};

const MEDIAN_PAIRS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    /// `exp(−γ‖x − y‖²)`.
    Rbf {
        gamma: f64,
    },
    /// `(x'y + coef0)^degree`.
    Polynomial {
        degree: u32,
        coef0: f64,
    },
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!(
                "rbf gamma must be positive, got {gamma}"
            )));
        }
        Ok(KernelSpec::Rbf { gamma })
    }

    pub fn polynomial(degree: u32, coef0: f64) -> Result<Self> {
        if degree == 0 {
            return Err(Error::invalid("polynomial degree must be positive"));
        }
        if !coef0.is_finite() {
            return Err(Error::invalid("polynomial coef0 must be finite"));
        }
        Ok(KernelSpec::Polynomial { degree, coef0 })
    }

    pub fn eval<'a, I, J>(&self, x: I, y: J) -> f64
    where
        I: Iterator<Item = &'a f64>,
        J: Iterator<Item = &'a f64>,
    {
        match *self {
            KernelSpec::Linear => x.zip(y).map(|(a, b)| a * b).sum(),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = x.zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
            KernelSpec::Polynomial { degree, coef0 } => {
                let dot: f64 = x.zip(y).map(|(a, b)| a * b).sum();
                (dot + coef0).powi(degree as i32)
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => f.write_str("linear"),
            KernelSpec::Rbf { gamma } => write!(f, "rbf:{gamma}"),
            KernelSpec::Polynomial { degree, coef0 } => write!(f, "poly:{degree}:{coef0}"),
        }
    }
}

/// Accepts `linear`, `rbf:<gamma>`, `poly:<degree>[:<coef0>]`.
/// A bare `rbf` needs a gamma from elsewhere and is rejected here.
impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let mut parts = lower.split(':');
        let kind = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let num = |t: &str| -> Result<f64> {
            t.parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad kernel parameter `{t}` in `{s}`")))
        };
        match (kind, args.as_slice()) {
            ("linear", []) => Ok(KernelSpec::Linear),
            ("rbf", [g]) => KernelSpec::rbf(num(g)?),
            ("rbf", []) => Err(Error::invalid("rbf kernel needs a gamma (rbf:<gamma>)")),
            ("poly" | "polynomial", [d]) => KernelSpec::polynomial(parse_degree(d)?, 1.0),
            ("poly" | "polynomial", [d, c]) => KernelSpec::polynomial(parse_degree(d)?, num(c)?),
            _ => Err(Error::invalid(format!("unknown kernel `{s}`"))),
        }
    }
}

fn parse_degree(t: &str) -> Result<u32> {
    t.parse::<u32>().map_err(|_| {
        Error::invalid(format!(
            "polynomial degree must be a positive integer, got `{t}`"
        ))
    })
}

/// `1 / median squared distance` over random pairs of distinct rows.
pub fn median_heuristic_gamma(features: &DMatrix<f64>, seed: u64) -> Result<f64> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::DegenerateData(
            "median heuristic needs at least two samples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d2: Vec<f64> = (0..MEDIAN_PAIRS)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (features.row(i) - features.row(j)).norm_squared()
        })
        .collect();
    d2.sort_by(f64::total_cmp);
    let median = (d2[MEDIAN_PAIRS / 2 - 1] + d2[MEDIAN_PAIRS / 2]) / 2.0;
    if !(median > 0.0) {
        return Err(Error::DegenerateData(
            "median pairwise distance is zero".into(),
        ));
    }
    Ok(1.0 / median)
}

/// Kernel rows of the positive and negative samples against all samples,
/// positives first.
#[derive(Debug, Clone, PartialEq)]
pub struct GramBlocks {
    /// `N_P × (N_P + N_N)`.
    pub k_p: DMatrix<f64>,
    /// `N_N × (N_P + N_N)`.
    pub k_n: DMatrix<f64>,
}

impl GramBlocks {
    pub fn full(&self) -> DMatrix<f64> {
        let (np, nn, n) = (self.k_p.nrows(), self.k_n.nrows(), self.k_p.ncols());
        let mut k = DMatrix::zeros(np + nn, n);
        k.rows_mut(0, np).copy_from(&self.k_p);
        k.rows_mut(np, nn).copy_from(&self.k_n);
        k
    }
}

pub fn gram(spec: &KernelSpec, x_pos: &DMatrix<f64>, x_neg: &DMatrix<f64>) -> Result<GramBlocks> {
    if x_pos.nrows() == 0 || x_neg.nrows() == 0 {
        return Err(Error::DegenerateData(
            "gram needs samples of both classes".into(),
        ));
    }
    if x_pos.ncols() != x_neg.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x_pos.ncols(),
            found: x_neg.ncols(),
        });
    }
    let (np, nn) = (x_pos.nrows(), x_neg.nrows());
    let n = np + nn;
    let row = |i: usize| {
        if i < np {
            x_pos.row(i)
        } else {
            x_neg.row(i - np)
        }
    };
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = spec.eval(row(i).iter(), row(j).iter());
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "kernel value at ({i}, {j}) is not finite"
                )));
            }
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(GramBlocks {
        k_p: k.rows(0, np).into_owned(),
        k_n: k.rows(np, nn).into_owned(),
    })
}

/// Column means of each Gram block and the row-centered, scaled blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredFactors {
    pub l_p: DVector<f64>,
    pub l_n: DVector<f64>,
    /// `(K_P − 1·l_p') / √N_P`.
    pub big_l_p: DMatrix<f64>,
    /// `(K_N − 1·l_n') / √N_N`.
    pub big_l_n: DMatrix<f64>,
}

pub fn centered_factors(blocks: &GramBlocks) -> CenteredFactors {
    let center = |k: &DMatrix<f64>| {
        let rows = k.nrows() as f64;
        let mean: DVector<f64> = k.row_mean().transpose();
        let mut l = k.clone();
        for mut r in l.row_iter_mut() {
            r -= mean.transpose();
        }
        (mean, l / rows.sqrt())
    };
    let (l_p, big_l_p) = center(&blocks.k_p);
    let (l_n, big_l_n) = center(&blocks.k_n);
    CenteredFactors {
        l_p,
        l_n,
        big_l_p,
        big_l_n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    /// Support points kept per class; `None` keeps all.
    pub subsample: Option<usize>,
    pub seed: u64,
    /// Added to both centered forms as `ridge·I`.
    pub ridge: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            subsample: Some(200),
            seed: 0,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub kernel: KernelSpec,
    /// Unit-norm weights on `support_pos` then `support_neg`.
    #[serde(with = "crate::serde_util::vector")]
    pub dual_weights: DVector<f64>,
    pub bias: f64,
    #[serde(with = "crate::serde_util::matrix")]
    pub support_pos: DMatrix<f64>,
    #[serde(with = "crate::serde_util::matrix")]
    pub support_neg: DMatrix<f64>,
    pub measure: MeasureSpec,
    pub alpha_p: f64,
    pub alpha_n: f64,
    pub q_value: f64,
}

impl KernelModel {
    pub fn dim(&self) -> usize {
        self.support_pos.ncols()
    }

    /// `Σ w_i K(s_i, x) − b`.
    pub fn score(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let np = self.support_pos.nrows();
        let mut s = 0.0;
        for (i, w) in self.dual_weights.iter().enumerate() {
            let support = if i < np {
                self.support_pos.row(i)
            } else {
                self.support_neg.row(i - np)
            };
            s += w * self.kernel.eval(support.iter(), x.iter());
        }
        Ok(s - self.bias)
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<i8> {
        Ok(if self.score(x)? > 0.0 { 1 } else { -1 })
    }

    pub fn scores(&self, features: &DMatrix<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: features.ncols(),
            });
        }
        features
            .row_iter()
            .map(|r| self.score(&r.transpose()))
            .collect()
    }
}

fn subsample_rows(x: &DMatrix<f64>, keep: Option<usize>, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    match keep {
        Some(k) if k < x.nrows() => {
            let mut idx = rand::seq::index::sample(rng, x.nrows(), k).into_vec();
            idx.sort_unstable();
            x.select_rows(&idx)
        }
        _ => x.clone(),
    }
}

/// Builds the kernel problem from (sub)sampled support points and solves it.
/// The class proportion comes from the full training set.
pub fn solve_kernel(
    spec: &KernelSpec,
    train: &BinaryDataset,
    measure: MeasureSpec,
    options: &SolverOptions,
    kernel_options: &KernelOptions,
) -> Result<(KernelModel, SolverResult)> {
    train.require_both_classes()?;
    if kernel_options.subsample == Some(0) {
        return Err(Error::invalid("subsample count must be positive"));
    }
    if !(kernel_options.ridge >= 0.0) {
        return Err(Error::invalid("ridge must be nonnegative"));
    }
    let p = train.positive_fraction().expect("nonempty");
    let mut rng = ChaCha8Rng::seed_from_u64(kernel_options.seed);
    let support_pos = subsample_rows(&train.class_rows(1), kernel_options.subsample, &mut rng);
    let support_neg = subsample_rows(&train.class_rows(-1), kernel_options.subsample, &mut rng);

    let blocks = gram(spec, &support_pos, &support_neg)?;
    let factors = centered_factors(&blocks);
    let gap = &factors.l_p - &factors.l_n;
    let scale = blocks.k_p.amax().max(blocks.k_n.amax()).max(1.0);
    if gap.amax() <= 1e-12 * scale {
        return Err(Error::NoSolution);
    }
    let form_p = QuadForm::Factor {
        factor: factors.big_l_p,
        ridge: kernel_options.ridge,
    };
    let form_n = QuadForm::Factor {
        factor: factors.big_l_n,
        ridge: kernel_options.ridge,
    };
    let problem = MomentProblem::new(gap, form_p, form_n, p, measure)?;
    let result = solve(&problem, options, None)?;
    let b = bias(&factors.l_p, problem.form_p(), &result.w, result.alpha_p)?;
    let model = KernelModel {
        kernel: *spec,
        dual_weights: result.w.clone(),
        bias: b,
        support_pos,
        support_neg,
        measure,
        alpha_p: result.alpha_p,
        alpha_n: result.alpha_n,
        q_value: result.q_value,
    };
    Ok((model, result))
}
