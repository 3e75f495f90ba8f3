//! Per-class first and second moments, the only statistics the solver sees.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::BinaryDataset;
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_PROBE_TOL: f64 = 1e-10;
const PSD_PROBES: usize = 100;
const CLAMP_TOL: f64 = 1e-12;

/// Means and covariances of both classes plus the positive proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MomentsDoc", into = "MomentsDoc")]
pub struct ClassMoments {
    pub(crate) mu_p: DVector<f64>,
    pub(crate) sigma_p: DMatrix<f64>,
    pub(crate) mu_n: DVector<f64>,
    pub(crate) sigma_n: DMatrix<f64>,
    pub(crate) p: f64,
}

impl ClassMoments {
    pub fn new(
        mu_p: DVector<f64>,
        sigma_p: DMatrix<f64>,
        mu_n: DVector<f64>,
        sigma_n: DMatrix<f64>,
        p: f64,
    ) -> Result<Self> {
        let d = mu_p.len();
        if d == 0 {
            return Err(Error::invalid("moments need at least one feature"));
        }
        for (name, m) in [("sigma_p", &sigma_p), ("sigma_n", &sigma_n)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: if m.nrows() != d { m.nrows() } else { m.ncols() },
                });
            }
            check_psd(m, name)?;
        }
        if mu_n.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: mu_n.len(),
            });
        }
        if mu_p.iter().chain(mu_n.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("class means must be finite"));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!(
                "positive proportion must lie in (0, 1), got {p}"
            )));
        }
        Ok(Self {
            mu_p,
            sigma_p,
            mu_n,
            sigma_n,
            p,
        })
    }

    pub fn mu_p(&self) -> &DVector<f64> {
        &self.mu_p
    }
    pub fn sigma_p(&self) -> &DMatrix<f64> {
        &self.sigma_p
    }
    pub fn mu_n(&self) -> &DVector<f64> {
        &self.mu_n
    }
    pub fn sigma_n(&self) -> &DMatrix<f64> {
        &self.sigma_n
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn dim(&self) -> usize {
        self.mu_p.len()
    }

    /// Same moments with a different positive proportion.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(
            self.mu_p.clone(),
            self.sigma_p.clone(),
            self.mu_n.clone(),
            self.sigma_n.clone(),
            p,
        )
    }

    /// `mu_p - mu_n`.
    pub fn mean_gap(&self) -> DVector<f64> {
        &self.mu_p - &self.mu_n
    }

    /// True when the class means coincide exactly; the solver rejects such moments.
    pub fn has_zero_gap(&self) -> bool {
        self.mu_p == self.mu_n
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("moments serialize")
    }
}

/// JSON layout: vectors as arrays, matrices as arrays of rows.
#[derive(Serialize, Deserialize)]
struct MomentsDoc {
    mu_p: Vec<f64>,
    sigma_p: Vec<Vec<f64>>,
    mu_n: Vec<f64>,
    sigma_n: Vec<Vec<f64>>,
    p: f64,
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch {
            expected: ncols,
            found: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl From<ClassMoments> for MomentsDoc {
    fn from(m: ClassMoments) -> Self {
        MomentsDoc {
            mu_p: m.mu_p.iter().copied().collect(),
            sigma_p: matrix_to_rows(&m.sigma_p),
            mu_n: m.mu_n.iter().copied().collect(),
            sigma_n: matrix_to_rows(&m.sigma_n),
            p: m.p,
        }
    }
}

impl TryFrom<MomentsDoc> for ClassMoments {
    type Error = Error;

    fn try_from(doc: MomentsDoc) -> Result<Self> {
        ClassMoments::new(
            DVector::from_vec(doc.mu_p),
            rows_to_matrix(&doc.sigma_p)?,
            DVector::from_vec(doc.mu_n),
            rows_to_matrix(&doc.sigma_n)?,
            doc.p,
        )
    }
}

/// Symmetry to 1e-12 relative, then 100 seeded unit probes must not see a
/// quadratic form below -1e-10 (scaled by the matrix magnitude).
pub(crate) fn check_psd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveSemidefinite(format!(
            "{name} has non-finite entries"
        )));
    }
    let scale = m.amax().max(1.0);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotPositiveSemidefinite(format!(
                    "{name} is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_c0de);
    for _ in 0..PSD_PROBES {
        let mut w = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let norm = w.norm();
        if norm == 0.0 {
            continue;
        }
        w /= norm;
        let q = w.dot(&(m * &w));
        if q < -PSD_PROBE_TOL * scale {
            return Err(Error::NotPositiveSemidefinite(format!(
                "{name} has negative form {q:e}"
            )));
        }
    }
    Ok(())
}

/// Pairwise (cascade) summation with a fixed split order. Blocks of eight
/// are summed left to right.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().fold(0.0, |acc, &v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn class_mean_and_cov(rows: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows.nrows();
    let d = rows.ncols();
    let mean = DVector::from_fn(d, |j, _| {
        let col: Vec<f64> = rows.column(j).iter().copied().collect();
        pairwise_sum(&col) / n as f64
    });
    let centered = DMatrix::from_fn(n, d, |i, j| rows[(i, j)] - mean[j]);
    let mut cov = DMatrix::zeros(d, d);
    let mut buf = vec![0.0; n];
    for j in 0..d {
        for k in j..d {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = centered[(i, j)] * centered[(i, k)];
            }
            let v = pairwise_sum(&buf) / (n as f64 - 1.0);
            cov[(j, k)] = v;
            cov[(k, j)] = v;
        }
    }
    (mean, cov)
}

/// Sample means and unbiased (N-1) covariances of each class.
pub fn estimate_moments(data: &BinaryDataset) -> Result<ClassMoments> {
    if data.n_pos() < 2 || data.n_neg() < 2 {
        return Err(Error::DegenerateData(format!(
            "moment estimation needs at least 2 samples per class, have {} positive and {} negative",
            data.n_pos(),
            data.n_neg()
        )));
    }
    if data.feature_dim() == 0 {
        return Err(Error::DegenerateData("dataset has no features".into()));
    }
    let (mu_p, sigma_p) = class_mean_and_cov(&data.class_rows(1));
    let (mu_n, sigma_n) = class_mean_and_cov(&data.class_rows(-1));
    let p = data.n_pos() as f64 / data.len() as f64;
    let moments = ClassMoments::new(mu_p, sigma_p, mu_n, sigma_n, p)?;
    if moments.has_zero_gap() {
        log::warn!("class means coincide; the solver will reject these moments");
    }
    Ok(moments)
}

/// Adds `jitter * trace / dim` to each covariance diagonal.
pub fn regularize(moments: &ClassMoments, jitter: f64) -> Result<ClassMoments> {
    if !(jitter >= 0.0) || !jitter.is_finite() {
        return Err(Error::invalid(format!(
            "jitter must be a finite nonnegative number, got {jitter}"
        )));
    }
    let bump = |s: &DMatrix<f64>| {
        let shift = jitter * s.trace() / s.nrows() as f64;
        let mut out = s.clone();
        for i in 0..s.nrows() {
            out[(i, i)] += shift;
        }
        out
    };
    Ok(ClassMoments {
        sigma_p: bump(&moments.sigma_p),
        sigma_n: bump(&moments.sigma_n),
        ..moments.clone()
    })
}

/// `w' Σ w`, with small negative rounding residue clamped to zero.
pub fn quadratic_form(sigma: &DMatrix<f64>, w: &DVector<f64>) -> Result<f64> {
    if sigma.nrows() != w.len() || sigma.ncols() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: sigma.nrows(),
            found: w.len(),
        });
    }
    let q = w.dot(&(sigma * w));
    clamp_form(q, || {
        let aw = w.abs();
        aw.dot(&(sigma.abs() * &aw))
    })
}

/// Clamp rule shared by every quadratic-form provider: values in
/// `[-tol, 0)` become 0 where `tol = 1e-12 * max(1, scale)`.
pub(crate) fn clamp_form(q: f64, scale: impl FnOnce() -> f64) -> Result<f64> {
    if q >= 0.0 {
        return Ok(q);
    }
    if q.is_nan() {
        return Err(Error::NotPositiveSemidefinite(
            "quadratic form is NaN".into(),
        ));
    }
    let tol = CLAMP_TOL * scale().max(1.0);
    if q >= -tol {
        Ok(0.0)
    } else {
        Err(Error::NotPositiveSemidefinite(format!(
            "quadratic form evaluated to {q:e}"
        )))
    }
}
