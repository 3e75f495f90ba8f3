#![allow(dead_code)]

use mpmf_core::dataset::BinaryDataset;
use mpmf_core::measures::MeasureSpec;
use mpmf_core::solver::{MomentProblem, QuadForm};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `AA' + floor·I` with Gaussian `A`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> DMatrix<f64> {
    let a = normal_matrix(rng, d, d);
    &a * a.transpose() + DMatrix::identity(d, d) * floor
}

pub fn random_problem(rng: &mut ChaCha8Rng, d: usize, measure: MeasureSpec) -> MomentProblem {
    let gap = DVector::from_fn(d, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        2.0 * z
    });
    let p = rng.random_range(0.05..0.95);
    MomentProblem::new(
        gap,
        QuadForm::Dense(random_spd(rng, d, 0.1)),
        QuadForm::Dense(random_spd(rng, d, 0.1)),
        p,
        measure,
    )
    .unwrap()
}

/// Samples from `N(μ, Σ)` as rows.
pub fn gaussian_rows(
    rng: &mut ChaCha8Rng,
    n: usize,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> DMatrix<f64> {
    let l = sigma
        .clone()
        .cholesky()
        .expect("covariance is positive definite")
        .l();
    let z = normal_matrix(rng, mu.len(), n);
    let mut x = (l * z).transpose();
    for mut row in x.row_iter_mut() {
        row += mu.transpose();
    }
    x
}

/// Four Gaussian clusters at `(±1, ±1)`; `(1,1)` and `(−1,−1)` are positive.
pub fn xor_data(seed: u64, per_cluster: usize, noise: f64) -> BinaryDataset {
    let mut r = rng(seed);
    let centers = [
        (1.0, 1.0, 1i8),
        (-1.0, -1.0, 1),
        (1.0, -1.0, -1),
        (-1.0, 1.0, -1),
    ];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (cx, cy, label) in centers {
        for _ in 0..per_cluster {
            let dx: f64 = StandardNormal.sample(&mut r);
            let dy: f64 = StandardNormal.sample(&mut r);
            rows.extend([cx + noise * dx, cy + noise * dy]);
            labels.push(label);
        }
    }
    BinaryDataset::new(DMatrix::from_row_slice(labels.len(), 2, &rows), labels).unwrap()
}

/// Unit-variance blobs at `(2, 2)` (positive) and `(−2, −2)`.
pub fn blob_data(seed: u64, n_pos: usize, n_neg: usize) -> BinaryDataset {
    let mut r = rng(seed);
    let id = DMatrix::identity(2, 2);
    let pos = gaussian_rows(&mut r, n_pos, &DVector::from_vec(vec![2.0, 2.0]), &id);
    let neg = gaussian_rows(&mut r, n_neg, &DVector::from_vec(vec![-2.0, -2.0]), &id);
    let mut x = DMatrix::zeros(n_pos + n_neg, 2);
    x.rows_mut(0, n_pos).copy_from(&pos);
    x.rows_mut(n_pos, n_neg).copy_from(&neg);
    let labels = (0..n_pos + n_neg)
        .map(|i| if i < n_pos { 1 } else { -1 })
        .collect();
    BinaryDataset::new(x, labels).unwrap()
}

/// F1 of ±1 predictions from counts.
pub fn f1_score(scores: &[f64], labels: &[i8]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s > 0.0, y == 1) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            _ => {}
        }
    }
    2.0 * tp / (2.0 * tp + fp + fn_)
}

/// Independent closed forms of the minimization objectives.
pub fn q_reference(measure: MeasureSpec, fnr: f64, fpr: f64, p: f64) -> f64 {
    match measure {
        MeasureSpec::Ar => p * fnr + (1.0 - p) * fpr,
        MeasureSpec::Am => 0.5 * (fnr + fpr),
        MeasureSpec::Qm => 0.5 * (fnr * fnr + fpr * fpr),
        MeasureSpec::FBeta { beta } => ((1.0 - p) * fpr + beta * beta * p * fnr) / (1.0 - fnr),
        MeasureSpec::Hm => 1.0 / (1.0 - fnr) + 1.0 / (1.0 - fpr),
        MeasureSpec::Gm => 1.0 / ((1.0 - fnr) * (1.0 - fpr)),
        MeasureSpec::GTpPr => p / (1.0 - fnr) + (1.0 - p) * fpr / ((1.0 - fnr) * (1.0 - fnr)),
        MeasureSpec::Jac => (p * fnr + (1.0 - p) * fpr) / (1.0 - fnr),
    }
}

fn sym2(s: &DMatrix<f64>, c: f64, si: f64) -> f64 {
    (s[(0, 0)] * c * c + 2.0 * s[(0, 1)] * c * si + s[(1, 1)] * si * si).max(0.0)
}

/// Exhaustive minimum of the objective over unit directions (angle step
/// `dtheta`) and `α_P` on a grid of step `dalpha` from the lower endpoint.
pub fn brute_force_q(
    g: &DVector<f64>,
    s_p: &DMatrix<f64>,
    s_n: &DMatrix<f64>,
    measure: MeasureSpec,
    p: f64,
    dtheta: f64,
    dalpha: f64,
) -> f64 {
    let mut best = f64::INFINITY;
    let steps = (2.0 * std::f64::consts::PI / dtheta).ceil() as usize;
    for k in 0..steps {
        let theta = k as f64 * dtheta;
        let (c, s) = (theta.cos(), theta.sin());
        let gap = g[0] * c + g[1] * s;
        if gap <= 0.0 {
            continue;
        }
        let a = sym2(s_p, c, s).sqrt();
        let b = sym2(s_n, c, s).sqrt();
        let mut x = a * a / (a * a + gap * gap);
        while x < 1.0 {
            let slack = gap - ((1.0 - x) / x).sqrt() * a;
            if slack >= 0.0 {
                let y = b * b / (b * b + slack * slack);
                let finite = match measure {
                    MeasureSpec::Hm | MeasureSpec::Gm => x < 1.0 && y < 1.0,
                    MeasureSpec::Ar | MeasureSpec::Am | MeasureSpec::Qm => true,
                    _ => x < 1.0,
                };
                if finite {
                    best = best.min(q_reference(measure, x, y, p));
                }
            }
            x += dalpha;
        }
    }
    best
}
