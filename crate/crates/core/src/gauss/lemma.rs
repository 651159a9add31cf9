//! Closed-form determinant lemmas: the structured A1/A2/A3 matrices, the
//! determinant-moment bound for |det X|^n, and the exact maximizer of the
//! Gaussian form (S^T L^-1 y)^(2n) exp(-y^T L^-1 y / 2).

use crate::error::{Error, Result};
use crate::gauss::regress;
use nalgebra::{DMatrix, SMatrix};
use serde::{Deserialize, Serialize};

/// Parameters of the structured pair matrices.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LemmaMatrixParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
}

/// The 5x5 matrix with the (f(x), grad f(x), grad f(y)) sparsity pattern.
pub fn build_a1(p: &LemmaMatrixParams) -> SMatrix<f64, 5, 5> {
    SMatrix::<f64, 5, 5>::from_row_slice(&[
        1.0, 0.0, 0.0, -p.a1, 0.0, //
        0.0, 1.0, 0.0, 1.0 - p.a2, 0.0, //
        0.0, 0.0, 1.0, 0.0, 1.0 - p.a3, //
        -p.a1, 1.0 - p.a2, 0.0, 1.0, 0.0, //
        0.0, 0.0, 1.0 - p.a3, 0.0, 1.0,
    ])
}

/// The 4x4 gradient-pair matrix.
pub fn build_a2(p: &LemmaMatrixParams) -> SMatrix<f64, 4, 4> {
    SMatrix::<f64, 4, 4>::from_row_slice(&[
        1.0, 0.0, 1.0 - p.a2, 0.0, //
        0.0, 1.0, 0.0, 1.0 - p.a3, //
        1.0 - p.a2, 0.0, 1.0, 0.0, //
        0.0, 1.0 - p.a3, 0.0, 1.0,
    ])
}

/// The 4x3 gradient/Hessian cross block.
pub fn build_a3(p: &LemmaMatrixParams) -> SMatrix<f64, 4, 3> {
    SMatrix::<f64, 4, 3>::from_row_slice(&[
        0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, //
        p.b1, 0.0, p.b2, //
        0.0, p.b2, 0.0,
    ])
}

/// det(A1) = (2a2 - a1^2 - a2^2)(2a3 - a3^2), det(A2) = a2 a3 (2-a2)(2-a3).
pub fn matrix_lemma_dets(p: &LemmaMatrixParams) -> (f64, f64) {
    let det_a1 = (2.0 * p.a2 - p.a1 * p.a1 - p.a2 * p.a2) * (2.0 * p.a3 - p.a3 * p.a3);
    let det_a2 = p.a2 * p.a3 * (2.0 - p.a2) * (2.0 - p.a3);
    (det_a1, det_a2)
}

/// Diagonal of A3^T A2^-1 A3 in closed form.
pub fn matrix_lemma_diag(p: &LemmaMatrixParams) -> Result<(f64, f64, f64)> {
    if p.a2 == 0.0 || p.a2 == 2.0 || p.a3 == 0.0 || p.a3 == 2.0 {
        return Err(Error::SingularLemmaDenominator);
    }
    let d2 = 2.0 * p.a2 - p.a2 * p.a2;
    let d3 = 2.0 * p.a3 - p.a3 * p.a3;
    Ok((p.b1 * p.b1 / d2, p.b2 * p.b2 / d3, p.b2 * p.b2 / d2))
}

/// Which displayed form of the determinant-moment bound to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetBoundForm {
    /// Conditional second moments of the X entries (the sharper form).
    Conditional,
    /// Unconditional second moments of the X entries.
    Unconditional,
}

/// Joint covariance of (X, Y, Z) where X is a 2x2 random matrix stored as
/// (X11, X12, X21, X22), Y is d-dimensional (d in {1,2}) and Z is
/// 4-dimensional. Layout: X block, then Y, then Z.
#[derive(Clone, Debug)]
pub struct DetBoundSetup {
    pub joint: DMatrix<f64>,
    pub dim_y: usize,
}

pub const DIM_X: usize = 4;
pub const DIM_Z: usize = 4;

/// Default absolute constant: (2n/e)^n covers the Gaussian-form maximum and
/// a factor 8 the determinant-expansion and moment-splitting steps.
pub fn default_constant(n: u32) -> f64 {
    (2.0 * n as f64 / std::f64::consts::E).powi(n as i32) * 8.0
}

/// Evaluate the determinant-moment bound for
/// sup_y density(y, 0) E[|det X|^n | Y = y, Z = 0].
pub fn det_bound(setup: &DetBoundSetup, n: u32, form: DetBoundForm, c: Option<f64>) -> Result<f64> {
    let d = setup.dim_y;
    if !(d == 1 || d == 2) {
        return Err(Error::InvalidConfig(format!("dim_y = {d} not in {{1,2}}")));
    }
    if !(n == 1 || n == 2) {
        return Err(Error::InvalidConfig(format!("n = {n} not in {{1,2}}")));
    }
    let total = DIM_X + d + DIM_Z;
    if setup.joint.nrows() != total || setup.joint.ncols() != total {
        return Err(Error::InvalidConfig(format!(
            "joint covariance must be {total}x{total}"
        )));
    }
    let c = c.unwrap_or_else(|| default_constant(n));
    let nf = n as f64;

    // det Sigma of (Y, Z).
    let yz = setup.joint.view((DIM_X, DIM_X), (d + DIM_Z, d + DIM_Z)).into_owned();
    let det_sigma = yz.clone().lu().determinant();
    if !(det_sigma > 0.0) {
        return Err(Error::SingularMatrix { cond: f64::INFINITY });
    }

    // Sigma_{Y|Z} from the (Y, Z) block.
    let reg_yz = regress(&yz, d)?;
    let det_y_given_z = reg_yz.cond_cov.clone().lu().determinant();

    // Conditional (on Z = 0) second moments of the X entries: diagonal of
    // the Schur complement of Z in the (X, Z) block.
    let mut xz = DMatrix::zeros(DIM_X + DIM_Z, DIM_X + DIM_Z);
    for i in 0..DIM_X {
        for j in 0..DIM_X {
            xz[(i, j)] = setup.joint[(i, j)];
        }
        for j in 0..DIM_Z {
            xz[(i, DIM_X + j)] = setup.joint[(i, DIM_X + d + j)];
            xz[(DIM_X + j, i)] = setup.joint[(DIM_X + d + j, i)];
        }
    }
    for i in 0..DIM_Z {
        for j in 0..DIM_Z {
            xz[(DIM_X + i, DIM_X + j)] = setup.joint[(DIM_X + d + i, DIM_X + d + j)];
        }
    }
    let reg_xz = regress(&xz, DIM_X)?;

    let x_factor = match form {
        DetBoundForm::Conditional => {
            let mut moments: Vec<f64> = (0..DIM_X).map(|i| reg_xz.cond_cov[(i, i)]).collect();
            moments.sort_by(|a, b| b.partial_cmp(a).unwrap());
            (moments[0] * moments[1]).powf(nf / 2.0)
        }
        DetBoundForm::Unconditional => {
            let max_x = (0..DIM_X)
                .map(|i| setup.joint[(i, i)])
                .fold(f64::NEG_INFINITY, f64::max);
            max_x.powi(n as i32)
        }
    };

    let max_y_sq = (0..d)
        .map(|i| setup.joint[(DIM_X + i, DIM_X + i)])
        .fold(f64::NEG_INFINITY, f64::max);
    let ratio = max_y_sq.powi(2 * n as i32) / det_y_given_z.powi(n as i32);

    Ok(c / det_sigma.sqrt() * x_factor * ratio.max(1.0))
}

/// Closed-form maximum and maximizer of
/// F(y) = (S^T Lambda^-1 y)^(2n) exp(-y^T Lambda^-1 y / 2)
/// over y in R^d, for diagonal Lambda with strictly positive entries.
///
/// The maximum is (2n/e)^n (sum_k s_k^2 / lambda_k)^n, attained at
/// y = +-sqrt(2n / q) S with q = sum_k s_k^2 / lambda_k (y = 0 when S = 0).
pub fn max_gauss_form(s: &[f64], lambda: &[f64], n: u32) -> (f64, Vec<f64>) {
    assert_eq!(s.len(), lambda.len());
    let q: f64 = s
        .iter()
        .zip(lambda)
        .map(|(si, li)| si * si / li)
        .sum();
    if q == 0.0 {
        return (0.0, vec![0.0; s.len()]);
    }
    let nf = n as f64;
    let value = (2.0 * nf / std::f64::consts::E).powi(n as i32) * q.powi(n as i32);
    let scale = (2.0 * nf / q).sqrt();
    (value, s.iter().map(|si| si * scale).collect())
}

/// Evaluate the Gaussian form itself (used by the grid-search oracles).
pub fn gauss_form_value(s: &[f64], lambda: &[f64], n: u32, y: &[f64]) -> f64 {
    let lin: f64 = s
        .iter()
        .zip(lambda)
        .zip(y)
        .map(|((si, li), yi)| si * yi / li)
        .sum();
    let quad: f64 = y
        .iter()
        .zip(lambda)
        .map(|(yi, li)| yi * yi / li)
        .sum();
    lin.powi(2 * n as i32) * (-0.5 * quad).exp()
}
