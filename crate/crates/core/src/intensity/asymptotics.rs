//! Near-diagonal asymptotics of the pair covariance quantities.
//!
//! As r -> 0: det Sigma4 / r^4 tends to (m40 - 1) m22, the conditional
//! variance sigma1^2 tends to (m40 - 1)/m40, and N(r) (the product of the
//! largest two conditional Hessian second moments given both gradients)
//! is O(r^2). The extrapolations are Richardson steps on the two finest
//! unflagged rows, since each quantity has an O(r^2) correction.

use crate::error::{Error, Result};
use crate::gauss::{assemble_sigma, DEGENERATE_COND};
use crate::kernel::KernelModel;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AsymptoticsRow {
    pub r: f64,
    pub det4_over_r4: f64,
    pub sigma1_sq: f64,
    pub n_over_r2: f64,
    /// Excluded from extrapolation (r below 1e-4 or ill-conditioned pair).
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub kernel: String,
    pub rows: Vec<AsymptoticsRow>,
    pub extrapolated_det4: f64,
    pub extrapolated_sigma1_sq: f64,
    pub predicted_det4: f64,
    pub predicted_sigma1_sq: f64,
    /// max/min of N(r)/r^2 over unflagged rows (boundedness indicator).
    pub n_ratio_spread: f64,
    /// Least-squares c3 + c5 r^2 fit residual on the three finest rows,
    /// relative to c3.
    pub det4_fit_residual: f64,
}

/// Product of the largest two entries of the conditional second-moment
/// matrix of the Hessian entries given both gradients.
fn n_of_r(model: &KernelModel, r: f64) -> Result<f64> {
    let s = assemble_sigma(model, [0.0, 0.0], [r, 0.0])?;
    let sigma2 = DMatrix::from_fn(4, 4, |i, j| s.sigma2[(i, j)]);
    let sigma5 = DMatrix::from_fn(4, 3, |i, j| s.sigma5[(i, j)]);
    let sol = sigma2
        .lu()
        .solve(&sigma5)
        .ok_or(Error::SingularMatrix { cond: s.cond_sigma2 })?;
    let reduction = sigma5.transpose() * sol;
    let v = [
        s.sigma6[(0, 0)] - reduction[(0, 0)],
        s.sigma6[(1, 1)] - reduction[(1, 1)],
        s.sigma6[(2, 2)] - reduction[(2, 2)],
    ];
    // Entries of the 2x2 moment matrix: (1,1) -> v0, (1,2) = (2,1) -> v1,
    // (2,2) -> v2; product of the largest two of the four entries.
    let mut entries = [v[0], v[1], v[1], v[2]];
    entries.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(entries[0] * entries[1])
}

fn richardson(r1: f64, v1: f64, r2: f64, v2: f64) -> f64 {
    // v(r) = L + c r^2: eliminate c from the two finest points (r2 < r1).
    v2 + (v2 - v1) * r2 * r2 / (r1 * r1 - r2 * r2)
}

pub fn near_diagonal_asymptotics(
    model: &KernelModel,
    r_list: &[f64],
) -> Result<AsymptoticsReport> {
    if r_list.is_empty() {
        return Err(Error::InvalidConfig("empty r list".into()));
    }
    for w in r_list.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::InvalidConfig("r list must be strictly decreasing".into()));
        }
    }
    if r_list.iter().any(|&r| !(r > 0.0 && r <= 0.5)) {
        return Err(Error::InvalidConfig("r values must lie in (0, 0.5]".into()));
    }

    let mut rows = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let s = assemble_sigma(model, [0.0, 0.0], [r, 0.0])?;
        let flagged = r < 1e-4 || !(s.cond_sigma2 < DEGENERATE_COND);
        let n = if flagged { f64::NAN } else { n_of_r(model, r)? };
        rows.push(AsymptoticsRow {
            r,
            det4_over_r4: s.det_sigma4 / r.powi(4),
            sigma1_sq: s.sigma1_sq,
            n_over_r2: n / (r * r),
            flagged,
        });
    }

    let clean: Vec<&AsymptoticsRow> = rows.iter().filter(|row| !row.flagged).collect();
    if clean.len() < 2 {
        return Err(Error::InvalidConfig(
            "need at least two unflagged rows for extrapolation".into(),
        ));
    }
    let fine = clean[clean.len() - 1];
    let next = clean[clean.len() - 2];
    let extrapolated_det4 = richardson(next.r, next.det4_over_r4, fine.r, fine.det4_over_r4);
    let extrapolated_sigma1_sq = richardson(next.r, next.sigma1_sq, fine.r, fine.sigma1_sq);

    let m40 = model.spectral_moment_from_derivatives(4, 0)?;
    let m22 = model.spectral_moment_from_derivatives(2, 2)?;
    let predicted_det4 = (m40 - 1.0) * m22;
    let predicted_sigma1_sq = (m40 - 1.0) / m40;

    let mut spread = (f64::INFINITY, f64::NEG_INFINITY);
    for row in &clean {
        spread.0 = spread.0.min(row.n_over_r2);
        spread.1 = spread.1.max(row.n_over_r2);
    }

    // Fit c3 + c5 r^2 on the three finest unflagged rows of det4/r^4.
    let fit_rows: Vec<&&AsymptoticsRow> = clean.iter().rev().take(3).collect();
    let det4_fit_residual = if fit_rows.len() == 3 {
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for row in &fit_rows {
            let x = row.r * row.r;
            let y = row.det4_over_r4;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let n = 3.0;
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let c3 = (sy - slope * sx) / n;
        let mut res = 0.0f64;
        for row in &fit_rows {
            let fit = c3 + slope * row.r * row.r;
            res = res.max((row.det4_over_r4 - fit).abs());
        }
        res / c3.abs().max(1e-300)
    } else {
        f64::NAN
    };

    Ok(AsymptoticsReport {
        kernel: model.id().to_string(),
        rows,
        extrapolated_det4,
        extrapolated_sigma1_sq,
        predicted_det4,
        predicted_sigma1_sq,
        n_ratio_spread: spread.1 / spread.0,
        det4_fit_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_r_list() -> Vec<f64> {
        vec![0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001]
    }

    #[test]
    fn plane_wave_limits() {
        let model = KernelModel::plane_wave().normalize().unwrap();
        let rep = near_diagonal_asymptotics(&model, &default_r_list()).unwrap();
        // (m40 - 1) m22 = (3/2 - 1)(1/2) = 1/4; sigma1^2 -> 1/3.
        assert!((rep.predicted_det4 - 0.25).abs() < 1e-12);
        assert!((rep.predicted_sigma1_sq - 1.0 / 3.0).abs() < 1e-12);
        assert!(
            (rep.extrapolated_det4 - 0.25).abs() < 0.02 * 0.25,
            "det4 {}",
            rep.extrapolated_det4
        );
        assert!(
            (rep.extrapolated_sigma1_sq - 1.0 / 3.0).abs() < 0.02 / 3.0,
            "sigma1 {}",
            rep.extrapolated_sigma1_sq
        );
    }

    #[test]
    fn bargmann_fock_limits() {
        let model = KernelModel::bargmann_fock().normalize().unwrap();
        let rep = near_diagonal_asymptotics(&model, &default_r_list()).unwrap();
        assert!((rep.predicted_det4 - 2.0).abs() < 1e-12);
        assert!((rep.predicted_sigma1_sq - 2.0 / 3.0).abs() < 1e-12);
        assert!((rep.extrapolated_det4 - 2.0).abs() < 0.04);
        assert!((rep.extrapolated_sigma1_sq - 2.0 / 3.0).abs() < 0.02 * 2.0 / 3.0);
    }

    #[test]
    fn n_over_r2_bounded() {
        for model in [
            KernelModel::plane_wave().normalize().unwrap(),
            KernelModel::bargmann_fock().normalize().unwrap(),
        ] {
            let list: Vec<f64> = vec![0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001];
            let rep = near_diagonal_asymptotics(&model, &list).unwrap();
            assert!(
                rep.n_ratio_spread < 3.0,
                "{}: spread {}",
                model.id(),
                rep.n_ratio_spread
            );
        }
    }

    #[test]
    fn remainder_fit_is_quadratic() {
        let model = KernelModel::plane_wave().normalize().unwrap();
        let rep = near_diagonal_asymptotics(&model, &default_r_list()).unwrap();
        assert!(
            rep.det4_fit_residual < 0.02,
            "residual {}",
            rep.det4_fit_residual
        );
    }

    #[test]
    fn tiny_rows_are_flagged() {
        let model = KernelModel::plane_wave().normalize().unwrap();
        let rep = near_diagonal_asymptotics(&model, &[0.1, 0.001, 0.00005]).unwrap();
        assert!(rep.rows.last().unwrap().flagged);
        assert!(!rep.rows[0].flagged);
    }

    #[test]
    fn rejects_bad_lists() {
        let model = KernelModel::plane_wave().normalize().unwrap();
        assert!(near_diagonal_asymptotics(&model, &[]).is_err());
        assert!(near_diagonal_asymptotics(&model, &[0.1, 0.2]).is_err());
        assert!(near_diagonal_asymptotics(&model, &[0.7, 0.1]).is_err());
    }
}
