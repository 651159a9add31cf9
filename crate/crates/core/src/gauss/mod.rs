//! Gaussian covariance algebra for point pairs: the Sigma matrices,
//! Gaussian regression, density evaluation, and the determinant lemmas.

pub mod lemma;

use crate::dd;
use crate::error::{Error, Result};
use crate::kernel::KernelModel;
use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, SMatrix};
use serde::{Deserialize, Serialize};

/// Condition-number threshold beyond which a pair is flagged degenerate.
pub const DEGENERATE_COND: f64 = 1e12;
/// Eigenvalues of a conditional covariance in [-PSD_CLIP, 0] are clipped to
/// zero; anything below is rejected as genuinely negative.
pub const PSD_CLIP: f64 = 1e-10;

/// Covariance entry Cov[d^ap f(p), d^aq f(q)] = (-1)^|ap| d^(ap+aq) kappa(q-p).
pub fn cov_entry(
    model: &KernelModel,
    p: [f64; 2],
    ap: [usize; 2],
    q: [f64; 2],
    aq: [usize; 2],
) -> Result<f64> {
    let alpha = [ap[0] + aq[0], ap[1] + aq[1]];
    let d = model.derivative(alpha, [q[0] - p[0], q[1] - p[1]])?;
    let sign = if (ap[0] + ap[1]) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * d)
}

/// A derivative observable: which point of the pair, and the multi-index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Site {
    X,
    Y,
}

pub type Observable = (Site, [usize; 2]);

/// Covariance matrix of a list of derivative observables at the pair (x, y).
pub fn covariance_of(
    model: &KernelModel,
    x: [f64; 2],
    y: [f64; 2],
    obs: &[Observable],
) -> Result<DMatrix<f64>> {
    let n = obs.len();
    let mut m = DMatrix::zeros(n, n);
    let point = |s: Site| if s == Site::X { x } else { y };
    for i in 0..n {
        for j in i..n {
            let v = cov_entry(model, point(obs[i].0), obs[i].1, point(obs[j].0), obs[j].1)?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Gradient observables at a site.
fn grad(site: Site) -> [Observable; 2] {
    [(site, [1, 0]), (site, [0, 1])]
}

/// Hessian observables at a site, ordered (d20, d11, d02).
pub fn hessian_obs(site: Site) -> [Observable; 3] {
    [(site, [2, 0]), (site, [1, 1]), (site, [0, 2])]
}

/// The Sigma matrices of a point pair, with determinants evaluated in
/// extended precision (plain f64 elimination has no correct digits left in
/// det Sigma3 once |x-y| drops below ~0.1).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaSet {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub r: f64,
    /// Cov[(f(x), f(y)) | (grad f(x), grad f(y))].
    pub sigma1: Matrix2<f64>,
    /// Cov[(grad f(x), grad f(y))].
    pub sigma2: SMatrix<f64, 4, 4>,
    /// Cov[(f(x), f(y), grad f(x), grad f(y))].
    pub sigma3: SMatrix<f64, 6, 6>,
    /// Cov[(f(x), grad f(x), grad f(y))].
    pub sigma4: SMatrix<f64, 5, 5>,
    /// Cross-covariance of (grad f(x), grad f(y)) with hess f(x).
    pub sigma5: SMatrix<f64, 4, 3>,
    /// Cov[hess f(x)] in the order (d20, d11, d02).
    pub sigma6: Matrix3<f64>,
    /// Cov[(f(x), grad f(x))].
    pub sigma7: Matrix3<f64>,
    /// Var[f(x) | (grad f(x), grad f(y))].
    pub sigma1_sq: f64,
    /// Var[f(x) | grad f(x)].
    pub sigma2_sq: f64,
    pub m11: Matrix2<f64>,
    pub m12: SMatrix<f64, 2, 4>,
    pub m22: SMatrix<f64, 4, 4>,
    pub det_sigma1: f64,
    pub det_sigma2: f64,
    pub det_sigma3: f64,
    pub det_sigma4: f64,
    /// Condition estimate of sigma2.
    pub cond_sigma2: f64,
    /// Set when cond_sigma2 exceeds the degeneracy threshold.
    pub degenerate_pair: bool,
}

/// Assemble every Sigma matrix at the pair (x, y) from kernel derivatives.
pub fn assemble_sigma(model: &KernelModel, x: [f64; 2], y: [f64; 2]) -> Result<SigmaSet> {
    let r = ((y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2)).sqrt();
    if r == 0.0 {
        return Err(Error::InvalidConfig(
            "pair matrices need x != y (on-diagonal quantities come from sigma6/sigma7)".into(),
        ));
    }
    let f_obs: [Observable; 2] = [(Site::X, [0, 0]), (Site::Y, [0, 0])];
    let gx = grad(Site::X);
    let gy = grad(Site::Y);

    // Sigma3: (f(x), f(y), grad f(x), grad f(y))
    let mut obs3: Vec<Observable> = Vec::new();
    obs3.extend_from_slice(&f_obs);
    obs3.extend_from_slice(&gx);
    obs3.extend_from_slice(&gy);
    let sigma3_d = covariance_of(model, x, y, &obs3)?;

    // Sigma2 = trailing 4x4 gradient block of Sigma3.
    let sigma2_d = sigma3_d.view((2, 2), (4, 4)).into_owned();

    // Sigma4: (f(x), grad f(x), grad f(y))
    let mut obs4: Vec<Observable> = vec![(Site::X, [0, 0])];
    obs4.extend_from_slice(&gx);
    obs4.extend_from_slice(&gy);
    let sigma4_d = covariance_of(model, x, y, &obs4)?;

    // Sigma5: Cov[(grad f(x), grad f(y)), hess f(x)], 4x3.
    let hx = hessian_obs(Site::X);
    let mut sigma5 = SMatrix::<f64, 4, 3>::zeros();
    let grads: Vec<Observable> = gx.iter().chain(gy.iter()).copied().collect();
    let point = |s: Site| if s == Site::X { x } else { y };
    for (i, g) in grads.iter().enumerate() {
        for (j, h) in hx.iter().enumerate() {
            sigma5[(i, j)] = cov_entry(model, point(g.0), g.1, point(h.0), h.1)?;
        }
    }

    let sigma6_d = covariance_of(model, x, y, &hx)?;
    let mut obs7: Vec<Observable> = vec![(Site::X, [0, 0])];
    obs7.extend_from_slice(&gx);
    let sigma7_d = covariance_of(model, x, y, &obs7)?;

    // Condition estimate of Sigma2 via SVD (4x4).
    let svd = sigma2_d.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond_sigma2 = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let degenerate_pair = !(cond_sigma2 < DEGENERATE_COND);

    // Determinants and Schur complements in double-double. Sigma3 is laid
    // out (f-block, gradient-block), so ny = 2 isolates Sigma1.
    let rows3: Vec<f64> = sigma3_d.transpose().as_slice().to_vec(); // row-major
    let (schur1, det_sigma3, det_sigma2) = dd::schur_and_dets(6, 2, &rows3);
    let sigma1 = Matrix2::new(schur1[0], schur1[1], schur1[2], schur1[3]);
    let det_sigma1 = schur1[0] * schur1[3] - schur1[1] * schur1[2];

    let rows4: Vec<f64> = sigma4_d.transpose().as_slice().to_vec();
    let (schur_f, det_sigma4, _) = dd::schur_and_dets(5, 1, &rows4);
    let sigma1_sq = schur_f[0];

    // Var[f(x) | grad f(x)] = 1 under normalization (f and grad f independent).
    let reg7 = regress(&sigma7_d, 1)?;
    let sigma2_sq = reg7.cond_cov[(0, 0)];

    // The M blocks of the regression identity for Sigma1.
    let m11 = Matrix2::new(
        sigma3_d[(0, 0)],
        sigma3_d[(0, 1)],
        sigma3_d[(1, 0)],
        sigma3_d[(1, 1)],
    );
    let mut m12 = SMatrix::<f64, 2, 4>::zeros();
    for i in 0..2 {
        for j in 0..4 {
            m12[(i, j)] = sigma3_d[(i, 2 + j)];
        }
    }
    let mut m22 = SMatrix::<f64, 4, 4>::zeros();
    let mut sigma2 = SMatrix::<f64, 4, 4>::zeros();
    for i in 0..4 {
        for j in 0..4 {
            m22[(i, j)] = sigma2_d[(i, j)];
            sigma2[(i, j)] = sigma2_d[(i, j)];
        }
    }
    let mut sigma3 = SMatrix::<f64, 6, 6>::zeros();
    for i in 0..6 {
        for j in 0..6 {
            sigma3[(i, j)] = sigma3_d[(i, j)];
        }
    }
    let mut sigma4 = SMatrix::<f64, 5, 5>::zeros();
    for i in 0..5 {
        for j in 0..5 {
            sigma4[(i, j)] = sigma4_d[(i, j)];
        }
    }
    let mut sigma6 = Matrix3::zeros();
    let mut sigma7 = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            sigma6[(i, j)] = sigma6_d[(i, j)];
            sigma7[(i, j)] = sigma7_d[(i, j)];
        }
    }

    Ok(SigmaSet {
        x,
        y,
        r,
        sigma1,
        sigma2,
        sigma3,
        sigma4,
        sigma5,
        sigma6,
        sigma7,
        sigma1_sq,
        sigma2_sq,
        m11,
        m12,
        m22,
        det_sigma1,
        det_sigma2,
        det_sigma3,
        det_sigma4,
        cond_sigma2,
        degenerate_pair,
    })
}

/// Result of conditioning the leading block on the trailing block.
#[derive(Clone, Debug)]
pub struct Regression {
    /// Conditional covariance Sigma_YY - Sigma_YZ Sigma_ZZ^-1 Sigma_ZY,
    /// symmetrized with tiny negative eigenvalues clipped to zero.
    pub cond_cov: DMatrix<f64>,
    /// Regression coefficients Sigma_YZ Sigma_ZZ^-1 (conditional mean of Y
    /// given Z = z is coeff * z).
    pub coeff: DMatrix<f64>,
    /// Condition estimate of the Z block.
    pub cond_z: f64,
}

/// Gaussian regression of the first `ny` coordinates on the rest.
///
/// The joint covariance is laid out with Y first. Inversion goes through a
/// pivoted solve, never an explicit inverse.
pub fn regress(joint: &DMatrix<f64>, ny: usize) -> Result<Regression> {
    let n = joint.nrows();
    assert!(ny < n, "need a nonempty conditioning block");
    let nz = n - ny;
    let yy = joint.view((0, 0), (ny, ny)).into_owned();
    let yz = joint.view((0, ny), (ny, nz)).into_owned();
    let zz = joint.view((ny, ny), (nz, nz)).into_owned();

    let svd = zz.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond_z = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond_z < DEGENERATE_COND) {
        return Err(Error::SingularMatrix { cond: cond_z });
    }

    let lu = zz.lu();
    // coeff^T = Sigma_ZZ^-1 Sigma_ZY
    let coeff_t = lu
        .solve(&yz.transpose())
        .ok_or(Error::SingularMatrix { cond: cond_z })?;
    let coeff = coeff_t.transpose();
    let raw = &yy - &yz * &coeff_t;
    let sym = (&raw + raw.transpose()) * 0.5;

    // Clip roundoff-negative eigenvalues; reject real negativity. The clip
    // scales with the largest eigenvalue so matrices of any magnitude get
    // the same relative treatment.
    let eig = sym.clone().symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    let scale = vals.amax().max(1.0);
    for v in vals.iter_mut() {
        if *v < 0.0 {
            if *v < -PSD_CLIP * scale {
                return Err(Error::NegativeEigenvalue { value: *v });
            }
            *v = 0.0;
        }
    }
    let cond_cov =
        &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();

    Ok(Regression {
        cond_cov,
        coeff,
        cond_z,
    })
}

/// Centred multivariate normal density at `point`.
pub fn gaussian_density(cov: &DMatrix<f64>, point: &DVector<f64>) -> Result<f64> {
    let n = cov.nrows();
    assert_eq!(point.len(), n);
    let chol = cov
        .clone()
        .cholesky()
        .ok_or(Error::SingularMatrix { cond: f64::INFINITY })?;
    // log det from the Cholesky diagonal; quadratic form via solve.
    let l = chol.l();
    let mut logdet = 0.0;
    for i in 0..n {
        logdet += l[(i, i)].ln();
    }
    let z = chol.solve(point);
    let quad = point.dot(&z);
    let log_norm = -(n as f64) * 0.5 * (2.0 * std::f64::consts::PI).ln() - logdet;
    Ok((log_norm - 0.5 * quad).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.3
    }

    #[test]
    fn regression_independent_blocks() {
        // Sigma_YZ = 0: conditional covariance equals Sigma_YY.
        let mut j = DMatrix::identity(5, 5);
        j[(0, 1)] = 0.4;
        j[(1, 0)] = 0.4;
        let r = regress(&j, 2).unwrap();
        assert!((r.cond_cov[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((r.cond_cov[(0, 1)] - 0.4).abs() < 1e-14);
        assert!(r.coeff.amax() < 1e-14);
    }

    #[test]
    fn regression_perfect_conditioning() {
        // Y = Z scalar, unit variance: conditional variance 0.
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let r = regress(&j, 1).unwrap();
        assert!(r.cond_cov[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn regression_rejects_singular_z() {
        let mut j = DMatrix::identity(3, 3);
        j[(1, 1)] = 0.0;
        j[(2, 2)] = 0.0;
        assert!(matches!(
            regress(&j, 1),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn regression_matches_sampling_oracle() {
        // 2+4 dimensional SPD instance vs empirical covariance of
        // conditioned samples.
        let mut rng = seeded_rng(911);
        let joint = random_spd(6, &mut rng);
        let reg = regress(&joint, 2).unwrap();

        // Sample (Y, Z) jointly, regress off the conditional mean, and
        // compare the residual covariance. Conditioning on Z is equivalent
        // to subtracting coeff * Z from Y.
        let chol = joint.clone().cholesky().unwrap();
        let l = chol.l();
        let n_samples = 200_000;
        let mut acc = [0.0f64; 4];
        for _ in 0..n_samples {
            let g = DVector::from_fn(6, |_, _| {
                let v: f64 = rng.sample(rand_distr::StandardNormal);
                v
            });
            let v = &l * g;
            let y = DVector::from_column_slice(&[v[0], v[1]]);
            let z = DVector::from_column_slice(&[v[2], v[3], v[4], v[5]]);
            let resid = &y - &reg.coeff * &z;
            acc[0] += resid[0] * resid[0];
            acc[1] += resid[0] * resid[1];
            acc[2] += resid[1] * resid[1];
            acc[3] += 1.0;
        }
        let c00 = acc[0] / acc[3];
        let c01 = acc[1] / acc[3];
        let c11 = acc[2] / acc[3];
        // 3 standard errors of a second-moment estimate ~ 3 sqrt(2/n) var.
        let tol = 3.0 * (2.0 / n_samples as f64).sqrt();
        assert!((c00 - reg.cond_cov[(0, 0)]).abs() < tol * reg.cond_cov[(0, 0)].max(0.1));
        assert!((c11 - reg.cond_cov[(1, 1)]).abs() < tol * reg.cond_cov[(1, 1)].max(0.1));
        assert!((c01 - reg.cond_cov[(0, 1)]).abs() < tol * 1.0);
    }

    #[test]
    fn conditioning_reduces_variance() {
        let mut rng = seeded_rng(17);
        for _ in 0..50 {
            let joint = random_spd(6, &mut rng);
            let reg = regress(&joint, 3).unwrap();
            for i in 0..3 {
                assert!(reg.cond_cov[(i, i)] <= joint[(i, i)] + 1e-12);
            }
        }
    }

    #[test]
    fn density_standard_normal_values() {
        let cov = DMatrix::identity(3, 3);
        let v = gaussian_density(&cov, &DVector::zeros(3)).unwrap();
        let expect = (2.0 * std::f64::consts::PI).powf(-1.5);
        assert!((v - expect).abs() < 1e-15, "{v} vs {expect}");

        let cov1 = DMatrix::identity(1, 1);
        for s in [-1.3, 0.0, 2.2] {
            let v = gaussian_density(&cov1, &DVector::from_column_slice(&[s])).unwrap();
            let expect = (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt();
            assert!((v - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn density_matches_eigen_factorization_oracle() {
        let mut rng = seeded_rng(5150);
        for _ in 0..20 {
            let cov = random_spd(4, &mut rng);
            let p = DVector::from_fn(4, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let v = gaussian_density(&cov, &p).unwrap();
            // Oracle: eigendecomposition route.
            let eig = cov.clone().symmetric_eigen();
            let mut quad = 0.0;
            let mut det = 1.0;
            let proj = eig.eigenvectors.transpose() * &p;
            for i in 0..4 {
                quad += proj[i] * proj[i] / eig.eigenvalues[i];
                det *= eig.eigenvalues[i];
            }
            let oracle =
                (-0.5 * quad).exp() / ((2.0 * std::f64::consts::PI).powi(4) * det).sqrt();
            assert!((v - oracle).abs() <= 1e-12 * oracle.max(1e-12));
        }
    }

    #[test]
    fn density_rejects_singular() {
        let cov = DMatrix::zeros(2, 2);
        assert!(gaussian_density(&cov, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn sigma_set_normalization_facts() {
        for model in [
            KernelModel::plane_wave().normalize().unwrap(),
            KernelModel::bargmann_fock().normalize().unwrap(),
        ] {
            let s = assemble_sigma(&model, [0.4, -0.2], [1.1, 0.5]).unwrap();
            // Diagonal entries of Sigma2 all equal 1.
            for i in 0..4 {
                assert!((s.sigma2[(i, i)] - 1.0).abs() < 1e-12);
            }
            // Sigma7 = Id3 for every x, and sigma2_sq = 1.
            assert!((s.sigma7 - Matrix3::identity()).amax() < 1e-12);
            assert!((s.sigma2_sq - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_dets_tend_to_one_at_large_separation() {
        // The Gaussian kernel is fully decorrelated at r = 50; the plane
        // wave decays only like r^(-1/2), so 1e-3 closeness needs r ~ 5000
        // (at r = 50 the dets still sit a few percent away from 1).
        let bf = KernelModel::bargmann_fock().normalize().unwrap();
        let s = assemble_sigma(&bf, [0.0, 0.0], [50.0, 0.0]).unwrap();
        assert!((s.det_sigma1 - 1.0).abs() < 1e-3, "det1 {}", s.det_sigma1);
        assert!((s.det_sigma2 - 1.0).abs() < 1e-3, "det2 {}", s.det_sigma2);

        let pw = KernelModel::plane_wave().normalize().unwrap();
        let s50 = assemble_sigma(&pw, [0.0, 0.0], [50.0, 0.0]).unwrap();
        assert!((s50.det_sigma1 - 1.0).abs() < 0.1);
        assert!((s50.det_sigma2 - 1.0).abs() < 0.1);
        let s5k = assemble_sigma(&pw, [0.0, 0.0], [5000.0, 0.0]).unwrap();
        assert!((s5k.det_sigma1 - 1.0).abs() < 1e-3, "det1 {}", s5k.det_sigma1);
        assert!((s5k.det_sigma2 - 1.0).abs() < 1e-3, "det2 {}", s5k.det_sigma2);
    }

    #[test]
    fn sigma_matches_lemma_structure_on_axis() {
        // On the axis the pair matrices have the A1/A2/A3 sparsity with
        // parameters read off kernel derivatives; this pins the assembly.
        let model = KernelModel::plane_wave().normalize().unwrap();
        let r = 0.7;
        let s = assemble_sigma(&model, [0.0, 0.0], [r, 0.0]).unwrap();
        let d = |a, b, p: [f64; 2]| model.derivative([a, b], p).unwrap();
        let p = lemma::LemmaMatrixParams {
            a1: -d(1, 0, [r, 0.0]),
            a2: 1.0 + d(2, 0, [r, 0.0]),
            a3: 1.0 + d(0, 2, [r, 0.0]),
            b1: d(3, 0, [r, 0.0]),
            b2: d(1, 2, [r, 0.0]),
        };
        let a1 = lemma::build_a1(&p);
        let a2 = lemma::build_a2(&p);
        let a3 = lemma::build_a3(&p);
        assert!((s.sigma4 - a1).amax() < 1e-12);
        assert!((s.sigma2 - a2).amax() < 1e-12);
        assert!((s.sigma5 - a3).amax() < 1e-12);
        let (det_a1, det_a2) = lemma::matrix_lemma_dets(&p);
        assert!((s.det_sigma4 - det_a1).abs() < 1e-12 * det_a1.abs().max(1e-6));
        assert!((s.det_sigma2 - det_a2).abs() < 1e-12 * det_a2.abs().max(1e-6));
    }

    #[test]
    fn assemble_rejects_coincident_points() {
        let model = KernelModel::plane_wave().normalize().unwrap();
        assert!(assemble_sigma(&model, [1.0, 1.0], [1.0, 1.0]).is_err());
    }
}
