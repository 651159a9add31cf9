//! Kac-Rice intensity functions by conditional Monte Carlo.
//!
//! Each intensity is a Gaussian density factor times a conditional
//! expectation of |det| of one or two Hessians given field/gradient values.
//! The conditional law comes from Gaussian regression; sampling uses a
//! rank-revealing square root so the jointly-degenerate plane-wave case
//! (where f and the Hessian trace are linearly dependent) works unchanged.

pub mod asymptotics;
pub mod bound;

use crate::error::{Error, Result};
use crate::gauss::{self, covariance_of, gaussian_density, hessian_obs, regress, Observable, Site};
use crate::kernel::KernelModel;
use crate::quadrature::adaptive_simpson;
use crate::rng::derive_seed;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Monte Carlo configuration. Reported values should use >= 1e4 samples;
/// the standard error is always carried alongside the estimate.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    pub batch: usize,
}

impl McConfig {
    pub fn new(samples: usize, seed: u64) -> McConfig {
        McConfig {
            samples,
            seed,
            batch: 8192,
        }
    }
}

/// An intensity estimate with its inputs echoed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntensityValue {
    pub which: u8,
    pub kernel: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Conditional sampler for W | Z = z from the joint covariance (W first).
pub(crate) struct CondSampler {
    mean: DVector<f64>,
    sqrt: DMatrix<f64>,
    rank: usize,
    nw: usize,
}

impl CondSampler {
    /// Zero-mean sampler plus the regression (for callers that vary the
    /// conditioning value; the covariance part is z-independent).
    pub(crate) fn with_conditioning(
        joint: &DMatrix<f64>,
        nw: usize,
    ) -> Result<(gauss::Regression, CondSampler)> {
        let reg = regress(joint, nw)?;
        // Rank-revealing square root of the conditional covariance.
        let eig = reg.cond_cov.clone().symmetric_eigen();
        let lmax = eig.eigenvalues.amax().max(1e-300);
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for i in 0..eig.eigenvalues.len() {
            let l = eig.eigenvalues[i];
            if l > 1e-12 * lmax {
                cols.push(eig.eigenvectors.column(i).into_owned() * l.sqrt());
            }
        }
        let rank = cols.len();
        let mut sqrt = DMatrix::zeros(nw, rank);
        for (j, c) in cols.iter().enumerate() {
            sqrt.set_column(j, c);
        }
        let sampler = CondSampler {
            mean: DVector::zeros(nw),
            sqrt,
            rank,
            nw,
        };
        Ok((reg, sampler))
    }

    pub(crate) fn new(joint: &DMatrix<f64>, nw: usize, z: &[f64]) -> Result<CondSampler> {
        let (reg, mut sampler) = CondSampler::with_conditioning(joint, nw)?;
        sampler.mean = &reg.coeff * DVector::from_column_slice(z);
        Ok(sampler)
    }

    /// Antithetic pair (mean + B xi, mean - B xi).
    #[inline]
    pub(crate) fn draw_pair<R: Rng>(&self, rng: &mut R, wp: &mut [f64], wm: &mut [f64]) {
        debug_assert_eq!(wp.len(), self.nw);
        for i in 0..self.nw {
            wp[i] = self.mean[i];
            wm[i] = self.mean[i];
        }
        for j in 0..self.rank {
            let xi: f64 = rng.sample(rand_distr::StandardNormal);
            for i in 0..self.nw {
                let v = self.sqrt[(i, j)] * xi;
                wp[i] += v;
                wm[i] -= v;
            }
        }
    }
}

/// Antithetic Monte Carlo mean of g(W) under the sampler, with batches of
/// derived seeds; the reduction is sequential in batch order, so the result
/// is bit-identical for any thread count.
pub(crate) fn mc_expectation<G>(sampler: &CondSampler, g: G, mc: &McConfig) -> (f64, f64)
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    let pairs = (mc.samples / 2).max(1);
    let batch = mc.batch.max(64);
    let n_batches = pairs.div_ceil(batch);
    let stats: Vec<(f64, f64, usize)> = (0..n_batches)
        .into_par_iter()
        .map(|bi| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(mc.seed, bi as u64));
            let n = batch.min(pairs - bi * batch);
            let mut wp = vec![0.0; sampler.nw];
            let mut wm = vec![0.0; sampler.nw];
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..n {
                sampler.draw_pair(&mut rng, &mut wp, &mut wm);
                let v = 0.5 * (g(&wp) + g(&wm));
                sum += v;
                sumsq += v * v;
            }
            (sum, sumsq, n)
        })
        .collect();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut n = 0usize;
    for (s, s2, c) in stats {
        sum += s;
        sumsq += s2;
        n += c;
    }
    let mean = sum / n as f64;
    let var = ((sumsq - n as f64 * mean * mean) / (n as f64 - 1.0).max(1.0)).max(0.0);
    (mean, (var / n as f64).sqrt())
}

fn grad_obs(site: Site) -> [Observable; 2] {
    [(site, [1, 0]), (site, [0, 1])]
}

fn det3(w: &[f64]) -> f64 {
    w[0] * w[2] - w[1] * w[1]
}

fn abs_det_single(w: &[f64]) -> f64 {
    det3(w).abs()
}

fn abs_det_pair(w: &[f64]) -> f64 {
    (det3(&w[0..3]) * det3(&w[3..6])).abs()
}

fn check_pair(model: &KernelModel, r: f64) -> Result<gauss::SigmaSet> {
    if !(r > 0.0) {
        return Err(Error::InvalidConfig(format!("separation r = {r} must be positive")));
    }
    let s = gauss::assemble_sigma(model, [0.0, 0.0], [r, 0.0])?;
    if s.degenerate_pair {
        return Err(Error::DegeneratePair {
            r,
            cond: s.cond_sigma2,
        });
    }
    Ok(s)
}

/// I3(s): density of (f, grad f) at (s, 0) times E[|det hess| | f = s,
/// grad f = 0]. Under normalization the density factor is exactly
/// phi(s) / (2 pi).
pub fn intensity_i3(model: &KernelModel, s: f64, mc: &McConfig) -> Result<IntensityValue> {
    let mut obs: Vec<Observable> = hessian_obs(Site::X).to_vec();
    obs.push((Site::X, [0, 0]));
    obs.extend_from_slice(&grad_obs(Site::X));
    let joint = covariance_of(model, [0.0, 0.0], [1.0, 0.0], &obs)?;
    let sampler = CondSampler::new(&joint, 3, &[s, 0.0, 0.0])?;
    let (mean, se) = mc_expectation(&sampler, abs_det_single, mc);
    let gamma = (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).powf(1.5);
    Ok(IntensityValue {
        which: 3,
        kernel: model.id().to_string(),
        r: None,
        s: Some(s),
        t: None,
        estimate: gamma * mean,
        std_error: gamma * se,
        samples: mc.samples,
        seed: mc.seed,
    })
}

/// I1(r; s, t): both Hessians given both heights and both gradients.
pub fn intensity_i1(
    model: &KernelModel,
    r: f64,
    s: f64,
    t: f64,
    mc: &McConfig,
) -> Result<IntensityValue> {
    let sigma = check_pair(model, r)?;
    let x = [0.0, 0.0];
    let y = [r, 0.0];
    let mut obs: Vec<Observable> = hessian_obs(Site::X).to_vec();
    obs.extend_from_slice(&hessian_obs(Site::Y));
    obs.push((Site::X, [0, 0]));
    obs.push((Site::Y, [0, 0]));
    obs.extend_from_slice(&grad_obs(Site::X));
    obs.extend_from_slice(&grad_obs(Site::Y));
    let joint = covariance_of(model, x, y, &obs)?;
    let z = [s, t, 0.0, 0.0, 0.0, 0.0];
    let sampler = CondSampler::new(&joint, 6, &z)?;
    let (mean, se) = mc_expectation(&sampler, abs_det_pair, mc);
    let sigma3 = DMatrix::from_fn(6, 6, |i, j| sigma.sigma3[(i, j)]);
    let gamma = gaussian_density(&sigma3, &DVector::from_column_slice(&z))?;
    Ok(IntensityValue {
        which: 1,
        kernel: model.id().to_string(),
        r: Some(r),
        s: Some(s),
        t: Some(t),
        estimate: gamma * mean,
        std_error: gamma * se,
        samples: mc.samples,
        seed: mc.seed,
    })
}

/// I2(r; s): both Hessians given f(x) = s and both gradients zero.
pub fn intensity_i2(model: &KernelModel, r: f64, s: f64, mc: &McConfig) -> Result<IntensityValue> {
    let sigma = check_pair(model, r)?;
    let x = [0.0, 0.0];
    let y = [r, 0.0];
    let mut obs: Vec<Observable> = hessian_obs(Site::X).to_vec();
    obs.extend_from_slice(&hessian_obs(Site::Y));
    obs.push((Site::X, [0, 0]));
    obs.extend_from_slice(&grad_obs(Site::X));
    obs.extend_from_slice(&grad_obs(Site::Y));
    let joint = covariance_of(model, x, y, &obs)?;
    let z = [s, 0.0, 0.0, 0.0, 0.0];
    let sampler = CondSampler::new(&joint, 6, &z)?;
    let (mean, se) = mc_expectation(&sampler, abs_det_pair, mc);
    let sigma4 = DMatrix::from_fn(5, 5, |i, j| sigma.sigma4[(i, j)]);
    let gamma = gaussian_density(&sigma4, &DVector::from_column_slice(&z))?;
    Ok(IntensityValue {
        which: 2,
        kernel: model.id().to_string(),
        r: Some(r),
        s: Some(s),
        t: None,
        estimate: gamma * mean,
        std_error: gamma * se,
        samples: mc.samples,
        seed: mc.seed,
    })
}

/// I4(r): both Hessians given both gradients zero (no height window).
pub fn intensity_i4(model: &KernelModel, r: f64, mc: &McConfig) -> Result<IntensityValue> {
    let sigma = check_pair(model, r)?;
    let x = [0.0, 0.0];
    let y = [r, 0.0];
    let mut obs: Vec<Observable> = hessian_obs(Site::X).to_vec();
    obs.extend_from_slice(&hessian_obs(Site::Y));
    obs.extend_from_slice(&grad_obs(Site::X));
    obs.extend_from_slice(&grad_obs(Site::Y));
    let joint = covariance_of(model, x, y, &obs)?;
    let z = [0.0; 4];
    let sampler = CondSampler::new(&joint, 6, &z)?;
    let (mean, se) = mc_expectation(&sampler, abs_det_pair, mc);
    let sigma2 = DMatrix::from_fn(4, 4, |i, j| sigma.sigma2[(i, j)]);
    let gamma = gaussian_density(&sigma2, &DVector::zeros(4))?;
    Ok(IntensityValue {
        which: 4,
        kernel: model.id().to_string(),
        r: Some(r),
        s: None,
        t: None,
        estimate: gamma * mean,
        std_error: gamma * se,
        samples: mc.samples,
        seed: mc.seed,
    })
}

/// I5: single Hessian given a zero gradient; the density factor is
/// 1/(2 pi) under normalization.
pub fn intensity_i5(model: &KernelModel, mc: &McConfig) -> Result<IntensityValue> {
    let mut obs: Vec<Observable> = hessian_obs(Site::X).to_vec();
    obs.extend_from_slice(&grad_obs(Site::X));
    let joint = covariance_of(model, [0.0, 0.0], [1.0, 0.0], &obs)?;
    let sampler = CondSampler::new(&joint, 3, &[0.0, 0.0])?;
    let (mean, se) = mc_expectation(&sampler, abs_det_single, mc);
    let gamma = 1.0 / (2.0 * std::f64::consts::PI);
    Ok(IntensityValue {
        which: 5,
        kernel: model.id().to_string(),
        r: None,
        s: None,
        t: None,
        estimate: gamma * mean,
        std_error: gamma * se,
        samples: mc.samples,
        seed: mc.seed,
    })
}

/// Height range beyond which the standard normal mass is negligible.
const HEIGHT_CLAMP: f64 = 10.0;

/// Kac-Rice mean count pi R^2 int_a^b I3(s) ds.
///
/// The height integral runs adaptive Simpson on an integrand whose Monte
/// Carlo noise is frozen per batch (common random numbers across s), so the
/// quadrature refines a smooth function; batch spread gives the standard
/// error.
pub fn mean_count(model: &KernelModel, radius: f64, a: f64, b: f64, mc: &McConfig) -> Result<(f64, f64)> {
    if a > b {
        return Err(Error::InvalidConfig(format!("window [{a}, {b}] is empty")));
    }
    let lo = a.max(-HEIGHT_CLAMP);
    let hi = b.min(HEIGHT_CLAMP);
    let area = std::f64::consts::PI * radius * radius;
    if lo >= hi {
        return Ok((0.0, 0.0));
    }

    let mut obs: Vec<Observable> = hessian_obs(Site::X).to_vec();
    obs.push((Site::X, [0, 0]));
    obs.extend_from_slice(&grad_obs(Site::X));
    let joint = covariance_of(model, [0.0, 0.0], [1.0, 0.0], &obs)?;
    let (reg, base) = CondSampler::with_conditioning(&joint, 3)?;

    // Mean of the conditional law is linear in s: column 0 of the
    // regression coefficients (the gradient entries of z are zero).
    let vcol = reg.coeff.column(0).into_owned();

    let n_batches = 16usize;
    let per_batch = (mc.samples / (2 * n_batches)).max(8);
    let norm = 1.0 / (2.0 * std::f64::consts::PI).powf(1.5);

    let integrals: Vec<f64> = (0..n_batches)
        .into_par_iter()
        .map(|bi| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(mc.seed, bi as u64));
            // Frozen normal panel for this batch.
            let xi: Vec<Vec<f64>> = (0..per_batch)
                .map(|_| {
                    (0..base.rank)
                        .map(|_| rng.sample(rand_distr::StandardNormal))
                        .collect()
                })
                .collect();
            let g = |s: f64| -> f64 {
                let mut acc = 0.0;
                let mut w = [0.0f64; 3];
                for x in &xi {
                    for i in 0..3 {
                        w[i] = vcol[i] * s;
                        for (j, xij) in x.iter().enumerate() {
                            w[i] += base.sqrt[(i, j)] * xij;
                        }
                    }
                    let dplus = (w[0] * w[2] - w[1] * w[1]).abs();
                    for i in 0..3 {
                        w[i] = 2.0 * vcol[i] * s - w[i];
                    }
                    let dminus = (w[0] * w[2] - w[1] * w[1]).abs();
                    acc += 0.5 * (dplus + dminus);
                }
                (-0.5 * s * s).exp() * norm * acc / per_batch as f64
            };
            adaptive_simpson(g, lo, hi, 1e-9 * (hi - lo).max(1.0))
        })
        .collect();

    let mean = integrals.iter().sum::<f64>() / n_batches as f64;
    let var = integrals
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / (n_batches as f64 - 1.0);
    Ok((area * mean, area * (var / n_batches as f64).sqrt()))
}
