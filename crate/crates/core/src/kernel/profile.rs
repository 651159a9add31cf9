//! Radial profiles and their derivatives.
//!
//! A radial kernel kappa(x) = A g(|x|) with g even and C^6 is represented
//! through h(u) = g(sqrt(u)), so that kappa(x) = A h(c |x|^2). All mixed
//! partials of kappa reduce to h^(k)(u) for k <= 6, and h is analytic at
//! u = 0 for the supported profiles, which removes the removable r = 0
//! singularity of the naive radial chain rule.

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 6;

/// Derivative evaluators of h(u) = g(sqrt(u)) for u >= 0.
#[derive(Clone, Debug)]
pub enum Profile {
    /// g(r) = exp(-r^2/2), h(u) = exp(-u/2).
    Gaussian,
    /// g(r) = J0(r), h(u) = J0(sqrt(u)).
    BesselJ0,
    /// Even series g(r) = sum c_j r^(2j), h(u) = sum c_j u^j.
    EvenSeries(Vec<f64>),
}

impl Profile {
    /// k-th derivative of h at u >= 0, k <= 6.
    pub fn h_deriv(&self, k: usize, u: f64) -> Result<f64> {
        if k > MAX_ORDER {
            return Err(Error::UnsupportedOrder { order: k });
        }
        Ok(match self {
            Profile::Gaussian => {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * 0.5f64.powi(k as i32) * (-0.5 * u).exp()
            }
            Profile::BesselJ0 => bessel_h_deriv(k, u),
            Profile::EvenSeries(c) => {
                // d^k/du^k sum c_j u^j = sum_{j>=k} c_j j!/(j-k)! u^(j-k), by Horner.
                let mut acc = 0.0;
                for j in (k..c.len()).rev() {
                    let mut fall = 1.0;
                    for m in 0..k {
                        fall *= (j - m) as f64;
                    }
                    acc = acc * u + c[j] * fall;
                }
                acc
            }
        })
    }

    pub fn h0(&self) -> f64 {
        self.h_deriv(0, 0.0).expect("order 0 always supported")
    }
}

/// d^k/du^k J0(sqrt(u)).
///
/// For small u the power series in u is used directly; beyond that the
/// identity h^(k)(u) = (-1)^k J_k(r) / (2r)^k with r = sqrt(u) applies,
/// with J_k from Miller's backward recurrence (uniformly accurate to
/// ~1e-13, which the finite-difference consistency checks rely on).
fn bessel_h_deriv(k: usize, u: f64) -> f64 {
    const SERIES_LIMIT: f64 = 64.0; // r = 8
    if u < SERIES_LIMIT {
        bessel_h_series(k, u)
    } else {
        bessel_h_from_jn(k, u)
    }
}

/// h^(k)(u) = sum_{m>=0} (-1)^(m+k) u^m / (4^(m+k) m! (m+k)!)
fn bessel_h_series(k: usize, u: f64) -> f64 {
    let mut term = if k % 2 == 0 { 1.0 } else { -1.0 };
    for i in 1..=k {
        term /= 4.0 * i as f64;
    }
    let mut sum = term;
    let mut m = 0usize;
    loop {
        m += 1;
        term *= -u / (4.0 * m as f64 * (m + k) as f64);
        sum += term;
        if term.abs() <= 1e-18 * sum.abs().max(1e-30) || m > 80 {
            break;
        }
    }
    sum
}

/// h^(k)(u) = (-1)^k J_k(sqrt(u)) / (2 sqrt(u))^k.
fn bessel_h_from_jn(k: usize, u: f64) -> f64 {
    let r = u.sqrt();
    let j = bessel_jn_upto(MAX_ORDER, r);
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    sign * j[k] / (2.0 * r).powi(k as i32)
}

/// J_0..J_n(x) for x >= 8 by Miller's backward recurrence, normalized with
/// J_0 + 2 J_2 + 2 J_4 + ... = 1.
pub(crate) fn bessel_jn_upto(n: usize, x: f64) -> Vec<f64> {
    debug_assert!(x > 0.0);
    let start = {
        let m = x + 14.0 + 4.0 * x.sqrt();
        (m as usize + 1) & !1usize // even start order
    };
    let mut jp = 0.0f64; // J_{k+1}
    let mut jc = 1e-300f64; // J_k
    let mut norm = 0.0f64;
    let mut out = vec![0.0; n + 1];
    let mut k = start;
    loop {
        let jm = (2.0 * (k + 1) as f64 / x) * jc - jp; // J_k from J_{k+1}, J_{k+2}
        jp = jc;
        jc = jm;
        if k % 2 == 0 {
            norm += if k == 0 { jc } else { 2.0 * jc };
        }
        if k <= n {
            out[k] = jc;
        }
        if k == 0 {
            break;
        }
        k -= 1;
        // Rescale to avoid overflow for large start orders.
        if jc.abs() > 1e250 {
            jp /= 1e250;
            jc /= 1e250;
            norm /= 1e250;
            for v in out.iter_mut() {
                *v /= 1e250;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}
