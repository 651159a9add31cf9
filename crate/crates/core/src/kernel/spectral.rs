//! Spectral measures and their mixed moments.
//!
//! The spectral measure rho satisfies kappa(x) = int exp(i<x,s>) drho(s);
//! its mixed moments int s1^a s2^b drho give every derivative variance the
//! bound machinery needs. Total mass equals kappa(0).

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const MAX_MOMENT_ORDER: u32 = 6;

/// Supported spectral measure shapes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum SpectralMeasure {
    /// Uniform measure on the circle |s| = radius (random plane wave).
    CircleUniform { radius: f64, mass: f64 },
    /// Rotation-invariant Gaussian density with scale sigma (Bargmann-Fock).
    IsotropicGaussian { sigma: f64, mass: f64 },
    /// Finite atomic measure; used for synthetic degenerate cases.
    Atoms { atoms: Vec<([f64; 2], f64)> },
}

/// E[cos^a(t) sin^b(t)] over uniform t by the periodic trapezoid rule
/// (exact for trigonometric polynomials of degree below the node count).
fn angular_average(a: u32, b: u32) -> f64 {
    const N: usize = 64;
    let mut acc = 0.0;
    for k in 0..N {
        let t = 2.0 * std::f64::consts::PI * k as f64 / N as f64;
        acc += t.cos().powi(a as i32) * t.sin().powi(b as i32);
    }
    acc / N as f64
}

/// (2p-1)!! (2q-1)!! / (2^(p+q) (p+q)!) = E[cos^2p(t) sin^2q(t)] over uniform t.
fn angular_even_moment(p: u32, q: u32) -> f64 {
    fn double_fact_odd(m: u32) -> f64 {
        // (2m-1)!! with (−1)!! = 1
        (1..=m).map(|i| (2 * i - 1) as f64).product()
    }
    let num = double_fact_odd(p) * double_fact_odd(q);
    let mut den = 2f64.powi((p + q) as i32);
    for i in 1..=(p + q) {
        den *= i as f64;
    }
    num / den
}

impl SpectralMeasure {
    pub fn mass(&self) -> f64 {
        match self {
            SpectralMeasure::CircleUniform { mass, .. } => *mass,
            SpectralMeasure::IsotropicGaussian { mass, .. } => *mass,
            SpectralMeasure::Atoms { atoms } => atoms.iter().map(|(_, w)| w).sum(),
        }
    }

    /// int s1^a s2^b drho(s). Odd moments vanish by symmetry (returned as
    /// exactly 0); the circle case is closed-form, the Gaussian case uses
    /// adaptive radial-angular quadrature, atoms are summed directly.
    pub fn moment(&self, a: u32, b: u32) -> Result<f64> {
        if a + b > MAX_MOMENT_ORDER {
            return Err(Error::UnsupportedOrder {
                order: (a + b) as usize,
            });
        }
        match self {
            SpectralMeasure::Atoms { atoms } => Ok(atoms
                .iter()
                .map(|(s, w)| w * s[0].powi(a as i32) * s[1].powi(b as i32))
                .sum()),
            _ if a % 2 == 1 || b % 2 == 1 => Ok(0.0),
            SpectralMeasure::CircleUniform { radius, mass } => {
                Ok(mass * radius.powi((a + b) as i32) * angular_even_moment(a / 2, b / 2))
            }
            SpectralMeasure::IsotropicGaussian { sigma, mass } => {
                // radial density of |s|: (r/sigma^2) exp(-r^2 / 2 sigma^2).
                // Adaptive Simpson on the radial factor; the angular factor
                // uses the periodic trapezoid rule, which is exact for
                // trigonometric monomials of degree < N.
                let cut = 12.0 * sigma * (1.0 + 0.2 * (a + b) as f64);
                let radial = adaptive_simpson(
                    |r: f64| {
                        r.powi((a + b) as i32) * r / (sigma * sigma)
                            * (-0.5 * r * r / (sigma * sigma)).exp()
                    },
                    0.0,
                    cut,
                    1e-13 * sigma.powi((a + b) as i32 + 1).max(1e-12),
                );
                let angular = angular_average(a, b);
                Ok(mass * radial * angular)
            }
        }
    }

    /// Whether `sample_wavevector` is available.
    pub fn sampleable(&self) -> bool {
        true
    }

    /// Draw one wavevector from the probability-normalized measure rho/mass.
    pub fn sample_wavevector<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        match self {
            SpectralMeasure::CircleUniform { radius, .. } => {
                let t: f64 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
                [radius * t.cos(), radius * t.sin()]
            }
            SpectralMeasure::IsotropicGaussian { sigma, .. } => {
                let n1: f64 = rng.sample(rand_distr::StandardNormal);
                let n2: f64 = rng.sample(rand_distr::StandardNormal);
                [sigma * n1, sigma * n2]
            }
            SpectralMeasure::Atoms { atoms } => {
                let total: f64 = atoms.iter().map(|(_, w)| w).sum();
                let mut u: f64 = rng.random::<f64>() * total;
                for (s, w) in atoms {
                    if u < *w {
                        return *s;
                    }
                    u -= w;
                }
                atoms.last().expect("non-empty atom list").0
            }
        }
    }

    /// Synthetic measure supported on the two lines |s1| = 1 (the equality
    /// case of the support condition): half mass at (1,0), half at (-1,0).
    pub fn two_lines_example() -> SpectralMeasure {
        SpectralMeasure::Atoms {
            atoms: vec![([1.0, 0.0], 0.5), ([-1.0, 0.0], 0.5)],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_moments_closed_form() {
        // Normalized plane wave: circle of radius sqrt(2), unit mass.
        let m = SpectralMeasure::CircleUniform {
            radius: 2f64.sqrt(),
            mass: 1.0,
        };
        assert_eq!(m.moment(1, 0).unwrap(), 0.0);
        assert!((m.moment(2, 0).unwrap() - 1.0).abs() < 1e-14);
        assert!((m.moment(4, 0).unwrap() - 1.5).abs() < 1e-14);
        assert!((m.moment(2, 2).unwrap() - 0.5).abs() < 1e-14);
        assert!((m.moment(6, 0).unwrap() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn circle_moments_match_angular_quadrature() {
        // Oracle: dense trapezoid average over a fine asymmetric grid.
        let m = SpectralMeasure::CircleUniform {
            radius: 2f64.sqrt(),
            mass: 1.0,
        };
        for (a, b) in [(2u32, 0u32), (4, 0), (2, 2), (4, 2), (6, 0)] {
            let n = 100_001usize;
            let mut acc = 0.0;
            for k in 0..n {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                acc += t.cos().powi(a as i32) * t.sin().powi(b as i32);
            }
            let quad = acc / n as f64 * 2f64.sqrt().powi((a + b) as i32);
            assert!(
                (m.moment(a, b).unwrap() - quad).abs() < 1e-11,
                "({a},{b})"
            );
        }
    }

    #[test]
    fn gaussian_moments_match_normal_moments() {
        // Standard normal: E s1^2 = 1, E s1^4 = 3, E s1^2 s2^2 = 1, E s1^6 = 15.
        let m = SpectralMeasure::IsotropicGaussian {
            sigma: 1.0,
            mass: 1.0,
        };
        assert!((m.moment(0, 0).unwrap() - 1.0).abs() < 1e-10);
        assert!((m.moment(2, 0).unwrap() - 1.0).abs() < 1e-10);
        assert!((m.moment(4, 0).unwrap() - 3.0).abs() < 1e-9);
        assert!((m.moment(2, 2).unwrap() - 1.0).abs() < 1e-9);
        assert!((m.moment(6, 0).unwrap() - 15.0).abs() < 1e-8);
        assert_eq!(m.moment(3, 2).unwrap(), 0.0);
    }

    #[test]
    fn moment_order_capped() {
        let m = SpectralMeasure::CircleUniform {
            radius: 1.0,
            mass: 1.0,
        };
        assert!(m.moment(8, 0).is_err());
    }

    #[test]
    fn two_lines_moments() {
        let m = SpectralMeasure::two_lines_example();
        assert!((m.moment(2, 0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(m.moment(2, 2).unwrap(), 0.0);
        assert!((m.moment(4, 0).unwrap() - 1.0).abs() < 1e-15);
    }
}
