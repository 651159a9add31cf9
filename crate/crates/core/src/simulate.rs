//! Random-wave synthesis of the field.
//!
//! A realization is a finite superposition
//!   f(x) = sqrt(2 kappa(0) / M) sum_j cos(<s_j, x> + phi_j)
//! with wavevectors s_j drawn from the (probability-normalized) spectral
//! measure and phases uniform on [0, 2pi). Derivatives are term-wise and
//! exact for the ensemble, which is what the Newton detector needs.

use crate::error::{Error, Result};
use crate::kernel::{KernelModel, SpectralMeasure};
use crate::rng::seeded_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const MIN_WAVES: usize = 16;

/// A sampled field realization.
#[derive(Clone, Debug)]
pub struct WaveEnsemble {
    sx: Vec<f64>,
    sy: Vec<f64>,
    phase: Vec<f64>,
    amplitude: f64,
    pub seed: u64,
    pub kernel_id: String,
}

/// Value and derivatives to order 2 at a point.
#[derive(Clone, Copy, Debug, Default)]
pub struct FieldJet {
    pub f: f64,
    pub gx: f64,
    pub gy: f64,
    pub hxx: f64,
    pub hxy: f64,
    pub hyy: f64,
}

/// Provenance record; reconstruction from (kernel, m, seed) is deterministic.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub kernel: String,
    pub m: usize,
    pub seed: u64,
}

/// Sample a realization of the field with M waves.
///
/// Plane-wave wavevectors are stratified over the circle (equal-angle
/// jitter): each marginal stays uniform, ensemble noise drops.
pub fn sample_field(model: &KernelModel, m: usize, seed: u64) -> Result<WaveEnsemble> {
    if m < MIN_WAVES {
        return Err(Error::InvalidConfig(format!(
            "need at least {MIN_WAVES} waves, got {m}"
        )));
    }
    let measure = model
        .spectral_measure()
        .ok_or(Error::NonSampleableMeasure)?;
    let variance = model.variance();
    let mut rng = seeded_rng(seed);
    let mut sx = Vec::with_capacity(m);
    let mut sy = Vec::with_capacity(m);
    match &measure {
        SpectralMeasure::CircleUniform { radius, .. } => {
            for j in 0..m {
                let t = 2.0 * std::f64::consts::PI * (j as f64 + rng.random::<f64>()) / m as f64;
                sx.push(radius * t.cos());
                sy.push(radius * t.sin());
            }
        }
        _ => {
            for _ in 0..m {
                let s = measure.sample_wavevector(&mut rng);
                sx.push(s[0]);
                sy.push(s[1]);
            }
        }
    }
    let phase: Vec<f64> = (0..m)
        .map(|_| 2.0 * std::f64::consts::PI * rng.random::<f64>())
        .collect();
    Ok(WaveEnsemble {
        sx,
        sy,
        phase,
        amplitude: (2.0 * variance / m as f64).sqrt(),
        seed,
        kernel_id: model.id().to_string(),
    })
}

impl WaveEnsemble {
    /// Deterministic ensemble from explicit waves (test fields such as
    /// cos(x1) + cos(x2) are exactly representable).
    pub fn from_parts(
        wavevectors: Vec<[f64; 2]>,
        phases: Vec<f64>,
        amplitude: f64,
        kernel_id: &str,
    ) -> WaveEnsemble {
        assert_eq!(wavevectors.len(), phases.len());
        WaveEnsemble {
            sx: wavevectors.iter().map(|s| s[0]).collect(),
            sy: wavevectors.iter().map(|s| s[1]).collect(),
            phase: phases,
            amplitude,
            seed: 0,
            kernel_id: kernel_id.to_string(),
        }
    }

    pub fn waves(&self) -> usize {
        self.sx.len()
    }

    pub fn record(&self) -> EnsembleRecord {
        EnsembleRecord {
            kernel: self.kernel_id.clone(),
            m: self.waves(),
            seed: self.seed,
        }
    }

    /// Value and all derivatives to order 2 in one pass.
    pub fn jet(&self, x: [f64; 2]) -> FieldJet {
        let mut j = FieldJet::default();
        for i in 0..self.sx.len() {
            let sx = self.sx[i];
            let sy = self.sy[i];
            let q = sx * x[0] + sy * x[1] + self.phase[i];
            let (s, c) = q.sin_cos();
            j.f += c;
            j.gx -= sx * s;
            j.gy -= sy * s;
            j.hxx -= sx * sx * c;
            j.hxy -= sx * sy * c;
            j.hyy -= sy * sy * c;
        }
        let a = self.amplitude;
        FieldJet {
            f: a * j.f,
            gx: a * j.gx,
            gy: a * j.gy,
            hxx: a * j.hxx,
            hxy: a * j.hxy,
            hyy: a * j.hyy,
        }
    }

    /// Term-wise derivative of the cosine sum, |alpha| <= 2.
    pub fn eval(&self, x: [f64; 2], alpha: [usize; 2]) -> Result<f64> {
        let j = self.jet(x);
        match alpha {
            [0, 0] => Ok(j.f),
            [1, 0] => Ok(j.gx),
            [0, 1] => Ok(j.gy),
            [2, 0] => Ok(j.hxx),
            [1, 1] => Ok(j.hxy),
            [0, 2] => Ok(j.hyy),
            _ => Err(Error::UnsupportedOrder {
                order: alpha[0] + alpha[1],
            }),
        }
    }
}
