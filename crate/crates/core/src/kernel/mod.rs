//! Stationary isotropic covariance kernels with derivatives to order 6,
//! their spectral measures, normalization, and the smoothness /
//! non-degeneracy condition checks.

pub mod profile;
pub mod spectral;

use crate::error::{Error, Result};
use profile::{Profile, MAX_ORDER};
use serde::{Deserialize, Serialize};
pub use spectral::SpectralMeasure;

/// Built-in kernel families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    PlaneWave,
    BargmannFock,
    UserRadial,
}

/// JSON-loadable kernel description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    #[serde(default = "one")]
    pub length_scale: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Even Taylor coefficients c_j of g(r) = sum c_j r^(2j); required for
    /// `user-radial`, ignored otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_series: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

/// A stationary isotropic kernel kappa(x) = amplitude * h(c |x|^2), where
/// h(u) = g(sqrt(u)) and c = 1/length_scale^2.
#[derive(Clone, Debug)]
pub struct KernelModel {
    kind: KernelKind,
    profile: Profile,
    /// Inverse squared length scale.
    c: f64,
    amplitude: f64,
    /// Cumulative coordinate rescale applied by `normalize` (1 before).
    length_rescale: f64,
    normalized: bool,
}

impl KernelModel {
    /// Random plane wave, kappa(x) = J0(|x|) before normalization.
    pub fn plane_wave() -> KernelModel {
        KernelModel {
            kind: KernelKind::PlaneWave,
            profile: Profile::BesselJ0,
            c: 1.0,
            amplitude: 1.0,
            length_rescale: 1.0,
            normalized: false,
        }
    }

    /// Bargmann-Fock field, kappa(x) = exp(-|x|^2/2).
    pub fn bargmann_fock() -> KernelModel {
        KernelModel {
            kind: KernelKind::BargmannFock,
            profile: Profile::Gaussian,
            c: 1.0,
            amplitude: 1.0,
            length_rescale: 1.0,
            normalized: false,
        }
    }

    /// Kernel from an even radial series g(r) = sum c_j r^(2j).
    pub fn user_radial(series: Vec<f64>, length_scale: f64, amplitude: f64) -> Result<KernelModel> {
        if series.is_empty() {
            return Err(Error::InvalidConfig("empty profile series".into()));
        }
        if length_scale <= 0.0 || amplitude <= 0.0 {
            return Err(Error::InvalidConfig(
                "length_scale and amplitude must be positive".into(),
            ));
        }
        Ok(KernelModel {
            kind: KernelKind::UserRadial,
            profile: Profile::EvenSeries(series),
            c: 1.0 / (length_scale * length_scale),
            amplitude,
            length_rescale: 1.0,
            normalized: false,
        })
    }

    pub fn from_config(cfg: &KernelConfig) -> Result<KernelModel> {
        if cfg.length_scale <= 0.0 || cfg.amplitude <= 0.0 {
            return Err(Error::InvalidConfig(
                "length_scale and amplitude must be positive".into(),
            ));
        }
        let mut m = match cfg.kind {
            KernelKind::PlaneWave => KernelModel::plane_wave(),
            KernelKind::BargmannFock => KernelModel::bargmann_fock(),
            KernelKind::UserRadial => {
                let series = cfg.profile_series.clone().ok_or_else(|| {
                    Error::InvalidConfig("user-radial requires profile_series".into())
                })?;
                KernelModel::user_radial(series, 1.0, 1.0)?
            }
        };
        m.c = 1.0 / (cfg.length_scale * cfg.length_scale);
        m.amplitude = cfg.amplitude;
        Ok(m)
    }

    /// Parse a kernel from its CLI name.
    pub fn by_name(name: &str) -> Result<KernelModel> {
        match name {
            "plane-wave" => Ok(KernelModel::plane_wave()),
            "bargmann-fock" => Ok(KernelModel::bargmann_fock()),
            other => Err(Error::InvalidConfig(format!(
                "unknown kernel '{other}' (expected plane-wave or bargmann-fock)"
            ))),
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn id(&self) -> &'static str {
        match self.kind {
            KernelKind::PlaneWave => "plane-wave",
            KernelKind::BargmannFock => "bargmann-fock",
            KernelKind::UserRadial => "user-radial",
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn length_rescale(&self) -> f64 {
        self.length_rescale
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// kappa(0).
    pub fn variance(&self) -> f64 {
        self.amplitude * self.profile.h0()
    }

    /// kappa(x).
    pub fn value(&self, x: [f64; 2]) -> f64 {
        let u = self.c * (x[0] * x[0] + x[1] * x[1]);
        self.amplitude * self.profile.h_deriv(0, u).expect("order 0")
    }

    /// Mixed partial derivative of kappa at x, |alpha| <= 6.
    ///
    /// Uses the exact chain rule for H(x1^2 + x2^2):
    /// d^a/dx^a H(x^2+C) = sum_i a!/(i!(a-2i)!) (2x)^(a-2i) H^(a-i),
    /// applied per coordinate, so r = 0 needs no special casing.
    pub fn derivative(&self, alpha: [usize; 2], x: [f64; 2]) -> Result<f64> {
        let (a, b) = (alpha[0], alpha[1]);
        if a + b > MAX_ORDER {
            return Err(Error::UnsupportedOrder { order: a + b });
        }
        let u = x[0] * x[0] + x[1] * x[1];
        // H(u) = amplitude * h(c u), so H^(k)(u) = amplitude c^k h^(k)(c u).
        let mut hder = [0.0; MAX_ORDER + 1];
        for (k, slot) in hder.iter_mut().enumerate().take(a + b + 1) {
            *slot = self.amplitude * self.c.powi(k as i32) * self.profile.h_deriv(k, self.c * u)?;
        }
        let mut sum = 0.0;
        for i in 0..=a / 2 {
            let ca = fact(a) / (fact(i) * fact(a - 2 * i));
            for j in 0..=b / 2 {
                let cb = fact(b) / (fact(j) * fact(b - 2 * j));
                let pow = (a + b) - 2 * (i + j);
                sum += ca
                    * cb
                    * 2f64.powi(pow as i32)
                    * x[0].powi((a - 2 * i) as i32)
                    * x[1].powi((b - 2 * j) as i32)
                    * hder[a + b - i - j];
            }
        }
        Ok(sum)
    }

    /// Spectral moment int s1^a s2^b drho computed from derivatives of kappa
    /// at the origin: m_ab = (-1)^((a+b)/2) d^(a,b) kappa(0) for even orders.
    pub fn spectral_moment_from_derivatives(&self, a: u32, b: u32) -> Result<f64> {
        if a + b > MAX_ORDER as u32 {
            return Err(Error::UnsupportedOrder {
                order: (a + b) as usize,
            });
        }
        if a % 2 == 1 || b % 2 == 1 {
            return Ok(0.0);
        }
        let d = self.derivative([a as usize, b as usize], [0.0, 0.0])?;
        let sign = if ((a + b) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        Ok(sign * d)
    }

    /// The spectral measure, when it has a known sampleable form.
    pub fn spectral_measure(&self) -> Option<SpectralMeasure> {
        match self.kind {
            KernelKind::PlaneWave => Some(SpectralMeasure::CircleUniform {
                radius: self.c.sqrt(),
                mass: self.variance(),
            }),
            KernelKind::BargmannFock => Some(SpectralMeasure::IsotropicGaussian {
                sigma: self.c.sqrt(),
                mass: self.variance(),
            }),
            KernelKind::UserRadial => None,
        }
    }

    /// Rescale amplitude and coordinates so that Var f = 1,
    /// Cov[grad f, grad f] = Id2 (so the correlation length is 1).
    ///
    /// Records the coordinate stretch factor gamma (normalized coordinates
    /// satisfy x_original = gamma * x_normalized) in `length_rescale`.
    pub fn normalize(&self) -> Result<KernelModel> {
        let var = self.variance();
        if !(var > 0.0) {
            return Err(Error::DegenerateKernel {
                reason: format!("kappa(0) = {var} must be positive"),
            });
        }
        let d20 = self.derivative([2, 0], [0.0, 0.0])?;
        let s2 = -d20 / var;
        if !(s2 > 0.0) {
            return Err(Error::DegenerateKernel {
                reason: format!("-d^(2,0) kappa(0)/kappa(0) = {s2} must be positive"),
            });
        }
        // kappa~(x) = kappa(gamma x)/kappa(0) needs gamma^2 s2 = 1.
        let gamma = 1.0 / s2.sqrt();
        let mut out = self.clone();
        out.c = self.c * gamma * gamma;
        out.amplitude = 1.0 / self.profile.h0();
        out.length_rescale = self.length_rescale * gamma;
        out.normalized = true;
        Ok(out)
    }

    /// Directional fourth-moment margins and far-field decay; the report
    /// carries the margins that certify the support and decay conditions.
    pub fn check_conditions(&self, v_grid: usize, far_radius: f64) -> Result<ConditionReport> {
        let m40 = self.spectral_moment_from_derivatives(4, 0)?;
        let m22 = self.spectral_moment_from_derivatives(2, 2)?;
        let m04 = self.spectral_moment_from_derivatives(0, 4)?;
        let (margin20, margin11) = directional_margins(m40, m22, m04, v_grid);

        let mut far_max = 0.0f64;
        for a in 0..=2usize {
            for b in 0..=(2 - a) {
                let v = self.derivative([a, b], [far_radius, 0.0])?.abs();
                far_max = far_max.max(v);
            }
        }
        Ok(ConditionReport {
            kernel: self.id().to_string(),
            v_grid,
            far_radius,
            margin_var20: margin20,
            margin_var11: margin11,
            far_max,
            condition1_pass: far_max < FAR_DECAY_THRESHOLD,
            condition2_pass: margin20 > MARGIN_TOLERANCE && margin11 > MARGIN_TOLERANCE,
        })
    }
}

/// Decay threshold for the far-field check of the mixing condition.
pub const FAR_DECAY_THRESHOLD: f64 = 0.5;
/// Positivity tolerance for the directional-variance margins.
pub const MARGIN_TOLERANCE: f64 = 1e-9;

fn fact(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// inf over directions of (Var d_v^(2,0) f - 1, Var d_v^(1,1) f) from the
/// order-4 spectral moments of the measure (m31 and m13 vanish for the
/// isotropic kernels handled here).
fn directional_margins(m40: f64, m22: f64, m04: f64, v_grid: usize) -> (f64, f64) {
    let mut inf20 = f64::INFINITY;
    let mut inf11 = f64::INFINITY;
    for k in 0..v_grid {
        let t = std::f64::consts::PI * k as f64 / v_grid as f64;
        let (s, c) = t.sin_cos();
        // E[(c s1 + s s2)^4] and E[(c s1 + s s2)^2 (-s s1 + c s2)^2]
        let e4 = c.powi(4) * m40 + 6.0 * c * c * s * s * m22 + s.powi(4) * m04;
        let e22 = c * c * s * s * (m40 + m04) + (c.powi(4) + s.powi(4) - 4.0 * c * c * s * s) * m22;
        inf20 = inf20.min(e4 - 1.0);
        inf11 = inf11.min(e22);
    }
    (inf20, inf11)
}

/// Margins for an explicit spectral measure (used for synthetic measures
/// whose kernel is not represented).
pub fn measure_margins(measure: &SpectralMeasure, v_grid: usize) -> Result<(f64, f64)> {
    let m40 = measure.moment(4, 0)?;
    let m31 = measure.moment(3, 1)?;
    let m22 = measure.moment(2, 2)?;
    let m13 = measure.moment(1, 3)?;
    let m04 = measure.moment(0, 4)?;
    let mut inf20 = f64::INFINITY;
    let mut inf11 = f64::INFINITY;
    for k in 0..v_grid {
        let t = std::f64::consts::PI * k as f64 / v_grid as f64;
        let (s, c) = t.sin_cos();
        let e4 = c.powi(4) * m40
            + 4.0 * c.powi(3) * s * m31
            + 6.0 * c * c * s * s * m22
            + 4.0 * c * s.powi(3) * m13
            + s.powi(4) * m04;
        // (c s1 + s s2)^2 (-s s1 + c s2)^2 expanded in mixed moments:
        let e22 = c * c * s * s * (m40 + m04)
            + (c.powi(4) + s.powi(4) - 4.0 * c * c * s * s) * m22
            + (2.0 * c * s * s * s - 2.0 * c.powi(3) * s) * m31
            + (2.0 * c.powi(3) * s - 2.0 * c * s * s * s) * m13;
        inf20 = inf20.min(e4 - 1.0);
        inf11 = inf11.min(e22);
    }
    Ok((inf20, inf11))
}

/// Report of the smoothness / support / decay checks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionReport {
    pub kernel: String,
    pub v_grid: usize,
    pub far_radius: f64,
    /// inf_v Var[d_v^(2,0) f] - 1 over the direction grid.
    pub margin_var20: f64,
    /// inf_v Var[d_v^(1,1) f] over the direction grid.
    pub margin_var11: f64,
    /// max over |alpha| <= 2 of |d^alpha kappa| at |x| = far_radius.
    pub far_max: f64,
    pub condition1_pass: bool,
    pub condition2_pass: bool,
}
