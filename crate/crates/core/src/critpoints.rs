//! Critical-point detection on a realization: grid-seeded Newton iteration
//! on grad f = 0 with the exact ensemble Hessian, deduplication, height
//! filtering, and the ordered-pair decomposition.

use crate::error::{Error, Result};
use crate::simulate::WaveEnsemble;
use serde::{Deserialize, Serialize};

/// Detector configuration. The correlation length is 1 after normalization,
/// so grid_h = 0.3 oversamples the gradient's zero crossings.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub grid_h: f64,
    pub tol_grad: f64,
    pub newton_max_iter: usize,
    pub dedupe_radius: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            grid_h: 0.3,
            tol_grad: 1e-9,
            newton_max_iter: 40,
            dedupe_radius: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalKind {
    Maximum,
    Minimum,
    Saddle,
    /// |det hess| below the degeneracy tolerance; kept but flagged.
    Degenerate,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: [f64; 2],
    /// Critical value f(x).
    pub height: f64,
    /// (d20, d11, d02) at the point.
    pub hessian: [f64; 3],
    pub kind: CriticalKind,
    pub gradient_norm: f64,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct DetectorDiagnostics {
    pub cells_scanned: usize,
    pub newton_failures: usize,
    pub dedupe_merges: usize,
    /// Set when Newton failures exceed 5% of seeded cells.
    pub low_confidence: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalPointSet {
    pub points: Vec<CriticalPoint>,
    pub radius: f64,
    pub config: DetectorConfig,
    pub diagnostics: DetectorDiagnostics,
}

const HESS_DEGENERATE_TOL: f64 = 1e-10;
const FAILURE_RATE_LIMIT: f64 = 0.05;

fn classify(h: [f64; 3]) -> CriticalKind {
    let det = h[0] * h[2] - h[1] * h[1];
    if det.abs() < HESS_DEGENERATE_TOL {
        CriticalKind::Degenerate
    } else if det < 0.0 {
        CriticalKind::Saddle
    } else if h[0] + h[2] < 0.0 {
        CriticalKind::Maximum
    } else {
        CriticalKind::Minimum
    }
}

/// One Newton run from `seed`; returns the converged point or None.
fn newton_from(
    ens: &WaveEnsemble,
    seed: [f64; 2],
    escape_radius: f64,
    cfg: &DetectorConfig,
) -> Option<CriticalPoint> {
    let mut x = seed;
    for _ in 0..cfg.newton_max_iter {
        let j = ens.jet(x);
        let gnorm = (j.gx * j.gx + j.gy * j.gy).sqrt();
        if gnorm <= cfg.tol_grad {
            return Some(CriticalPoint {
                location: x,
                height: j.f,
                hessian: [j.hxx, j.hxy, j.hyy],
                kind: classify([j.hxx, j.hxy, j.hyy]),
                gradient_norm: gnorm,
            });
        }
        let det = j.hxx * j.hyy - j.hxy * j.hxy;
        if det.abs() < 1e-14 {
            return None;
        }
        let mut dx = -(j.hyy * j.gx - j.hxy * j.gy) / det;
        let mut dy = -(-j.hxy * j.gx + j.hxx * j.gy) / det;
        let step = (dx * dx + dy * dy).sqrt();
        if step > cfg.grid_h {
            let scale = cfg.grid_h / step;
            dx *= scale;
            dy *= scale;
        }
        x[0] += dx;
        x[1] += dy;
        if x[0] * x[0] + x[1] * x[1] > escape_radius * escape_radius {
            return None;
        }
    }
    None
}

/// Detect all critical points of the realization inside the closed disc of
/// the given radius. Newton seeds cover the padded disc B_{R+2h} so that
/// points whose basin center lies slightly outside are not lost; acceptance
/// is restricted to B_R.
pub fn find_critical_points(
    ens: &WaveEnsemble,
    radius: f64,
    cfg: &DetectorConfig,
) -> Result<CriticalPointSet> {
    if !(cfg.grid_h > 0.0 && cfg.grid_h <= 0.4) {
        return Err(Error::InvalidConfig(format!(
            "grid_h = {} outside (0, 0.4]",
            cfg.grid_h
        )));
    }
    if !(radius >= 1.0) {
        return Err(Error::InvalidConfig(format!("radius {radius} < 1")));
    }
    let pad = radius + 2.0 * cfg.grid_h;
    let escape = pad + 1.0;
    let n = (2.0 * pad / cfg.grid_h).ceil() as i64;
    let mut candidates: Vec<CriticalPoint> = Vec::new();
    let mut cells = 0usize;
    let mut failures = 0usize;
    for iy in 0..=n {
        let y = -pad + (iy as f64 + 0.5) * cfg.grid_h;
        if y > pad {
            continue;
        }
        for ix in 0..=n {
            let x = -pad + (ix as f64 + 0.5) * cfg.grid_h;
            if x > pad || x * x + y * y > pad * pad {
                continue;
            }
            cells += 1;
            match newton_from(ens, [x, y], escape, cfg) {
                Some(p) => candidates.push(p),
                None => failures += 1,
            }
        }
    }

    // Canonical order, then greedy dedupe within dedupe_radius using a
    // bucket grid (sorting first makes the merge deterministic).
    candidates.sort_by(|a, b| {
        a.location[0]
            .partial_cmp(&b.location[0])
            .unwrap()
            .then(a.location[1].partial_cmp(&b.location[1]).unwrap())
    });
    let mut kept: Vec<CriticalPoint> = Vec::new();
    let mut merges = 0usize;
    let cell = cfg.dedupe_radius.max(1e-12);
    let mut buckets: std::collections::HashMap<(i64, i64), Vec<usize>> =
        std::collections::HashMap::new();
    for p in candidates {
        let bx = (p.location[0] / cell).floor() as i64;
        let by = (p.location[1] / cell).floor() as i64;
        let mut dup = false;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = buckets.get(&(bx + dx, by + dy)) {
                    for &i in ids {
                        let q: &CriticalPoint = &kept[i];
                        let dx = q.location[0] - p.location[0];
                        let dy = q.location[1] - p.location[1];
                        if dx * dx + dy * dy < cfg.dedupe_radius * cfg.dedupe_radius {
                            dup = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
        if dup {
            merges += 1;
        } else {
            buckets.entry((bx, by)).or_default().push(kept.len());
            kept.push(p);
        }
    }
    kept.retain(|p| p.location[0] * p.location[0] + p.location[1] * p.location[1] <= radius * radius);

    let low_confidence = (failures as f64) > FAILURE_RATE_LIMIT * (cells as f64);
    Ok(CriticalPointSet {
        points: kept,
        radius,
        config: *cfg,
        diagnostics: DetectorDiagnostics {
            cells_scanned: cells,
            newton_failures: failures,
            dedupe_merges: merges,
            low_confidence,
        },
    })
}

/// Number of points with height in the closed window [a, b].
pub fn count_in_window(set: &CriticalPointSet, a: f64, b: f64) -> usize {
    assert!(a <= b, "invalid window [{a}, {b}]");
    set.points
        .iter()
        .filter(|p| p.height >= a && p.height <= b)
        .count()
}

/// Ordered-pair decomposition of the squared in-window count:
/// n1 pairs farther than delta, n2 distinct pairs within delta, n3 = count
/// (coincident pairs). Always n1 + n2 + n3 = count^2.
pub fn pair_counts(set: &CriticalPointSet, a: f64, b: f64, delta: f64) -> (u64, u64, u64) {
    assert!(delta > 0.0, "delta must be positive");
    let pts: Vec<&CriticalPoint> = set
        .points
        .iter()
        .filter(|p| p.height >= a && p.height <= b)
        .collect();
    let n = pts.len() as u64;
    let mut n1 = 0u64;
    let mut n2 = 0u64;
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            if i == j {
                continue;
            }
            let dx = pts[i].location[0] - pts[j].location[0];
            let dy = pts[i].location[1] - pts[j].location[1];
            if (dx * dx + dy * dy).sqrt() > delta {
                n1 += 1;
            } else {
                n2 += 1;
            }
        }
    }
    (n1, n2, n)
}

/// CSV rows (x, y, height, h11, h12, h22, type) for export.
pub fn csv_rows(set: &CriticalPointSet) -> Vec<[String; 7]> {
    set.points
        .iter()
        .map(|p| {
            [
                format!("{}", p.location[0]),
                format!("{}", p.location[1]),
                format!("{}", p.height),
                format!("{}", p.hessian[0]),
                format!("{}", p.hessian[1]),
                format!("{}", p.hessian[2]),
                match p.kind {
                    CriticalKind::Maximum => "max".to_string(),
                    CriticalKind::Minimum => "min".to_string(),
                    CriticalKind::Saddle => "saddle".to_string(),
                    CriticalKind::Degenerate => "degenerate".to_string(),
                },
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::sample_field;
    use crate::KernelModel;

    /// cos(x1) + cos(x2) as an exact two-wave ensemble.
    pub(crate) fn cos_cos_field() -> WaveEnsemble {
        WaveEnsemble::from_parts(
            vec![[1.0, 0.0], [0.0, 1.0]],
            vec![0.0, 0.0],
            1.0,
            "cos-cos",
        )
    }

    #[test]
    fn cos_cos_has_nine_points_in_b5() {
        // Lattice oracle: critical points at (k pi, m pi); inside B_5 these
        // are k^2 + m^2 <= 2 (pi sqrt(2) < 5 < 2 pi), nine points.
        let set = find_critical_points(&cos_cos_field(), 5.0, &DetectorConfig::default()).unwrap();
        assert_eq!(set.points.len(), 9, "diag {:?}", set.diagnostics);
        let pi = std::f64::consts::PI;
        for p in &set.points {
            let k = (p.location[0] / pi).round();
            let m = (p.location[1] / pi).round();
            assert!((p.location[0] - k * pi).abs() < 1e-8);
            assert!((p.location[1] - m * pi).abs() < 1e-8);
            assert!(k * k + m * m <= 2.0 + 1e-9);
            assert!(p.gradient_norm <= 1e-9);
        }
    }

    #[test]
    fn cos_cos_window_counts() {
        let set = find_critical_points(&cos_cos_field(), 5.0, &DetectorConfig::default()).unwrap();
        // Saddles at height 0 are the four points (+-pi, 0), (0, +-pi).
        assert_eq!(count_in_window(&set, -0.5, 0.5), 4);
        // The maximum at the origin has height 2.
        assert_eq!(count_in_window(&set, 1.5, 2.5), 1);
        assert_eq!(count_in_window(&set, f64::NEG_INFINITY, f64::INFINITY), 9);
        let saddles = set
            .points
            .iter()
            .filter(|p| p.kind == CriticalKind::Saddle)
            .count();
        let maxima = set
            .points
            .iter()
            .filter(|p| p.kind == CriticalKind::Maximum)
            .count();
        let minima = set
            .points
            .iter()
            .filter(|p| p.kind == CriticalKind::Minimum)
            .count();
        assert_eq!((maxima, saddles, minima), (1, 4, 4));
    }

    #[test]
    fn pair_partition_identity() {
        let set = find_critical_points(&cos_cos_field(), 5.0, &DetectorConfig::default()).unwrap();
        for (a, b, delta) in [
            (-0.5, 0.5, 1.0),
            (-3.0, 3.0, 2.0),
            (-3.0, 3.0, 10.0),
            (1.5, 2.5, 0.3),
        ] {
            let (n1, n2, n3) = pair_counts(&set, a, b, delta);
            let n = count_in_window(&set, a, b) as u64;
            assert_eq!(n1 + n2 + n3, n * n);
            assert_eq!(n3, n);
        }
    }

    #[test]
    fn pair_counts_simple_cases() {
        // Single point: (0, 0, 1).
        let single = CriticalPointSet {
            points: vec![CriticalPoint {
                location: [0.0, 0.0],
                height: 0.0,
                hessian: [-1.0, 0.0, -1.0],
                kind: CriticalKind::Maximum,
                gradient_norm: 0.0,
            }],
            radius: 5.0,
            config: DetectorConfig::default(),
            diagnostics: DetectorDiagnostics::default(),
        };
        assert_eq!(pair_counts(&single, -1.0, 1.0, 0.5), (0, 0, 1));
        // Two points at distance 2 delta: ordered pairs give (2, 0, 2).
        let mut two = single.clone();
        two.points.push(CriticalPoint {
            location: [1.0, 0.0],
            height: 0.0,
            hessian: [-1.0, 0.0, -1.0],
            kind: CriticalKind::Maximum,
            gradient_norm: 0.0,
        });
        assert_eq!(pair_counts(&two, -1.0, 1.0, 0.5), (2, 0, 2));
    }

    #[test]
    fn empty_set_counts_zero() {
        let set = CriticalPointSet {
            points: vec![],
            radius: 5.0,
            config: DetectorConfig::default(),
            diagnostics: DetectorDiagnostics::default(),
        };
        assert_eq!(count_in_window(&set, -1.0, 1.0), 0);
    }

    #[test]
    fn detector_rejects_bad_config() {
        let e = cos_cos_field();
        let mut cfg = DetectorConfig::default();
        cfg.grid_h = 0.5;
        assert!(find_critical_points(&e, 5.0, &cfg).is_err());
        assert!(find_critical_points(&e, 0.5, &DetectorConfig::default()).is_err());
    }

    #[test]
    fn detection_is_deterministic() {
        let model = KernelModel::plane_wave().normalize().unwrap();
        let ens = sample_field(&model, 128, 5).unwrap();
        let a = find_critical_points(&ens, 5.0, &DetectorConfig::default()).unwrap();
        let b = find_critical_points(&ens, 5.0, &DetectorConfig::default()).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            assert_eq!(p.location[0].to_bits(), q.location[0].to_bits());
            assert_eq!(p.height.to_bits(), q.height.to_bits());
        }
    }

    #[test]
    fn all_accepted_points_satisfy_gradient_tolerance() {
        let model = KernelModel::bargmann_fock().normalize().unwrap();
        for seed in 0..5 {
            let ens = sample_field(&model, 256, 100 + seed).unwrap();
            let set = find_critical_points(&ens, 5.0, &DetectorConfig::default()).unwrap();
            assert!(!set.points.is_empty());
            for p in &set.points {
                assert!(p.gradient_norm <= 1e-9);
                let r2 = p.location[0].powi(2) + p.location[1].powi(2);
                assert!(r2 <= 25.0 + 1e-12);
            }
            // Pairwise distances respect the dedupe radius.
            for i in 0..set.points.len() {
                for j in i + 1..set.points.len() {
                    let dx = set.points[i].location[0] - set.points[j].location[0];
                    let dy = set.points[i].location[1] - set.points[j].location[1];
                    assert!((dx * dx + dy * dy).sqrt() >= 1e-4);
                }
            }
        }
    }

    #[test]
    fn mesh_independence() {
        // Halving grid_h changes counts by < 0.5% on average.
        let model = KernelModel::plane_wave().normalize().unwrap();
        let mut coarse_total = 0usize;
        let mut fine_total = 0usize;
        let fine = DetectorConfig {
            grid_h: 0.15,
            ..DetectorConfig::default()
        };
        for seed in 0..20 {
            let ens = sample_field(&model, 256, 40_000 + seed).unwrap();
            coarse_total +=
                find_critical_points(&ens, 5.0, &DetectorConfig::default()).unwrap().points.len();
            fine_total += find_critical_points(&ens, 5.0, &fine).unwrap().points.len();
        }
        let rel = (coarse_total as f64 - fine_total as f64).abs() / fine_total as f64;
        assert!(rel < 0.005, "coarse {coarse_total} fine {fine_total}");
    }
}
