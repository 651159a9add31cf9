//! Double-double arithmetic for determinant evaluation.
//!
//! The pair covariance matrices become extremely ill-conditioned near the
//! diagonal (the smallest eigenvalue of the 6x6 field/gradient matrix decays
//! like r^6), so plain f64 LU loses every significant digit of the
//! determinant below r ~ 0.1. Determinants and Schur complements of the
//! assembled (f64-valued) matrices are therefore computed in ~31-digit
//! double-double arithmetic; the inputs stay f64, only the elimination runs
//! in extended precision.

/// Unevaluated sum hi + lo with |lo| <= ulp(hi)/2.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = f64::mul_add(a, b, -p);
    (p, err)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    #[inline]
    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from_f64(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from_f64(q2)));
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::from_f64(q3))
    }

    #[inline]
    pub fn abs(self) -> Dd {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            self.neg()
        } else {
            self
        }
    }
}

/// Dense square matrix in double-double precision, row-major.
pub struct DdMatrix {
    n: usize,
    a: Vec<Dd>,
}

impl DdMatrix {
    pub fn from_f64_rows(n: usize, rows: &[f64]) -> DdMatrix {
        assert_eq!(rows.len(), n * n);
        DdMatrix {
            n,
            a: rows.iter().map(|&x| Dd::from_f64(x)).collect(),
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> Dd {
        self.a[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: Dd) {
        self.a[i * self.n + j] = v;
    }

    /// Determinant by LU with partial pivoting, entirely in double-double.
    pub fn determinant(mut self) -> f64 {
        let n = self.n;
        let mut det = Dd::ONE;
        for k in 0..n {
            let mut piv = k;
            let mut best = self.at(k, k).abs().hi;
            for i in k + 1..n {
                let v = self.at(i, k).abs().hi;
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 {
                return 0.0;
            }
            if piv != k {
                for j in 0..n {
                    let t = self.at(k, j);
                    self.set(k, j, self.at(piv, j));
                    self.set(piv, j, t);
                }
                det = det.neg();
            }
            let pivot = self.at(k, k);
            det = det.mul(pivot);
            for i in k + 1..n {
                let f = self.at(i, k).div(pivot);
                self.set(i, k, Dd::ZERO);
                for j in k + 1..n {
                    let v = self.at(i, j).sub(f.mul(self.at(k, j)));
                    self.set(i, j, v);
                }
            }
        }
        det.to_f64()
    }
}

/// det of the full matrix, its leading ny x ny Schur complement
/// (A11 - A12 A22^-1 A21), and det of the trailing Z block, all in
/// double-double from the f64 entries. Layout: Y block first, Z block last.
pub fn schur_and_dets(n: usize, ny: usize, rows: &[f64]) -> (Vec<f64>, f64, f64) {
    assert_eq!(rows.len(), n * n);
    let nz = n - ny;
    // Eliminate the Z block from the bottom-right; run LU on the permuted
    // matrix [Z, cross; cross, Y] so that the Schur complement of Z appears
    // in the trailing Y corner after nz elimination steps.
    let mut m = vec![Dd::ZERO; n * n];
    let perm: Vec<usize> = (ny..n).chain(0..ny).collect();
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = Dd::from_f64(rows[perm[i] * n + perm[j]]);
        }
    }
    let mut det_z = Dd::ONE;
    for k in 0..nz {
        // Pivot within the Z block only, so the trailing corner stays the
        // exact Schur complement of Z.
        let mut piv = k;
        let mut best = m[k * n + k].abs().hi;
        for i in k + 1..nz {
            let v = m[i * n + k].abs().hi;
            if v > best {
                best = v;
                piv = i;
            }
        }
        if piv != k {
            for j in 0..n {
                m.swap(k * n + j, piv * n + j);
            }
            det_z = det_z.neg();
        }
        let pivot = m[k * n + k];
        if pivot.hi == 0.0 && pivot.lo == 0.0 {
            return (vec![f64::NAN; ny * ny], f64::NAN, 0.0);
        }
        det_z = det_z.mul(pivot);
        for i in k + 1..n {
            let f = m[i * n + k].div(pivot);
            m[i * n + k] = Dd::ZERO;
            for j in k + 1..n {
                let v = m[i * n + j].sub(f.mul(m[k * n + j]));
                m[i * n + j] = v;
            }
        }
    }
    let mut schur = vec![0.0; ny * ny];
    let mut schur_dd = vec![Dd::ZERO; ny * ny];
    for i in 0..ny {
        for j in 0..ny {
            let v = m[(nz + i) * n + (nz + j)];
            schur[i * ny + j] = v.to_f64();
            schur_dd[i * ny + j] = v;
        }
    }
    // det(full) = det(Z) * det(Schur); finish the elimination on the corner.
    let det_schur = DdMatrix { n: ny, a: schur_dd }.determinant();
    let det_full = det_z.to_f64() * det_schur;
    (schur, det_full, det_z.to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_hilbert_4_determinant() {
        // 840/(i+j+1) has exactly representable integer entries, and
        // det = 840^4 / 6048000 = 82320 exactly. f64 LU on this matrix
        // (condition ~1.5e4) is good to ~1e-12; double-double must be
        // essentially exact.
        let n = 4;
        let mut rows = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                rows[i * n + j] = 840.0 / ((i + j + 1) as f64);
            }
        }
        let det = DdMatrix::from_f64_rows(n, &rows).determinant();
        assert!(((det - 82320.0) / 82320.0).abs() < 1e-20, "{det}");
    }

    #[test]
    fn schur_matches_block_identity() {
        // [[4, 1, 0.5], [1, 3, 0.2], [0.5, 0.2, 2]] with ny = 1:
        // schur = 4 - [1, 0.5] [[3,0.2],[0.2,2]]^-1 [1, 0.5]^T.
        let rows = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let (schur, det_full, det_z) = schur_and_dets(3, 1, &rows);
        let det_z_exact = 3.0 * 2.0 - 0.04;
        assert!((det_z - det_z_exact).abs() < 1e-14);
        let inv = [2.0 / det_z_exact, -0.2 / det_z_exact, 3.0 / det_z_exact];
        let q = 1.0 * (inv[0] * 1.0 + inv[1] * 0.5) + 0.5 * (inv[1] * 1.0 + inv[2] * 0.5);
        assert!((schur[0] - (4.0 - q)).abs() < 1e-14);
        assert!((det_full - det_z_exact * (4.0 - q)).abs() < 1e-12);
    }

    #[test]
    fn dd_mul_catches_roundoff() {
        let a = Dd::from_f64(1.0 + 2f64.powi(-30));
        let b = a.mul(a);
        let expected_lo = 2f64.powi(-60);
        assert!((b.to_f64() - (1.0 + 2f64.powi(-29))) < 1e-15);
        assert!(b.lo != 0.0 || expected_lo < f64::EPSILON * b.hi);
    }
}
