//! Dense symmetric indefinite factorization P * L * D * L^T * P^T with
//! Bunch-Kaufman partial pivoting (1x1 and 2x2 diagonal blocks).
//!
//! Works on the lower triangle only; suitable for saddle-point matrices
//! such as [[S^2, A^T], [A, 0]].

use nalgebra::{DMatrix, DVector};

use crate::error::{QipmError, Result};

/// Relative pivot threshold: pivots below `PIVOT_FLOOR * max|M|` abort the
/// factorization with a singularity error.
pub const PIVOT_FLOOR: f64 = 1e-14;

const ALPHA: f64 = 0.6403882032022076; // (1 + sqrt(17)) / 8

/// Factored form of a symmetric indefinite matrix.
pub struct BunchKaufman {
    /// Packed factors: strictly lower part holds L multipliers, diagonal
    /// (and first subdiagonal for 2x2 blocks) holds D.
    factors: DMatrix<f64>,
    /// LAPACK-style pivot indices: ipiv[k] = p+1 for a 1x1 block with rows
    /// k and p interchanged; ipiv[k] = ipiv[k+1] = -(p+1) for a 2x2 block
    /// with rows k+1 and p interchanged.
    ipiv: Vec<i64>,
    dim: usize,
}

impl BunchKaufman {
    /// Factor a symmetric matrix. Reads the lower triangle.
    pub fn factor(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        assert_eq!(n, m.ncols(), "square matrix required");
        let mut a = m.clone_owned();
        let mut ipiv = vec![0i64; n];
        let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let floor = PIVOT_FLOOR * scale.max(f64::MIN_POSITIVE);

        let mut k = 0usize;
        while k < n {
            let absakk = a[(k, k)].abs();
            // Largest off-diagonal entry in column k below the diagonal.
            let (imax, colmax) = {
                let mut imax = k;
                let mut colmax = 0.0f64;
                for i in k + 1..n {
                    let v = a[(i, k)].abs();
                    if v > colmax {
                        colmax = v;
                        imax = i;
                    }
                }
                (imax, colmax)
            };

            if absakk.max(colmax) < floor {
                return Err(QipmError::SingularMatrix {
                    pivot: absakk.max(colmax),
                    threshold: floor,
                });
            }

            let mut kstep = 1usize;
            let kp;
            if absakk >= ALPHA * colmax {
                kp = k;
            } else {
                // Largest off-diagonal entry in row imax of the remaining block.
                let mut rowmax = 0.0f64;
                for j in k..imax {
                    rowmax = rowmax.max(a[(imax, j)].abs());
                }
                for i in imax + 1..n {
                    rowmax = rowmax.max(a[(i, imax)].abs());
                }
                if absakk >= ALPHA * colmax * (colmax / rowmax) {
                    kp = k;
                } else if a[(imax, imax)].abs() >= ALPHA * rowmax {
                    kp = imax;
                } else {
                    kstep = 2;
                    kp = imax;
                }
            }

            let kk = k + kstep - 1;
            if kp != kk {
                // Symmetric interchange of rows/columns kk and kp (kp > kk)
                // within the trailing block, lower storage.
                for i in kp + 1..n {
                    a.swap((i, kk), (i, kp));
                }
                for j in kk + 1..kp {
                    a.swap((j, kk), (kp, j));
                }
                a.swap((kk, kk), (kp, kp));
                if kstep == 2 {
                    a.swap((k + 1, k), (kp, k));
                }
            }

            if kstep == 1 {
                let d = a[(k, k)];
                if d.abs() < floor {
                    return Err(QipmError::SingularMatrix {
                        pivot: d.abs(),
                        threshold: floor,
                    });
                }
                let r1 = 1.0 / d;
                for j in k + 1..n {
                    let f = a[(j, k)] * r1;
                    if f != 0.0 {
                        for i in j..n {
                            a[(i, j)] -= a[(i, k)] * f;
                        }
                    }
                }
                for i in k + 1..n {
                    a[(i, k)] *= r1;
                }
                ipiv[k] = kp as i64 + 1;
            } else {
                // 2x2 pivot on columns (k, k+1), LAPACK dsytf2 update.
                if k + 2 < n {
                    let d21 = a[(k + 1, k)];
                    let d11 = a[(k + 1, k + 1)] / d21;
                    let d22 = a[(k, k)] / d21;
                    let t = 1.0 / (d11 * d22 - 1.0);
                    if !t.is_finite() {
                        return Err(QipmError::SingularMatrix {
                            pivot: (d11 * d22 - 1.0).abs(),
                            threshold: floor,
                        });
                    }
                    let d21s = t / d21;
                    for j in k + 2..n {
                        let wk = d21s * (d11 * a[(j, k)] - a[(j, k + 1)]);
                        let wkp1 = d21s * (d22 * a[(j, k + 1)] - a[(j, k)]);
                        for i in j..n {
                            a[(i, j)] -= a[(i, k)] * wk + a[(i, k + 1)] * wkp1;
                        }
                        a[(j, k)] = wk;
                        a[(j, k + 1)] = wkp1;
                    }
                }
                ipiv[k] = -(kp as i64 + 1);
                ipiv[k + 1] = -(kp as i64 + 1);
            }

            k += kstep;
        }

        Ok(Self {
            factors: a,
            ipiv,
            dim: n,
        })
    }

    /// Solve M x = b in place of a copy of `b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim;
        assert_eq!(b.len(), n, "rhs length");
        let a = &self.factors;
        let mut x = b.clone_owned();

        // Forward: solve P L D z = b.
        let mut k = 0usize;
        while k < n {
            if self.ipiv[k] > 0 {
                let kp = (self.ipiv[k] - 1) as usize;
                if kp != k {
                    x.swap_rows(k, kp);
                }
                let xk = x[k];
                for i in k + 1..n {
                    x[i] -= a[(i, k)] * xk;
                }
                x[k] /= a[(k, k)];
                k += 1;
            } else {
                let kp = (-self.ipiv[k] - 1) as usize;
                if kp != k + 1 {
                    x.swap_rows(k + 1, kp);
                }
                let xk = x[k];
                let xk1 = x[k + 1];
                for i in k + 2..n {
                    x[i] -= a[(i, k)] * xk + a[(i, k + 1)] * xk1;
                }
                // 2x2 diagonal solve (LAPACK dsytrs scheme).
                let akm1k = a[(k + 1, k)];
                let akm1 = a[(k, k)] / akm1k;
                let ak = a[(k + 1, k + 1)] / akm1k;
                let denom = akm1 * ak - 1.0;
                let bkm1 = x[k] / akm1k;
                let bk = x[k + 1] / akm1k;
                x[k] = (ak * bkm1 - bk) / denom;
                x[k + 1] = (akm1 * bk - bkm1) / denom;
                k += 2;
            }
        }

        // Backward: solve L^T P^T x = z.
        let mut k = n as i64 - 1;
        while k >= 0 {
            let ku = k as usize;
            if self.ipiv[ku] > 0 {
                let mut acc = 0.0;
                for i in ku + 1..n {
                    acc += a[(i, ku)] * x[i];
                }
                x[ku] -= acc;
                let kp = (self.ipiv[ku] - 1) as usize;
                if kp != ku {
                    x.swap_rows(ku, kp);
                }
                k -= 1;
            } else {
                // Second column of the pair is ku; pair starts at ku - 1.
                let kf = ku - 1;
                let mut acc0 = 0.0;
                let mut acc1 = 0.0;
                for i in ku + 1..n {
                    acc0 += a[(i, kf)] * x[i];
                    acc1 += a[(i, ku)] * x[i];
                }
                x[kf] -= acc0;
                x[ku] -= acc1;
                let kp = (-self.ipiv[ku] - 1) as usize;
                if kp != ku {
                    x.swap_rows(ku, kp);
                }
                k -= 2;
            }
        }

        x
    }
}
