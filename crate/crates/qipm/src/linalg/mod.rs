//! Dense linear algebra substrate: exact solver oracle, classical CG
//! baseline, norms, and condition-number estimation.
//!
//! The augmented Newton matrix [[S^2, A^T], [A, 0]] is a saddle-point matrix
//! with m negative eigenvalues whenever A != 0, so the "exact" oracle factors
//! it with a symmetric **indefinite** Bunch-Kaufman LDL^T. Normal-equation
//! systems are positive definite and go through Cholesky.

mod ldlt;

pub use ldlt::{BunchKaufman, PIVOT_FLOOR};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{QipmError, Result};

/// Which symmetric system a matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// Saddle-point form [[S^2, A^T], [A, 0]]; symmetric indefinite.
    Augmented,
    /// A S^-2 A^T (or A A^T) form; symmetric positive definite.
    NormalEquations,
}

impl SystemKind {
    fn name(self) -> &'static str {
        match self {
            SystemKind::Augmented => "augmented",
            SystemKind::NormalEquations => "normal_equations",
        }
    }
}

/// A dense symmetric system; symmetry is checked at construction.
#[derive(Debug, Clone)]
pub struct SymmetricSystem {
    matrix: DMatrix<f64>,
    kind: SystemKind,
}

impl SymmetricSystem {
    pub fn new(matrix: DMatrix<f64>, kind: SystemKind) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(QipmError::DimensionMismatch {
                context: "symmetric system must be square",
                expected: n,
                got: matrix.ncols(),
            });
        }
        for i in 0..n {
            for j in 0..i {
                let dev = (matrix[(i, j)] - matrix[(j, i)]).abs();
                if dev != 0.0 {
                    return Err(QipmError::NotSymmetric {
                        deviation: dev,
                        row: i,
                        col: j,
                    });
                }
            }
        }
        Ok(Self { matrix, kind })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    /// Max-norm of the matrix entries.
    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

enum FactorInner {
    Spd {
        chol: Cholesky<f64, Dyn>,
        scale: DVector<f64>,
    },
    Indefinite {
        ldlt: BunchKaufman,
        scale: DVector<f64>,
    },
}

/// Reusable factorization of a [`SymmetricSystem`].
///
/// The matrix is symmetrically equilibrated before factoring so that widely
/// scaled blocks (tiny slacks against O(1) constraint rows) keep full pivot
/// accuracy; `solve` folds the scaling back in and applies one step of
/// classical residual correction against the original matrix.
pub struct SystemFactor<'a> {
    system: &'a SymmetricSystem,
    inner: FactorInner,
}

impl<'a> SystemFactor<'a> {
    pub fn new(system: &'a SymmetricSystem) -> Result<Self> {
        let n = system.dim();
        let m = system.matrix();
        let mut scale = DVector::from_element(n, 1.0);
        for i in 0..n {
            let mut rowmax = 0.0f64;
            for j in 0..n {
                rowmax = rowmax.max(m[(i, j)].abs());
            }
            if rowmax == 0.0 {
                return Err(QipmError::SingularMatrix {
                    pivot: 0.0,
                    threshold: PIVOT_FLOOR,
                });
            }
            scale[i] = 1.0 / rowmax.sqrt();
        }
        let mut scaled = m.clone_owned();
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] *= scale[i] * scale[j];
            }
        }
        let inner = match system.kind() {
            SystemKind::NormalEquations => {
                let chol = Cholesky::new(scaled).ok_or(QipmError::SingularMatrix {
                    pivot: 0.0,
                    threshold: PIVOT_FLOOR,
                })?;
                FactorInner::Spd { chol, scale }
            }
            SystemKind::Augmented => {
                let ldlt = BunchKaufman::factor(&scaled)?;
                FactorInner::Indefinite { ldlt, scale }
            }
        };
        Ok(Self { system, inner })
    }

    fn solve_scaled(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.inner {
            FactorInner::Spd { chol, scale } => {
                let b = rhs.component_mul(scale);
                let y = chol.solve(&b);
                y.component_mul(scale)
            }
            FactorInner::Indefinite { ldlt, scale } => {
                let b = rhs.component_mul(scale);
                let y = ldlt.solve(&b);
                y.component_mul(scale)
            }
        }
    }

    /// Solve with one residual-correction pass.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.solve_scaled(rhs);
        let r = rhs - self.system.matvec(&x);
        x += self.solve_scaled(&r);
        x
    }
}

/// Noiseless solver oracle.
///
/// Residual is at machine-level relative accuracy on well-conditioned
/// systems (property-tested at 1e-12 relative). Near-singular pivots are
/// reported as [`QipmError::SingularMatrix`].
pub fn exact_solve(system: &SymmetricSystem, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if rhs.len() != system.dim() {
        return Err(QipmError::DimensionMismatch {
            context: "exact_solve rhs",
            expected: system.dim(),
            got: rhs.len(),
        });
    }
    let factor = SystemFactor::new(system)?;
    Ok(factor.solve(rhs))
}

/// Output of the conjugate-gradient solver.
#[derive(Debug, Clone)]
pub struct CgSolve {
    pub solution: DVector<f64>,
    pub matvec_count: usize,
}

/// Conjugate gradients on a positive definite system.
///
/// Converges to `|M z - rhs| <= tol * |rhs|`; the matvec count feeds the
/// classical cost tally. Iteration cap is `50 * dim`.
pub fn cg_solve(system: &SymmetricSystem, rhs: &DVector<f64>, tol: f64) -> Result<CgSolve> {
    if system.kind() != SystemKind::NormalEquations {
        return Err(QipmError::WrongSystemKind {
            expected: SystemKind::NormalEquations.name(),
            got: system.kind().name(),
        });
    }
    cg_solve_operator(
        |v| system.matvec(v),
        system.dim(),
        rhs,
        tol,
        50 * system.dim(),
    )
}

/// Matrix-free CG; `apply` must implement a symmetric positive definite
/// operator. Used both for assembled systems and for the A S^-2 A^T
/// normal-equations operator without forming it.
pub fn cg_solve_operator<F>(
    apply: F,
    dim: usize,
    rhs: &DVector<f64>,
    tol: f64,
    max_iterations: usize,
) -> Result<CgSolve>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if rhs.len() != dim {
        return Err(QipmError::DimensionMismatch {
            context: "cg rhs",
            expected: dim,
            got: rhs.len(),
        });
    }
    let rhs_norm = rhs.norm();
    if rhs_norm == 0.0 {
        return Ok(CgSolve {
            solution: DVector::zeros(dim),
            matvec_count: 0,
        });
    }
    let target = tol * rhs_norm;
    let mut x = DVector::zeros(dim);
    let mut r = rhs.clone_owned();
    let mut p = r.clone_owned();
    let mut rho = r.norm_squared();
    let mut matvecs = 0usize;
    let mut best = x.clone_owned();
    let mut best_res = rhs_norm;

    for _ in 0..max_iterations {
        if rho.sqrt() <= target {
            return Ok(CgSolve {
                solution: x,
                matvec_count: matvecs,
            });
        }
        let ap = apply(&p);
        matvecs += 1;
        let denom = p.dot(&ap);
        if denom <= 0.0 || !denom.is_finite() {
            return Err(QipmError::NonConvergence {
                iterations: matvecs,
                residual: rho.sqrt() / rhs_norm,
                best: best.iter().copied().collect(),
            });
        }
        let alpha = rho / denom;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rho_new = r.norm_squared();
        if rho_new.sqrt() < best_res {
            best_res = rho_new.sqrt();
            best.copy_from(&x);
        }
        let beta = rho_new / rho;
        rho = rho_new;
        p = &r + beta * p;
    }
    if rho.sqrt() <= target {
        return Ok(CgSolve {
            solution: x,
            matvec_count: matvecs,
        });
    }
    Err(QipmError::NonConvergence {
        iterations: matvecs,
        residual: rho.sqrt() / rhs_norm,
        best: best.iter().copied().collect(),
    })
}

/// Spectral condition number sigma_max / sigma_min by full SVD.
///
/// Returns +infinity for a singular matrix. Dense; intended for desk-scale
/// orders (the study harness caps what it feeds here).
pub fn condition_number(system: &SymmetricSystem) -> f64 {
    condition_number_of(system.matrix())
}

pub fn condition_number_of(matrix: &DMatrix<f64>) -> f64 {
    let sv = matrix.clone_owned().singular_values();
    let smax = sv.iter().fold(0.0f64, |a, v| a.max(*v));
    let smin = sv.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    if smin <= smax * 1e-300 || smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Numerical row rank via singular values.
pub fn matrix_rank(matrix: &DMatrix<f64>) -> usize {
    let sv = matrix.clone_owned().singular_values();
    let smax = sv.iter().fold(0.0f64, |a, v| a.max(*v));
    if smax == 0.0 {
        return 0;
    }
    let tol = smax * 1e-10 * (matrix.nrows().max(matrix.ncols()) as f64);
    sv.iter().filter(|v| **v > tol).count()
}

/// Dot product with Neumaier compensation; used where accumulated rounding
/// would otherwise cap refinement accuracy.
pub fn compensated_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        let prod = x * y;
        let t = sum + prod;
        if sum.abs() >= prod.abs() {
            comp += (sum - t) + prod;
        } else {
            comp += (prod - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
