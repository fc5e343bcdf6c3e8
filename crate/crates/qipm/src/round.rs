//! Partition identification and least-squares crossover from a
//! near-optimal interior point to an exact optimal solution.

use nalgebra::DVector;

use crate::error::{QipmError, Result};
use crate::linalg::matrix_rank;
use crate::lp::{gather_columns, LpInstance};

/// Index partition guessed from a near-optimal pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    /// Indices with x_j >= tau.
    pub basis: Vec<usize>,
    /// Indices with s_j >= tau.
    pub nonbasis: Vec<usize>,
    /// Indices in both or neither set; reported, not fatal.
    pub undecided: Vec<usize>,
}

/// Threshold the components of (x, s) at tau (default sqrt(x's / n), the
/// floating-point surrogate of the exact-arithmetic cutoff).
pub fn identify_partition(x: &DVector<f64>, s: &DVector<f64>, tau: Option<f64>) -> Partition {
    let n = x.len();
    debug_assert_eq!(s.len(), n);
    let clip = |v: f64| {
        debug_assert!(v >= -1e-12, "component {v} below clip floor");
        v.max(0.0)
    };
    let tau = tau.unwrap_or_else(|| {
        let gap: f64 = (0..n).map(|i| clip(x[i]) * clip(s[i])).sum();
        (gap / n as f64).sqrt()
    });
    let mut basis = Vec::new();
    let mut nonbasis = Vec::new();
    let mut undecided = Vec::new();
    for j in 0..n {
        let in_b = clip(x[j]) >= tau;
        let in_n = clip(s[j]) >= tau;
        match (in_b, in_n) {
            (true, false) => basis.push(j),
            (false, true) => nonbasis.push(j),
            _ => undecided.push(j),
        }
    }
    Partition {
        basis,
        nonbasis,
        undecided,
    }
}

/// Crossover: project the approximate pair onto the optimal face defined by
/// the partition.
///
/// Primal: minimize |x_B - x~_B| subject to A_B x_B = b, x_N = 0.
/// Dual: minimize |y - y~| subject to (A'y)_B = c_B, s = c - A'y.
/// The result is verified against all KKT conditions at 1e-10; failure
/// raises the wrong-partition error so the caller can retry with a smaller
/// threshold.
pub fn crossover(
    inst: &LpInstance,
    partition: &Partition,
    x_approx: &DVector<f64>,
    y_approx: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    if !partition.undecided.is_empty() {
        return Err(QipmError::UndecidedPartition {
            count: partition.undecided.len(),
            indices: partition.undecided.clone(),
        });
    }
    let a_b = gather_columns(&inst.a, &partition.basis);
    let k = partition.basis.len();
    if matrix_rank(&a_b) < k.min(inst.m) {
        return Err(QipmError::WrongPartition {
            detail: format!("basis columns rank-deficient ({} columns)", k),
        });
    }

    // Primal least squares: x_B = x~_B + A_B' (A_B A_B')^+ (b - A_B x~_B).
    let x_b_approx = DVector::from_fn(k, |i, _| x_approx[partition.basis[i]]);
    let gram_rows = &a_b * a_b.transpose();
    let resid = &inst.b - &a_b * &x_b_approx;
    let x_b = match nalgebra::Cholesky::new(gram_rows.clone()) {
        Some(chol) => {
            let mut lam = chol.solve(&resid);
            let polish = &resid - &gram_rows * &lam;
            lam += chol.solve(&polish);
            &x_b_approx + a_b.transpose() * lam
        }
        None => {
            // Fewer basis columns than rows (degenerate optimum): solve the
            // consistent system A_B x_B = b in the least-squares sense.
            let gram_cols = a_b.transpose() * &a_b;
            let rhs = a_b.transpose() * &inst.b;
            let chol = nalgebra::Cholesky::new(gram_cols).ok_or(QipmError::WrongPartition {
                detail: "basis Gram matrix singular".into(),
            })?;
            chol.solve(&rhs)
        }
    };
    let mut x = DVector::zeros(inst.n);
    for (i, &j) in partition.basis.iter().enumerate() {
        x[j] = x_b[i];
    }

    // Dual least squares: y = y~ + A_B (A_B' A_B)^+ (c_B - A_B' y~).
    let c_b = DVector::from_fn(k, |i, _| inst.c[partition.basis[i]]);
    let dual_resid = &c_b - a_b.transpose() * y_approx;
    let gram_cols = a_b.transpose() * &a_b;
    let y = match nalgebra::Cholesky::new(gram_cols.clone()) {
        Some(chol) => {
            let mut w = chol.solve(&dual_resid);
            let polish = &dual_resid - &gram_cols * &w;
            w += chol.solve(&polish);
            y_approx + &a_b * w
        }
        None => {
            return Err(QipmError::WrongPartition {
                detail: "dual basis Gram matrix singular".into(),
            })
        }
    };
    let s = inst.slack_of(&y);

    verify_kkt(inst, &x, &y, &s, 1e-10)?;
    Ok((x, y, s))
}

fn verify_kkt(
    inst: &LpInstance,
    x: &DVector<f64>,
    y: &DVector<f64>,
    s: &DVector<f64>,
    tol: f64,
) -> Result<()> {
    let primal = (&inst.a * x - &inst.b).amax();
    let dual = inst.dual_residual_compensated(y, s).amax();
    let comp = x.dot(s).abs();
    let x_min = x.min();
    let s_min = s.min();
    if primal > tol || dual > tol || comp > tol || x_min < -tol || s_min < -tol {
        return Err(QipmError::WrongPartition {
            detail: format!(
                "|Ax-b|={primal:.2e} |A'y+s-c|={dual:.2e} x's={comp:.2e} \
                 min x={x_min:.2e} min s={s_min:.2e}"
            ),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn tiny_instance() -> LpInstance {
        LpInstance::new(
            "tiny",
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_row_slice(&[1.0]),
            DVector::from_row_slice(&[1.0, 2.0]),
            true,
        )
        .unwrap()
    }

    #[test]
    fn partition_examples() {
        let p = identify_partition(
            &DVector::from_row_slice(&[1.0, 0.0]),
            &DVector::from_row_slice(&[0.0, 1.0]),
            Some(0.5),
        );
        assert_eq!(p.basis, vec![0]);
        assert_eq!(p.nonbasis, vec![1]);
        assert!(p.undecided.is_empty());

        let p = identify_partition(
            &DVector::from_row_slice(&[1e-9, 1.0]),
            &DVector::from_row_slice(&[1.0, 1e-9]),
            Some(1e-4),
        );
        assert_eq!(p.basis, vec![1]);
        assert_eq!(p.nonbasis, vec![0]);
    }

    #[test]
    fn partition_flags_undecided() {
        let p = identify_partition(
            &DVector::from_row_slice(&[1.0, 0.1]),
            &DVector::from_row_slice(&[1.0, 0.1]),
            Some(0.5),
        );
        assert_eq!(p.undecided, vec![0, 1]);
    }

    #[test]
    fn crossover_hand_example() {
        // B = {0}: x = (1, 0), y = 1, s = (0, 1).
        let inst = tiny_instance();
        let partition = Partition {
            basis: vec![0],
            nonbasis: vec![1],
            undecided: vec![],
        };
        let x_approx = DVector::from_row_slice(&[0.99, 0.01]);
        let y_approx = DVector::from_row_slice(&[0.9]);
        let (x, y, s) = crossover(&inst, &partition, &x_approx, &y_approx).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && x[1] == 0.0);
        assert!((y[0] - 1.0).abs() < 1e-12);
        assert!(s[0].abs() < 1e-12 && (s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crossover_wrong_partition_fails_kkt() {
        // B = {1}: y = 2 gives s = (-1, 0), which must be rejected.
        let inst = tiny_instance();
        let partition = Partition {
            basis: vec![1],
            nonbasis: vec![0],
            undecided: vec![],
        };
        let x_approx = DVector::from_row_slice(&[0.0, 1.0]);
        let y_approx = DVector::from_row_slice(&[1.9]);
        let out = crossover(&inst, &partition, &x_approx, &y_approx);
        assert!(matches!(out, Err(QipmError::WrongPartition { .. })));
    }

    #[test]
    fn crossover_handles_fewer_basis_columns_than_rows() {
        // Degenerate optimum: one basic column against two rows exercises
        // the consistent-system fallback on both sides.
        let inst = LpInstance::new(
            "deg",
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            DVector::from_row_slice(&[1.0, 0.0]),
            DVector::from_row_slice(&[0.0, 1.0]),
            true,
        )
        .unwrap();
        let partition = Partition {
            basis: vec![0],
            nonbasis: vec![1],
            undecided: vec![],
        };
        let x_approx = DVector::from_row_slice(&[0.97, 0.01]);
        let y_approx = DVector::from_row_slice(&[-0.1, 0.4]);
        let (x, y, s) = crossover(&inst, &partition, &x_approx, &y_approx).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && x[1] == 0.0);
        assert!(y[0].abs() < 1e-12, "dual equality (A'y)_B = c_B");
        assert!((y[1] - 0.4).abs() < 1e-12, "free dual component untouched");
        assert!(s[0].abs() < 1e-12 && (s[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn crossover_is_projection_fixed_point() {
        // Feeding the exact optimum back returns it unchanged.
        let inst = tiny_instance();
        let partition = Partition {
            basis: vec![0],
            nonbasis: vec![1],
            undecided: vec![],
        };
        let x_star = DVector::from_row_slice(&[1.0, 0.0]);
        let y_star = DVector::from_row_slice(&[1.0]);
        let (x, y, _) = crossover(&inst, &partition, &x_star, &y_star).unwrap();
        assert!((x - &x_star).amax() < 1e-14);
        assert!((y - &y_star).amax() < 1e-14);
    }

    #[test]
    fn crossover_invariant_to_anchor_within_partition() {
        let inst = tiny_instance();
        let partition = Partition {
            basis: vec![0],
            nonbasis: vec![1],
            undecided: vec![],
        };
        let mut outputs = Vec::new();
        for (px, py) in [(0.93, 0.82), (1.07, 1.15), (0.999, 0.98)] {
            let x_approx = DVector::from_row_slice(&[px, 0.02]);
            let y_approx = DVector::from_row_slice(&[py]);
            let (x, y, s) = crossover(&inst, &partition, &x_approx, &y_approx).unwrap();
            outputs.push((x, y, s));
        }
        for pair in outputs.windows(2) {
            assert!((&pair[0].0 - &pair[1].0).amax() < 1e-10);
            assert!((&pair[0].1 - &pair[1].1).amax() < 1e-10);
        }
    }

    #[test]
    fn crossover_rejects_undecided() {
        let inst = tiny_instance();
        let partition = Partition {
            basis: vec![0],
            nonbasis: vec![],
            undecided: vec![1],
        };
        let out = crossover(&inst, &partition, &DVector::zeros(2), &DVector::zeros(1));
        assert!(matches!(out, Err(QipmError::UndecidedPartition { .. })));
    }
}
