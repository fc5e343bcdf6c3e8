//! Dual log-barrier almost-exact interior point method: Newton system
//! assembly, proximity measure, full Newton steps, the geometric mu
//! schedule with the small-rhs skip, and perturbation diagnostics.
//!
//! Sign conventions: the augmented system is
//!     [[S^2, A^T], [A, 0]] (ds_hat, dy) = (0, A S^-1 e - b/mu)
//! so that the solved step matches the closed form
//!     dy = (A S^-2 A^T)^-1 (b/mu - A S^-1 e),   ds = -A^T dy = S^2 ds_hat.
//! With this convention one exact full Newton step at fixed mu decreases
//! the proximity quadratically, which the tests pin.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{QipmError, Result};
use crate::linalg::{
    cg_solve_operator, compensated_dot, condition_number_of, exact_solve, SymmetricSystem,
    SystemKind,
};
use crate::lp::{DualIterate, LpInstance};
use crate::qsim::{
    refined_linear_solve_with, CostInfo, CostLedger, EventKind, NoiseModel, NoiseState,
    SolveOptions,
};

/// Assembled augmented Newton system of order n + m.
pub struct NewtonSystem {
    pub system: SymmetricSystem,
    /// Right-hand side: upper block 0, lower block A S^-1 e - b/mu.
    pub sigma: DVector<f64>,
    pub s_snapshot: DVector<f64>,
    pub mu_snapshot: f64,
}

impl NewtonSystem {
    pub fn dim(&self) -> usize {
        self.system.dim()
    }
}

/// Build the augmented system at an interior iterate.
pub fn assemble_newton(inst: &LpInstance, iterate: &DualIterate) -> Result<NewtonSystem> {
    if let Some((index, value)) = iterate.interior_violation() {
        return Err(QipmError::InteriorViolation { index, value });
    }
    let (m, n) = (inst.m, inst.n);
    let mut big = DMatrix::zeros(n + m, n + m);
    for i in 0..n {
        big[(i, i)] = iterate.s[i] * iterate.s[i];
    }
    big.view_mut((0, n), (n, m)).copy_from(&inst.a.transpose());
    big.view_mut((n, 0), (m, n)).copy_from(&inst.a);

    let mut sigma = DVector::zeros(n + m);
    let lower = sigma_lower(inst, iterate);
    sigma.rows_mut(n, m).copy_from(&lower);

    Ok(NewtonSystem {
        system: SymmetricSystem::new(big, SystemKind::Augmented)?,
        sigma,
        s_snapshot: iterate.s.clone_owned(),
        mu_snapshot: iterate.mu,
    })
}

/// Lower right-hand-side block A S^-1 e - b/mu; zero exactly on the
/// central path.
pub fn sigma_lower(inst: &LpInstance, iterate: &DualIterate) -> DVector<f64> {
    let s_inv = iterate.s.map(|v| 1.0 / v);
    &inst.a * s_inv - &inst.b / iterate.mu
}

/// A S^-2 A^T, the normal-equations matrix of the same step.
pub fn normal_matrix(inst: &LpInstance, s: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = inst.a.clone_owned();
    for j in 0..inst.n {
        let w = 1.0 / (s[j] * s[j]);
        for i in 0..inst.m {
            scaled[(i, j)] *= w;
        }
    }
    &scaled * inst.a.transpose()
}

/// Exact Newton step (dy, ds) at (s, mu) through the normal equations,
/// falling back to the augmented factorization when Cholesky fails.
fn exact_step(inst: &LpInstance, iterate: &DualIterate) -> Result<(DVector<f64>, DVector<f64>)> {
    let rhs = -sigma_lower(inst, iterate);
    let ne = normal_matrix(inst, &iterate.s);
    if let Some(chol) = nalgebra::Cholesky::new(ne.clone()) {
        let mut dy = chol.solve(&rhs);
        // One refinement pass keeps the proximity usable deep into the run.
        let r = &rhs - &ne * &dy;
        dy += chol.solve(&r);
        let ds = -(inst.a.transpose() * &dy);
        return Ok((dy, ds));
    }
    let newton = assemble_newton(inst, iterate)?;
    let z = exact_solve(&newton.system, &newton.sigma)?;
    let n = inst.n;
    let dy = z.rows(n, inst.m).clone_owned();
    let ds_hat = z.rows(0, n);
    let ds = DVector::from_fn(n, |i, _| iterate.s[i] * iterate.s[i] * ds_hat[i]);
    Ok((dy, ds))
}

/// Proximity measure delta = |S^-1 ds| with ds the exact Newton step at
/// (s, mu); zero exactly on the central path. Diagnostic work is tallied
/// separately from the algorithmic ledger.
pub fn proximity(inst: &LpInstance, iterate: &DualIterate, ledger: &mut CostLedger) -> Result<f64> {
    if let Some((index, value)) = iterate.interior_violation() {
        return Err(QipmError::InteriorViolation { index, value });
    }
    let (_, ds) = exact_step(inst, iterate)?;
    let (m, n) = (inst.m as f64, inst.n as f64);
    ledger.charge_diagnostic(n * m * m + m * m * m / 3.0 + 2.0 * n * m);
    Ok(ds.zip_map(&iterate.s, |d, s| d / s).norm())
}

/// Which linear solver backs the Newton solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Exact,
    QuantumEmulated,
    CgBaseline,
}

/// Run parameters. The (mu_min, newton_tol, skip_threshold) triple is the
/// desk-scale stand-in for the exact-arithmetic thresholds
/// (2^-2L, 2^-tL, 2^-4L), which underflow binary64 at realistic L.
#[derive(Debug, Clone, Copy)]
pub struct IpmConfig {
    /// Barrier reduction factor; `None` selects 1 / (2 sqrt n). The
    /// default keeps the proximity under 1/2 on ordinary geometries; very
    /// small n (a one-variable problem has no primal freedom at all) needs
    /// an explicitly smaller factor or the run stops with a centrality
    /// error.
    pub theta: Option<f64>,
    pub mu_min: f64,
    pub newton_tol: f64,
    pub skip_threshold: f64,
    pub solver: SolverKind,
    /// Record the Newton-system condition number every k-th iteration
    /// (0 = only once at the start).
    pub cond_every: usize,
    /// Evaluate the perturbation-condition diagnostics each solve.
    pub check_conditions: bool,
    pub max_iterations: usize,
}

impl Default for IpmConfig {
    fn default() -> Self {
        Self {
            theta: None,
            mu_min: 1e-8,
            newton_tol: 1e-10,
            skip_threshold: 1e-12,
            solver: SolverKind::Exact,
            cond_every: 1,
            check_conditions: true,
            max_iterations: 200_000,
        }
    }
}

impl IpmConfig {
    pub fn theta_for(&self, n: usize) -> f64 {
        self.theta.unwrap_or(0.5 / (n as f64).sqrt())
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let theta = self.theta_for(n);
        if !(0.0..1.0).contains(&theta) || theta == 0.0 {
            return Err(QipmError::InvalidConfig(format!(
                "theta = {theta} outside (0, 1)"
            )));
        }
        if self.mu_min <= 0.0 {
            return Err(QipmError::InvalidConfig("mu_min must be positive".into()));
        }
        Ok(())
    }
}

/// One full Newton step.
pub struct NewtonStep {
    pub dy: DVector<f64>,
    pub ds: DVector<f64>,
    /// Measured step error xi = ds + A^T dy (the dual-residual increment of
    /// the full step).
    pub xi: DVector<f64>,
    pub inner_iterations: usize,
}

/// Solve the Newton system at an iterate with the configured backend.
///
/// Guarantees max_i |ds + A^T dy|_i <= 10 * newton_tol: the quantum path
/// keeps iterating its inner refinement until the dual-feasibility residual
/// block is below target, the exact and CG paths satisfy it by
/// construction. On heavily scaled problems the componentwise target
/// relaxes to 1e-14 * s_i, the rounding floor of rows whose slack is that
/// large (such rows pair with inversely small primal components, so the
/// relaxation cannot move the duality gap).
pub fn newton_step(
    inst: &LpInstance,
    iterate: &DualIterate,
    config: &IpmConfig,
    noise: Option<&NoiseModel>,
    ledger: &mut CostLedger,
) -> Result<NewtonStep> {
    let mut state = match noise {
        Some(model) => Some(NoiseState::new(*model)?),
        None => None,
    };
    let info = default_cost_info(inst, iterate);
    newton_step_with(inst, iterate, config, &mut state, ledger, &info)
}

pub(crate) fn default_cost_info(inst: &LpInstance, iterate: &DualIterate) -> CostInfo {
    CostInfo {
        dim: inst.n + inst.m,
        kappa: condition_number_of(&normal_matrix(inst, &iterate.s)),
        frob_a: inst.a.norm(),
    }
}

pub(crate) fn newton_step_with(
    inst: &LpInstance,
    iterate: &DualIterate,
    config: &IpmConfig,
    noise_state: &mut Option<NoiseState>,
    ledger: &mut CostLedger,
    info: &CostInfo,
) -> Result<NewtonStep> {
    let (m, n) = (inst.m, inst.n);
    match config.solver {
        SolverKind::Exact => {
            let (dy, ds) = exact_step(inst, iterate)?;
            let mf = m as f64;
            let nf = n as f64;
            ledger.charge_classical(
                EventKind::ClassicalFactorization,
                nf * mf * mf + mf * mf * mf / 3.0 + 4.0 * nf * mf,
            );
            let xi = step_error(inst, &dy, &ds);
            Ok(NewtonStep {
                dy,
                ds,
                xi,
                inner_iterations: 1,
            })
        }
        SolverKind::QuantumEmulated => {
            let newton = assemble_newton(inst, iterate)?;
            let state = noise_state.as_mut().ok_or_else(|| {
                QipmError::InvalidConfig("quantum_emulated solver needs a noise model".into())
            })?;
            let targets = DVector::from_fn(n, |i, _| {
                (9.0 * config.newton_tol).max(1e-14 * iterate.s[i])
            });
            let opts = SolveOptions {
                tol: config.newton_tol,
                upper_targets: Some(targets),
                max_iterations: 1000,
            };
            let report = refined_linear_solve_with(
                &newton.system,
                &newton.sigma,
                opts,
                state,
                ledger,
                info,
            )?;
            let z = report.solution;
            let dy = z.rows(n, m).clone_owned();
            let ds = DVector::from_fn(n, |i, _| iterate.s[i] * iterate.s[i] * z[i]);
            let xi = step_error(inst, &dy, &ds);
            Ok(NewtonStep {
                dy,
                ds,
                xi,
                inner_iterations: report.iterations,
            })
        }
        SolverKind::CgBaseline => {
            // Matrix-free normal equations A S^-2 A^T dy = b/mu - A S^-1 e;
            // the classical tally counts the matvec arithmetic.
            let s_inv2 = iterate.s.map(|v| 1.0 / (v * v));
            let rhs = -sigma_lower(inst, iterate);
            let apply = |v: &DVector<f64>| {
                let atv = inst.a.transpose() * v;
                &inst.a * atv.component_mul(&s_inv2)
            };
            let mf = m as f64;
            let nf = n as f64;
            ledger.charge_classical(EventKind::ClassicalVectorOps, 2.0 * nf * mf + 2.0 * nf);
            let out = cg_solve_operator(apply, m, &rhs, config.newton_tol, 50 * m)?;
            ledger.charge_classical_counted(
                EventKind::ClassicalMatvec,
                out.matvec_count as u64,
                out.matvec_count as f64 * (4.0 * nf * mf + 2.0 * nf + 5.0 * mf),
            );
            let dy = out.solution;
            let ds = -(inst.a.transpose() * &dy);
            ledger.charge_classical(EventKind::ClassicalVectorOps, 2.0 * nf * mf);
            Ok(NewtonStep {
                xi: DVector::zeros(n),
                dy,
                ds,
                inner_iterations: out.matvec_count,
            })
        }
    }
}

fn step_error(inst: &LpInstance, dy: &DVector<f64>, ds: &DVector<f64>) -> DVector<f64> {
    let dyv: Vec<f64> = dy.iter().copied().collect();
    DVector::from_fn(inst.n, |j, _| {
        let col: Vec<f64> = inst.a.column(j).iter().copied().collect();
        ds[j] + compensated_dot(&col, &dyv)
    })
}

/// Left-hand sides of the three perturbation conditions at a drifted
/// iterate; the first two are diagonal so their spectral norms are max
/// absolute diagonal entries.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PerturbationCheck {
    pub lhs1: f64,
    pub lhs2: f64,
    pub lhs3: f64,
    pub pass: bool,
}

/// Evaluate the perturbed-step admissibility conditions: with
/// S~ = diag(s0 + r),
///   |S0 S~^-1 (I - S0 S~^-1)| <= 0.033 delta~,
///   |I - (S0 S~^-1)^2|        <= 0.033,
///   |S~^-1 xi|                <= 0.033 delta~.
pub fn check_perturbation_conditions(
    s0: &DVector<f64>,
    r: &DVector<f64>,
    xi: &DVector<f64>,
    delta_tilde: f64,
) -> Result<PerturbationCheck> {
    let n = s0.len();
    let mut lhs1 = 0.0f64;
    let mut lhs2 = 0.0f64;
    let mut lhs3_sq = 0.0f64;
    for i in 0..n {
        if s0[i] <= 0.0 {
            return Err(QipmError::InteriorViolation {
                index: i,
                value: s0[i],
            });
        }
        let st = s0[i] + r[i];
        if st <= 0.0 {
            return Err(QipmError::InteriorViolation {
                index: i,
                value: st,
            });
        }
        let q = s0[i] / st;
        lhs1 = lhs1.max((q * (1.0 - q)).abs());
        lhs2 = lhs2.max((1.0 - q * q).abs());
        let w = xi[i] / st;
        lhs3_sq += w * w;
    }
    let lhs3 = lhs3_sq.sqrt();
    let pass = lhs1 <= 0.033 * delta_tilde && lhs2 <= 0.033 && lhs3 <= 0.033 * delta_tilde;
    Ok(PerturbationCheck {
        lhs1,
        lhs2,
        lhs3,
        pass,
    })
}

/// Per-iteration trace record. Ledger columns are deltas for that
/// iteration, not cumulative totals.
#[derive(Debug, Clone, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub mu: f64,
    pub delta: f64,
    pub drift_inf: f64,
    pub cond: Option<f64>,
    pub skipped: bool,
    pub qram_queries: f64,
    pub classical_ops: f64,
    pub inner_iterations: usize,
    #[serde(skip)]
    pub perturbation: Option<PerturbationCheck>,
}

/// Full run trace plus the ledger accumulated over the run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IpmTrace {
    pub records: Vec<IterRecord>,
}

impl IpmTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn max_cond(&self) -> f64 {
        self.records
            .iter()
            .filter_map(|r| r.cond)
            .fold(0.0f64, f64::max)
    }

    pub fn max_delta(&self) -> f64 {
        self.records.iter().map(|r| r.delta).fold(0.0f64, f64::max)
    }

    /// CSV export: iter,mu,delta,drift_inf,cond_M,skipped,qram_queries,classical_ops.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("iter,mu,delta,drift_inf,cond_M,skipped,qram_queries,classical_ops\n");
        for r in &self.records {
            let cond = r.cond.map(|c| c.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.iter,
                r.mu,
                r.delta,
                r.drift_inf,
                cond,
                r.skipped as u8,
                r.qram_queries,
                r.classical_ops
            ));
        }
        out
    }
}

/// Outcome of a barrier run.
#[derive(Debug)]
pub struct IpmRun {
    pub iterate: DualIterate,
    pub trace: IpmTrace,
    pub ledger: CostLedger,
    /// Condition number at the start iterate (normal-equations form).
    pub kappa0: f64,
}

/// Almost-exact dual log-barrier method: full Newton steps on the
/// geometric mu schedule until mu <= mu_min, skipping the solve whenever
/// the right-hand side is already below the skip threshold.
///
/// The trace records proximity, drift, and (at the configured cadence) the
/// condition number of the normal-equations matrix A S^-2 A^T, the form
/// whose growth the condition studies track.
pub fn ae_qipm_solve(
    inst: &LpInstance,
    start: &DualIterate,
    config: &IpmConfig,
    noise: Option<&NoiseModel>,
) -> Result<IpmRun> {
    config.validate(inst.n)?;
    let theta = config.theta_for(inst.n);
    let mut ledger = CostLedger::default();

    let delta0 = proximity(inst, start, &mut ledger)?;
    if delta0 >= 0.5 {
        return Err(QipmError::CentralityLoss {
            delta: delta0,
            iteration: 0,
            trace: Box::new(IpmTrace::default()),
        });
    }

    let mut noise_state = match (config.solver, noise) {
        (SolverKind::QuantumEmulated, model) => {
            let model = model.copied().unwrap_or_default();
            Some(NoiseState::new(model)?)
        }
        (_, Some(model)) => Some(NoiseState::new(*model)?),
        _ => None,
    };

    let mut iterate = start.clone();
    let mut trace = IpmTrace::default();
    let frob_a = inst.a.norm();
    let dim = inst.n + inst.m;
    let mut kappa = f64::NAN;
    let mut kappa0 = f64::NAN;
    let mut iter = 0usize;

    while iterate.mu > config.mu_min {
        iter += 1;
        if iter > config.max_iterations {
            return Err(QipmError::NonConvergence {
                iterations: iter,
                residual: iterate.mu,
                best: Vec::new(),
            });
        }

        let delta =
            proximity(inst, &iterate, &mut ledger).map_err(|e| attach(iter, iterate.mu, e))?;
        if delta >= 0.5 {
            return Err(QipmError::CentralityLoss {
                delta,
                iteration: iter,
                trace: Box::new(trace),
            });
        }

        let record_cond =
            iter == 1 || (config.cond_every > 0 && (iter - 1).is_multiple_of(config.cond_every));
        let cond = if record_cond {
            let ne = normal_matrix(inst, &iterate.s);
            let mf = inst.m as f64;
            ledger.charge_diagnostic((inst.n as f64) * mf * mf + 20.0 * mf * mf * mf);
            kappa = condition_number_of(&ne);
            if iter == 1 {
                kappa0 = kappa;
            }
            Some(kappa)
        } else {
            None
        };
        let info = CostInfo { dim, kappa, frob_a };

        let mark = ledger.mark();
        let lower = sigma_lower(inst, &iterate);
        let skipped = lower.norm() <= config.skip_threshold;
        let mut inner_iterations = 0usize;
        let mut perturbation = None;
        if !skipped {
            let step =
                newton_step_with(inst, &iterate, config, &mut noise_state, &mut ledger, &info)
                    .map_err(|e| attach(iter, iterate.mu, e))?;
            inner_iterations = step.inner_iterations;
            if config.check_conditions {
                let s0 = &iterate.s - &iterate.drift;
                if s0.iter().all(|v| *v > 0.0) {
                    perturbation = Some(check_perturbation_conditions(
                        &s0,
                        &iterate.drift,
                        &step.xi,
                        delta,
                    )?);
                }
            }
            iterate.y += &step.dy;
            iterate.s += &step.ds;
            iterate.drift += &step.xi;
            ledger.charge_classical(EventKind::ClassicalVectorOps, (inst.n + inst.m) as f64);
            if let Some((index, value)) = iterate.interior_violation() {
                return Err(attach(
                    iter,
                    iterate.mu,
                    QipmError::InteriorViolation { index, value },
                ));
            }
        }
        let delta_ledger = ledger.delta_since(&mark);
        trace.records.push(IterRecord {
            iter,
            mu: iterate.mu,
            delta,
            drift_inf: iterate.drift.amax(),
            cond,
            skipped,
            qram_queries: delta_ledger.qram_queries,
            classical_ops: delta_ledger.classical_ops,
            inner_iterations,
            perturbation,
        });

        iterate.mu *= 1.0 - theta;
    }

    Ok(IpmRun {
        iterate,
        trace,
        ledger,
        kappa0,
    })
}

fn attach(iteration: usize, mu: f64, source: QipmError) -> QipmError {
    match source {
        e @ QipmError::CentralityLoss { .. } => e,
        other => QipmError::NewtonFailure {
            iteration,
            mu,
            source: Box::new(other),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{gap_bound, generate_instance, GenSpec};
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

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
    fn sigma_lower_hand_examples() {
        let inst = tiny_instance();
        // s = (1,1), mu = 1: A S^-1 e - b/mu = 2 - 1 = 1.
        let it = DualIterate::new(DVector::zeros(1), DVector::from_row_slice(&[1.0, 1.0]), 1.0);
        let lower = sigma_lower(&inst, &it);
        assert!((lower[0] - 1.0).abs() < 1e-15);
        // Central-path iterate: zero right-hand side.
        let central = DualIterate::new(
            DVector::zeros(1),
            DVector::from_row_slice(&[1.0, 2.0]),
            2.0 / 3.0,
        );
        let lower = sigma_lower(&inst, &central);
        assert!(lower[0].abs() < 1e-14);
    }

    #[test]
    fn assemble_is_symmetric_and_rejects_nonpositive_slack() {
        let inst = tiny_instance();
        let it = DualIterate::new(DVector::zeros(1), DVector::from_row_slice(&[1.0, 2.0]), 1.0);
        let sys = assemble_newton(&inst, &it).unwrap();
        let m = sys.system.matrix();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(1, 1)], 4.0);
        assert_eq!(m[(0, 2)], 1.0);
        assert_eq!(m[(2, 1)], 1.0);
        assert_eq!(m[(2, 2)], 0.0);

        let bad = DualIterate::new(
            DVector::zeros(1),
            DVector::from_row_slice(&[1.0, -0.1]),
            1.0,
        );
        assert!(matches!(
            assemble_newton(&inst, &bad),
            Err(QipmError::InteriorViolation { .. })
        ));
    }

    #[test]
    fn newton_step_hand_example() {
        // A=[[1,1]], b=(1), c=(1,2), y=0, s=(1,2), mu=1:
        // A S^-2 A^T = 1.25, rhs = b/mu - A S^-1 e = -0.5,
        // dy = -0.4, ds = (0.4, 0.4).
        let inst = tiny_instance();
        let it = DualIterate::new(DVector::zeros(1), DVector::from_row_slice(&[1.0, 2.0]), 1.0);
        let mut ledger = CostLedger::default();
        let cfg = IpmConfig::default();
        let step = newton_step(&inst, &it, &cfg, None, &mut ledger).unwrap();
        assert!((step.dy[0] + 0.4).abs() < 1e-12, "dy = {}", step.dy[0]);
        assert!((step.ds[0] - 0.4).abs() < 1e-12);
        assert!((step.ds[1] - 0.4).abs() < 1e-12);
        // Primal estimate from this exact step satisfies A x = b.
        let x = inst.primal_estimate(&it, &step.ds);
        assert!(((inst.a.clone() * &x)[0] - 1.0).abs() < 1e-12);
        assert!((x[0] - 0.6).abs() < 1e-12 && (x[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn newton_step_central_path_is_zero() {
        let inst = tiny_instance();
        let central = DualIterate::new(
            DVector::zeros(1),
            DVector::from_row_slice(&[1.0, 2.0]),
            2.0 / 3.0,
        );
        let mut ledger = CostLedger::default();
        let step = newton_step(&inst, &central, &IpmConfig::default(), None, &mut ledger).unwrap();
        assert!(step.dy.norm() < 1e-12);
        assert!(step.ds.norm() < 1e-12);
    }

    #[test]
    fn newton_step_quantum_matches_exact() {
        let g = generate_instance(&GenSpec::new(10, 5, 3)).unwrap();
        // Step off the central path so there is something to solve.
        let mut it = g.start.clone();
        it.mu *= 0.8;
        let mut l1 = CostLedger::default();
        let exact = newton_step(&g.instance, &it, &IpmConfig::default(), None, &mut l1).unwrap();
        let mut l2 = CostLedger::default();
        let qcfg = IpmConfig {
            solver: SolverKind::QuantumEmulated,
            ..Default::default()
        };
        let noise = NoiseModel::default().with_seed(5);
        let quantum = newton_step(&g.instance, &it, &qcfg, Some(&noise), &mut l2).unwrap();
        let dy_diff = (&exact.dy - &quantum.dy).norm();
        let ds_diff = (&exact.ds - &quantum.ds).norm();
        let scale = exact.dy.norm().max(1.0);
        assert!(dy_diff <= 1e-8 * scale, "dy diff {dy_diff:.3e}");
        assert!(
            ds_diff <= 1e-8 * exact.ds.norm().max(1.0),
            "ds diff {ds_diff:.3e}"
        );
        assert!(l2.qram_queries > 0.0);
    }

    #[test]
    fn step_consistency_first_block_row() {
        let g = generate_instance(&GenSpec::new(12, 6, 9)).unwrap();
        let mut it = g.start.clone();
        it.mu *= 0.85;
        for (solver, noise) in [
            (SolverKind::Exact, None),
            (
                SolverKind::QuantumEmulated,
                Some(NoiseModel::default().with_seed(8)),
            ),
            (SolverKind::CgBaseline, None),
        ] {
            let cfg = IpmConfig {
                solver,
                ..Default::default()
            };
            let mut ledger = CostLedger::default();
            let step = newton_step(&g.instance, &it, &cfg, noise.as_ref(), &mut ledger).unwrap();
            let xi_norm = step.xi.amax();
            assert!(
                xi_norm <= 10.0 * cfg.newton_tol,
                "{solver:?}: |ds + A'dy| = {xi_norm:.3e}"
            );
        }
    }

    #[test]
    fn proximity_examples() {
        let inst = tiny_instance();
        let mut ledger = CostLedger::default();
        let central = DualIterate::new(
            DVector::zeros(1),
            DVector::from_row_slice(&[1.0, 2.0]),
            2.0 / 3.0,
        );
        let d = proximity(&inst, &central, &mut ledger).unwrap();
        assert!(d < 1e-12, "central path proximity {d}");

        let it = DualIterate::new(DVector::zeros(1), DVector::from_row_slice(&[1.0, 2.0]), 1.0);
        let d = proximity(&inst, &it, &mut ledger).unwrap();
        assert!((d - 0.2f64.sqrt()).abs() < 1e-10, "delta = {d}");
        assert!(ledger.diagnostic_ops > 0.0);
        assert_eq!(ledger.qram_queries, 0.0);
    }

    #[test]
    fn proximity_zero_b_is_finite() {
        // b = 0: delta = |S^-1 A'(A S^-2 A')^-1 A S^-1 e| stays finite.
        let inst = LpInstance::new(
            "zero-b",
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_row_slice(&[0.0]),
            DVector::from_row_slice(&[1.0, 2.0]),
            true,
        )
        .unwrap();
        let it = DualIterate::new(DVector::zeros(1), DVector::from_row_slice(&[1.0, 2.0]), 1.0);
        let mut ledger = CostLedger::default();
        let d = proximity(&inst, &it, &mut ledger).unwrap();
        // Direct evaluation of the closed form.
        let s_inv_e = DVector::from_row_slice(&[1.0, 0.5]);
        let ne = normal_matrix(&inst, &it.s);
        let dy = s_inv_e.clone();
        let dy = (inst.a.clone() * dy)[0] / ne[(0, 0)];
        let ds = -(inst.a.transpose() * DVector::from_row_slice(&[dy]));
        let expect = ds.zip_map(&it.s, |a, b| a / b).norm();
        assert!((d - expect).abs() < 1e-10);
        assert!(d.is_finite());
    }

    #[test]
    fn proximity_variational_characterization() {
        // delta equals min over {x : Ax = b} of |S x / mu - e|; the
        // minimizer is the primal estimate, computed here independently via
        // the projection onto the affine set.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for seed in 0..40 {
            let g = generate_instance(&GenSpec::new(8, 3, seed)).unwrap();
            let mut it = g.start.clone();
            // Randomize the iterate while staying interior.
            it.mu *= rng.gen_range(0.5..0.95);
            for v in it.s.iter_mut() {
                *v *= rng.gen_range(0.9..1.1);
            }
            it.y = DVector::zeros(3); // y is immaterial to delta
            let mut ledger = CostLedger::default();
            let d = proximity(&g.instance, &it, &mut ledger).unwrap();

            // min |S x / mu - e| s.t. A x = b == |S^-1 ds| via projection:
            // substitute u = S x / mu, solve the equality-constrained
            // least-squares by normal equations on A S^-1.
            let a = &g.instance.a;
            let asinv = DMatrix::from_fn(3, 8, |i, j| a[(i, j)] / it.s[j]);
            let gram = &asinv * asinv.transpose();
            let target = &g.instance.b / it.mu - &asinv * DVector::from_element(8, 1.0);
            let lam = gram.clone().lu().solve(&target).unwrap();
            let u = DVector::from_element(8, 1.0) + asinv.transpose() * lam;
            let dist = (&u - DVector::from_element(8, 1.0)).norm();
            assert!(
                (d - dist).abs() < 1e-8 * (1.0 + dist),
                "seed {seed}: delta {d} vs variational {dist}"
            );
        }
    }

    #[test]
    fn quadratic_decrease_of_proximity() {
        // One exact full Newton step at fixed mu: delta_after <= delta^2 + 1e-8.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut checked = 0;
        'outer: for seed in 0..200 {
            if checked >= 100 {
                break;
            }
            let n = 4 + (seed as usize % 4) * 4;
            let m = n / 2;
            let g = generate_instance(&GenSpec::new(n, m, seed)).unwrap();
            let mut it = g.start.clone();
            // Perturb off the path until delta lands in (0.05, 0.9).
            for _ in 0..40 {
                let mut cand = it.clone();
                cand.mu *= rng.gen_range(0.4..0.98);
                for v in cand.s.iter_mut() {
                    *v *= 1.0 + rng.gen_range(-0.2..0.2);
                }
                if !cand.is_interior() {
                    continue;
                }
                let mut ledger = CostLedger::default();
                let Ok(d) = proximity(&g.instance, &cand, &mut ledger) else {
                    continue;
                };
                if d > 0.05 && d < 0.9 {
                    let step =
                        newton_step(&g.instance, &cand, &IpmConfig::default(), None, &mut ledger)
                            .unwrap();
                    let mut after = cand.clone();
                    after.y += &step.dy;
                    after.s += &step.ds;
                    assert!(after.is_interior(), "seed {seed}: step left interior");
                    let d_after = proximity(&g.instance, &after, &mut ledger).unwrap();
                    assert!(
                        d_after <= d * d + 1e-8,
                        "seed {seed}: delta {d:.4} -> {d_after:.4} > {:.4}",
                        d * d
                    );
                    checked += 1;
                    continue 'outer;
                }
                it = g.start.clone();
            }
        }
        assert!(checked >= 100, "only {checked} iterates checked");
    }

    #[test]
    fn perturbation_condition_examples() {
        let s0 = DVector::from_row_slice(&[1.0, 1.0]);
        let zero = DVector::zeros(2);
        let all_zero = check_perturbation_conditions(&s0, &zero, &zero, 0.4).unwrap();
        assert_eq!(all_zero.lhs1, 0.0);
        assert_eq!(all_zero.lhs2, 0.0);
        assert_eq!(all_zero.lhs3, 0.0);
        assert!(all_zero.pass);

        // r = (0.1, 0): lhs2 = 1 - (1/1.1)^2 ~ 0.1736 fails condition 2.
        let r = DVector::from_row_slice(&[0.1, 0.0]);
        let c = check_perturbation_conditions(&s0, &r, &zero, 1.0).unwrap();
        assert!((c.lhs2 - (1.0 - (1.0f64 / 1.1).powi(2))).abs() < 1e-12);
        assert!(!c.pass);

        // xi = (0.01, 0), delta~ = 0.5: lhs3 = 0.01 <= 0.0165 passes.
        let xi = DVector::from_row_slice(&[0.01, 0.0]);
        let c = check_perturbation_conditions(&s0, &zero, &xi, 0.5).unwrap();
        assert!((c.lhs3 - 0.01).abs() < 1e-15);
        assert!(c.pass);
    }

    #[test]
    fn run_iteration_count_matches_schedule() {
        let n = 16;
        let g = generate_instance(&GenSpec::new(n, n / 2, 1)).unwrap();
        let theta = 0.5 / (n as f64).sqrt();
        let cfg = IpmConfig {
            mu_min: g.start.mu * 1e-8,
            cond_every: 0,
            ..Default::default()
        };
        let run = ae_qipm_solve(&g.instance, &g.start, &cfg, None).unwrap();
        let expected = (1e8f64.ln() / -(1.0 - theta).ln()).ceil() as usize;
        assert_eq!(run.trace.iterations(), expected);
        // Gap bound holds at the final iterate.
        let mut ledger = CostLedger::default();
        let d = proximity(&g.instance, &run.iterate, &mut ledger).unwrap();
        assert!(gap_bound(n, run.iterate.mu, d) <= gap_bound(n, cfg.mu_min, 0.5));
    }

    #[test]
    fn generated_starts_sit_on_the_central_path() {
        let mut ledger = CostLedger::default();
        for seed in 0..10 {
            let g = generate_instance(&GenSpec::new(14, 6, seed)).unwrap();
            let d = proximity(&g.instance, &g.start, &mut ledger).unwrap();
            assert!(d <= 1e-10, "seed {seed}: start proximity {d:.3e}");
        }
    }

    #[test]
    fn central_start_first_iteration_skips() {
        let g = generate_instance(&GenSpec::new(8, 4, 2)).unwrap();
        let cfg = IpmConfig {
            mu_min: g.start.mu * 0.5,
            ..Default::default()
        };
        let run = ae_qipm_solve(&g.instance, &g.start, &cfg, None).unwrap();
        let first = &run.trace.records[0];
        assert!(first.skipped, "central start must skip the first solve");
        assert_eq!(first.qram_queries, 0.0);
        assert_eq!(first.classical_ops, 0.0);
    }

    #[test]
    fn delta_stays_below_half_with_default_theta() {
        for (n, seed) in [(16usize, 4u64), (32, 5), (64, 6)] {
            let g = generate_instance(&GenSpec::new(n, n / 2, seed)).unwrap();
            let cfg = IpmConfig {
                mu_min: g.start.mu * 1e-6,
                cond_every: 0,
                ..Default::default()
            };
            let run = ae_qipm_solve(&g.instance, &g.start, &cfg, None).unwrap();
            assert!(
                run.trace.max_delta() <= 0.5,
                "n={n}: max delta {}",
                run.trace.max_delta()
            );
        }
    }

    #[test]
    fn centrality_loss_is_reported_with_trace() {
        let g = generate_instance(&GenSpec::new(8, 4, 13)).unwrap();
        let mut far = g.start.clone();
        far.mu *= 1e-4; // far below the central value for this slack
        let cfg = IpmConfig::default();
        match ae_qipm_solve(&g.instance, &far, &cfg, None) {
            Err(QipmError::CentralityLoss { delta, .. }) => assert!(delta >= 0.5),
            other => panic!("expected centrality loss, got {other:?}"),
        }
    }

    #[test]
    fn drift_accounting_matches_recomputed_residual() {
        let g = generate_instance(&GenSpec::new(12, 6, 21)).unwrap();
        let cfg = IpmConfig {
            solver: SolverKind::QuantumEmulated,
            mu_min: g.start.mu * 1e-5,
            cond_every: 0,
            ..Default::default()
        };
        let noise = NoiseModel::default().with_seed(77);
        let run = ae_qipm_solve(&g.instance, &g.start, &cfg, Some(&noise)).unwrap();
        let recomputed = g
            .instance
            .dual_residual_compensated(&run.iterate.y, &run.iterate.s);
        let diff = (&recomputed - &run.iterate.drift).amax();
        assert!(diff <= 1e-12, "drift bookkeeping off by {diff:.3e}");
    }
}
