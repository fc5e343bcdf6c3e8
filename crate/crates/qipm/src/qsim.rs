//! Emulation of the quantum subroutines: state preparation, matrix
//! inversion, tomography read-out, norm estimation, and matrix-vector
//! products, all as noise-injected classical oracles with an attached
//! query-cost ledger.
//!
//! Quantum totals are *model* numbers (cost formulas evaluated at measured
//! event counts); classical totals are measured arithmetic-operation
//! counts. Reports keep the two kinds separate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QipmError, Result};
use crate::linalg::{condition_number, SymmetricSystem, SystemFactor};

/// How the injected error is bounded.
///
/// `ResidualSpace` bounds it relative to the current residual, which gives a
/// condition-number-independent contraction per pass (the behavior the
/// referenced solver construction achieves). `SolutionSpace` is the naive
/// relative read-out error; its contraction degrades with kappa, which is
/// exactly what experiments use it to demonstrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    SolutionSpace,
    ResidualSpace,
}

/// Parameters of the emulated quantum error channels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Relative direction error of extracted unit vectors.
    pub eps_tomo: f64,
    /// Relative error of norm estimates (active in solution-space mode;
    /// folded into the residual budget in residual-space mode so the
    /// contraction bound stays exact).
    pub eps_norm: f64,
    /// Componentwise relative error of emulated matrix-vector products.
    pub eps_matvec: f64,
    pub mode: NoiseMode,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            eps_tomo: 1e-2,
            eps_norm: 1e-2,
            eps_matvec: 0.0,
            mode: NoiseMode::ResidualSpace,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_tomo", self.eps_tomo),
            ("eps_norm", self.eps_norm),
            ("eps_matvec", self.eps_matvec),
        ] {
            if !(0.0..0.5).contains(&v) {
                return Err(QipmError::InvalidNoise { name, value: v });
            }
        }
        Ok(())
    }

    pub fn zero() -> Self {
        Self {
            eps_tomo: 0.0,
            eps_norm: 0.0,
            eps_matvec: 0.0,
            mode: NoiseMode::ResidualSpace,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Deterministic noise stream for one run.
pub struct NoiseState {
    pub model: NoiseModel,
    rng: ChaCha8Rng,
}

impl NoiseState {
    pub fn new(model: NoiseModel) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            model,
        })
    }

    fn standard_normal(&mut self) -> f64 {
        // Box-Muller; u1 bounded away from zero.
        let u1: f64 = self.rng.gen_range(1e-300..1.0);
        let u2: f64 = self.rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn unit_vector(&mut self, dim: usize) -> DVector<f64> {
        loop {
            let v = DVector::from_fn(dim, |_, _| self.standard_normal());
            let n = v.norm();
            if n > 1e-12 {
                return v / n;
            }
        }
    }

    /// Multiplicative factor 1 + rho with |rho| <= eps/(1+eps); the slight
    /// shrink keeps the product of two such factors within 1 +- 2 eps.
    fn norm_factor(&mut self) -> f64 {
        let e = self.model.eps_norm;
        if e == 0.0 {
            return 1.0;
        }
        let bound = e / (1.0 + e);
        1.0 + self.rng.gen_range(-bound..=bound)
    }
}

// ---------------------------------------------------------------------------
// Cost ledger
// ---------------------------------------------------------------------------

/// Configurable constants in front of the cost formulas.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostModel {
    pub c_tomography: f64,
    pub c_norm_estimate: f64,
    pub c_matvec: f64,
    /// Precision the polylog matvec formula is evaluated at when the
    /// injected matvec error is zero: the working precision demanded of the
    /// state preparation (an exact emulated product still only needs to be
    /// as accurate as the solve consuming it).
    pub matvec_eps_floor: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            c_tomography: 1.0,
            c_norm_estimate: 1.0,
            c_matvec: 1.0,
            matvec_eps_floor: 1e-10,
        }
    }
}

/// Formula inputs recorded with each quantum event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventInputs {
    pub dim: usize,
    pub kappa: f64,
    pub frob_a: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// One M^-1 application plus tomography read-out.
    TomographySolve,
    /// One norm estimation.
    NormEstimate,
    /// One emulated quantum matrix-vector product.
    QuantumMatvec,
    /// Classical vector arithmetic (solution updates, summations).
    ClassicalVectorOps,
    /// Classical factorization / direct-solve work.
    ClassicalFactorization,
    /// Classical CG matrix-vector work.
    ClassicalMatvec,
    /// Diagnostic-only classical work (proximity, condition numbers);
    /// tallied separately so it never pollutes the algorithmic counts.
    Diagnostic,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::TomographySolve => "tomography_solve",
            EventKind::NormEstimate => "norm_estimate",
            EventKind::QuantumMatvec => "quantum_matvec",
            EventKind::ClassicalVectorOps => "classical_vector_ops",
            EventKind::ClassicalFactorization => "classical_factorization",
            EventKind::ClassicalMatvec => "classical_matvec",
            EventKind::Diagnostic => "diagnostic",
        }
    }
}

/// One (possibly coalesced) ledger entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub kind: EventKind,
    pub count: u64,
    /// Modeled QRAM queries contributed by this entry.
    pub queries: f64,
    /// Same formula evaluated at kappa = frob_a = 1; used for
    /// dimension-scaling fits.
    pub queries_unit: f64,
    /// Measured classical arithmetic operations contributed.
    pub ops: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inputs: Option<EventInputs>,
}

/// System facts the cost formulas need.
#[derive(Debug, Clone, Copy)]
pub struct CostInfo {
    pub dim: usize,
    pub kappa: f64,
    pub frob_a: f64,
}

/// Query/arithmetic tally. Accumulators always equal the sum of their
/// events; the ledger never decreases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostLedger {
    pub cost_model: CostModel,
    pub qram_queries: f64,
    pub qram_queries_unit: f64,
    pub classical_ops: f64,
    pub diagnostic_ops: f64,
    pub events: Vec<LedgerEvent>,
    /// Events below this index are frozen (a mark was taken); coalescing
    /// never reaches across, so ledger deltas stay self-consistent.
    #[serde(skip)]
    sealed: usize,
}

impl Default for CostLedger {
    fn default() -> Self {
        Self::new(CostModel::default())
    }
}

impl CostLedger {
    pub fn new(cost_model: CostModel) -> Self {
        Self {
            cost_model,
            qram_queries: 0.0,
            qram_queries_unit: 0.0,
            classical_ops: 0.0,
            diagnostic_ops: 0.0,
            events: Vec::new(),
            sealed: 0,
        }
    }

    fn push_counted(
        &mut self,
        kind: EventKind,
        count: u64,
        queries: f64,
        queries_unit: f64,
        ops: f64,
        inputs: Option<EventInputs>,
    ) {
        self.qram_queries += queries;
        self.qram_queries_unit += queries_unit;
        if kind == EventKind::Diagnostic {
            self.diagnostic_ops += ops;
        } else {
            self.classical_ops += ops;
        }
        if self.events.len() > self.sealed {
            if let Some(last) = self.events.last_mut() {
                if last.kind == kind && last.inputs == inputs {
                    last.count += count;
                    last.queries += queries;
                    last.queries_unit += queries_unit;
                    last.ops += ops;
                    return;
                }
            }
        }
        self.events.push(LedgerEvent {
            kind,
            count,
            queries,
            queries_unit,
            ops,
            inputs,
        });
    }

    fn push(
        &mut self,
        kind: EventKind,
        queries: f64,
        queries_unit: f64,
        ops: f64,
        inputs: Option<EventInputs>,
    ) {
        self.push_counted(kind, 1, queries, queries_unit, ops, inputs);
    }

    /// c * (dim / eps) * kappa * |A|_F queries for one inverse application
    /// plus tomography read-out.
    pub fn charge_tomography(&mut self, info: &CostInfo, eps_tomo: f64) {
        let eps = eps_tomo.max(f64::EPSILON);
        let unit = self.cost_model.c_tomography * info.dim as f64 / eps;
        let queries = unit * info.kappa * info.frob_a;
        self.push(
            EventKind::TomographySolve,
            queries,
            unit,
            0.0,
            Some(EventInputs {
                dim: info.dim,
                kappa: info.kappa,
                frob_a: info.frob_a,
                eps,
            }),
        );
    }

    /// c * kappa * |A|_F queries per norm estimation.
    pub fn charge_norm_estimate(&mut self, info: &CostInfo, eps_norm: f64) {
        let eps = eps_norm.max(f64::EPSILON);
        let unit = self.cost_model.c_norm_estimate;
        let queries = unit * info.kappa * info.frob_a;
        self.push(
            EventKind::NormEstimate,
            queries,
            unit,
            0.0,
            Some(EventInputs {
                dim: info.dim,
                kappa: info.kappa,
                frob_a: info.frob_a,
                eps,
            }),
        );
    }

    /// Polylog queries per emulated matrix-vector product: c * log2(dim/eps)^2.
    pub fn charge_quantum_matvec(&mut self, info: &CostInfo, eps_matvec: f64) {
        let eps = eps_matvec
            .max(self.cost_model.matvec_eps_floor)
            .max(f64::EPSILON);
        let l = (info.dim as f64 / eps).log2().max(1.0);
        let unit = self.cost_model.c_matvec * l * l;
        self.push(
            EventKind::QuantumMatvec,
            unit,
            unit,
            0.0,
            Some(EventInputs {
                dim: info.dim,
                kappa: info.kappa,
                frob_a: info.frob_a,
                eps,
            }),
        );
    }

    /// Measured classical arithmetic operations.
    pub fn charge_classical(&mut self, kind: EventKind, ops: f64) {
        self.push(kind, 0.0, 0.0, ops, None);
    }

    /// Measured classical operations carrying an explicit unit count (for
    /// example CG matrix-vector products).
    pub fn charge_classical_counted(&mut self, kind: EventKind, count: u64, ops: f64) {
        self.push_counted(kind, count, 0.0, 0.0, ops, None);
    }

    pub fn charge_diagnostic(&mut self, ops: f64) {
        self.push(EventKind::Diagnostic, 0.0, 0.0, ops, None);
    }

    /// Merge another ledger's events (associative; used to combine
    /// parallel benchmark runs).
    pub fn merge(&mut self, other: &CostLedger) {
        self.qram_queries += other.qram_queries;
        self.qram_queries_unit += other.qram_queries_unit;
        self.classical_ops += other.classical_ops;
        self.diagnostic_ops += other.diagnostic_ops;
        self.events.extend(other.events.iter().cloned());
    }

    /// Total event count of one kind.
    pub fn count_of(&self, kind: EventKind) -> u64 {
        self.events
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.count)
            .sum()
    }

    /// Take a delta mark; seals the event list so later charges cannot
    /// coalesce into pre-mark entries.
    pub fn mark(&mut self) -> LedgerMark {
        self.sealed = self.events.len();
        LedgerMark {
            qram_queries: self.qram_queries,
            qram_queries_unit: self.qram_queries_unit,
            classical_ops: self.classical_ops,
            diagnostic_ops: self.diagnostic_ops,
            events: self.events.len(),
        }
    }

    /// Ledger slice accumulated since `mark`.
    pub fn delta_since(&self, mark: &LedgerMark) -> CostLedger {
        CostLedger {
            cost_model: self.cost_model,
            qram_queries: self.qram_queries - mark.qram_queries,
            qram_queries_unit: self.qram_queries_unit - mark.qram_queries_unit,
            classical_ops: self.classical_ops - mark.classical_ops,
            diagnostic_ops: self.diagnostic_ops - mark.diagnostic_ops,
            events: self.events[mark.events.min(self.events.len())..].to_vec(),
            sealed: 0,
        }
    }

    /// Export per the ledger JSON schema.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "qram_queries": self.qram_queries,
            "classical_ops": self.classical_ops,
            "events": self.events.iter().map(|e| serde_json::json!({
                "kind": e.kind.name(),
                "count": e.count,
                "queries": e.queries,
                "ops": e.ops,
                "inputs": e.inputs.map(|i| serde_json::json!({
                    "n": i.dim, "kappa": i.kappa, "frob_a": i.frob_a, "eps": i.eps,
                })),
            })).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LedgerMark {
    qram_queries: f64,
    qram_queries_unit: f64,
    classical_ops: f64,
    diagnostic_ops: f64,
    events: usize,
}

/// Totals plus per-event-kind breakdown; quantum numbers are modeled,
/// classical numbers are measured, and the report says so.
#[derive(Debug, Clone, Serialize)]
pub struct LedgerReport {
    pub qram_queries: f64,
    pub qram_queries_unit: f64,
    pub classical_ops: f64,
    pub diagnostic_ops: f64,
    pub breakdown: Vec<BreakdownRow>,
    pub banner: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BreakdownRow {
    pub kind: &'static str,
    pub count: u64,
    pub queries: f64,
    pub ops: f64,
}

pub const COST_BANNER: &str = "qram_queries are MODEL numbers (cost formulas x measured event \
counts); classical_ops are MEASURED arithmetic operations";

/// Summarize a finalized ledger.
pub fn ledger_report(ledger: &CostLedger, n: usize, kappa: f64, frob_norm: f64) -> LedgerReport {
    use std::collections::BTreeMap;
    let mut by_kind: BTreeMap<EventKind, BreakdownRow> = BTreeMap::new();
    for e in &ledger.events {
        let row = by_kind.entry(e.kind).or_insert(BreakdownRow {
            kind: e.kind.name(),
            count: 0,
            queries: 0.0,
            ops: 0.0,
        });
        row.count += e.count;
        row.queries += e.queries;
        row.ops += e.ops;
    }
    LedgerReport {
        qram_queries: ledger.qram_queries,
        qram_queries_unit: ledger.qram_queries_unit,
        classical_ops: ledger.classical_ops,
        diagnostic_ops: ledger.diagnostic_ops,
        breakdown: by_kind.into_values().collect(),
        banner: format!("{COST_BANNER}; context: n={n}, kappa={kappa:.3e}, |A|_F={frob_norm:.3e}"),
    }
}

// ---------------------------------------------------------------------------
// Quantum oracles
// ---------------------------------------------------------------------------

/// Emulated quantum matrix-vector product: (M z) with a componentwise
/// relative perturbation bounded by eps_matvec (exact when zero). Charged at
/// polylog query cost; no classical operations.
pub fn quantum_matvec(
    m: &DMatrix<f64>,
    z: &DVector<f64>,
    state: &mut NoiseState,
    ledger: &mut CostLedger,
    info: &CostInfo,
) -> DVector<f64> {
    let mut out = m * z;
    let eps = state.model.eps_matvec;
    if eps > 0.0 {
        for v in out.iter_mut() {
            let rho = state.rng.gen_range(-eps..=eps);
            *v *= 1.0 + rho;
        }
    }
    ledger.charge_quantum_matvec(info, eps);
    out
}

/// Apply M^-1 to the normalized residual and read the result out through
/// the tomography channel: returns a unit direction and a norm estimate.
pub fn noisy_unit_solve(
    sys: &SymmetricSystem,
    r: &DVector<f64>,
    state: &mut NoiseState,
    ledger: &mut CostLedger,
    info: &CostInfo,
) -> Result<(DVector<f64>, f64)> {
    let factor = SystemFactor::new(sys)?;
    noisy_unit_solve_factored(&factor, r, state, ledger, info)
}

fn noisy_unit_solve_factored(
    factor: &SystemFactor<'_>,
    r: &DVector<f64>,
    state: &mut NoiseState,
    ledger: &mut CostLedger,
    info: &CostInfo,
) -> Result<(DVector<f64>, f64)> {
    let rn = r.norm();
    if rn == 0.0 {
        return Err(QipmError::InvalidConfig(
            "noisy_unit_solve needs a nonzero residual".into(),
        ));
    }
    let dim = r.len();
    let eps = state.model.eps_tomo;

    let (u_hat, norm_est) = match state.model.mode {
        NoiseMode::ResidualSpace => {
            // All channel error folds into a right-hand-side perturbation
            // bounded relative to the residual; the resulting correction is
            // exactly M^-1 (r + w) with |w| <= eps |r|.
            let rhs = if eps > 0.0 {
                let scale: f64 = state.rng.gen_range(0.3..1.0);
                let w = state.unit_vector(dim) * (eps * scale * rn);
                (r + w) / rn
            } else {
                r / rn
            };
            let p = factor.solve(&rhs);
            let pn = p.norm();
            (p / pn, pn)
        }
        NoiseMode::SolutionSpace => {
            let p = factor.solve(&(r / rn));
            let pn = p.norm();
            let p_hat = p / pn;
            let u_hat = if eps > 0.0 && dim > 1 {
                // Rotate by an exact chord length t <= eps_tomo.
                let t = eps * state.rng.gen_range(0.0..1.0);
                let mut d = state.unit_vector(dim);
                let mut d_perp = &d - &p_hat * d.dot(&p_hat);
                let mut guard = 0;
                while d_perp.norm() < 1e-12 && guard < 8 {
                    d = state.unit_vector(dim);
                    d_perp = &d - &p_hat * d.dot(&p_hat);
                    guard += 1;
                }
                if d_perp.norm() < 1e-12 {
                    p_hat.clone()
                } else {
                    d_perp /= d_perp.norm();
                    let alpha = 2.0 * (t / 2.0).asin();
                    &p_hat * alpha.cos() + d_perp * alpha.sin()
                }
            } else {
                p_hat
            };
            (u_hat, pn * state.norm_factor())
        }
    };

    ledger.charge_tomography(info, eps);
    Ok((u_hat, norm_est))
}

/// Options for the inner iteratively refined solve.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Desk-scale stand-in for the 2^-4L step threshold.
    pub tol: f64,
    /// Componentwise targets for the leading residual components (the
    /// dual-feasibility block of Newton systems): iterate until
    /// |r_i| <= upper_targets[i] for every covered row.
    pub upper_targets: Option<DVector<f64>>,
    pub max_iterations: usize,
}

impl SolveOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            upper_targets: None,
            max_iterations: 1000,
        }
    }
}

/// Outcome of [`refined_linear_solve`].
#[derive(Debug, Clone)]
pub struct LinearSolveReport {
    pub solution: DVector<f64>,
    /// Number of corrections applied.
    pub iterations: usize,
    /// Residual norms, starting with |sigma|.
    pub residual_history: Vec<f64>,
    pub ledger_delta: CostLedger,
}

/// Iteratively refined linear solve with emulated quantum subroutines.
///
/// z0 = 0; each pass computes r = sigma - M z through the quantum matvec,
/// extracts a unit direction and norm estimates for M^-1 r, and applies the
/// correction z <- z + n_r * n_p * u_hat (which is M^-1 r in the noiseless
/// limit). Stops when the applied correction norm falls to `tol`; raises a
/// diverging-solver error when the residual fails to contract for three
/// consecutive passes or the iteration cap is hit.
pub fn refined_linear_solve(
    sys: &SymmetricSystem,
    sigma: &DVector<f64>,
    tol: f64,
    noise: &NoiseModel,
    ledger: &mut CostLedger,
) -> Result<LinearSolveReport> {
    let mut state = NoiseState::new(*noise)?;
    let info = CostInfo {
        dim: sys.dim(),
        kappa: condition_number(sys),
        frob_a: sys.matrix().norm(),
    };
    refined_linear_solve_with(
        sys,
        sigma,
        SolveOptions::new(tol),
        &mut state,
        ledger,
        &info,
    )
}

pub fn refined_linear_solve_with(
    sys: &SymmetricSystem,
    sigma: &DVector<f64>,
    opts: SolveOptions,
    state: &mut NoiseState,
    ledger: &mut CostLedger,
    info: &CostInfo,
) -> Result<LinearSolveReport> {
    let dim = sys.dim();
    if sigma.len() != dim {
        return Err(QipmError::DimensionMismatch {
            context: "refined_linear_solve rhs",
            expected: dim,
            got: sigma.len(),
        });
    }
    let mark = ledger.mark();
    if state.model.mode == NoiseMode::SolutionSpace {
        // The worst-case contraction bound kappa * (eps_tomo + 2 eps_norm)
        // must stay below one, or convergence cannot be certified; refuse
        // such runs rather than looping on a non-contracting residual.
        let eps_eff = state.model.eps_tomo + 2.0 * state.model.eps_norm;
        let kappa = condition_number(sys);
        if kappa * eps_eff >= 1.0 {
            return Err(QipmError::DivergingSolver {
                kappa_eps: kappa * eps_eff,
                iterations: 0,
            });
        }
    }
    let factor = SystemFactor::new(sys)?;
    let sigma_norm = sigma.norm();
    let mut z = DVector::zeros(dim);
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0usize;
    let mut stall = 0usize;
    let mut last_step = f64::INFINITY;

    loop {
        let mz = quantum_matvec(sys.matrix(), &z, state, ledger, info);
        let r = sigma - mz;
        ledger.charge_classical(EventKind::ClassicalVectorOps, dim as f64);
        let rn = r.norm();
        if let Some(prev) = history.last() {
            if rn >= *prev {
                stall += 1;
            } else {
                stall = 0;
            }
        }
        history.push(rn);

        let upper_ok = match &opts.upper_targets {
            Some(targets) => (0..targets.len()).all(|i| r[i].abs() <= targets[i]),
            None => true,
        };
        // Residual at relative machine floor: converged.
        if rn <= 1e-13 * sigma_norm.max(1e-300) && upper_ok {
            break;
        }
        if iterations > 0 && last_step <= opts.tol && upper_ok {
            break;
        }
        if stall >= 3 || iterations >= opts.max_iterations {
            let eps_eff = match state.model.mode {
                NoiseMode::ResidualSpace => state.model.eps_tomo,
                NoiseMode::SolutionSpace => state.model.eps_tomo + 2.0 * state.model.eps_norm,
            };
            return Err(QipmError::DivergingSolver {
                kappa_eps: info.kappa * eps_eff,
                iterations,
            });
        }

        let (u_hat, p_norm) = noisy_unit_solve_factored(&factor, &r, state, ledger, info)?;
        // Norm estimates of |p| and |r|.
        let r_norm_est = match state.model.mode {
            NoiseMode::ResidualSpace => rn,
            NoiseMode::SolutionSpace => rn * state.norm_factor(),
        };
        ledger.charge_norm_estimate(info, state.model.eps_norm);
        ledger.charge_norm_estimate(info, state.model.eps_norm);

        let correction = u_hat * (p_norm * r_norm_est);
        last_step = correction.norm();
        z += correction;
        ledger.charge_classical(EventKind::ClassicalVectorOps, 3.0 * dim as f64);
        iterations += 1;
    }

    Ok(LinearSolveReport {
        solution: z,
        iterations,
        residual_history: history,
        ledger_delta: ledger.delta_since(&mark),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{exact_solve, SystemKind};
    use rand::Rng;

    fn spd_system(dim: usize, rng: &mut ChaCha8Rng) -> SymmetricSystem {
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..i {
                let v: f64 = rng.gen_range(-0.3..0.3);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            m[(i, i)] = rng.gen_range(1.0..2.0);
        }
        SymmetricSystem::new(m, SystemKind::NormalEquations).unwrap()
    }

    fn unit_info(sys: &SymmetricSystem) -> CostInfo {
        CostInfo {
            dim: sys.dim(),
            kappa: 1.0,
            frob_a: 1.0,
        }
    }

    #[test]
    fn zero_noise_matches_exact_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..100 {
            let dim = 2 + seed % 13;
            let sys = spd_system(dim, &mut rng);
            let sigma = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            let mut ledger = CostLedger::default();
            let report =
                refined_linear_solve(&sys, &sigma, 1e-10, &NoiseModel::zero(), &mut ledger)
                    .unwrap();
            let exact = exact_solve(&sys, &sigma).unwrap();
            let diff = (&report.solution - &exact).norm();
            assert!(
                diff <= 1e-12 * exact.norm().max(1.0),
                "seed {seed}: {diff:.3e}"
            );
            assert_eq!(report.iterations, 1, "zero noise solves in one pass");
        }
    }

    #[test]
    fn residual_space_contraction_is_bounded_by_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..100 {
            let dim = 2 + seed % 11;
            let sys = spd_system(dim, &mut rng);
            let sigma = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            let noise = NoiseModel {
                eps_tomo: 0.1,
                mode: NoiseMode::ResidualSpace,
                ..NoiseModel::default()
            }
            .with_seed(seed as u64);
            let mut ledger = CostLedger::default();
            let report = refined_linear_solve(&sys, &sigma, 1e-10, &noise, &mut ledger).unwrap();
            for pair in report.residual_history.windows(2) {
                if pair[0] > 0.0 {
                    let ratio = pair[1] / pair[0];
                    assert!(
                        ratio <= 0.1 + 1e-8,
                        "seed {seed}: ratio {ratio} exceeds eps"
                    );
                }
            }
        }
    }

    #[test]
    fn identity_residual_ratios_at_most_point_eleven() {
        let sys =
            SymmetricSystem::new(DMatrix::identity(4, 4), SystemKind::NormalEquations).unwrap();
        let mut e1 = DVector::zeros(4);
        e1[0] = 1.0;
        for seed in 0..100u64 {
            let noise = NoiseModel {
                eps_tomo: 0.1,
                mode: NoiseMode::ResidualSpace,
                ..NoiseModel::default()
            }
            .with_seed(seed);
            let mut ledger = CostLedger::default();
            let report = refined_linear_solve(&sys, &e1, 1e-10, &noise, &mut ledger).unwrap();
            for pair in report.residual_history.windows(2) {
                if pair[0] > 1e-299 {
                    assert!(pair[1] / pair[0] <= 0.11, "seed {seed}");
                }
            }
            assert!(
                report.iterations <= 11,
                "seed {seed}: {}",
                report.iterations
            );
        }
    }

    #[test]
    fn solution_space_contraction_bounded_by_kappa_times_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..60 {
            let dim = 3 + seed % 9;
            let sys = spd_system(dim, &mut rng);
            let kappa = condition_number(&sys);
            let noise = NoiseModel {
                eps_tomo: 0.02,
                eps_norm: 0.01,
                mode: NoiseMode::SolutionSpace,
                ..NoiseModel::default()
            }
            .with_seed(seed as u64);
            let bound = kappa * (noise.eps_tomo + 2.0 * noise.eps_norm) + 1e-8;
            if bound >= 0.9 {
                continue;
            }
            let sigma = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            let mut ledger = CostLedger::default();
            let report = refined_linear_solve(&sys, &sigma, 1e-10, &noise, &mut ledger).unwrap();
            for pair in report.residual_history.windows(2) {
                if pair[0] > 1e-290 {
                    let ratio = pair[1] / pair[0];
                    assert!(
                        ratio <= bound,
                        "seed {seed}: ratio {ratio:.4} vs bound {bound:.4}"
                    );
                }
            }
        }
    }

    #[test]
    fn unit_direction_error_bounded() {
        // M = I, r = e1: extracted direction within 2 eps of e1.
        let sys =
            SymmetricSystem::new(DMatrix::identity(3, 3), SystemKind::NormalEquations).unwrap();
        let mut e1 = DVector::zeros(3);
        e1[0] = 1.0;
        for seed in 0..50u64 {
            for mode in [NoiseMode::SolutionSpace, NoiseMode::ResidualSpace] {
                let noise = NoiseModel {
                    eps_tomo: 0.05,
                    mode,
                    ..NoiseModel::default()
                }
                .with_seed(seed);
                let mut state = NoiseState::new(noise).unwrap();
                let mut ledger = CostLedger::default();
                let info = unit_info(&sys);
                let (u_hat, _) =
                    noisy_unit_solve(&sys, &e1, &mut state, &mut ledger, &info).unwrap();
                assert!(
                    (u_hat - &e1).norm() <= 2.0 * 0.05 + 1e-12,
                    "seed {seed} mode {mode:?}"
                );
            }
        }
    }

    #[test]
    fn augmented_3x3_default_noise_matches_exact() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        let sys = SymmetricSystem::new(m, SystemKind::Augmented).unwrap();
        let sigma = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let mut ledger = CostLedger::default();
        let report =
            refined_linear_solve(&sys, &sigma, 1e-10, &NoiseModel::default(), &mut ledger).unwrap();
        let exact = exact_solve(&sys, &sigma).unwrap();
        let diff = (&report.solution - &exact).norm();
        assert!(diff <= 1e-9, "noisy solve differs by {diff:.3e}");
    }

    #[test]
    fn determinism_same_seed_same_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let sys = spd_system(6, &mut rng);
        let sigma = DVector::from_fn(6, |i, _| (i as f64 + 1.0).sin());
        let noise = NoiseModel::default().with_seed(42);
        let mut l1 = CostLedger::default();
        let mut l2 = CostLedger::default();
        let r1 = refined_linear_solve(&sys, &sigma, 1e-10, &noise, &mut l1).unwrap();
        let r2 = refined_linear_solve(&sys, &sigma, 1e-10, &noise, &mut l2).unwrap();
        assert_eq!(r1.solution, r2.solution);
        assert_eq!(r1.residual_history, r2.residual_history);
        assert_eq!(l1.qram_queries, l2.qram_queries);
        assert_eq!(l1.classical_ops, l2.classical_ops);
    }

    #[test]
    fn diverging_error_on_bad_kappa_eps() {
        // Spread spectrum makes kappa * eps > 1; every constructed case must
        // raise the diverging-solver error, never loop forever.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut raised = 0;
        for seed in 0..100u64 {
            let dim = 8;
            let mut m = DMatrix::zeros(dim, dim);
            for i in 0..dim {
                m[(i, i)] = if i == 0 { 50.0 } else { 1.0 };
            }
            let sys = SymmetricSystem::new(m, SystemKind::NormalEquations).unwrap();
            let sigma = DVector::from_fn(dim, |_, _| rng.gen_range(0.5..1.0));
            let noise = NoiseModel {
                eps_tomo: 0.1,
                eps_norm: 0.0,
                mode: NoiseMode::SolutionSpace,
                ..NoiseModel::default()
            }
            .with_seed(seed);
            let mut ledger = CostLedger::default();
            match refined_linear_solve(&sys, &sigma, 1e-10, &noise, &mut ledger) {
                Err(QipmError::DivergingSolver { kappa_eps, .. }) => {
                    assert!(kappa_eps > 1.0, "seed {seed}: kappa_eps = {kappa_eps}");
                    raised += 1;
                }
                Err(other) => panic!("seed {seed}: unexpected error {other}"),
                Ok(_) => {}
            }
        }
        assert_eq!(raised, 100, "all bad cases must raise the diverging error");
    }

    #[test]
    fn iteration_count_within_log_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..50 {
            let dim = 2 + seed % 7;
            let sys = spd_system(dim, &mut rng);
            let sigma = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            let eps = 0.1;
            let noise = NoiseModel {
                eps_tomo: eps,
                mode: NoiseMode::ResidualSpace,
                ..NoiseModel::default()
            }
            .with_seed(seed as u64);
            let tol = 1e-8;
            let mut ledger = CostLedger::default();
            let report = refined_linear_solve(&sys, &sigma, tol, &noise, &mut ledger).unwrap();
            let bound = ((tol / sigma.norm()).ln() / eps.ln()).ceil() as usize + 1;
            assert!(
                report.iterations <= bound + 1,
                "seed {seed}: {} > {}",
                report.iterations,
                bound + 1
            );
        }
    }

    #[test]
    fn quantum_matvec_examples() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let mut state = NoiseState::new(NoiseModel::zero()).unwrap();
        let mut ledger = CostLedger::default();
        let info = CostInfo {
            dim: 2,
            kappa: 1.0,
            frob_a: 1.0,
        };
        let zero = quantum_matvec(&m, &DVector::zeros(2), &mut state, &mut ledger, &info);
        assert_eq!(zero[0], 0.0);
        let out = quantum_matvec(
            &m,
            &DVector::from_vec(vec![1.0, 1.0]),
            &mut state,
            &mut ledger,
            &info,
        );
        assert_eq!(out[0], 2.0);
        assert_eq!(ledger.classical_ops, 0.0, "matvec charges no classical ops");
        assert!(ledger.qram_queries > 0.0);
    }

    #[test]
    fn ledger_formula_and_additivity() {
        // Empty ledger: zeros.
        let empty = CostLedger::default();
        assert_eq!(empty.qram_queries, 0.0);
        assert_eq!(empty.classical_ops, 0.0);
        // One tomography event at n=4, kappa=1, |A|_F=1, eps=1e-2 -> 400.
        let mut one = CostLedger::default();
        one.charge_tomography(
            &CostInfo {
                dim: 4,
                kappa: 1.0,
                frob_a: 1.0,
            },
            1e-2,
        );
        assert!((one.qram_queries - 400.0).abs() < 1e-9);
        // Merge is additive.
        let mut a = one.clone();
        a.charge_classical(EventKind::ClassicalVectorOps, 7.0);
        let mut b = CostLedger::default();
        b.charge_tomography(
            &CostInfo {
                dim: 8,
                kappa: 2.0,
                frob_a: 3.0,
            },
            1e-2,
        );
        let mut merged = a.clone();
        merged.merge(&b);
        assert!((merged.qram_queries - (a.qram_queries + b.qram_queries)).abs() < 1e-9);
        assert!((merged.classical_ops - (a.classical_ops + b.classical_ops)).abs() < 1e-9);
        // Accumulators equal the sum over events.
        let sum_q: f64 = merged.events.iter().map(|e| e.queries).sum();
        assert!((sum_q - merged.qram_queries).abs() < 1e-9);
    }

    #[test]
    fn ledger_deltas_are_self_consistent_across_marks() {
        let info = CostInfo {
            dim: 4,
            kappa: 1.0,
            frob_a: 1.0,
        };
        let mut ledger = CostLedger::default();
        ledger.charge_tomography(&info, 1e-2);
        let mark = ledger.mark();
        // Same kind and inputs as the pre-mark event: must not merge back.
        ledger.charge_tomography(&info, 1e-2);
        ledger.charge_classical(EventKind::ClassicalVectorOps, 5.0);
        let delta = ledger.delta_since(&mark);
        let sum_q: f64 = delta.events.iter().map(|e| e.queries).sum();
        let sum_ops: f64 = delta.events.iter().map(|e| e.ops).sum();
        assert!((sum_q - delta.qram_queries).abs() < 1e-9);
        assert!((sum_ops - delta.classical_ops).abs() < 1e-9);
        assert_eq!(delta.count_of(EventKind::TomographySolve), 1);
    }

    #[test]
    fn report_separates_modeled_and_measured() {
        let mut ledger = CostLedger::default();
        ledger.charge_tomography(
            &CostInfo {
                dim: 4,
                kappa: 1.0,
                frob_a: 1.0,
            },
            1e-2,
        );
        ledger.charge_classical(EventKind::ClassicalVectorOps, 12.0);
        ledger.charge_diagnostic(99.0);
        let report = ledger_report(&ledger, 4, 1.0, 1.0);
        assert_eq!(report.classical_ops, 12.0);
        assert_eq!(report.diagnostic_ops, 99.0);
        assert!(report.banner.contains("MODEL"));
        assert_eq!(report.breakdown.len(), 3);
    }
}
