//! Experiment harness: cost-scaling study, condition-number study, and
//! deterministic CSV/SVG report emission.
//!
//! Quantum query totals are model-composed (cost formulas evaluated at
//! measured event counts); classical operation totals are measured. Every
//! report carries that banner. Wall-clock timings go to the log, never into
//! the CSVs, so re-running a study reproduces its reports byte-identically.

mod plot;

pub use plot::{emit_plot, render, spec_for_kind, PlotSpec};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{QipmError, Result};
use crate::ipm::{ae_qipm_solve, IpmConfig, SolverKind};
use crate::lp::{generate_instance, GenSpec};
use crate::qsim::{EventKind, NoiseModel, COST_BANNER};
use crate::refine::{ir_ae_qipm, RefineConfig};

/// Least-squares slope of ln(y) against ln(x).
pub fn fit_loglog(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

// ---------------------------------------------------------------------------
// Scaling study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ScalingSpec {
    /// Ascending problem sizes; the smallest is excluded from slope fits
    /// (warm-up constants dominate it).
    pub n_list: Vec<usize>,
    pub m_ratio: f64,
    pub seeds: Vec<u64>,
    pub zeta: f64,
    pub zeta_tilde: f64,
    pub noise: NoiseModel,
    pub newton_tol: f64,
}

impl Default for ScalingSpec {
    fn default() -> Self {
        Self {
            n_list: vec![32, 64, 128, 256],
            m_ratio: 0.5,
            seeds: vec![1, 2],
            zeta: 1e-8,
            zeta_tilde: 1e-2,
            noise: NoiseModel::default(),
            newton_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub mode: &'static str,
    pub ipm_iterations: usize,
    pub inner_iterations: u64,
    pub qram_queries: f64,
    pub qram_queries_unit: f64,
    pub classical_ops: f64,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingSlopes {
    /// IPM iterations vs n (quantum rows).
    pub ipm_iterations: f64,
    /// Dimension-normalized modeled queries vs n (quantum rows); the
    /// composition the theory predicts to scale as n^1.5.
    pub qram_queries_unit: f64,
    /// Raw model totals (kappa and |A|_F factors included).
    pub qram_queries_model: f64,
    /// Measured classical operations vs n for the CG baseline.
    pub classical_cg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub slopes: ScalingSlopes,
    pub banner: String,
    pub failures: usize,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,m,seed,mode,ipm_iterations,inner_iterations,qram_queries,qram_queries_unit,classical_ops,status\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.n,
                r.m,
                r.seed,
                r.mode,
                r.ipm_iterations,
                r.inner_iterations,
                r.qram_queries,
                r.qram_queries_unit,
                r.classical_ops,
                r.status
            ));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "metric,slope\nipm_iterations,{}\nqram_queries_unit,{}\nqram_queries_model,{}\nclassical_ops_cg,{}\n",
            self.slopes.ipm_iterations,
            self.slopes.qram_queries_unit,
            self.slopes.qram_queries_model,
            self.slopes.classical_cg
        )
    }
}

/// Run the refinement pipeline at each size in quantum-emulated and
/// CG-baseline modes and fit log-log cost slopes. Runs execute in parallel;
/// results are merged by key so reports stay deterministic.
pub fn run_scaling_study(spec: &ScalingSpec) -> Result<ScalingReport> {
    if spec.n_list.len() < 2 {
        return Err(QipmError::InvalidConfig(
            "scaling study needs at least two sizes".into(),
        ));
    }
    let mut jobs = Vec::new();
    for &n in &spec.n_list {
        for &seed in &spec.seeds {
            for mode in ["quantum", "cg"] {
                jobs.push((n, seed, mode));
            }
        }
    }

    let rows: Vec<ScalingRow> = jobs
        .par_iter()
        .map(|&(n, seed, mode)| scaling_run(spec, n, seed, mode))
        .collect();
    let mut rows = rows;
    rows.sort_by_key(|r| (r.n, r.seed, r.mode));

    let fit_sizes: Vec<usize> = spec.n_list[1..].to_vec();
    let mean_points = |mode: &str, f: &dyn Fn(&ScalingRow) -> f64| -> Vec<(f64, f64)> {
        fit_sizes
            .iter()
            .filter_map(|&n| {
                let vals: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.n == n && r.mode == mode && r.status == "ok")
                    .map(f)
                    .collect();
                if vals.is_empty() {
                    None
                } else {
                    Some((n as f64, vals.iter().sum::<f64>() / vals.len() as f64))
                }
            })
            .collect()
    };

    let slopes = ScalingSlopes {
        ipm_iterations: fit_loglog(&mean_points("quantum", &|r| r.ipm_iterations as f64)),
        qram_queries_unit: fit_loglog(&mean_points("quantum", &|r| r.qram_queries_unit)),
        qram_queries_model: fit_loglog(&mean_points("quantum", &|r| r.qram_queries)),
        classical_cg: fit_loglog(&mean_points("cg", &|r| r.classical_ops)),
    };
    let failures = rows.iter().filter(|r| r.status != "ok").count();
    Ok(ScalingReport {
        rows,
        slopes,
        banner: COST_BANNER.to_string(),
        failures,
    })
}

fn scaling_run(spec: &ScalingSpec, n: usize, seed: u64, mode: &'static str) -> ScalingRow {
    let m = ((n as f64 * spec.m_ratio).round() as usize).max(1);
    let mut row = ScalingRow {
        n,
        m,
        seed,
        mode,
        ipm_iterations: 0,
        inner_iterations: 0,
        qram_queries: 0.0,
        qram_queries_unit: 0.0,
        classical_ops: 0.0,
        status: "ok".into(),
    };
    let generated = match generate_instance(&GenSpec::new(n, m, seed)) {
        Ok(g) => g,
        Err(e) => {
            row.status = format!("generate: {e}");
            return row;
        }
    };
    let (solver, noise) = match mode {
        "quantum" => (
            SolverKind::QuantumEmulated,
            Some(spec.noise.with_seed(spec.noise.seed ^ seed)),
        ),
        _ => (SolverKind::CgBaseline, None),
    };
    let config = RefineConfig {
        zeta: spec.zeta,
        zeta_tilde: spec.zeta_tilde,
        ipm: IpmConfig {
            solver,
            newton_tol: spec.newton_tol,
            cond_every: 0,
            check_conditions: false,
            ..Default::default()
        },
        max_center_steps: 50,
    };
    match ir_ae_qipm(
        &generated.instance,
        &generated.start,
        &config,
        noise.as_ref(),
    ) {
        Ok(run) => {
            row.ipm_iterations = run
                .state
                .stage_reports
                .iter()
                .map(|s| s.ipm_iterations)
                .sum();
            row.inner_iterations = run.ledger.count_of(EventKind::TomographySolve)
                + run.ledger.count_of(EventKind::ClassicalMatvec);
            row.qram_queries = run.ledger.qram_queries;
            row.qram_queries_unit = run.ledger.qram_queries_unit;
            row.classical_ops = run.ledger.classical_ops;
        }
        Err(e) => {
            row.status = format!("solve: {e}").replace(',', ";");
        }
    }
    row
}

// ---------------------------------------------------------------------------
// Condition-number study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CondnumSpec {
    pub n: usize,
    pub m: usize,
    pub seeds: Vec<u64>,
    pub degenerate: bool,
    /// Start-gap scale; the study starts runs at a moderate duality gap so
    /// the refined run's first stage stays inside its condition band.
    pub start_gap: f64,
    pub gap_target: f64,
    pub zeta_tilde: f64,
}

impl Default for CondnumSpec {
    fn default() -> Self {
        Self {
            n: 16,
            m: 8,
            seeds: vec![1, 2, 3, 4, 5],
            degenerate: true,
            start_gap: 3e-2,
            gap_target: 1e-8,
            zeta_tilde: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CondPoint {
    pub seed: u64,
    /// "unrefined" or "refined".
    pub run: &'static str,
    /// 0 for the unrefined run, stage index for the refined run.
    pub stage: usize,
    /// Global step index within the run (concatenated across stages).
    pub step: usize,
    pub mu: f64,
    pub cond: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CondnumSummary {
    pub seed: u64,
    pub kappa0: f64,
    /// kappa_last / kappa_first of the single deep run.
    pub unrefined_growth: f64,
    /// max kappa over all refined stages divided by kappa0.
    pub refined_max_ratio: f64,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CondnumReport {
    pub points: Vec<CondPoint>,
    pub summaries: Vec<CondnumSummary>,
    pub banner: String,
}

impl CondnumReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,run,stage,step,mu,cond\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.seed, p.run, p.stage, p.step, p.mu, p.cond
            ));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("seed,kappa0,unrefined_growth,refined_max_ratio,status\n");
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.seed, s.kappa0, s.unrefined_growth, s.refined_max_ratio, s.status
            ));
        }
        out
    }
}

/// Two runs per seed on the same instance: (a) one deep barrier run to the
/// gap target, (b) the refinement pipeline with fixed per-stage accuracy to
/// the same gap; emits the condition number of A S^-2 A^T per iteration of
/// both.
pub fn run_condnum_study(spec: &CondnumSpec) -> Result<CondnumReport> {
    let outputs: Vec<(Vec<CondPoint>, CondnumSummary)> = spec
        .seeds
        .par_iter()
        .map(|&seed| condnum_run(spec, seed))
        .collect();
    let mut points = Vec::new();
    let mut summaries = Vec::new();
    for (p, s) in outputs {
        points.extend(p);
        summaries.push(s);
    }
    points.sort_by(|a, b| (a.seed, a.run, a.stage, a.step).cmp(&(b.seed, b.run, b.stage, b.step)));
    summaries.sort_by_key(|s| s.seed);
    Ok(CondnumReport {
        points,
        summaries,
        banner: COST_BANNER.to_string(),
    })
}

fn condnum_run(spec: &CondnumSpec, seed: u64) -> (Vec<CondPoint>, CondnumSummary) {
    let mut summary = CondnumSummary {
        seed,
        kappa0: f64::NAN,
        unrefined_growth: f64::NAN,
        refined_max_ratio: f64::NAN,
        status: "ok".into(),
    };
    // mu0 scales with start_gap / (12 n); the generator's own weight may
    // enlarge the actual start gap by a small integer factor.
    let gen_spec = GenSpec::new(spec.n, spec.m, seed)
        .degenerate(spec.degenerate)
        .mu_scale(spec.start_gap / (12.0 * spec.n as f64));
    let generated = match generate_instance(&gen_spec) {
        Ok(g) => g,
        Err(e) => {
            summary.status = format!("generate: {e}").replace(',', ";");
            return (Vec::new(), summary);
        }
    };
    let nf = spec.n as f64;
    let mut points = Vec::new();

    // (a) single deep run.
    let deep_cfg = IpmConfig {
        mu_min: spec.gap_target / (nf + 0.5 * nf.sqrt()),
        cond_every: 1,
        check_conditions: false,
        ..Default::default()
    };
    match ae_qipm_solve(&generated.instance, &generated.start, &deep_cfg, None) {
        Ok(run) => {
            let conds: Vec<(usize, f64, f64)> = run
                .trace
                .records
                .iter()
                .filter_map(|r| r.cond.map(|c| (r.iter, r.mu, c)))
                .collect();
            if let (Some(first), Some(last)) = (conds.first(), conds.last()) {
                summary.kappa0 = first.2;
                summary.unrefined_growth = last.2 / first.2;
            }
            points.extend(conds.iter().map(|&(iter, mu, cond)| CondPoint {
                seed,
                run: "unrefined",
                stage: 0,
                step: iter,
                mu,
                cond,
            }));
        }
        Err(e) => {
            summary.status = format!("unrefined: {e}").replace(',', ";");
        }
    }

    // (b) refined run to the same gap.
    let refine_cfg = RefineConfig {
        zeta: spec.gap_target,
        zeta_tilde: spec.zeta_tilde,
        ipm: IpmConfig {
            cond_every: 1,
            check_conditions: false,
            ..Default::default()
        },
        max_center_steps: 50,
    };
    match ir_ae_qipm(&generated.instance, &generated.start, &refine_cfg, None) {
        Ok(run) => {
            let mut step = 0usize;
            let mut max_cond = 0.0f64;
            for (k, trace) in run.stage_traces.iter().enumerate() {
                for record in &trace.records {
                    step += 1;
                    let Some(cond) = record.cond else { continue };
                    max_cond = max_cond.max(cond);
                    points.push(CondPoint {
                        seed,
                        run: "refined",
                        stage: k + 1,
                        step,
                        mu: record.mu,
                        cond,
                    });
                }
            }
            let base = if run.kappa0.is_finite() && run.kappa0 > 0.0 {
                run.kappa0
            } else {
                summary.kappa0
            };
            summary.refined_max_ratio = max_cond / base;
        }
        Err(e) => {
            summary.status = format!("refined: {e}").replace(',', ";");
        }
    }

    (points, summary)
}
