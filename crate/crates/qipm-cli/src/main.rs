//! Batch command-line surface: instance generation, single solves with
//! trace export, outer refinement with stage reports, rounding, and the
//! study harness. All randomness is seeded (--seed, falling back to the
//! QIPM_SEED environment variable); identical invocations produce
//! byte-identical output files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use qipm::bench::{emit_plot, run_condnum_study, run_scaling_study, CondnumSpec, ScalingSpec};
use qipm::ipm::{ae_qipm_solve, newton_step, proximity, IpmConfig, SolverKind};
use qipm::lp::{gap_bound, generate_instance, load_instance, save_instance, DualIterate, GenSpec};
use qipm::qsim::{ledger_report, CostLedger, NoiseMode, NoiseModel, COST_BANNER};
use qipm::refine::{ir_ae_qipm, RefineConfig};
use qipm::round::{crossover, identify_partition};

#[derive(Parser)]
#[command(
    name = "qipm",
    version,
    about = "Dual log-barrier interior point solver with emulated quantum linear algebra"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance with a planted certificate and central start.
    Generate(GenerateArgs),
    /// Run the barrier method on one instance.
    Solve(SolveArgs),
    /// Run the outer refinement loop on one instance.
    Refine(RefineArgs),
    /// Identify the optimal partition and cross over to an exact optimum.
    Round(RoundArgs),
    /// Batch studies.
    Bench {
        #[command(subcommand)]
        study: BenchCommand,
    },
    /// Report post-processing.
    Report {
        #[command(subcommand)]
        what: ReportCommand,
    },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    degenerate: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Scale of the start barrier parameter (1 keeps all data integral).
    #[arg(long, default_value_t = 1.0)]
    mu_scale: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Exact,
    Quantum,
    Cg,
}

impl From<SolverArg> for SolverKind {
    fn from(value: SolverArg) -> Self {
        match value {
            SolverArg::Exact => SolverKind::Exact,
            SolverArg::Quantum => SolverKind::QuantumEmulated,
            SolverArg::Cg => SolverKind::CgBaseline,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum NoiseModeArg {
    Residual,
    Solution,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long, default_value_t = 1e-2)]
    eps_tomo: f64,
    #[arg(long, default_value_t = 1e-2)]
    eps_norm: f64,
    #[arg(long, default_value_t = 0.0)]
    eps_matvec: f64,
    #[arg(long, value_enum, default_value_t = NoiseModeArg::Residual)]
    noise_mode: NoiseModeArg,
}

impl NoiseArgs {
    fn model(&self, seed: u64) -> NoiseModel {
        NoiseModel {
            eps_tomo: self.eps_tomo,
            eps_norm: self.eps_norm,
            eps_matvec: self.eps_matvec,
            mode: match self.noise_mode {
                NoiseModeArg::Residual => NoiseMode::ResidualSpace,
                NoiseModeArg::Solution => NoiseMode::SolutionSpace,
            },
            seed,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = SolverArg::Exact)]
    solver: SolverArg,
    /// Barrier reduction factor; defaults to 1/(2 sqrt n).
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    mu_min: f64,
    #[arg(long, default_value_t = 1e-10)]
    newton_tol: f64,
    #[arg(long, default_value_t = 1e-12)]
    skip_threshold: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Write the per-iteration trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the final iterate and tallies here.
    #[arg(long)]
    result: Option<PathBuf>,
    /// Write the full event ledger (JSON) here.
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = SolverArg::Exact)]
    solver: SolverArg,
    #[arg(long, default_value_t = 1e-10)]
    zeta: f64,
    #[arg(long, default_value_t = 1e-2)]
    zeta_tilde: f64,
    #[arg(long, default_value_t = 1e-10)]
    newton_tol: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Write the per-stage refinement report here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    result: Option<PathBuf>,
    /// Write the full event ledger (JSON) here.
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Args)]
struct RoundArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Result JSON produced by `solve` or `refine`.
    #[arg(long)]
    solve_result: PathBuf,
    /// Partition threshold; defaults to sqrt(x's / n).
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Cost-scaling study over a size ladder.
    Scaling(ScalingArgs),
    /// Condition-number study on degenerate instances.
    Condnum(CondnumArgs),
}

#[derive(Args)]
struct ScalingArgs {
    /// Comma-separated ascending sizes, e.g. 32,64,128,256.
    #[arg(long, value_delimiter = ',', default_values_t = vec![32usize, 64, 128, 256])]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    m_ratio: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2])]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 1e-8)]
    zeta: f64,
    #[arg(long, default_value_t = 1e-2)]
    zeta_tilde: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long)]
    out_dir: PathBuf,
    /// Apply the study's acceptance thresholds (query slope 1.5 +- 0.1,
    /// CG classical slope >= 2.3) and fail the run if violated.
    #[arg(long)]
    assert: bool,
}

#[derive(Args)]
struct CondnumArgs {
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    m: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2, 3, 4, 5])]
    seeds: Vec<u64>,
    /// Generate nondegenerate control instances instead.
    #[arg(long)]
    nondegenerate: bool,
    #[arg(long, default_value_t = 3e-2)]
    start_gap: f64,
    #[arg(long, default_value_t = 1e-8)]
    gap_target: f64,
    #[arg(long, default_value_t = 1e-2)]
    zeta_tilde: f64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Apply the study's acceptance thresholds (unrefined growth >= 100x,
    /// refined max <= 10x kappa0) and fail the run if violated.
    #[arg(long)]
    assert: bool,
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Render a study CSV as an SVG plot.
    Plot(PlotArgs),
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    /// One of: scaling-queries, scaling-classical, scaling-iterations, condnum.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    out: PathBuf,
}

/// Final-iterate payload shared by solve and refine.
#[derive(Serialize, Deserialize)]
struct SolveResultFile {
    name: String,
    solver: String,
    iterations: usize,
    mu_final: f64,
    delta_final: f64,
    gap_bound: f64,
    drift_inf: f64,
    y: Vec<f64>,
    s: Vec<f64>,
    /// Primal point associated with the final iterate and its exact Newton
    /// step; what the rounding stage consumes.
    x_estimate: Vec<f64>,
    qram_queries: f64,
    classical_ops: f64,
    banner: String,
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| std::env::var("QIPM_SEED").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(args) => generate(args),
        Command::Solve(args) => solve(args),
        Command::Refine(args) => refine(args),
        Command::Round(args) => round(args),
        Command::Bench { study } => match study {
            BenchCommand::Scaling(args) => bench_scaling(args),
            BenchCommand::Condnum(args) => bench_condnum(args),
        },
        Command::Report { what } => match what {
            ReportCommand::Plot(args) => plot(args),
        },
    }
}

fn generate(args: GenerateArgs) -> anyhow::Result<()> {
    let spec = GenSpec {
        n: args.n,
        m: args.m,
        degenerate: args.degenerate,
        seed: resolve_seed(args.seed),
        mu_scale: args.mu_scale,
    };
    let generated = generate_instance(&spec)?;
    save_instance(
        &generated.instance,
        Some(&generated.certificate),
        Some(&generated.start),
        &args.out,
    )?;
    println!(
        "wrote {} (n={}, m={}, mu0={})",
        args.out.display(),
        args.n,
        args.m,
        generated.start.mu
    );
    Ok(())
}

fn load_with_start(path: &std::path::Path) -> anyhow::Result<(qipm::lp::LpInstance, DualIterate)> {
    let (inst, _, start) = load_instance(path)?;
    let start = start.ok_or(qipm::QipmError::MissingStart)?;
    Ok((inst, start))
}

fn write_result(
    path: &Option<PathBuf>,
    inst: &qipm::lp::LpInstance,
    iterate: &DualIterate,
    solver: &str,
    iterations: usize,
    ledger: &CostLedger,
) -> anyhow::Result<()> {
    let Some(path) = path else { return Ok(()) };
    let mut diag = CostLedger::default();
    let delta = proximity(inst, iterate, &mut diag).unwrap_or(f64::NAN);
    let step = newton_step(inst, iterate, &IpmConfig::default(), None, &mut diag)?;
    let x_estimate = inst.primal_estimate(iterate, &step.ds);
    let result = SolveResultFile {
        name: inst.name.clone(),
        solver: solver.to_string(),
        iterations,
        mu_final: iterate.mu,
        delta_final: delta,
        gap_bound: gap_bound(inst.n, iterate.mu, delta),
        drift_inf: iterate.drift.amax(),
        y: iterate.y.iter().copied().collect(),
        s: iterate.s.iter().copied().collect(),
        x_estimate: x_estimate.iter().copied().collect(),
        qram_queries: ledger.qram_queries,
        classical_ops: ledger.classical_ops,
        banner: COST_BANNER.to_string(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&result)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn solve(args: SolveArgs) -> anyhow::Result<()> {
    let (inst, start) = load_with_start(&args.instance)?;
    let seed = resolve_seed(args.seed);
    let config = IpmConfig {
        theta: args.theta,
        mu_min: args.mu_min,
        newton_tol: args.newton_tol,
        skip_threshold: args.skip_threshold,
        solver: args.solver.into(),
        ..Default::default()
    };
    let noise = args.noise.model(seed);
    let run = ae_qipm_solve(&inst, &start, &config, Some(&noise))?;
    let report = ledger_report(&run.ledger, inst.n, run.kappa0, inst.a.norm());
    println!("{}", report.banner);
    println!(
        "solved {} in {} iterations: mu={:.3e}, qram_queries={:.3e} (modeled), classical_ops={:.3e} (measured)",
        inst.name,
        run.trace.iterations(),
        run.iterate.mu,
        report.qram_queries,
        report.classical_ops
    );
    if let Some(path) = &args.trace {
        std::fs::write(path, run.trace.to_csv())?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = &args.ledger {
        std::fs::write(path, serde_json::to_string_pretty(&run.ledger.to_json())?)?;
        println!("wrote {}", path.display());
    }
    write_result(
        &args.result,
        &inst,
        &run.iterate,
        clap_name(args.solver),
        run.trace.iterations(),
        &run.ledger,
    )?;
    Ok(())
}

fn clap_name(solver: SolverArg) -> &'static str {
    match solver {
        SolverArg::Exact => "exact",
        SolverArg::Quantum => "quantum",
        SolverArg::Cg => "cg",
    }
}

fn refine(args: RefineArgs) -> anyhow::Result<()> {
    let (inst, start) = load_with_start(&args.instance)?;
    let seed = resolve_seed(args.seed);
    let config = RefineConfig {
        zeta: args.zeta,
        zeta_tilde: args.zeta_tilde,
        ipm: IpmConfig {
            solver: args.solver.into(),
            newton_tol: args.newton_tol,
            ..Default::default()
        },
        max_center_steps: 50,
    };
    let noise = args.noise.model(seed);
    let run = ir_ae_qipm(&inst, &start, &config, Some(&noise))?;
    println!("{COST_BANNER}");
    println!(
        "refined {} through {} stages: final gap bound {:.3e}",
        inst.name,
        run.state.stage_reports.len(),
        run.state
            .stage_reports
            .last()
            .map(|s| s.gap_after)
            .unwrap_or(f64::NAN)
    );
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&run.state.to_json())?)?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = &args.ledger {
        std::fs::write(path, serde_json::to_string_pretty(&run.ledger.to_json())?)?;
        println!("wrote {}", path.display());
    }
    let iterations = run
        .state
        .stage_reports
        .iter()
        .map(|s| s.ipm_iterations)
        .sum();
    write_result(
        &args.result,
        &inst,
        &run.iterate,
        clap_name(args.solver),
        iterations,
        &run.ledger,
    )?;
    Ok(())
}

#[derive(Serialize)]
struct RoundResultFile {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    opt_value: f64,
    basis: Vec<usize>,
    nonbasis: Vec<usize>,
}

fn round(args: RoundArgs) -> anyhow::Result<()> {
    let (inst, _, _) = load_instance(&args.instance)?;
    let text = std::fs::read_to_string(&args.solve_result)?;
    let result: SolveResultFile = serde_json::from_str(&text)?;
    let x = DVector::from_vec(result.x_estimate.clone());
    let y = DVector::from_vec(result.y.clone());
    let s = DVector::from_vec(result.s.clone());
    let partition = identify_partition(&x, &s, args.tau);
    let (x_opt, y_opt, s_opt) = crossover(&inst, &partition, &x, &y)?;
    let opt_value = inst.c.dot(&x_opt);
    println!(
        "rounded {}: optimal value {} ({} basic, {} nonbasic)",
        inst.name,
        opt_value,
        partition.basis.len(),
        partition.nonbasis.len()
    );
    if let Some(path) = &args.out {
        let out = RoundResultFile {
            x: x_opt.iter().copied().collect(),
            y: y_opt.iter().copied().collect(),
            s: s_opt.iter().copied().collect(),
            opt_value,
            basis: partition.basis,
            nonbasis: partition.nonbasis,
        };
        std::fs::write(path, serde_json::to_string_pretty(&out)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn bench_scaling(args: ScalingArgs) -> anyhow::Result<()> {
    let seed = resolve_seed(args.seed);
    let spec = ScalingSpec {
        n_list: args.n_list,
        m_ratio: args.m_ratio,
        seeds: args.seeds,
        zeta: args.zeta,
        zeta_tilde: args.zeta_tilde,
        noise: args.noise.model(seed),
        newton_tol: 1e-10,
    };
    std::fs::create_dir_all(&args.out_dir)?;
    let t0 = std::time::Instant::now();
    let report = run_scaling_study(&spec)?;
    eprintln!("scaling study finished in {:?}", t0.elapsed());
    println!("{}", report.banner);
    println!(
        "slopes: ipm_iterations={:.3} qram_queries_unit={:.3} (modeled, unit kappa/|A|_F) \
         qram_queries_model={:.3} (modeled) classical_ops_cg={:.3} (measured)",
        report.slopes.ipm_iterations,
        report.slopes.qram_queries_unit,
        report.slopes.qram_queries_model,
        report.slopes.classical_cg
    );
    if report.failures > 0 {
        eprintln!(
            "{} runs failed and were excluded from fits",
            report.failures
        );
    }
    let rows = args.out_dir.join("scaling.csv");
    std::fs::write(&rows, report.to_csv())?;
    let summary = args.out_dir.join("scaling_summary.csv");
    std::fs::write(&summary, report.summary_csv())?;
    println!("wrote {} and {}", rows.display(), summary.display());
    if args.assert {
        let q = report.slopes.qram_queries_unit;
        let c = report.slopes.classical_cg;
        anyhow::ensure!(report.failures == 0, "{} runs failed", report.failures);
        anyhow::ensure!(
            (1.4..=1.6).contains(&q),
            "modeled query slope {q:.3} outside 1.5 +- 0.1"
        );
        anyhow::ensure!(c >= 2.3, "cg classical slope {c:.3} below 2.3");
        println!("assertions passed");
    }
    Ok(())
}

fn bench_condnum(args: CondnumArgs) -> anyhow::Result<()> {
    let spec = CondnumSpec {
        n: args.n,
        m: args.m,
        seeds: args.seeds,
        degenerate: !args.nondegenerate,
        start_gap: args.start_gap,
        gap_target: args.gap_target,
        zeta_tilde: args.zeta_tilde,
    };
    std::fs::create_dir_all(&args.out_dir)?;
    let t0 = std::time::Instant::now();
    let report = run_condnum_study(&spec)?;
    eprintln!("condnum study finished in {:?}", t0.elapsed());
    println!("{}", report.banner);
    for s in &report.summaries {
        println!(
            "seed {}: kappa0={:.3e} unrefined_growth={:.1}x refined_max={:.1}x kappa0 [{}]",
            s.seed, s.kappa0, s.unrefined_growth, s.refined_max_ratio, s.status
        );
    }
    let rows = args.out_dir.join("condnum.csv");
    std::fs::write(&rows, report.to_csv())?;
    let summary = args.out_dir.join("condnum_summary.csv");
    std::fs::write(&summary, report.summary_csv())?;
    println!("wrote {} and {}", rows.display(), summary.display());
    if args.assert {
        for s in &report.summaries {
            anyhow::ensure!(s.status == "ok", "seed {}: {}", s.seed, s.status);
            if spec.degenerate {
                anyhow::ensure!(
                    s.unrefined_growth >= 100.0,
                    "seed {}: unrefined growth {:.1}x below 100x",
                    s.seed,
                    s.unrefined_growth
                );
            }
            anyhow::ensure!(
                s.refined_max_ratio <= 10.0,
                "seed {}: refined max {:.1}x kappa0 above 10x",
                s.seed,
                s.refined_max_ratio
            );
        }
        println!("assertions passed");
    }
    Ok(())
}

fn plot(args: PlotArgs) -> anyhow::Result<()> {
    let csv = std::fs::read_to_string(&args.csv)?;
    let svg = emit_plot(&csv, &args.kind)?;
    std::fs::write(&args.out, svg)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
