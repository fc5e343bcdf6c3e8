//! Stress sweep across generator shapes and solver paths; run with
//! `cargo run -p qipm --example stress --release`. Exits nonzero on the
//! first violated invariant.

use qipm::ipm::{ae_qipm_solve, proximity, IpmConfig, SolverKind};
use qipm::lp::{generate_instance, GenSpec};
use qipm::qsim::{CostLedger, NoiseModel};
use qipm::refine::{ir_ae_qipm, RefineConfig};

fn main() {
    let mut ledger = CostLedger::default();
    let mut count = 0;
    // Generator grid incl. edge shapes.
    for n in [1usize, 2, 3, 5, 8, 13, 21, 40, 64] {
        for m in [1usize, 2, 3, n / 2, n.saturating_sub(1), n] {
            if m == 0 || m > n {
                continue;
            }
            for deg in [false, true] {
                if deg && (m < 2 || n == m) {
                    continue;
                }
                for seed in [0u64, 1, 7, 99] {
                    let spec = GenSpec {
                        n,
                        m,
                        degenerate: deg,
                        seed,
                        mu_scale: 1.0,
                    };
                    match generate_instance(&spec) {
                        Ok(g) => {
                            g.certificate.verify(&g.instance, 1e-9).unwrap_or_else(|e| {
                                panic!("cert n={n} m={m} deg={deg} seed={seed}: {e}")
                            });
                            let d = proximity(&g.instance, &g.start, &mut ledger)
                                .unwrap_or_else(|e| panic!("prox n={n} m={m}: {e}"));
                            assert!(
                                d <= 1e-9,
                                "n={n} m={m} deg={deg} seed={seed}: start delta {d:.3e}"
                            );
                            count += 1;
                        }
                        Err(e) => panic!("generate n={n} m={m} deg={deg} seed={seed}: {e}"),
                    }
                }
            }
        }
    }
    println!("generator sweep ok: {count} instances");

    // Quantum-path refinement on degenerate instances.
    for seed in [1u64, 2, 3] {
        let g = generate_instance(&GenSpec {
            n: 16,
            m: 8,
            degenerate: true,
            seed,
            mu_scale: 2e-4,
        })
        .unwrap();
        let cfg = RefineConfig {
            zeta: 1e-8,
            zeta_tilde: 1e-2,
            ipm: IpmConfig {
                solver: SolverKind::QuantumEmulated,
                cond_every: 0,
                check_conditions: true,
                ..Default::default()
            },
            max_center_steps: 50,
        };
        let noise = NoiseModel::default().with_seed(seed);
        match ir_ae_qipm(&g.instance, &g.start, &cfg, Some(&noise)) {
            Ok(run) => {
                let gap = run.state.stage_reports.last().unwrap().gap_after;
                println!("degenerate+quantum seed={seed}: gap_after={gap:.3e}");
                assert!(gap <= 1e-7, "seed {seed} gap {gap:.3e}");
            }
            Err(e) => panic!("degenerate quantum refine seed={seed}: {e}"),
        }
    }

    // Tiny square instance through a direct quantum run.
    let g = generate_instance(&GenSpec::new(1, 1, 5)).unwrap();
    let cfg = IpmConfig {
        solver: SolverKind::QuantumEmulated,
        theta: Some(1.0 / 6.0),
        mu_min: g.start.mu * 1e-4,
        cond_every: 0,
        ..Default::default()
    };
    let run = ae_qipm_solve(&g.instance, &g.start, &cfg, Some(&NoiseModel::default())).unwrap();
    println!(
        "n=m=1 quantum run: {} iterations, mu {:.3e}",
        run.trace.iterations(),
        run.iterate.mu
    );

    // CG baseline on a mid-size degenerate run.
    let g = generate_instance(&GenSpec {
        n: 24,
        m: 12,
        degenerate: true,
        seed: 4,
        mu_scale: 1e-3,
    })
    .unwrap();
    let cfg = IpmConfig {
        solver: SolverKind::CgBaseline,
        mu_min: g.start.mu * 1e-4,
        cond_every: 0,
        ..Default::default()
    };
    let run = ae_qipm_solve(&g.instance, &g.start, &cfg, None).unwrap();
    println!("degenerate cg run: {} iterations", run.trace.iterations());
    println!("sweep complete");
}
