//! Dual log-barrier interior point method for standard-form linear
//! optimization with emulated quantum linear solvers.
//!
//! The quantum subroutines (matrix inversion, tomography read-out, norm
//! estimation, matrix-vector products) are emulated by noise-injected
//! classical oracles with an attached query-cost ledger, so everything that
//! can be verified classically — iteration counts, contraction rates,
//! condition-number behavior, feasibility drift, and cost-scaling
//! separation — is verified. Quantum cost totals are model numbers (cost
//! formulas evaluated at measured event counts); classical totals are
//! measured arithmetic-operation counts.
//!
//! Module map:
//! - [`lp`]: LP data model, encoding length, instance generation, file I/O
//! - [`linalg`]: exact solver oracle, CG baseline, condition numbers
//! - [`qsim`]: noise channels, cost ledger, inner refined linear solver
//! - [`ipm`]: the dual log-barrier method itself
//! - [`refine`]: outer LP-level iterative refinement
//! - [`round`]: partition identification and crossover to exact optima
//! - [`bench`]: scaling and condition-number studies, plots
//!
//! ```
//! use qipm::ipm::{ae_qipm_solve, IpmConfig};
//! use qipm::lp::{generate_instance, GenSpec};
//!
//! // A 4x8 instance with a planted optimum and an exactly central start.
//! let g = generate_instance(&GenSpec::new(8, 4, 7)).unwrap();
//! let config = IpmConfig {
//!     mu_min: g.start.mu * 1e-6,
//!     ..Default::default()
//! };
//! let run = ae_qipm_solve(&g.instance, &g.start, &config, None).unwrap();
//! assert!(run.iterate.mu <= config.mu_min);
//! assert!(run.trace.max_delta() <= 0.5);
//! ```

pub mod bench;
pub mod error;
pub mod ipm;
pub mod linalg;
pub mod lp;
pub mod qsim;
pub mod refine;
pub mod round;

pub use error::{QipmError, Result};
