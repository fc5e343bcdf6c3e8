//! Standard-form LP data model: instances, dual iterates, optimality
//! certificates, encoding length, residuals, instance generation with
//! planted certificates, and JSON file I/O.
//!
//! Standard form: minimize c'x subject to A x = b, x >= 0, with the dual
//! maximize b'y subject to A'y + s = c, s >= 0.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{QipmError, Result};
use crate::linalg::{compensated_dot, matrix_rank};

/// Standard-form LP data. Immutable after construction; `A` has full row
/// rank (checked) and n >= m.
#[derive(Debug, Clone)]
pub struct LpInstance {
    pub name: String,
    pub m: usize,
    pub n: usize,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    /// True when every entry of (A, b, c) is an integer; required by
    /// [`LpInstance::encoding_length`].
    pub integer_data: bool,
}

impl LpInstance {
    pub fn new(
        name: impl Into<String>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: DVector<f64>,
        integer_data: bool,
    ) -> Result<Self> {
        let (m, n) = (a.nrows(), a.ncols());
        if m > n {
            return Err(QipmError::InfeasibleShape { m, n });
        }
        if b.len() != m {
            return Err(QipmError::DimensionMismatch {
                context: "b length",
                expected: m,
                got: b.len(),
            });
        }
        if c.len() != n {
            return Err(QipmError::DimensionMismatch {
                context: "c length",
                expected: n,
                got: c.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            m,
            n,
            a,
            b,
            c,
            integer_data,
        })
    }

    /// Full-row-rank check via a rank-revealing factorization; run at load
    /// and generation (the solver path assumes it).
    pub fn ensure_full_row_rank(&self) -> Result<()> {
        let rank = matrix_rank(&self.a);
        if rank < self.m {
            return Err(QipmError::RankDeficient {
                rank,
                expected: self.m,
            });
        }
        Ok(())
    }

    /// Binary encoding length of integer problem data:
    /// L = mn + m + n + sum ceil(log2(|a_ij|+1)) + sum ceil(log2(|c_i|+1))
    ///   + sum ceil(log2(|b_j|+1)).
    pub fn encoding_length(&self) -> Result<u64> {
        if !self.integer_data {
            return Err(QipmError::NonIntegerData {
                context: "instance",
                index: 0,
                value: f64::NAN,
            });
        }
        let mut total = (self.m * self.n + self.m + self.n) as u64;
        total += int_bits(self.a.iter(), "A")?;
        total += int_bits(self.c.iter(), "c")?;
        total += int_bits(self.b.iter(), "b")?;
        Ok(total)
    }

    /// Dual-feasibility residual A'y + s - c.
    pub fn dual_residual(&self, y: &DVector<f64>, s: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(y.len(), self.m);
        debug_assert_eq!(s.len(), self.n);
        self.a.transpose() * y + s - &self.c
    }

    /// Same residual with compensated accumulation; used by the outer
    /// refinement loop where plain accumulation would cap accuracy.
    pub fn dual_residual_compensated(&self, y: &DVector<f64>, s: &DVector<f64>) -> DVector<f64> {
        let yv: Vec<f64> = y.iter().copied().collect();
        DVector::from_fn(self.n, |j, _| {
            let col: Vec<f64> = self.a.column(j).iter().copied().collect();
            compensated_dot(&col, &yv) + s[j] - self.c[j]
        })
    }

    /// Slack c - A'y with compensated accumulation.
    pub fn slack_of(&self, y: &DVector<f64>) -> DVector<f64> {
        let yv: Vec<f64> = y.iter().copied().collect();
        DVector::from_fn(self.n, |j, _| {
            let col: Vec<f64> = self.a.column(j).iter().copied().collect();
            self.c[j] - compensated_dot(&col, &yv)
        })
    }

    /// Primal point associated with a dual iterate and its exact Newton
    /// step: x = mu * S^-1 (e - S^-1 ds). Satisfies A x = b to solver
    /// tolerance when `delta_s` is the exact step.
    pub fn primal_estimate(&self, iterate: &DualIterate, delta_s: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| {
            let s = iterate.s[i];
            iterate.mu / s * (1.0 - delta_s[i] / s)
        })
    }
}

fn int_bits<'a>(values: impl Iterator<Item = &'a f64>, context: &'static str) -> Result<u64> {
    let mut total = 0u64;
    for (index, v) in values.enumerate() {
        if v.fract() != 0.0 || v.abs() > 2f64.powi(53) {
            return Err(QipmError::NonIntegerData {
                context,
                index,
                value: *v,
            });
        }
        let k = v.abs() as u64;
        total += ceil_log2(k + 1) as u64;
    }
    Ok(total)
}

fn ceil_log2(v: u64) -> u32 {
    if v <= 1 {
        0
    } else {
        64 - (v - 1).leading_zeros()
    }
}

/// Upper estimate mu * (n + sqrt(n) * delta) of the duality gap of the
/// implicit primal point near the central path.
pub fn gap_bound(n: usize, mu: f64, delta: f64) -> f64 {
    mu * (n as f64 + (n as f64).sqrt() * delta)
}

/// Dual iterate (y, s) with barrier parameter mu and the accumulated
/// dual-feasibility perturbation from inexact Newton steps.
#[derive(Debug, Clone)]
pub struct DualIterate {
    pub y: DVector<f64>,
    pub s: DVector<f64>,
    pub mu: f64,
    /// Accumulated drift r^k = sum of per-iteration step errors xi_i;
    /// recomputable as A'y + s - c.
    pub drift: DVector<f64>,
}

impl DualIterate {
    pub fn new(y: DVector<f64>, s: DVector<f64>, mu: f64) -> Self {
        let n = s.len();
        Self {
            y,
            s,
            mu,
            drift: DVector::zeros(n),
        }
    }

    /// Index and value of the smallest slack, if any is nonpositive.
    pub fn interior_violation(&self) -> Option<(usize, f64)> {
        let mut worst: Option<(usize, f64)> = None;
        for (i, v) in self.s.iter().enumerate() {
            if *v <= 0.0 && worst.is_none_or(|(_, w)| *v < w) {
                worst = Some((i, *v));
            }
        }
        worst
    }

    pub fn is_interior(&self) -> bool {
        self.interior_violation().is_none()
    }
}

/// Planted optimal solution with its partition; ground truth for tests and
/// studies, ignored by the solver path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    /// Indices with x*_j > 0.
    pub basis: Vec<usize>,
    /// Indices with s*_j > 0.
    pub nonbasis: Vec<usize>,
    pub opt_value: f64,
}

impl Certificate {
    /// KKT check of the certificate against an instance. `tol` is absolute.
    pub fn verify(&self, inst: &LpInstance, tol: f64) -> Result<()> {
        let x = DVector::from_vec(self.x.clone());
        let y = DVector::from_vec(self.y.clone());
        let s = DVector::from_vec(self.s.clone());
        let primal = (&inst.a * &x - &inst.b).norm();
        let dual = inst.dual_residual(&y, &s).norm();
        let comp = x.dot(&s).abs();
        let nonneg = x
            .iter()
            .chain(s.iter())
            .cloned()
            .fold(0.0f64, |a, v| a.min(v));
        if primal > tol || dual > tol || comp > tol || nonneg < -tol {
            return Err(QipmError::MalformedInstance(format!(
                "certificate violates KKT: |Ax-b|={primal:.2e} |A'y+s-c|={dual:.2e} \
                 x's={comp:.2e} min={nonneg:.2e}"
            )));
        }
        Ok(())
    }
}

/// What to generate.
#[derive(Debug, Clone)]
pub struct GenSpec {
    pub n: usize,
    pub m: usize,
    /// Plant indices outside both partition sets (x*_j = s*_j = 0); this is
    /// the standard mechanism that blows up the Newton-system condition
    /// number as mu -> 0.
    pub degenerate: bool,
    pub seed: u64,
    /// Scales the start barrier parameter mu0 (and with it b, c) by this
    /// factor; 1.0 keeps all data integral. Condition-number studies use
    /// small scales so runs start at a moderate duality gap.
    pub mu_scale: f64,
}

impl GenSpec {
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            degenerate: false,
            seed,
            mu_scale: 1.0,
        }
    }

    pub fn degenerate(mut self, flag: bool) -> Self {
        self.degenerate = flag;
        self
    }

    pub fn mu_scale(mut self, scale: f64) -> Self {
        self.mu_scale = scale;
        self
    }
}

/// Generator output: the instance, a start iterate exactly on the central
/// path at `start.mu`, and the planted certificate.
#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: LpInstance,
    pub start: DualIterate,
    pub certificate: Certificate,
}

/// Build an instance with a known strictly complementary optimum and a
/// start iterate exactly on the central path.
///
/// Construction: pick the partition and a central pair (x0, s0) with
/// x0_i s0_i = mu0 for all i, force x0 - x* into the null space of A with
/// one integer balance column, and encode s0 - s* = -beta A' e1 through the
/// first row. Then b := A x0 and c := A' y0 + s0 close both systems
/// exactly, so the certificate and the centrality of the start hold by
/// construction rather than by trusting any solver.
pub fn generate_instance(spec: &GenSpec) -> Result<Generated> {
    if spec.m > spec.n || spec.m == 0 {
        return Err(QipmError::InfeasibleShape {
            m: spec.m,
            n: spec.n,
        });
    }
    if spec.degenerate && spec.m < 2 {
        return Err(QipmError::InvalidConfig(
            "degenerate instances need m >= 2".into(),
        ));
    }
    if spec.degenerate && spec.n == spec.m {
        return Err(QipmError::InvalidConfig(
            "degenerate instances need n > m".into(),
        ));
    }
    for attempt in 0..64u64 {
        let mut rng =
            ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ attempt);
        let generated = if spec.n == spec.m {
            try_generate_square(spec, &mut rng)
        } else {
            try_generate(spec, &mut rng)
        };
        if let Some(g) = generated? {
            g.certificate.verify(&g.instance, 1e-9)?;
            return Ok(g);
        }
    }
    Err(QipmError::MalformedInstance(format!(
        "generator failed to find a full-rank instance for n={} m={} seed={}",
        spec.n, spec.m, spec.seed
    )))
}

fn try_generate(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Result<Option<Generated>> {
    let (n, m) = (spec.n, spec.m);
    let deg = if spec.degenerate { (m / 8).max(1) } else { 0 };
    let b_size = m - deg;

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let basis: Vec<usize> = perm[..b_size].to_vec();
    let gap_set: Vec<usize> = perm[b_size..b_size + deg].to_vec();
    let nonbasis: Vec<usize> = perm[b_size + deg..].to_vec();
    let balance = *nonbasis.last().expect("n > m implies a nonbasis column");

    // Divisors of 12 no larger than 10: slack values for basis columns.
    const DIVISORS: [i64; 5] = [1, 2, 3, 4, 6];

    // Integer matrix, row-1 structure carries s0 - s* = -A' e1 (beta = 1
    // pre-scaling).
    let mut a_int = DMatrix::<i64>::zeros(m, n);
    for r in 0..m {
        for &j in nonbasis.iter() {
            a_int[(r, j)] = rng.gen_range(-10..=10);
        }
    }
    let mut d_vals = vec![0i64; n];
    for &j in basis.iter() {
        let d = DIVISORS[rng.gen_range(0..DIVISORS.len())];
        d_vals[j] = d;
        a_int[(0, j)] = -d;
        for r in 1..m {
            a_int[(r, j)] = rng.gen_range(-10..=10);
        }
    }
    for &j in gap_set.iter() {
        a_int[(0, j)] = -1;
        for r in 1..m {
            a_int[(r, j)] = rng.gen_range(-10..=10);
        }
    }

    // Pick the integer weight w (= mu0 before scaling): multiple of 12, large
    // enough that every planted s*_N stays positive after the balance column
    // is fixed.
    let sum_row1: i64 = nonbasis
        .iter()
        .filter(|&&j| j != balance)
        .map(|&j| a_int[(0, j)])
        .sum();
    let needed = sum_row1 / (1 + deg as i64) + 2;
    let w = {
        let base = needed.max(12);
        ((base + 11) / 12) * 12
    };

    // Balance column: A vhat = 0 with vhat = x0 - x* scaled to integers
    // (1 on nonbasis columns, w on gap columns, 0 on basis columns).
    for r in 0..m {
        let mut acc = 0i64;
        for &j in nonbasis.iter() {
            if j != balance {
                acc += a_int[(r, j)];
            }
        }
        for &j in gap_set.iter() {
            acc += w * a_int[(r, j)];
        }
        a_int[(r, balance)] = -acc;
    }

    // Planted slacks on the nonbasis must stay positive: s*_j = w + a_1j.
    for &j in nonbasis.iter() {
        if w + a_int[(0, j)] <= 0 {
            return Ok(None);
        }
    }

    let a = DMatrix::from_fn(m, n, |r, c| a_int[(r, c)] as f64);
    if matrix_rank(&a) < m {
        return Ok(None);
    }
    if b_size == m {
        // Square basis block must be invertible for crossover to be exact.
        let ab = gather_columns(&a, &basis);
        if matrix_rank(&ab) < m {
            return Ok(None);
        }
    } else {
        let abu: Vec<usize> = basis.iter().chain(gap_set.iter()).copied().collect();
        if matrix_rank(&gather_columns(&a, &abu)) < abu.len() {
            return Ok(None);
        }
    }

    let lambda = spec.mu_scale.sqrt();
    let beta = spec.mu_scale.sqrt();
    let integer_data = spec.mu_scale == 1.0;
    let mu0 = lambda * beta * w as f64;

    let mut x0 = DVector::zeros(n);
    let mut s0 = DVector::zeros(n);
    for &j in basis.iter() {
        x0[j] = lambda * (w / d_vals[j]) as f64;
        s0[j] = beta * d_vals[j] as f64;
    }
    for &j in nonbasis.iter() {
        x0[j] = lambda;
        s0[j] = beta * w as f64;
    }
    for &j in gap_set.iter() {
        x0[j] = lambda * w as f64;
        s0[j] = beta;
    }

    // Integer objective shift so optima are not pinned at zero.
    let t = DVector::from_fn(m, |_, _| rng.gen_range(-3..=3) as f64);
    let mut y0 = t.clone();
    y0[0] += beta;
    let y_star = t.clone();

    let mut x_star = DVector::zeros(n);
    for &j in basis.iter() {
        x_star[j] = x0[j];
    }
    let mut s_star = DVector::zeros(n);
    for &j in nonbasis.iter() {
        s_star[j] = beta * (w + a_int[(0, j)]) as f64;
    }

    let b = &a * &x0;
    let c = a.transpose() * &y0 + &s0;

    // Closure checks (exact in integer arithmetic, float-tight otherwise).
    let cert_resid = (a.transpose() * &y_star + &s_star - &c).norm();
    let primal_resid = (&a * &x_star - &b).norm();
    if cert_resid > 1e-9 || primal_resid > 1e-9 {
        return Ok(None);
    }

    let opt_value = b.dot(&y_star);
    let name = format!(
        "gen-n{}-m{}-seed{}{}",
        n,
        m,
        spec.seed,
        if spec.degenerate { "-deg" } else { "" }
    );
    let instance = LpInstance::new(name, a, b, c, integer_data)?;
    let start = DualIterate::new(y0, s0, mu0);
    let certificate = Certificate {
        x: x_star.iter().copied().collect(),
        y: y_star.iter().copied().collect(),
        s: s_star.iter().copied().collect(),
        basis: sorted(basis),
        nonbasis: sorted(nonbasis),
        opt_value,
    };
    Ok(Some(Generated {
        instance,
        start,
        certificate,
    }))
}

/// n == m: the unique feasible point is the optimum; the dual interior is a
/// cone around y*. The start slack is set through y0 = y* - A^-T s0 so the
/// central-path identity holds by construction.
fn try_generate_square(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Result<Option<Generated>> {
    let n = spec.n;
    let mut a = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            a[(r, c)] = rng.gen_range(-10..=10) as f64;
        }
    }
    if matrix_rank(&a) < n {
        return Ok(None);
    }
    let x_star = DVector::from_fn(n, |_, _| {
        rng.gen_range(1..=12) as f64 * spec.mu_scale.sqrt()
    });
    let b = &a * &x_star;
    let t = DVector::from_fn(n, |_, _| rng.gen_range(-3..=3) as f64);
    let c = a.transpose() * &t;

    let mu0 = 12.0 * spec.mu_scale;
    let s0 = DVector::from_fn(n, |i, _| mu0 / x_star[i]);
    // Solve A' w = s0, y0 = y* - w.
    let lu = a.transpose().lu();
    let Some(wv) = lu.solve(&s0) else {
        return Ok(None);
    };
    let y0 = &t - &wv;
    let s0_exact = &c - a.transpose() * &y0;
    if s0_exact.iter().any(|v| *v <= 0.0) {
        return Ok(None);
    }
    let mu_avg = x_star.dot(&s0_exact) / n as f64;

    let opt_value = b.dot(&t);
    let instance = LpInstance::new(
        format!("gen-n{}-m{}-seed{}", n, n, spec.seed),
        a,
        b,
        c,
        spec.mu_scale == 1.0 && t.iter().all(|v| v.fract() == 0.0),
    )?;
    let start = DualIterate::new(y0, s0_exact, mu_avg);
    let certificate = Certificate {
        x: x_star.iter().copied().collect(),
        y: t.iter().copied().collect(),
        s: vec![0.0; n],
        basis: (0..n).collect(),
        nonbasis: Vec::new(),
        opt_value,
    };
    Ok(Some(Generated {
        instance,
        start,
        certificate,
    }))
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Columns of `a` selected by `idx`, in order.
pub fn gather_columns(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), idx.len());
    for (k, &j) in idx.iter().enumerate() {
        out.set_column(k, &a.column(j));
    }
    out
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct StartFile {
    y: Vec<f64>,
    s: Vec<f64>,
    mu: f64,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    name: String,
    m: usize,
    n: usize,
    /// Row-major entries of A.
    #[serde(rename = "A")]
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    integer_data: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    certificate: Option<Certificate>,
    /// Start iterate; an extension of the base format used by the CLI so a
    /// generated instance file is self-contained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start: Option<StartFile>,
}

/// Save an instance (with optional certificate and start iterate) as JSON.
pub fn save_instance(
    inst: &LpInstance,
    certificate: Option<&Certificate>,
    start: Option<&DualIterate>,
    path: &Path,
) -> Result<()> {
    let file = InstanceFile {
        name: inst.name.clone(),
        m: inst.m,
        n: inst.n,
        a: inst.a.transpose().as_slice().to_vec(), // nalgebra stores col-major
        b: inst.b.iter().copied().collect(),
        c: inst.c.iter().copied().collect(),
        integer_data: inst.integer_data,
        certificate: certificate.cloned(),
        start: start.map(|it| StartFile {
            y: it.y.iter().copied().collect(),
            s: it.s.iter().copied().collect(),
            mu: it.mu,
        }),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Load an instance saved by [`save_instance`]. Checks dimensions and full
/// row rank; files with m > n, wrong payload sizes, or rank-deficient A are
/// rejected with distinct errors.
pub fn load_instance(
    path: &Path,
) -> Result<(LpInstance, Option<Certificate>, Option<DualIterate>)> {
    let text = std::fs::read_to_string(path)?;
    let file: InstanceFile =
        serde_json::from_str(&text).map_err(|e| QipmError::MalformedInstance(e.to_string()))?;
    if file.a.len() != file.m * file.n {
        return Err(QipmError::DimensionMismatch {
            context: "A payload length",
            expected: file.m * file.n,
            got: file.a.len(),
        });
    }
    let a = DMatrix::from_row_slice(file.m, file.n, &file.a);
    let b = DVector::from_vec(file.b);
    let c = DVector::from_vec(file.c);
    let inst = LpInstance::new(file.name, a, b, c, file.integer_data)?;
    inst.ensure_full_row_rank()?;
    let start = file
        .start
        .map(|st| DualIterate::new(DVector::from_vec(st.y), DVector::from_vec(st.s), st.mu));
    Ok((inst, file.certificate, start))
}
