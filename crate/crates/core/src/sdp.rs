//! Dense interior-point solver for small Hermitian semidefinite programs.
//!
//! Solves, over Hermitian X:
//!
//! ```text
//!   maximize   tr(C·X)
//!   subject to tr(A_i·X) = b_i   (i = 1..m),   X ⪰ 0
//! ```
//!
//! with Hermitian data C, A_i. The dual is `minimize bᵀy` subject to
//! `S = Σ y_i A_i − C ⪰ 0`, so weak duality reads `tr(C·X) ≤ bᵀy` for any
//! feasible pair.
//!
//! Pipeline: validate → embed the complex problem into a real symmetric one
//! (a Hermitian matrix H maps to ½·[[Re H, −Im H], [Im H, Re H]], which keeps
//! objective values, right-hand sides, and dual multipliers numerically
//! identical between the two formulations) → presolve away linearly dependent
//! constraints via a pivoted-Cholesky rank reveal on their Gram matrix,
//! rejecting inconsistent right-hand sides → run a primal-dual
//! predictor-corrector interior-point method (HKM search direction, Mehrotra
//! centering) → extract the Hermitian solution and classify the result.
//!
//! Scope: dense, desk-scale problems (dimension a few hundred, constraints a
//! few hundred). `Infeasible` is only ever reported from the presolve's exact
//! linear reasoning; a problem that is infeasible for cone reasons surfaces
//! as `IterationLimit`/`Stalled` instead — callers that need certificates
//! should check [`ResidualReport`] rather than trust the status blindly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{C64, CMatrix, LinalgError, herm_eig};

/// Largest complex dimension the dense solver accepts.
pub const MAX_SDP_DIM: usize = 512;

/// Largest constraint count the dense solver accepts.
pub const MAX_SDP_CONSTRAINTS: usize = 2000;

/// Default relative duality-gap target.
pub const DEFAULT_REL_GAP_TOL: f64 = 1e-8;

/// Default relative feasibility target for the iterates.
pub const DEFAULT_FEAS_TOL: f64 = 1e-9;

/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 200;

/// Hermitian-deviation tolerance accepted on input data.
const INPUT_HERM_TOL: f64 = 1e-8;

/// Relative pivot threshold for the presolve rank reveal.
const PRESOLVE_RANK_TOL: f64 = 1e-10;

/// Tolerance for right-hand-side consistency of dropped constraints.
const PRESOLVE_RHS_TOL: f64 = 1e-8;

/// Classification thresholds for [`SdpStatus::Optimal`].
const OPTIMAL_GAP_TOL: f64 = 1e-7;
const OPTIMAL_FEAS_TOL: f64 = 1e-7;
const OPTIMAL_EIG_TOL: f64 = 1e-8;

/// Fraction of the step to the cone boundary actually taken.
const STEP_BACKOFF: f64 = 0.98;

/// Steps below this abort the iteration as stalled.
const MIN_STEP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("problem too large for the dense solver: {0}")]
    TooLarge(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, SdpError>;

/// One linear equality `tr(matrix · X) = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpConstraint {
    pub matrix: CMatrix,
    pub rhs: f64,
}

/// A validated problem instance; data is hermitized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    dim: usize,
    objective: CMatrix,
    constraints: Vec<SdpConstraint>,
}

impl SdpProblem {
    pub fn new(dim: usize, objective: CMatrix, constraints: Vec<SdpConstraint>) -> Result<Self> {
        if dim == 0 {
            return Err(SdpError::InvalidProblem("dimension must be ≥ 1".into()));
        }
        if dim > MAX_SDP_DIM {
            return Err(SdpError::TooLarge(format!("dimension {dim} > {MAX_SDP_DIM}")));
        }
        if constraints.is_empty() {
            return Err(SdpError::InvalidProblem("need at least one constraint".into()));
        }
        if constraints.len() > MAX_SDP_CONSTRAINTS {
            return Err(SdpError::TooLarge(format!(
                "{} constraints > {MAX_SDP_CONSTRAINTS}",
                constraints.len()
            )));
        }
        let check = |m: &CMatrix, what: &str| -> Result<CMatrix> {
            if m.rows() != dim || m.cols() != dim {
                return Err(SdpError::InvalidProblem(format!(
                    "{what} is {}x{}, expected {dim}x{dim}",
                    m.rows(),
                    m.cols()
                )));
            }
            let dev = m.herm_deviation();
            if dev > INPUT_HERM_TOL {
                return Err(SdpError::InvalidProblem(format!(
                    "{what} deviates from Hermitian by {dev:e}"
                )));
            }
            Ok(m.hermitize())
        };
        let objective = check(&objective, "objective")?;
        let constraints = constraints
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                if !c.rhs.is_finite() {
                    return Err(SdpError::InvalidProblem(format!(
                        "constraint {i} has non-finite rhs {}",
                        c.rhs
                    )));
                }
                Ok(SdpConstraint { matrix: check(&c.matrix, &format!("constraint {i}"))?, rhs: c.rhs })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SdpProblem { dim, objective, constraints })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn objective(&self) -> &CMatrix {
        &self.objective
    }

    pub fn constraints(&self) -> &[SdpConstraint] {
        &self.constraints
    }
}

/// Solver knobs; the defaults match the classification thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    pub rel_gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            rel_gap_tol: DEFAULT_REL_GAP_TOL,
            feas_tol: DEFAULT_FEAS_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    /// Converged and passed the classification thresholds.
    Optimal,
    /// The presolve found constraints that are linearly dependent with
    /// inconsistent right-hand sides; no feasible X exists.
    Infeasible,
    /// Ran out of iterations before meeting the thresholds.
    IterationLimit,
    /// Steps collapsed before meeting the thresholds.
    Stalled,
}

/// Independent accuracy measures for a candidate primal/dual pair, computed
/// with plain complex arithmetic (no solver internals).
///
/// The dual slack is defined exactly as S = Σ y_i A_i − C, so linear dual
/// feasibility is structural; what remains of it is the cone condition,
/// reported as `min_eig_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub primal_value: f64,
    pub dual_value: f64,
    /// |primal − dual| / (1 + max(|primal|, |dual|)).
    pub rel_gap: f64,
    /// max_i |tr(A_i X) − b_i| / (1 + max_i |b_i|).
    pub primal_infeas: f64,
    pub min_eig_x: f64,
    pub min_eig_s: f64,
}

/// Outcome of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub primal_value: f64,
    pub dual_value: f64,
    /// Hermitian primal solution.
    pub x: CMatrix,
    /// Dual multipliers, one per input constraint (presolve-dropped
    /// constraints get 0).
    pub y: Vec<f64>,
    pub iterations: usize,
    pub residuals: ResidualReport,
}

/// Recomputes all accuracy measures of a candidate pair from scratch.
pub fn validate_solution(problem: &SdpProblem, x: &CMatrix, y: &[f64]) -> Result<ResidualReport> {
    let d = problem.dim;
    if x.rows() != d || x.cols() != d {
        return Err(SdpError::InvalidProblem(format!(
            "candidate X is {}x{}, expected {d}x{d}",
            x.rows(),
            x.cols()
        )));
    }
    if y.len() != problem.constraints.len() {
        return Err(SdpError::InvalidProblem(format!(
            "candidate y has {} entries, expected {}",
            y.len(),
            problem.constraints.len()
        )));
    }
    let primal_value = problem.objective.matmul(x)?.trace().re;
    let dual_value: f64 = y.iter().zip(&problem.constraints).map(|(yi, c)| yi * c.rhs).sum();
    let rel_gap =
        (primal_value - dual_value).abs() / (1.0 + primal_value.abs().max(dual_value.abs()));

    let scale_b = problem.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for c in &problem.constraints {
        let t = c.matrix.matmul(x)?.trace();
        let dev = (C64::new(t.re - c.rhs, t.im)).norm();
        worst = worst.max(dev);
    }
    let primal_infeas = worst / (1.0 + scale_b);

    let mut s = problem.objective.scale(C64::new(-1.0, 0.0));
    for (yi, c) in y.iter().zip(&problem.constraints) {
        s = s.add(&c.matrix.scale(C64::new(*yi, 0.0)))?;
    }
    let min_eig_x = *herm_eig(&x.hermitize())?.values.last().expect("nonempty");
    let min_eig_s = *herm_eig(&s.hermitize())?.values.last().expect("nonempty");

    Ok(ResidualReport { primal_value, dual_value, rel_gap, primal_infeas, min_eig_x, min_eig_s })
}

/// Renders a problem as plain text, for logs and bug reports.
pub fn dump_problem(problem: &SdpProblem) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "sdp: dim {}, {} constraints",
        problem.dim,
        problem.constraints.len()
    );
    let dump_matrix = |out: &mut String, m: &CMatrix| {
        for i in 0..m.rows() {
            let row: Vec<String> = (0..m.cols())
                .map(|j| {
                    let v = m.get(i, j);
                    format!("{:+.6e}{:+.6e}i", v.re, v.im)
                })
                .collect();
            let _ = writeln!(out, "    [{}]", row.join(", "));
        }
    };
    out.push_str("  objective:\n");
    dump_matrix(&mut out, &problem.objective);
    for (i, c) in problem.constraints.iter().enumerate() {
        let _ = writeln!(out, "  constraint {i}: rhs = {:+.12e}", c.rhs);
        dump_matrix(&mut out, &c.matrix);
    }
    out
}

/// Solves the problem; see the module docs for the pipeline and guarantees.
pub fn solve(problem: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    if !(opts.rel_gap_tol > 0.0 && opts.feas_tol > 0.0) {
        return Err(SdpError::InvalidProblem("tolerances must be positive".into()));
    }
    let d = problem.dim;
    let n = 2 * d;
    let m_all = problem.constraints.len();
    // Memory guard: the Schur build keeps one n×n work matrix per constraint.
    if m_all.saturating_mul(n * n) > 1 << 28 {
        return Err(SdpError::TooLarge(format!(
            "constraint count {m_all} × embedded size {n}² exceeds the work-memory cap"
        )));
    }

    let c_r = embed_half(&problem.objective);
    let a_r: Vec<rsym::RMat> = problem.constraints.iter().map(|c| embed_half(&c.matrix)).collect();
    let b_all: Vec<f64> = problem.constraints.iter().map(|c| c.rhs).collect();

    let kept = match presolve(&a_r, &b_all) {
        PresolveOutcome::Keep(kept) => kept,
        PresolveOutcome::Inconsistent => {
            let x = CMatrix::zeros(d, d);
            let y = vec![0.0; m_all];
            let residuals = validate_solution(problem, &x, &y)?;
            return Ok(SdpSolution {
                status: SdpStatus::Infeasible,
                primal_value: 0.0,
                dual_value: 0.0,
                x,
                y,
                iterations: 0,
                residuals,
            });
        }
    };
    if kept.is_empty() {
        return Err(SdpError::InvalidProblem(
            "all constraints vanished in presolve; the feasible cone is unbounded or trivial".into(),
        ));
    }
    let a: Vec<&rsym::RMat> = kept.iter().map(|&i| &a_r[i]).collect();
    let b: Vec<f64> = kept.iter().map(|&i| b_all[i]).collect();

    let (x_r, y_kept, iterations, stalled) = ipm(&c_r, &a, &b, opts)?;

    let mut y = vec![0.0; m_all];
    for (slot, &i) in y_kept.iter().zip(&kept) {
        y[i] = *slot;
    }
    let x = extract_half(&x_r, d);
    let residuals = validate_solution(problem, &x, &y)?;

    let scale_x = 1.0 + x.max_abs();
    let mut s_scale = problem.objective.max_abs();
    for c in &problem.constraints {
        s_scale = s_scale.max(c.matrix.max_abs());
    }
    let optimal = residuals.rel_gap <= OPTIMAL_GAP_TOL
        && residuals.primal_infeas <= OPTIMAL_FEAS_TOL
        && residuals.min_eig_x >= -OPTIMAL_EIG_TOL * scale_x
        && residuals.min_eig_s >= -OPTIMAL_EIG_TOL * (1.0 + s_scale);
    let status = if optimal {
        SdpStatus::Optimal
    } else if stalled {
        SdpStatus::Stalled
    } else {
        SdpStatus::IterationLimit
    };

    Ok(SdpSolution {
        status,
        primal_value: residuals.primal_value,
        dual_value: residuals.dual_value,
        x,
        y,
        iterations,
        residuals,
    })
}

// ---------------------------------------------------------------------------
// Complex ↔ real translation
// ---------------------------------------------------------------------------

/// ½·[[Re H, −Im H], [Im H, Re H]] — the scaling that keeps inner products
/// against embedded variables equal to the complex ones.
fn embed_half(h: &CMatrix) -> rsym::RMat {
    let d = h.rows();
    let mut out = rsym::RMat::zeros(2 * d);
    for i in 0..d {
        for j in 0..d {
            let v = h.get(i, j);
            out.set(i, j, 0.5 * v.re);
            out.set(i + d, j + d, 0.5 * v.re);
            out.set(i, j + d, -0.5 * v.im);
            out.set(i + d, j, 0.5 * v.im);
        }
    }
    out
}

/// Averages the two real copies back into a Hermitian matrix.
fn extract_half(x: &rsym::RMat, d: usize) -> CMatrix {
    let mut out = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let re = 0.5 * (x.get(i, j) + x.get(i + d, j + d));
            let im = 0.5 * (x.get(i + d, j) - x.get(i, j + d));
            out.set(i, j, C64::new(re, im));
        }
    }
    out.hermitize()
}

// ---------------------------------------------------------------------------
// Presolve
// ---------------------------------------------------------------------------

enum PresolveOutcome {
    Keep(Vec<usize>),
    Inconsistent,
}

/// Rank-reveals the constraint Gram matrix with pivoted Cholesky; keeps an
/// independent subset and checks every dropped constraint's rhs against the
/// combination that reproduces its matrix.
fn presolve(a: &[rsym::RMat], b: &[f64]) -> PresolveOutcome {
    let m = a.len();
    let mut g = rsym::RMat::zeros(m);
    for i in 0..m {
        for j in 0..=i {
            let v = a[i].frob_dot(&a[j]);
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    let kept = pivoted_cholesky_basis(&g, PRESOLVE_RANK_TOL);
    if kept.len() == m {
        return PresolveOutcome::Keep(kept);
    }

    // Express each dropped A_j over the kept ones: G_KK c = G_K,j.
    let k = kept.len();
    let mut gkk = rsym::RMat::zeros(k);
    for (p, &i) in kept.iter().enumerate() {
        for (q, &j) in kept.iter().enumerate() {
            gkk.set(p, q, g.get(i, j));
        }
    }
    let l = match gkk.cholesky() {
        Some(l) => l,
        // The basis came straight out of a rank reveal; failure here means
        // the tolerance band is degenerate — treat every drop as consistent
        // only if its rhs is tiny.
        None => {
            let scale_b = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let consistent = (0..m)
                .filter(|i| !kept.contains(i))
                .all(|i| b[i].abs() <= PRESOLVE_RHS_TOL * (1.0 + scale_b));
            return if consistent { PresolveOutcome::Keep(kept) } else { PresolveOutcome::Inconsistent };
        }
    };
    let scale_b = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for j in 0..m {
        if kept.contains(&j) {
            continue;
        }
        let rhs: Vec<f64> = kept.iter().map(|&i| g.get(i, j)).collect();
        let coeff = l.cholesky_solve_vec(&rhs);
        let predicted: f64 = coeff.iter().zip(&kept).map(|(c, &i)| c * b[i]).sum();
        if (b[j] - predicted).abs() > PRESOLVE_RHS_TOL * (1.0 + scale_b) {
            return PresolveOutcome::Inconsistent;
        }
    }
    PresolveOutcome::Keep(kept)
}

/// Indices (ascending) of a maximal set of rows whose Gram matrix is
/// numerically positive definite, found by diagonal-pivoted Cholesky.
fn pivoted_cholesky_basis(g: &rsym::RMat, rel_tol: f64) -> Vec<usize> {
    let m = g.n();
    let mut a = g.clone();
    let mut piv: Vec<usize> = (0..m).collect();
    let scale = (0..m).map(|i| g.get(i, i)).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let mut rank = 0;
    for k in 0..m {
        let (p, dmax) = (k..m)
            .map(|i| (i, a.get(i, i)))
            .fold((k, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if dmax <= rel_tol * scale {
            break;
        }
        a.swap_sym(k, p);
        piv.swap(k, p);
        rank += 1;
        let root = a.get(k, k).sqrt();
        for i in k + 1..m {
            a.set(i, k, a.get(i, k) / root);
        }
        for i in k + 1..m {
            let lik = a.get(i, k);
            for j in k + 1..=i {
                let v = a.get(i, j) - lik * a.get(j, k);
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
    }
    let mut kept: Vec<usize> = piv[..rank].to_vec();
    kept.sort_unstable();
    kept
}

// ---------------------------------------------------------------------------
// Interior-point core (real symmetric)
// ---------------------------------------------------------------------------

/// Runs the predictor-corrector iteration. Returns the primal iterate, the
/// dual multipliers, the iteration count, and whether it stalled.
fn ipm(
    c: &rsym::RMat,
    a: &[&rsym::RMat],
    b: &[f64],
    opts: &SdpOptions,
) -> Result<(rsym::RMat, Vec<f64>, usize, bool)> {
    let n = c.n();
    let m = a.len();
    let norm_b = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let norm_c = c.max_abs();
    let norm_a = a.iter().map(|ai| ai.max_abs()).fold(0.0, f64::max);

    let mut x = rsym::RMat::identity(n);
    x.scale(1.0 + norm_b);
    let mut s = rsym::RMat::identity(n);
    s.scale(1.0 + norm_c + norm_a);
    let mut y = vec![0.0; m];

    let mut iterations = 0;
    let mut stalled = false;

    for iter in 0..opts.max_iter {
        iterations = iter;

        // Residuals and convergence metrics.
        let pval = c.frob_dot(&x);
        let dval: f64 = b.iter().zip(&y).map(|(bi, yi)| bi * yi).sum();
        let rp: Vec<f64> = (0..m).map(|i| b[i] - a[i].frob_dot(&x)).collect();
        let mut rd = c.clone();
        rd.add_scaled(&s, 1.0);
        for i in 0..m {
            rd.add_scaled(a[i], -y[i]);
        }
        let p_inf = rp.iter().fold(0.0f64, |acc, v| acc.max(v.abs())) / (1.0 + norm_b);
        let d_inf = rd.max_abs() / (1.0 + norm_c);
        let mu = x.trace_dot(&s) / n as f64;
        let rel_gap = (pval - dval).abs() / (1.0 + pval.abs().max(dval.abs()));
        if p_inf <= opts.feas_tol && d_inf <= opts.feas_tol && rel_gap <= opts.rel_gap_tol {
            return Ok((x, y, iterations, false));
        }

        // Factors of the current iterates.
        let ls = match s.cholesky_jitter() {
            Some(l) => l,
            None => {
                stalled = true;
                break;
            }
        };
        let s_inv = ls.cholesky_inverse();
        let lx = match x.cholesky_jitter() {
            Some(l) => l,
            None => {
                stalled = true;
                break;
            }
        };

        // Schur complement M[j][i] = tr(A_j · X A_i S⁻¹), built once per
        // iteration and shared by predictor and corrector.
        let u: Vec<rsym::RMat> =
            a.iter().map(|ai| x.matmul(ai).matmul_ref(&s_inv)).collect();
        let mut schur = rsym::RMat::zeros(m);
        for j in 0..m {
            for i in 0..=j {
                let v = a[j].trace_dot(&u[i]);
                schur.set(j, i, v);
                schur.set(i, j, v);
            }
        }
        let lschur = match schur.cholesky_jitter() {
            Some(l) => l,
            None => {
                stalled = true;
                break;
            }
        };

        let xs = x.matmul_ref(&s);
        let x_rd_sinv = x.matmul_ref(&rd).matmul_ref(&s_inv);

        // Predictor: aim at complementarity zero.
        let mut rc_aff = xs.clone();
        rc_aff.scale(-1.0);
        let (dx_aff, _dy_aff, ds_aff) =
            solve_direction(&rc_aff, &x_rd_sinv, &rp, a, &rd, &x, &s_inv, &lschur);
        let ap_aff = step_to_boundary(&lx, &dx_aff).min(1.0);
        let ad_aff = step_to_boundary(&ls, &ds_aff).min(1.0);
        let mu_aff = (x.trace_dot(&s)
            + ap_aff * dx_aff.trace_dot(&s)
            + ad_aff * x.trace_dot(&ds_aff)
            + ap_aff * ad_aff * dx_aff.trace_dot(&ds_aff))
            / n as f64;
        let sigma = ((mu_aff / mu).powi(3)).clamp(0.0, 1.0);

        // Corrector: recenter and compensate the second-order term.
        let mut rc = rsym::RMat::identity(n);
        rc.scale(sigma * mu);
        rc.add_scaled(&xs, -1.0);
        let second = dx_aff.matmul_ref(&ds_aff);
        rc.add_scaled(&second, -1.0);
        let (dx, dy, ds) = solve_direction(&rc, &x_rd_sinv, &rp, a, &rd, &x, &s_inv, &lschur);

        let ap = (STEP_BACKOFF * step_to_boundary(&lx, &dx)).min(1.0);
        let ad = (STEP_BACKOFF * step_to_boundary(&ls, &ds)).min(1.0);
        if ap.max(ad) < MIN_STEP {
            stalled = true;
            break;
        }
        x.add_scaled(&dx, ap);
        x.symmetrize();
        s.add_scaled(&ds, ad);
        s.symmetrize();
        for i in 0..m {
            y[i] += ad * dy[i];
        }
        iterations = iter + 1;
    }
    Ok((x, y, iterations, stalled))
}

/// One Newton solve against the already-factored Schur complement.
///
/// Directions satisfy (linearized): ⟨A_i, ΔX⟩ = rp_i; Σ Δy_i A_i − ΔS = R_d;
/// ΔX S + X ΔS = R_c; with ΔX symmetrized at the end, which preserves the
/// first equation because the A_i are symmetric.
#[allow(clippy::too_many_arguments)]
fn solve_direction(
    rc: &rsym::RMat,
    x_rd_sinv: &rsym::RMat,
    rp: &[f64],
    a: &[&rsym::RMat],
    rd: &rsym::RMat,
    x: &rsym::RMat,
    s_inv: &rsym::RMat,
    lschur: &rsym::RMat,
) -> (rsym::RMat, Vec<f64>, rsym::RMat) {
    let m = a.len();
    let mut w = rc.matmul_ref(s_inv);
    w.add_scaled(x_rd_sinv, 1.0);
    let rhs: Vec<f64> = (0..m).map(|j| a[j].trace_dot(&w) - rp[j]).collect();
    let dy = lschur.cholesky_solve_vec(&rhs);

    let mut ds = rd.clone();
    ds.scale(-1.0);
    for i in 0..m {
        ds.add_scaled(a[i], dy[i]);
    }
    let mut inner = rc.clone();
    inner.add_scaled(&x.matmul_ref(&ds), -1.0);
    let mut dx = inner.matmul_ref(s_inv);
    dx.symmetrize();
    (dx, dy, ds)
}

/// Largest α with P + α·D ⪰ 0, where `lp` is a Cholesky factor of P:
/// α = −1/λ_min(L⁻¹ D L⁻ᵀ) when that eigenvalue is negative, else ∞.
fn step_to_boundary(lp: &rsym::RMat, d: &rsym::RMat) -> f64 {
    let w = lp.solve_lower_mat(d);
    let mut bt = lp.solve_lower_mat(&w.transpose());
    bt.symmetrize();
    let lmin = bt.eigvals_min();
    if lmin >= -1e-13 { f64::INFINITY } else { -1.0 / lmin }
}

// ---------------------------------------------------------------------------
// Real symmetric kernels
// ---------------------------------------------------------------------------

mod rsym {
    //! Minimal dense real-matrix toolkit backing the interior-point loop:
    //! just the operations it needs, tuned for clarity over peak speed.

    #[derive(Debug, Clone, PartialEq)]
    pub struct RMat {
        n: usize,
        a: Vec<f64>,
    }

    impl RMat {
        pub fn zeros(n: usize) -> Self {
            RMat { n, a: vec![0.0; n * n] }
        }

        pub fn identity(n: usize) -> Self {
            let mut m = RMat::zeros(n);
            for i in 0..n {
                m.a[i * n + i] = 1.0;
            }
            m
        }

        pub fn n(&self) -> usize {
            self.n
        }

        #[inline]
        pub fn get(&self, i: usize, j: usize) -> f64 {
            self.a[i * self.n + j]
        }

        #[inline]
        pub fn set(&mut self, i: usize, j: usize, v: f64) {
            self.a[i * self.n + j] = v;
        }

        pub fn scale(&mut self, t: f64) {
            for v in &mut self.a {
                *v *= t;
            }
        }

        /// self += t·other.
        pub fn add_scaled(&mut self, other: &RMat, t: f64) {
            debug_assert_eq!(self.n, other.n);
            for (dst, src) in self.a.iter_mut().zip(&other.a) {
                *dst += t * src;
            }
        }

        pub fn max_abs(&self) -> f64 {
            self.a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
        }

        /// Σ_ij self_ij · other_ij.
        pub fn frob_dot(&self, other: &RMat) -> f64 {
            debug_assert_eq!(self.n, other.n);
            self.a.iter().zip(&other.a).map(|(p, q)| p * q).sum()
        }

        /// tr(self · other) — no symmetry assumed.
        pub fn trace_dot(&self, other: &RMat) -> f64 {
            debug_assert_eq!(self.n, other.n);
            let n = self.n;
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += self.a[i * n + j] * other.a[j * n + i];
                }
            }
            acc
        }

        pub fn matmul(&self, other: &RMat) -> RMat {
            self.matmul_ref(other)
        }

        pub fn matmul_ref(&self, other: &RMat) -> RMat {
            debug_assert_eq!(self.n, other.n);
            let n = self.n;
            let mut out = RMat::zeros(n);
            for i in 0..n {
                for k in 0..n {
                    let aik = self.a[i * n + k];
                    if aik == 0.0 {
                        continue;
                    }
                    let row = &other.a[k * n..(k + 1) * n];
                    let dst = &mut out.a[i * n..(i + 1) * n];
                    for (d, o) in dst.iter_mut().zip(row) {
                        *d += aik * o;
                    }
                }
            }
            out
        }

        pub fn transpose(&self) -> RMat {
            let n = self.n;
            let mut out = RMat::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    out.a[j * n + i] = self.a[i * n + j];
                }
            }
            out
        }

        pub fn symmetrize(&mut self) {
            let n = self.n;
            for i in 0..n {
                for j in 0..i {
                    let v = 0.5 * (self.a[i * n + j] + self.a[j * n + i]);
                    self.a[i * n + j] = v;
                    self.a[j * n + i] = v;
                }
            }
        }

        /// Swaps row/column i with row/column j, keeping symmetry.
        pub fn swap_sym(&mut self, i: usize, j: usize) {
            if i == j {
                return;
            }
            let n = self.n;
            for k in 0..n {
                self.a.swap(i * n + k, j * n + k);
            }
            for k in 0..n {
                self.a.swap(k * n + i, k * n + j);
            }
        }

        /// Plain lower Cholesky; `None` if a pivot is not strictly positive.
        pub fn cholesky(&self) -> Option<RMat> {
            let n = self.n;
            let mut l = RMat::zeros(n);
            for j in 0..n {
                let mut d = self.a[j * n + j];
                for k in 0..j {
                    d -= l.a[j * n + k] * l.a[j * n + k];
                }
                if d <= 0.0 || d.is_nan() {
                    return None;
                }
                let root = d.sqrt();
                l.a[j * n + j] = root;
                for i in j + 1..n {
                    let mut v = self.a[i * n + j];
                    for k in 0..j {
                        v -= l.a[i * n + k] * l.a[j * n + k];
                    }
                    l.a[i * n + j] = v / root;
                }
            }
            Some(l)
        }

        /// Cholesky with escalating diagonal regularization — roundoff
        /// insurance for matrices that are positive definite in exact
        /// arithmetic.
        pub fn cholesky_jitter(&self) -> Option<RMat> {
            if let Some(l) = self.cholesky() {
                return Some(l);
            }
            let scale = self.max_abs().max(1.0);
            let mut shift = 1e-14 * scale;
            for _ in 0..8 {
                let mut shifted = self.clone();
                for i in 0..self.n {
                    let v = shifted.get(i, i) + shift;
                    shifted.set(i, i, v);
                }
                if let Some(l) = shifted.cholesky() {
                    return Some(l);
                }
                shift *= 100.0;
            }
            None
        }

        /// Given self = L (lower), solves L·W = B.
        pub fn solve_lower_mat(&self, b: &RMat) -> RMat {
            let n = self.n;
            let mut w = b.clone();
            for col in 0..n {
                for i in 0..n {
                    let mut v = w.a[i * n + col];
                    for k in 0..i {
                        v -= self.a[i * n + k] * w.a[k * n + col];
                    }
                    w.a[i * n + col] = v / self.a[i * n + i];
                }
            }
            w
        }

        /// Given self = L (lower), solves L·Lᵀ·z = rhs.
        pub fn cholesky_solve_vec(&self, rhs: &[f64]) -> Vec<f64> {
            let n = self.n;
            debug_assert_eq!(rhs.len(), n);
            let mut z = rhs.to_vec();
            for i in 0..n {
                let mut v = z[i];
                for k in 0..i {
                    v -= self.a[i * n + k] * z[k];
                }
                z[i] = v / self.a[i * n + i];
            }
            for i in (0..n).rev() {
                let mut v = z[i];
                for k in i + 1..n {
                    v -= self.a[k * n + i] * z[k];
                }
                z[i] = v / self.a[i * n + i];
            }
            z
        }

        /// Given self = L (lower), forms (L·Lᵀ)⁻¹.
        pub fn cholesky_inverse(&self) -> RMat {
            let n = self.n;
            let mut inv = RMat::zeros(n);
            let mut col = vec![0.0; n];
            for j in 0..n {
                col.iter_mut().for_each(|v| *v = 0.0);
                col[j] = 1.0;
                for i in 0..n {
                    let mut v = col[i];
                    for k in 0..i {
                        v -= self.a[i * n + k] * col[k];
                    }
                    col[i] = v / self.a[i * n + i];
                }
                for i in (0..n).rev() {
                    let mut v = col[i];
                    for k in i + 1..n {
                        v -= self.a[k * n + i] * col[k];
                    }
                    col[i] = v / self.a[i * n + i];
                }
                for i in 0..n {
                    inv.a[i * n + j] = col[i];
                }
            }
            // Exact inverse is symmetric; scrub roundoff so downstream
            // products stay balanced.
            inv.symmetrize();
            inv
        }

        /// Smallest eigenvalue via cyclic Jacobi (values only).
        pub fn eigvals_min(&self) -> f64 {
            let vals = self.eigvals();
            vals.into_iter().fold(f64::INFINITY, f64::min)
        }

        /// All eigenvalues of the symmetric matrix, unordered.
        pub fn eigvals(&self) -> Vec<f64> {
            let n = self.n;
            if n == 0 {
                return Vec::new();
            }
            let mut a = self.clone();
            a.symmetrize();
            let scale = a.max_abs();
            if scale == 0.0 {
                return vec![0.0; n];
            }
            const MAX_SWEEPS: usize = 60;
            for _ in 0..MAX_SWEEPS {
                let mut off = 0.0;
                for i in 0..n {
                    for j in 0..i {
                        off += a.a[i * n + j] * a.a[i * n + j];
                    }
                }
                if off.sqrt() <= 1e-13 * scale * n as f64 {
                    break;
                }
                for p in 0..n {
                    for q in p + 1..n {
                        let apq = a.a[p * n + q];
                        if apq == 0.0 {
                            continue;
                        }
                        let app = a.a[p * n + p];
                        let aqq = a.a[q * n + q];
                        let tau = (aqq - app) / (2.0 * apq);
                        let t = if tau >= 0.0 {
                            1.0 / (tau + (1.0 + tau * tau).sqrt())
                        } else {
                            -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                        };
                        let c = 1.0 / (1.0 + t * t).sqrt();
                        let s = t * c;
                        for k in 0..n {
                            let akp = a.a[k * n + p];
                            let akq = a.a[k * n + q];
                            a.a[k * n + p] = c * akp - s * akq;
                            a.a[k * n + q] = s * akp + c * akq;
                        }
                        for k in 0..n {
                            let apk = a.a[p * n + k];
                            let aqk = a.a[q * n + k];
                            a.a[p * n + k] = c * apk - s * aqk;
                            a.a[q * n + k] = s * apk + c * aqk;
                        }
                        a.a[p * n + q] = 0.0;
                        a.a[q * n + p] = 0.0;
                    }
                }
            }
            (0..n).map(|i| a.a[i * n + i]).collect()
        }
    }

}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CMatrix, CVector, herm_eig};
    use crate::random::{random_hermitian, rng_from};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn trace_constraint(dim: usize, rhs: f64) -> SdpConstraint {
        SdpConstraint { matrix: CMatrix::identity(dim), rhs }
    }

    fn lambda_max_problem(obj: CMatrix) -> SdpProblem {
        let dim = obj.rows();
        SdpProblem::new(dim, obj, vec![trace_constraint(dim, 1.0)]).unwrap()
    }

    #[test]
    fn recovers_the_largest_eigenvalue() {
        let mut rng = rng_from(41);
        for trial in 0..20 {
            let d = 2 + trial % 4;
            let h = random_hermitian(&mut rng, d);
            let expect = herm_eig(&h).unwrap().values[0];
            let sol = solve(&lambda_max_problem(h), &SdpOptions::default()).unwrap();
            assert_eq!(sol.status, SdpStatus::Optimal, "trial {trial}: {:?}", sol.residuals);
            assert!(
                (sol.primal_value - expect).abs() <= 1e-7 * (1.0 + expect.abs()),
                "trial {trial}: {} vs {expect}",
                sol.primal_value
            );
            // Weak duality holds at the reported optimum.
            assert!(sol.dual_value >= sol.primal_value - 1e-6);
        }
    }

    #[test]
    fn frozen_correlation_maximization() {
        // max tr(σ_x X) with tr X = 1 and X_00 = X_11: optimum ½[[1,1],[1,1]]
        // with value 1.
        let sx = CMatrix::from_rows(vec![
            vec![c(0.0, 0.0), c(1.0, 0.0)],
            vec![c(1.0, 0.0), c(0.0, 0.0)],
        ])
        .unwrap();
        let balance = CMatrix::from_diag(&[1.0, -1.0]);
        let p = SdpProblem::new(
            2,
            sx,
            vec![trace_constraint(2, 1.0), SdpConstraint { matrix: balance, rhs: 0.0 }],
        )
        .unwrap();
        let sol = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_value - 1.0).abs() <= 1e-7);
        for (i, j, want) in [(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)] {
            assert!((sol.x.get(i, j) - c(want, 0.0)).norm() <= 1e-6);
        }
    }

    #[test]
    fn frozen_complex_instance() {
        // max tr(diag(1,−1)·X) with tr X = 1 and tr(σ_y X) = 0.8.
        // By hand: X_11 ∈ [0.2, 0.8] forced by |X_01| ≥ 0.4, optimum 0.6.
        let sy = CMatrix::from_rows(vec![
            vec![c(0.0, 0.0), c(0.0, -1.0)],
            vec![c(0.0, 1.0), c(0.0, 0.0)],
        ])
        .unwrap();
        let sz = CMatrix::from_diag(&[1.0, -1.0]);
        let p = SdpProblem::new(
            2,
            sz,
            vec![trace_constraint(2, 1.0), SdpConstraint { matrix: sy, rhs: 0.8 }],
        )
        .unwrap();
        let sol = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_value - 0.6).abs() <= 1e-7, "got {}", sol.primal_value);
        // The off-diagonal entry is forced to be purely imaginary: −0.4i.
        assert!((sol.x.get(0, 1) - c(0.0, -0.4)).norm() <= 1e-5);
    }

    #[test]
    fn values_scale_with_the_data() {
        let mut rng = rng_from(42);
        let h = random_hermitian(&mut rng, 3);
        let base = solve(&lambda_max_problem(h.clone()), &SdpOptions::default()).unwrap();

        let scaled_obj = solve(
            &lambda_max_problem(h.clone().scale(c(3.5, 0.0))),
            &SdpOptions::default(),
        )
        .unwrap();
        assert!(
            (scaled_obj.primal_value - 3.5 * base.primal_value).abs()
                <= 1e-6 * (1.0 + base.primal_value.abs() * 3.5)
        );

        let p = SdpProblem::new(3, h, vec![trace_constraint(3, 2.5)]).unwrap();
        let scaled_rhs = solve(&p, &SdpOptions::default()).unwrap();
        assert!(
            (scaled_rhs.primal_value - 2.5 * base.primal_value).abs()
                <= 1e-6 * (1.0 + base.primal_value.abs() * 2.5)
        );
    }

    #[test]
    fn solves_are_bitwise_deterministic() {
        let mut rng = rng_from(43);
        let h = random_hermitian(&mut rng, 4);
        let p = lambda_max_problem(h);
        let s1 = solve(&p, &SdpOptions::default()).unwrap();
        let s2 = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s1.primal_value.to_bits(), s2.primal_value.to_bits());
        assert_eq!(s1.iterations, s2.iterations);
        assert_eq!(s1.x, s2.x);
    }

    #[test]
    fn presolve_deduplicates_and_flags_contradictions() {
        let mut rng = rng_from(44);
        let h = random_hermitian(&mut rng, 3);
        let expect = herm_eig(&h).unwrap().values[0];

        // Duplicate trace constraint: solvable, one multiplier stays zero.
        let dup = SdpProblem::new(
            3,
            h.clone(),
            vec![trace_constraint(3, 1.0), trace_constraint(3, 1.0)],
        )
        .unwrap();
        let sol = solve(&dup, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_value - expect).abs() <= 1e-6 * (1.0 + expect.abs()));
        assert_eq!(sol.y[1], 0.0);

        // Same matrix, different rhs: no X can satisfy both.
        let contra = SdpProblem::new(
            3,
            h.clone(),
            vec![trace_constraint(3, 1.0), trace_constraint(3, 2.0)],
        )
        .unwrap();
        let sol = solve(&contra, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);

        // A dependent combination with a consistent rhs is fine.
        let a1 = CMatrix::from_diag(&[1.0, 0.0, 0.0]);
        let a2 = CMatrix::from_diag(&[0.0, 1.0, 1.0]);
        let sum = a1.add(&a2).unwrap();
        let consistent = SdpProblem::new(
            3,
            h.clone(),
            vec![
                SdpConstraint { matrix: a1.clone(), rhs: 0.4 },
                SdpConstraint { matrix: a2.clone(), rhs: 0.6 },
                SdpConstraint { matrix: sum.clone(), rhs: 1.0 },
            ],
        )
        .unwrap();
        assert_eq!(solve(&consistent, &SdpOptions::default()).unwrap().status, SdpStatus::Optimal);

        let inconsistent = SdpProblem::new(
            3,
            h,
            vec![
                SdpConstraint { matrix: a1, rhs: 0.4 },
                SdpConstraint { matrix: a2, rhs: 0.6 },
                SdpConstraint { matrix: sum, rhs: 1.1 },
            ],
        )
        .unwrap();
        assert_eq!(
            solve(&inconsistent, &SdpOptions::default()).unwrap().status,
            SdpStatus::Infeasible
        );
    }

    #[test]
    fn random_feasible_problems_reach_optimal_status() {
        let mut rng = rng_from(45);
        for trial in 0..10 {
            let d = 3 + trial % 2;
            // Interior feasible point: a full-rank density-like matrix.
            let g = crate::random::random_unitary(&mut rng, d);
            let mut x_feas = CMatrix::zeros(d, d);
            for k in 0..d {
                let col = CVector::from_vec((0..d).map(|i| g.get(i, k)).collect());
                let w = 1.0 / (1.0 + k as f64);
                x_feas = x_feas.add(&col.outer(&col).scale(c(w, 0.0))).unwrap();
            }
            let t = x_feas.trace().re;
            x_feas = x_feas.scale(c(1.0 / t, 0.0));

            let mut constraints = vec![trace_constraint(d, 1.0)];
            for _ in 0..3 {
                let m = random_hermitian(&mut rng, d);
                let rhs = m.matmul(&x_feas).unwrap().trace().re;
                constraints.push(SdpConstraint { matrix: m, rhs });
            }
            let obj = random_hermitian(&mut rng, d);
            let p = SdpProblem::new(d, obj, constraints).unwrap();
            let sol = solve(&p, &SdpOptions::default()).unwrap();
            assert_eq!(sol.status, SdpStatus::Optimal, "trial {trial}: {:?}", sol.residuals);
            assert!(sol.dual_value >= sol.primal_value - 1e-6, "trial {trial}");

            let report = validate_solution(&p, &sol.x, &sol.y).unwrap();
            assert!(report.primal_infeas <= 1e-7, "trial {trial}: {}", report.primal_infeas);
            assert!(report.min_eig_x >= -1e-8, "trial {trial}: {}", report.min_eig_x);
            assert!(report.min_eig_s >= -1e-7, "trial {trial}: {}", report.min_eig_s);
        }
    }

    #[test]
    fn iteration_caps_are_respected() {
        let mut rng = rng_from(46);
        let h = random_hermitian(&mut rng, 4);
        let opts = SdpOptions { max_iter: 1, ..SdpOptions::default() };
        let sol = solve(&lambda_max_problem(h), &opts).unwrap();
        assert_ne!(sol.status, SdpStatus::Optimal);
        assert!(sol.iterations <= 1);
    }

    #[test]
    fn malformed_problems_are_rejected() {
        // Non-Hermitian objective.
        let skew = CMatrix::from_rows(vec![
            vec![c(0.0, 0.0), c(1.0, 0.0)],
            vec![c(2.0, 0.0), c(0.0, 0.0)],
        ])
        .unwrap();
        assert!(SdpProblem::new(2, skew, vec![trace_constraint(2, 1.0)]).is_err());

        // Dimension mismatch in a constraint.
        let p = SdpProblem::new(
            2,
            CMatrix::identity(2),
            vec![SdpConstraint { matrix: CMatrix::identity(3), rhs: 1.0 }],
        );
        assert!(p.is_err());

        // Non-finite rhs.
        let p = SdpProblem::new(
            2,
            CMatrix::identity(2),
            vec![SdpConstraint { matrix: CMatrix::identity(2), rhs: f64::NAN }],
        );
        assert!(p.is_err());

        // No constraints at all.
        assert!(SdpProblem::new(2, CMatrix::identity(2), vec![]).is_err());
    }

    #[test]
    fn dump_is_parseable_by_eye() {
        let p = lambda_max_problem(CMatrix::identity(2));
        let text = dump_problem(&p);
        assert!(text.contains("dim 2"));
        assert!(text.contains("constraint 0"));
    }

    #[test]
    fn validation_matches_solution_fields() {
        let mut rng = rng_from(47);
        let h = random_hermitian(&mut rng, 3);
        let p = lambda_max_problem(h);
        let sol = solve(&p, &SdpOptions::default()).unwrap();
        let report = validate_solution(&p, &sol.x, &sol.y).unwrap();
        assert_eq!(report.primal_value, sol.primal_value);
        assert_eq!(report.dual_value, sol.dual_value);
        assert_eq!(report.rel_gap, sol.residuals.rel_gap);
    }
}
