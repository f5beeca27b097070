//! What a dishonest party can force in a two-party protocol.
//!
//! Fix a protocol and a cheater; the other party (the "honest" one) follows
//! the script. The cheater is unconstrained — arbitrary private workspace,
//! arbitrary operations — but can only touch the world through the message
//! register. The honest party's view (its private register together with M)
//! just after the r-th received message is then characterized exactly by
//! semidefinite conditions:
//!
//! * after the first receipt, the view's private marginal equals whatever the
//!   honest party prepared before anything arrived;
//! * between consecutive receipts the honest party applies one scripted
//!   unitary and releases M, so consecutive views agree on the private
//!   marginal after that unitary;
//! * any positive chain obeying those marginal constraints is realizable by
//!   some cheater strategy.
//!
//! Maximizing the probability of one honest measurement outcome over such
//! chains is therefore a semidefinite program, built here and handed to
//! [`crate::sdp`]. Views are confined to supports reachable from the honest
//! preparation, which shrinks the blocks and keeps every program strictly
//! feasible.
//!
//! On top of single outcomes: [`kitaev_check`] verifies the product bound
//! p*₍A₎(b)·p*₍B₎(a) ≥ p(a,b) — an identity any correct solve must satisfy,
//! so a violation certifies numerical failure — and [`delta_security_audit`]
//! asks whether every forcing probability stays within δ of honest.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    C64, CMatrix, CVector, LinalgError, RegisterLayout, herm_eig, hermitian_basis, partial_trace,
    permute_registers,
};
use crate::protocol::{Party, Protocol, ProtocolError};
use crate::sdp::{
    ResidualReport, SdpConstraint, SdpError, SdpOptions, SdpProblem, SdpStatus, solve,
};

/// Cap on measurement outcomes per party for audits (bounds solver counts).
pub const MAX_OUTCOMES: usize = 16;

/// Slack added to every audit threshold to absorb solver tolerance.
pub const AUDIT_SLACK: f64 = 1e-6;

/// Residuals of the product bound below this certify numerical failure.
pub const KITAEV_TOL: f64 = 1e-6;

/// Relative eigenvalue cutoff when taking supports.
const SUPPORT_CUTOFF: f64 = 1e-10;

/// Tolerance for the honest-strategy feasibility invariant of built programs.
const FEAS_CHECK_TOL: f64 = 1e-9;

/// How far outside [honest − ε, 1 + ε] a solver value may stray before the
/// result is rejected as unreliable.
const VALUE_SANITY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CheatError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("outcome {outcome} out of range for {party} ({n} outcomes)")]
    BadOutcome { party: Party, outcome: usize, n: usize },
    #[error("{party} has {n} outcomes, more than the audit cap of {limit}")]
    TooManyOutcomes { party: Party, n: usize, limit: usize },
    #[error("solver did not certify optimality: status {status:?}, {detail}")]
    SolverFailed { status: SdpStatus, detail: String },
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error(
        "product bound violated at (a={a}, b={b}): residual {residual:e} — solver output is unreliable"
    )]
    KitaevViolation { a: usize, b: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, CheatError>;

/// A built forcing program: one positive block per received message, linked
/// by marginal constraints; the objective touches only the last block.
#[derive(Debug, Clone)]
pub struct CheatSdpInstance {
    pub problem: SdpProblem,
    /// Complex dimension of each view block (support rank × message dim).
    pub block_dims: Vec<usize>,
    /// Honest probability of the targeted outcome, for reference.
    pub honest_prob: f64,
    /// Number of messages the honest party receives from the cheater.
    pub receipts: usize,
}

/// Outcome of [`build_cheat_sdp`]: either the cheater has no channel to the
/// honest party (no receipts, probability is a constant) or a program.
#[derive(Debug, Clone)]
pub enum CheatModel {
    Constant(f64),
    Program(CheatSdpInstance),
}

/// Solver diagnostics attached to a [`CheatReport`] when a program ran.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpDiagnostics {
    pub status: SdpStatus,
    pub iterations: usize,
    pub residuals: ResidualReport,
}

/// Best probability a cheater can force for one honest outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheatReport {
    pub cheater: Party,
    /// Index into the honest party's measurement family.
    pub outcome: usize,
    /// Forcing probability, clamped to [0, 1].
    pub p_star: f64,
    /// Unclamped optimal value.
    pub raw_value: f64,
    /// The honest run's marginal for the same outcome.
    pub honest_prob: f64,
    pub receipts: usize,
    /// `None` when the probability is a constant (no receipts).
    pub sdp: Option<SdpDiagnostics>,
}

/// One audited inequality p* ≤ p + δ (+ slack).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditCheck {
    pub honest: Party,
    pub cheater: Party,
    pub outcome: usize,
    pub honest_prob: f64,
    pub forced_prob: f64,
    /// forced − honest − δ; positive beyond the slack fails the check.
    pub excess: f64,
    pub passed: bool,
}

/// Result of [`delta_security_audit`]. Abort outcomes are not audited: a
/// cheater inflating the abort probability is not a sampling violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub delta: f64,
    pub passed: bool,
    pub checks: Vec<AuditCheck>,
}

/// Result of [`kitaev_check`]: forcing profiles for both cheaters and the
/// product-bound residuals p*₍A₎(b)·p*₍B₎(a) − p(a,b).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KitaevReport {
    /// Indexed by Bob's outcome b: cheating Alice forcing honest Bob to b.
    pub alice_forcing: Vec<f64>,
    /// Indexed by Alice's outcome a: cheating Bob forcing honest Alice to a.
    pub bob_forcing: Vec<f64>,
    /// residuals[a][b], each ≥ 0 up to solver tolerance.
    pub residuals: Vec<Vec<f64>>,
    pub min_residual: f64,
    /// First (a, b) attaining the minimum, lexicographically.
    pub worst_pair: (usize, usize),
}

// ---------------------------------------------------------------------------
// Program construction
// ---------------------------------------------------------------------------

/// The honest party's scripted unitaries sliced by receipt boundaries.
struct HonestScript {
    /// Move applied before the first receipt (present iff honest moves first).
    pre: Option<CMatrix>,
    /// Exactly one honest move between consecutive receipts.
    between: Vec<CMatrix>,
    /// Move applied after the last receipt (present iff the honest party
    /// releases M at the end).
    post: Option<CMatrix>,
    /// Trajectory indices of the receipt states (just after each cheater move).
    receipt_states: Vec<usize>,
}

fn slice_honest_script(p: &Protocol, cheater: Party) -> Result<HonestScript> {
    let receipts: Vec<usize> = p
        .moves()
        .iter()
        .enumerate()
        .filter(|(_, mv)| mv.party == cheater)
        .map(|(i, _)| i)
        .collect();
    let honest_at = |i: usize| -> CMatrix { p.moves()[i].unitary.clone() };

    let mut pre = None;
    let mut between = Vec::new();
    let mut post = None;
    for (i, mv) in p.moves().iter().enumerate() {
        if mv.party == cheater {
            continue;
        }
        if receipts.is_empty() || i < receipts[0] {
            if pre.replace(honest_at(i)).is_some() {
                return Err(CheatError::Internal(
                    "more than one honest move before the first receipt".into(),
                ));
            }
        } else if i > *receipts.last().expect("nonempty") {
            if post.replace(honest_at(i)).is_some() {
                return Err(CheatError::Internal(
                    "more than one honest move after the last receipt".into(),
                ));
            }
        } else {
            between.push(honest_at(i));
        }
    }
    if !receipts.is_empty() && between.len() != receipts.len() - 1 {
        return Err(CheatError::Internal(format!(
            "expected {} honest moves between receipts, found {}",
            receipts.len() - 1,
            between.len()
        )));
    }
    Ok(HonestScript { pre, between, post, receipt_states: receipts.iter().map(|i| i + 1).collect() })
}

/// Orthonormal basis (columns) of the support of a PSD matrix, using a
/// relative eigenvalue cutoff.
fn support_basis(h: &CMatrix) -> Result<CMatrix> {
    let eig = herm_eig(&h.hermitize())?;
    let lmax = eig.values.first().copied().unwrap_or(0.0);
    if lmax <= 0.0 {
        return Err(CheatError::Internal("support of a zero matrix requested".into()));
    }
    let threshold = SUPPORT_CUTOFF * lmax;
    let rank = eig.values.iter().take_while(|&&v| v > threshold).count();
    let d = h.rows();
    let mut w = CMatrix::zeros(d, rank);
    for j in 0..rank {
        for i in 0..d {
            w.set(i, j, eig.vectors.get(i, j));
        }
    }
    Ok(w)
}

/// Conjugates a (d_h·d_m)-space operator down to a support: (W ⊗ 1_M)† op (W ⊗ 1_M).
fn restrict(op: &CMatrix, w: &CMatrix, dm: usize) -> Result<CMatrix> {
    let wi = w.tensor(&CMatrix::identity(dm))?;
    Ok(wi.dagger().matmul(op)?.matmul(&wi)?)
}

/// Copies `small` onto the diagonal of `big` at `offset`.
fn place_block(big: &mut CMatrix, small: &CMatrix, offset: usize) {
    for i in 0..small.rows() {
        for j in 0..small.cols() {
            big.set(offset + i, offset + j, small.get(i, j));
        }
    }
}

/// Marginal of the honest run for one party's outcome.
fn honest_marginal(p: &Protocol, honest: Party, outcome: usize) -> f64 {
    let run = p.simulate_honest();
    match honest {
        Party::Alice => (0..run.outcomes.nb()).map(|b| run.outcomes.p(outcome, b)).sum(),
        Party::Bob => (0..run.outcomes.na()).map(|a| run.outcomes.p(a, outcome)).sum(),
    }
}

/// The honest party's final operator on (private ⊗ M), seen from the moment
/// of the last receipt: the bare projector if the honest party still holds M
/// at measurement time, otherwise the projector pulled back through its final
/// scripted unitary.
fn final_operator(p: &Protocol, honest: Party, outcome: usize, post: &Option<CMatrix>) -> Result<CMatrix> {
    let proj = &p.final_meas(honest)[outcome];
    match post {
        None => {
            if p.message_owner() != honest {
                return Err(CheatError::Internal(
                    "no post-receipt move, yet the honest party does not hold M".into(),
                ));
            }
            Ok(proj.clone())
        }
        Some(v) => {
            let lifted = proj.tensor(&CMatrix::identity(p.dim_m()))?;
            Ok(v.dagger().matmul(&lifted)?.matmul(v)?)
        }
    }
}

/// The honest party's reduced view on (private, M) at each receipt point of
/// the all-honest run, in the (private, M) register order.
fn honest_views(p: &Protocol, honest: Party, receipt_states: &[usize]) -> Result<Vec<CMatrix>> {
    let traj = p.state_trajectory();
    let layout =
        RegisterLayout::new(vec![("A", p.dim_a()), ("M", p.dim_m()), ("B", p.dim_b())])?;
    receipt_states
        .iter()
        .map(|&t| {
            let rho = traj[t].outer(&traj[t]);
            match honest {
                Party::Alice => Ok(partial_trace(&rho, &layout, &["A", "M"])?),
                Party::Bob => {
                    let kept = partial_trace(&rho, &layout, &["M", "B"])?;
                    let kept_layout =
                        RegisterLayout::new(vec![("M", p.dim_m()), ("B", p.dim_b())])?;
                    Ok(permute_registers(&kept, &kept_layout, &["B", "M"])?.0)
                }
            }
        })
        .collect()
}

/// Builds the forcing program for `cheater` targeting the honest party's
/// `outcome`, or the constant probability when the cheater never sends.
///
/// The built program is checked against the all-honest run before being
/// returned: the honest views must satisfy every constraint and reproduce the
/// honest probability in the objective, within `1e-9`.
pub fn build_cheat_sdp(p: &Protocol, cheater: Party, outcome: usize) -> Result<CheatModel> {
    let honest = cheater.other();
    let n_out = p.n_outcomes(honest);
    if outcome >= n_out {
        return Err(CheatError::BadOutcome { party: honest, outcome, n: n_out });
    }
    if n_out > MAX_OUTCOMES {
        return Err(CheatError::TooManyOutcomes { party: honest, n: n_out, limit: MAX_OUTCOMES });
    }
    let dm = p.dim_m();
    let dh = p.private_dim(honest);
    let script = slice_honest_script(p, cheater)?;
    let honest_prob = honest_marginal(p, honest, outcome);

    if script.receipt_states.is_empty() {
        // Nothing ever reaches the honest party; evolve its registers alone.
        let mut v = CVector::basis(dh * dm, 0);
        if let Some(u) = &script.pre {
            v = u.apply(&v)?;
        }
        // `between` is empty and `post` can only exist with receipts.
        let owner = p.message_owner();
        let proj = &p.final_meas(honest)[outcome];
        let prob = if owner == honest {
            proj.apply(&v)?.norm().powi(2)
        } else {
            proj.tensor(&CMatrix::identity(dm))?.apply(&v)?.norm().powi(2)
        };
        if (prob - honest_prob).abs() > FEAS_CHECK_TOL {
            return Err(CheatError::Internal(format!(
                "isolated honest evolution gives {prob}, global marginal {honest_prob}"
            )));
        }
        return Ok(CheatModel::Constant(prob));
    }

    let receipts = script.receipt_states.len();

    // Anchor: honest private marginal before the first receipt.
    let anchor = match &script.pre {
        None => {
            let e = CVector::basis(dh, 0);
            e.outer(&e)
        }
        Some(u) => {
            let v0 = u.apply(&CVector::basis(dh * dm, 0))?;
            let layout = RegisterLayout::new(vec![("P", dh), ("M", dm)])?;
            partial_trace(&v0.outer(&v0), &layout, &["P"])?
        }
    };

    // Support chain: confine block r to the private subspace reachable from
    // the anchor through the scripted unitaries. Optima are unaffected (the
    // marginal constraints pin every feasible view inside these supports) and
    // the restricted programs gain strictly feasible interiors.
    let mut supports: Vec<CMatrix> = Vec::with_capacity(receipts);
    supports.push(support_basis(&anchor)?);
    for v in &script.between {
        let prev = supports.last().expect("nonempty");
        let reach = v.matmul(&prev.tensor(&CMatrix::identity(dm))?)?;
        let image = reach.matmul(&reach.dagger())?;
        let layout = RegisterLayout::new(vec![("P", dh), ("M", dm)])?;
        let prop = partial_trace(&image, &layout, &["P"])?;
        supports.push(support_basis(&prop)?);
    }

    let block_dims: Vec<usize> = supports.iter().map(|w| w.cols() * dm).collect();
    let offsets: Vec<usize> = block_dims
        .iter()
        .scan(0usize, |acc, d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let total: usize = block_dims.iter().sum();

    let mut constraints = Vec::new();

    // First block: private marginal equals the (restricted) anchor.
    let r1 = supports[0].cols();
    let anchor_small = supports[0].dagger().matmul(&anchor)?.matmul(&supports[0])?;
    for e in hermitian_basis(r1) {
        let mut a = CMatrix::zeros(total, total);
        place_block(&mut a, &e.tensor(&CMatrix::identity(dm))?, offsets[0]);
        let rhs = e.matmul(&anchor_small)?.trace().re;
        constraints.push(SdpConstraint { matrix: a, rhs });
    }

    // Chain: view r+1's private marginal equals view r's after the scripted
    // unitary. With E ranging over a Hermitian basis of the (r+1)-support:
    //   tr((E ⊗ 1_M)·ρ_{r+1}) = tr(Ṽ†(W E W† ⊗ 1_M)Ṽ · ρ_r).
    for (r, v) in script.between.iter().enumerate() {
        let w_next = &supports[r + 1];
        let v_tilde = v.matmul(&supports[r].tensor(&CMatrix::identity(dm))?)?;
        for e in hermitian_basis(w_next.cols()) {
            let mut a = CMatrix::zeros(total, total);
            place_block(&mut a, &e.tensor(&CMatrix::identity(dm))?, offsets[r + 1]);
            let lifted = w_next.matmul(&e)?.matmul(&w_next.dagger())?;
            let pulled = v_tilde
                .dagger()
                .matmul(&lifted.tensor(&CMatrix::identity(dm))?)?
                .matmul(&v_tilde)?;
            place_block(&mut a, &pulled.scale(C64::new(-1.0, 0.0)), offsets[r]);
            constraints.push(SdpConstraint { matrix: a, rhs: 0.0 });
        }
    }

    // Objective on the last block.
    let op_full = final_operator(p, honest, outcome, &script.post)?;
    let op_small = restrict(&op_full, supports.last().expect("nonempty"), dm)?;
    let mut objective = CMatrix::zeros(total, total);
    place_block(&mut objective, &op_small, offsets[receipts - 1]);

    let problem = SdpProblem::new(total, objective, constraints)?;

    // Invariant: the honest strategy is feasible and scores its own marginal.
    let views = honest_views(p, honest, &script.receipt_states)?;
    let mut x_honest = CMatrix::zeros(total, total);
    for (r, view) in views.iter().enumerate() {
        let small = restrict(view, &supports[r], dm)?;
        place_block(&mut x_honest, &small, offsets[r]);
    }
    for (i, c) in problem.constraints().iter().enumerate() {
        let got = c.matrix.matmul(&x_honest)?.trace().re;
        if (got - c.rhs).abs() > FEAS_CHECK_TOL {
            return Err(CheatError::Internal(format!(
                "honest strategy violates constraint {i}: {got} vs {}",
                c.rhs
            )));
        }
    }
    let scored = problem.objective().matmul(&x_honest)?.trace().re;
    if (scored - honest_prob).abs() > FEAS_CHECK_TOL {
        return Err(CheatError::Internal(format!(
            "honest strategy scores {scored}, expected the honest marginal {honest_prob}"
        )));
    }

    Ok(CheatModel::Program(CheatSdpInstance { problem, block_dims, honest_prob, receipts }))
}

// ---------------------------------------------------------------------------
// Forcing probabilities and audits
// ---------------------------------------------------------------------------

/// Maximal probability with which `cheater` can force the honest party's
/// measurement to land on `outcome`.
pub fn forcing_probability(p: &Protocol, cheater: Party, outcome: usize) -> Result<CheatReport> {
    match build_cheat_sdp(p, cheater, outcome)? {
        CheatModel::Constant(prob) => Ok(CheatReport {
            cheater,
            outcome,
            p_star: prob.clamp(0.0, 1.0),
            raw_value: prob,
            honest_prob: prob,
            receipts: 0,
            sdp: None,
        }),
        CheatModel::Program(inst) => {
            let sol = solve(&inst.problem, &SdpOptions::default())?;
            if sol.status != SdpStatus::Optimal {
                return Err(CheatError::SolverFailed {
                    status: sol.status,
                    detail: format!(
                        "cheater {cheater}, outcome {outcome}: rel_gap {:e}, primal_infeas {:e}",
                        sol.residuals.rel_gap, sol.residuals.primal_infeas
                    ),
                });
            }
            let raw = sol.primal_value;
            if raw < inst.honest_prob - VALUE_SANITY_TOL || raw > 1.0 + VALUE_SANITY_TOL {
                return Err(CheatError::Internal(format!(
                    "optimal value {raw} outside [{}, 1] beyond tolerance",
                    inst.honest_prob
                )));
            }
            Ok(CheatReport {
                cheater,
                outcome,
                p_star: raw.clamp(0.0, 1.0),
                raw_value: raw,
                honest_prob: inst.honest_prob,
                receipts: inst.receipts,
                sdp: Some(SdpDiagnostics {
                    status: sol.status,
                    iterations: sol.iterations,
                    residuals: sol.residuals,
                }),
            })
        }
    }
}

/// Forcing probabilities for every outcome of the honest party, solved in
/// parallel (deterministic order).
pub fn forcing_profile(p: &Protocol, cheater: Party) -> Result<Vec<CheatReport>> {
    let honest = cheater.other();
    let n = p.n_outcomes(honest);
    if n > MAX_OUTCOMES {
        return Err(CheatError::TooManyOutcomes { party: honest, n, limit: MAX_OUTCOMES });
    }
    (0..n).into_par_iter().map(|o| forcing_probability(p, cheater, o)).collect()
}

/// Verifies the product bound p*₍A₎(b)·p*₍B₎(a) ≥ p(a,b) over all outcome
/// pairs. Residuals more than [`KITAEV_TOL`] below zero are impossible for
/// correct solves and reported as an error.
pub fn kitaev_check(p: &Protocol) -> Result<KitaevReport> {
    let run = p.simulate_honest();
    let alice_forcing: Vec<f64> =
        forcing_profile(p, Party::Alice)?.into_iter().map(|r| r.p_star).collect();
    let bob_forcing: Vec<f64> =
        forcing_profile(p, Party::Bob)?.into_iter().map(|r| r.p_star).collect();

    let (na, nb) = (bob_forcing.len(), alice_forcing.len());
    let mut residuals = vec![vec![0.0; nb]; na];
    let mut min_residual = f64::INFINITY;
    let mut worst_pair = (0, 0);
    for a in 0..na {
        for b in 0..nb {
            let r = alice_forcing[b] * bob_forcing[a] - run.outcomes.p(a, b);
            residuals[a][b] = r;
            if r < min_residual {
                min_residual = r;
                worst_pair = (a, b);
            }
        }
    }
    if min_residual < -KITAEV_TOL {
        return Err(CheatError::KitaevViolation {
            a: worst_pair.0,
            b: worst_pair.1,
            residual: min_residual,
        });
    }
    Ok(KitaevReport { alice_forcing, bob_forcing, residuals, min_residual, worst_pair })
}

/// Audits δ-security: for every party and every non-abort outcome, the other
/// party's forcing probability must not exceed the honest marginal by more
/// than δ (plus [`AUDIT_SLACK`]).
pub fn delta_security_audit(p: &Protocol, delta: f64) -> Result<AuditReport> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(CheatError::Internal(format!("δ must be finite and ≥ 0, got {delta}")));
    }
    let mut checks = Vec::new();
    for honest in [Party::Alice, Party::Bob] {
        let cheater = honest.other();
        let profile = forcing_profile(p, cheater)?;
        for report in profile {
            if Some(report.outcome) == p.abort_outcome(honest) {
                continue;
            }
            let excess = report.p_star - report.honest_prob - delta;
            checks.push(AuditCheck {
                honest,
                cheater,
                outcome: report.outcome,
                honest_prob: report.honest_prob,
                forced_prob: report.p_star,
                excess,
                passed: excess <= AUDIT_SLACK,
            });
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(AuditReport { delta, passed, checks })
}
