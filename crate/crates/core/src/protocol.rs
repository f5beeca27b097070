//! Two-party message-passing protocols with a single travelling message
//! register.
//!
//! A [`Protocol`] works over three registers ordered (A, M, B): Alice's
//! private register, the message register, and Bob's private register, with A
//! the most significant index. The parties alternate strictly, each move
//! applying a unitary to the mover's private register joined with M (local
//! ordering: private register most significant, M least) and then handing M
//! to the other party. After the last move both parties measure: whoever
//! holds M measures their private register together with M, the other party
//! measures their private register alone.
//!
//! Everything starts from the all-zeros basis state, so a protocol is fully
//! described by its dimensions, move sequence, and final measurement
//! families.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::JointDist;
use crate::linalg::{C64, CMatrix, CVector, LinalgError, MAX_TENSOR_DIM, STRUCT_TOL, is_projector};

/// Hard cap on the number of moves; enough for every desk-scale experiment
/// while keeping worst-case simulation and audit costs bounded.
pub const MAX_MOVES: usize = 16;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("total dimension {total} exceeds the limit of {limit}")]
    TooLarge { total: usize, limit: usize },
    #[error("{n} moves exceeds the limit of {limit}")]
    TooManyMoves { n: usize, limit: usize },
    #[error("moves must alternate: {0}")]
    Alternation(String),
    #[error("move {index} by {party} is not unitary within {tol:e}")]
    NotUnitary { index: usize, party: Party, tol: f64 },
    #[error("invalid final measurement: {0}")]
    BadMeasurement(String),
    #[error("invalid abort outcome: {0}")]
    BadAbort(String),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// One of the two parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Alice => write!(f, "Alice"),
            Party::Bob => write!(f, "Bob"),
        }
    }
}

/// A single move: `party` applies `unitary` to its private register joined
/// with M (private index most significant) and passes M across.
#[derive(Debug, Clone, PartialEq)]
pub struct Move {
    pub party: Party,
    pub unitary: CMatrix,
}

/// Result of an honest execution: the final global state and the joint
/// distribution of the two parties' measurement outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct HonestRun {
    pub final_state: CVector,
    pub outcomes: JointDist,
}

/// A validated two-party protocol. See the module docs for conventions.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    dim_a: usize,
    dim_m: usize,
    dim_b: usize,
    first: Party,
    moves: Vec<Move>,
    final_alice: Vec<CMatrix>,
    final_bob: Vec<CMatrix>,
    alice_abort: Option<usize>,
    bob_abort: Option<usize>,
}

impl Protocol {
    /// Validates and constructs a protocol.
    ///
    /// Checks, in order: positive dimensions with total ≤ [`MAX_TENSOR_DIM`];
    /// at most [`MAX_MOVES`] moves alternating strictly from `first`; every
    /// move unitary on the mover's local space; both final families complete,
    /// orthogonal projective measurements on the correct spaces (the holder of
    /// M at the end measures private ⊗ M); abort outcomes in range.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim_a: usize,
        dim_m: usize,
        dim_b: usize,
        first: Party,
        moves: Vec<Move>,
        final_alice: Vec<CMatrix>,
        final_bob: Vec<CMatrix>,
        alice_abort: Option<usize>,
        bob_abort: Option<usize>,
    ) -> Result<Self> {
        if dim_a == 0 || dim_m == 0 || dim_b == 0 {
            return Err(ProtocolError::InvalidDims("all register dimensions must be ≥ 1".into()));
        }
        let total = dim_a
            .checked_mul(dim_m)
            .and_then(|t| t.checked_mul(dim_b))
            .ok_or(ProtocolError::TooLarge { total: usize::MAX, limit: MAX_TENSOR_DIM })?;
        if total > MAX_TENSOR_DIM {
            return Err(ProtocolError::TooLarge { total, limit: MAX_TENSOR_DIM });
        }
        if moves.len() > MAX_MOVES {
            return Err(ProtocolError::TooManyMoves { n: moves.len(), limit: MAX_MOVES });
        }
        let mut expected = first;
        for (i, mv) in moves.iter().enumerate() {
            if mv.party != expected {
                return Err(ProtocolError::Alternation(format!(
                    "move {i} is by {}, expected {expected}",
                    mv.party
                )));
            }
            let local = match mv.party {
                Party::Alice => dim_a * dim_m,
                Party::Bob => dim_b * dim_m,
            };
            if mv.unitary.rows() != local || mv.unitary.cols() != local {
                return Err(ProtocolError::InvalidDims(format!(
                    "move {i} unitary is {}x{}, expected {local}x{local}",
                    mv.unitary.rows(),
                    mv.unitary.cols()
                )));
            }
            let gram = mv.unitary.dagger().matmul(&mv.unitary).expect("square");
            if gram.sub(&CMatrix::identity(local)).expect("same shape").max_abs() > STRUCT_TOL {
                return Err(ProtocolError::NotUnitary { index: i, party: mv.party, tol: STRUCT_TOL });
            }
            expected = expected.other();
        }

        let owner = match moves.last() {
            Some(mv) => mv.party.other(),
            None => first,
        };
        let dim_meas_a = if owner == Party::Alice { dim_a * dim_m } else { dim_a };
        let dim_meas_b = if owner == Party::Bob { dim_b * dim_m } else { dim_b };
        validate_final_family(&final_alice, dim_meas_a, "Alice")?;
        validate_final_family(&final_bob, dim_meas_b, "Bob")?;

        if let Some(a) = alice_abort {
            if a >= final_alice.len() {
                return Err(ProtocolError::BadAbort(format!(
                    "Alice abort outcome {a} out of range (na = {})",
                    final_alice.len()
                )));
            }
        }
        if let Some(b) = bob_abort {
            if b >= final_bob.len() {
                return Err(ProtocolError::BadAbort(format!(
                    "Bob abort outcome {b} out of range (nb = {})",
                    final_bob.len()
                )));
            }
        }

        Ok(Protocol {
            dim_a,
            dim_m,
            dim_b,
            first,
            moves,
            final_alice,
            final_bob,
            alice_abort,
            bob_abort,
        })
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_m(&self) -> usize {
        self.dim_m
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn total_dim(&self) -> usize {
        self.dim_a * self.dim_m * self.dim_b
    }

    pub fn first_mover(&self) -> Party {
        self.first
    }

    pub fn moves(&self) -> &[Move] {
        &self.moves
    }

    /// Who holds the message register when the final measurements happen:
    /// the receiver of the last move, or the first mover if there are none.
    pub fn message_owner(&self) -> Party {
        match self.moves.last() {
            Some(mv) => mv.party.other(),
            None => self.first,
        }
    }

    /// Dimension of `party`'s private register.
    pub fn private_dim(&self, party: Party) -> usize {
        match party {
            Party::Alice => self.dim_a,
            Party::Bob => self.dim_b,
        }
    }

    /// Dimension of the space `party`'s final measurement acts on.
    pub fn measured_dim(&self, party: Party) -> usize {
        let with_m = self.message_owner() == party;
        self.private_dim(party) * if with_m { self.dim_m } else { 1 }
    }

    /// `party`'s final measurement family.
    pub fn final_meas(&self, party: Party) -> &[CMatrix] {
        match party {
            Party::Alice => &self.final_alice,
            Party::Bob => &self.final_bob,
        }
    }

    pub fn n_outcomes(&self, party: Party) -> usize {
        self.final_meas(party).len()
    }

    pub fn abort_outcome(&self, party: Party) -> Option<usize> {
        match party {
            Party::Alice => self.alice_abort,
            Party::Bob => self.bob_abort,
        }
    }

    /// The all-zeros starting state on (A, M, B).
    pub fn initial_state(&self) -> CVector {
        CVector::basis(self.total_dim(), 0)
    }

    /// Applies a local operator of `party` to a global state. `with_message`
    /// selects whether the operator acts on private ⊗ M (the space of moves
    /// and of the message owner's final measurement) or on the private
    /// register alone.
    fn apply_local(&self, party: Party, op: &CMatrix, with_message: bool, v: &CVector) -> CVector {
        match (party, with_message) {
            // (A, M, B) with A most significant: A ⊗ M is the leading block.
            (Party::Alice, true) => apply_leading(op, v, self.dim_a * self.dim_m, self.dim_b),
            (Party::Alice, false) => apply_leading(op, v, self.dim_a, self.dim_m * self.dim_b),
            // B is the fastest index.
            (Party::Bob, false) => apply_trailing(op, v, self.dim_a * self.dim_m, self.dim_b),
            // Bob's local ordering is (B, M); neither block of the global
            // layout matches, so gather/scatter per Alice index.
            (Party::Bob, true) => {
                let (dm, db) = (self.dim_m, self.dim_b);
                let local = db * dm;
                let mut out = CVector::zeros(v.dim());
                let mut scratch = vec![C64::new(0.0, 0.0); local];
                for ia in 0..self.dim_a {
                    for (l, slot) in scratch.iter_mut().enumerate() {
                        let (ib, im) = (l / dm, l % dm);
                        *slot = v.data()[(ia * dm + im) * db + ib];
                    }
                    for p in 0..local {
                        let mut s = C64::new(0.0, 0.0);
                        for (q, &w) in scratch.iter().enumerate() {
                            s += op.get(p, q) * w;
                        }
                        let (ib, im) = (p / dm, p % dm);
                        out.data_mut()[(ia * dm + im) * db + ib] = s;
                    }
                }
                out
            }
        }
    }

    /// Builds the full (total × total) matrix of a local operator of `party`.
    ///
    /// Memory grows quadratically with the total dimension — intended for
    /// cross-checks and small systems, not the simulation hot path.
    pub fn embed_local(&self, party: Party, op: &CMatrix, with_message: bool) -> Result<CMatrix> {
        let expect = self.private_dim(party) * if with_message { self.dim_m } else { 1 };
        if op.rows() != expect || op.cols() != expect {
            return Err(ProtocolError::InvalidDims(format!(
                "operator is {}x{}, expected {expect}x{expect}",
                op.rows(),
                op.cols()
            )));
        }
        let m = match (party, with_message) {
            (Party::Alice, true) => op.tensor(&CMatrix::identity(self.dim_b))?,
            (Party::Alice, false) => op.tensor(&CMatrix::identity(self.dim_m * self.dim_b))?,
            (Party::Bob, false) => CMatrix::identity(self.dim_a * self.dim_m).tensor(op)?,
            (Party::Bob, true) => {
                let (da, dm, db) = (self.dim_a, self.dim_m, self.dim_b);
                let total = self.total_dim();
                let mut out = CMatrix::zeros(total, total);
                for ia in 0..da {
                    for lr in 0..db * dm {
                        let (ibr, imr) = (lr / dm, lr % dm);
                        let gr = (ia * dm + imr) * db + ibr;
                        for lc in 0..db * dm {
                            let (ibc, imc) = (lc / dm, lc % dm);
                            let gc = (ia * dm + imc) * db + ibc;
                            out.set(gr, gc, op.get(lr, lc));
                        }
                    }
                }
                out
            }
        };
        Ok(m)
    }

    /// States before any move and after each move: `moves.len() + 1` entries.
    pub fn state_trajectory(&self) -> Vec<CVector> {
        let mut states = Vec::with_capacity(self.moves.len() + 1);
        states.push(self.initial_state());
        for mv in &self.moves {
            let next = self.apply_local(mv.party, &mv.unitary, true, states.last().expect("nonempty"));
            states.push(next);
        }
        states
    }

    /// Runs the protocol with both parties honest and measures.
    pub fn simulate_honest(&self) -> HonestRun {
        let final_state = self.state_trajectory().pop().expect("nonempty");
        let owner = self.message_owner();
        let (na, nb) = (self.final_alice.len(), self.final_bob.len());
        let mut table = Vec::with_capacity(na * nb);
        for pa in &self.final_alice {
            let va = self.apply_local(Party::Alice, pa, owner == Party::Alice, &final_state);
            for pb in &self.final_bob {
                let vab = self.apply_local(Party::Bob, pb, owner == Party::Bob, &va);
                table.push(vab.norm().powi(2));
            }
        }
        let outcomes = JointDist::new(na, nb, table)
            .expect("complete projective measurements yield a distribution");
        HonestRun { final_state, outcomes }
    }
}

/// out = (op ⊗ 1_rest) · v where v is ordered (block, rest).
fn apply_leading(op: &CMatrix, v: &CVector, block: usize, rest: usize) -> CVector {
    debug_assert_eq!(op.rows(), block);
    debug_assert_eq!(v.dim(), block * rest);
    let mut out = CVector::zeros(v.dim());
    for p in 0..block {
        for q in 0..block {
            let w = op.get(p, q);
            if w.norm_sqr() == 0.0 {
                continue;
            }
            for r in 0..rest {
                out.data_mut()[p * rest + r] += w * v.data()[q * rest + r];
            }
        }
    }
    out
}

/// out = (1_rest ⊗ op) · v where v is ordered (rest, block).
fn apply_trailing(op: &CMatrix, v: &CVector, rest: usize, block: usize) -> CVector {
    debug_assert_eq!(op.rows(), block);
    debug_assert_eq!(v.dim(), rest * block);
    let mut out = CVector::zeros(v.dim());
    for r in 0..rest {
        for p in 0..block {
            let mut s = C64::new(0.0, 0.0);
            for q in 0..block {
                s += op.get(p, q) * v.data()[r * block + q];
            }
            out.data_mut()[r * block + p] = s;
        }
    }
    out
}

fn validate_final_family(family: &[CMatrix], dim: usize, who: &str) -> Result<()> {
    if family.is_empty() {
        return Err(ProtocolError::BadMeasurement(format!("{who}: needs at least one outcome")));
    }
    let mut sum = CMatrix::zeros(dim, dim);
    for (k, m) in family.iter().enumerate() {
        if m.rows() != dim || m.cols() != dim {
            return Err(ProtocolError::BadMeasurement(format!(
                "{who}: outcome {k} is {}x{}, expected {dim}x{dim}",
                m.rows(),
                m.cols()
            )));
        }
        if !is_projector(m, STRUCT_TOL) {
            return Err(ProtocolError::BadMeasurement(format!(
                "{who}: outcome {k} is not a projector within {STRUCT_TOL:e}"
            )));
        }
        for other in family.iter().take(k) {
            if m.matmul(other).expect("validated dims").max_abs() > STRUCT_TOL {
                return Err(ProtocolError::BadMeasurement(format!(
                    "{who}: projectors are not pairwise orthogonal"
                )));
            }
        }
        sum = sum.add(m).expect("validated dims");
    }
    if sum.sub(&CMatrix::identity(dim)).expect("same shape").max_abs() > STRUCT_TOL {
        return Err(ProtocolError::BadMeasurement(format!(
            "{who}: projectors do not sum to the identity"
        )));
    }
    Ok(())
}

/// The canonical one-move example: Alice entangles her qubit with the
/// message (|00⟩ ↦ (|00⟩ + |11⟩)/√2 on A ⊗ M) and sends it; both parties
/// measure in the computational basis and obtain a shared uniform bit.
///
/// Dimensions (2, 2, 1); honest outcomes p(0,0) = p(1,1) = ½.
pub fn coin_flip_protocol() -> Protocol {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64| C64::new(re, 0.0);
    // Hadamard on A, then add A into M (mod 2): columns |00⟩ ↦ (|00⟩+|11⟩)/√2,
    // |01⟩ ↦ (|01⟩+|10⟩)/√2, |10⟩ ↦ (|00⟩−|11⟩)/√2, |11⟩ ↦ (|01⟩−|10⟩)/√2.
    let v0 = CMatrix::from_rows(vec![
        vec![c(s), C64::new(0.0, 0.0), c(s), C64::new(0.0, 0.0)],
        vec![C64::new(0.0, 0.0), c(s), C64::new(0.0, 0.0), c(s)],
        vec![C64::new(0.0, 0.0), c(s), C64::new(0.0, 0.0), c(-s)],
        vec![c(s), C64::new(0.0, 0.0), c(-s), C64::new(0.0, 0.0)],
    ])
    .expect("rectangular");
    let basis_proj = |dim: usize, i: usize| {
        let e = CVector::basis(dim, i);
        e.outer(&e)
    };
    Protocol::new(
        2,
        2,
        1,
        Party::Alice,
        vec![Move { party: Party::Alice, unitary: v0 }],
        vec![basis_proj(2, 0), basis_proj(2, 1)],
        vec![basis_proj(2, 0), basis_proj(2, 1)],
        None,
        None,
    )
    .expect("hand-built protocol is valid")
}
