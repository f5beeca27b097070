//! Audit toolkit for two-party sampling devices described by quantum states
//! and projective measurements.
//!
//! The crate is organized bottom-up:
//!
//! * [`linalg`] — dense complex matrices, register layouts, partial traces,
//!   Hermitian eigendecomposition, trace distance.
//! * [`correlation`] — device specifications, the correlations they induce,
//!   product/non-product tests, the bias floor of a joint distribution, and
//!   isometry-mediated closeness checks.
//! * [`protocol`] — message-passing sampling protocols between two parties
//!   and their honest simulation.
//! * [`sdp`] — a self-contained primal-dual interior-point solver for small
//!   semidefinite programs with complex Hermitian data.
//! * [`cheat`] — exact optimal forcing probabilities for a dishonest party,
//!   product-bound checks, and δ-security audits, all built on [`sdp`].
//! * [`cutchoose`] — a seeded Monte-Carlo harness for cut-and-choose device
//!   certification with pluggable adversaries.
//! * [`random`] — seeded generators for random states, measurements, device
//!   specs, and protocols, used by stress tests and simulation studies.

pub mod cheat;
pub mod correlation;
pub mod cutchoose;
pub mod linalg;
pub mod protocol;
pub mod random;
pub mod sdp;
