//! Seeded generators for random states, unitaries, measurement families,
//! device specs, and protocols.
//!
//! All generators draw from a caller-supplied [`ChaCha8Rng`], so every
//! consumer (stress tests, acceptance suites, Monte-Carlo studies) is
//! reproducible from a single `u64` seed. Streams derived with
//! [`stream_rng`] are independent for distinct stream indices.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::correlation::DeviceSpec;
use crate::linalg::{C64, CMatrix, CVector};
use crate::protocol::{Move, Party, Protocol};

/// RNG seeded directly from a `u64`.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG on an independent stream derived from `(seed, stream)`; used to give
/// each Monte-Carlo trial its own counter-based stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard complex Gaussian entry.
pub fn random_complex(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im)
}

/// Haar-like random unit vector of dimension `d`.
pub fn random_state(rng: &mut ChaCha8Rng, d: usize) -> CVector {
    loop {
        let v = CVector::from_vec((0..d).map(|_| random_complex(rng)).collect());
        if let Ok(n) = v.normalized() {
            return n;
        }
    }
}

/// Random unitary: modified Gram-Schmidt applied to a complex Gaussian matrix.
pub fn random_unitary(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    loop {
        let g = CMatrix::from_fn(d, d, |_, _| random_complex(rng));
        if let Some(u) = gram_schmidt(&g) {
            return u;
        }
    }
}

fn gram_schmidt(g: &CMatrix) -> Option<CMatrix> {
    let d = g.rows();
    let mut cols: Vec<Vec<C64>> = (0..d).map(|j| (0..d).map(|i| g.get(i, j)).collect()).collect();
    for j in 0..d {
        for k in 0..j {
            let proj: C64 = (0..d).map(|i| cols[k][i].conj() * cols[j][i]).sum();
            for i in 0..d {
                let sub = proj * cols[k][i];
                cols[j][i] -= sub;
            }
        }
        let norm: f64 = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-8 {
            return None; // numerically degenerate draw; resample
        }
        for i in 0..d {
            cols[j][i] /= norm;
        }
    }
    Some(CMatrix::from_fn(d, d, |i, j| cols[j][i]))
}

/// Random Hermitian matrix with Gaussian entries.
pub fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| random_complex(rng));
    g.hermitize()
}

/// Random complete orthogonal projector family with `k` outcomes on dimension
/// `d` (requires 1 ≤ k ≤ d). Every projector has rank ≥ 1 and the family sums
/// to the identity.
pub fn random_projector_family(rng: &mut ChaCha8Rng, d: usize, k: usize) -> Vec<CMatrix> {
    assert!(k >= 1 && k <= d, "need 1 ≤ k ≤ d, got k={k}, d={d}");
    let u = random_unitary(rng, d);
    // Random composition of d into k positive parts.
    let mut sizes = vec![1usize; k];
    for _ in 0..(d - k) {
        let j = rng.gen_range(0..k);
        sizes[j] += 1;
    }
    let mut projectors = Vec::with_capacity(k);
    let mut col = 0usize;
    for &sz in &sizes {
        let mut p = CMatrix::zeros(d, d);
        for c in col..col + sz {
            let v = CVector::from_vec((0..d).map(|i| u.get(i, c)).collect());
            p = p.add(&v.outer(&v)).expect("same shape");
        }
        projectors.push(p);
        col += sz;
    }
    projectors
}

/// Random device spec with the given local dimensions, input counts, and
/// outcome counts (outcomes ≤ local dimension on each side).
pub fn random_device_spec(
    rng: &mut ChaCha8Rng,
    dim_a: usize,
    dim_b: usize,
    nx: usize,
    ny: usize,
    na: usize,
    nb: usize,
) -> DeviceSpec {
    let state = random_state(rng, dim_a * dim_b);
    let alice = (0..nx).map(|_| random_projector_family(rng, dim_a, na)).collect();
    let bob = (0..ny).map(|_| random_projector_family(rng, dim_b, nb)).collect();
    DeviceSpec::new(dim_a, dim_b, state, alice, bob).expect("generated spec is valid")
}

/// Random spec whose state is a tensor product, so the induced correlation is
/// a product distribution for every input pair.
pub fn random_product_spec(
    rng: &mut ChaCha8Rng,
    dim_a: usize,
    dim_b: usize,
    nx: usize,
    ny: usize,
    na: usize,
    nb: usize,
) -> DeviceSpec {
    let sa = random_state(rng, dim_a);
    let sb = random_state(rng, dim_b);
    let state = sa.tensor(&sb).expect("small dims");
    let alice = (0..nx).map(|_| random_projector_family(rng, dim_a, na)).collect();
    let bob = (0..ny).map(|_| random_projector_family(rng, dim_b, nb)).collect();
    DeviceSpec::new(dim_a, dim_b, state, alice, bob).expect("generated spec is valid")
}

/// Caps for [`random_protocol`].
#[derive(Debug, Clone, Copy)]
pub struct ProtocolCaps {
    /// Inclusive range for each register dimension (A, M, B).
    pub dim_range: (usize, usize),
    /// Inclusive range for the number of moves.
    pub moves_range: (usize, usize),
    /// Maximum outcomes per party (at least 1; clipped to measured dimension).
    pub max_outcomes: usize,
}

impl Default for ProtocolCaps {
    fn default() -> Self {
        ProtocolCaps { dim_range: (2, 4), moves_range: (0, 3), max_outcomes: 3 }
    }
}

/// Random well-formed protocol: random register dimensions, random alternating
/// moves with random unitaries, and random complete projective measurements on
/// whatever spaces the parties hold at the end.
pub fn random_protocol(rng: &mut ChaCha8Rng, caps: ProtocolCaps) -> Protocol {
    let (lo, hi) = caps.dim_range;
    let dim_a = rng.gen_range(lo..=hi);
    let dim_m = rng.gen_range(lo..=hi);
    let dim_b = rng.gen_range(lo..=hi);
    let n_moves = rng.gen_range(caps.moves_range.0..=caps.moves_range.1);
    let first = if rng.gen_bool(0.5) { Party::Alice } else { Party::Bob };

    let mut moves = Vec::with_capacity(n_moves);
    let mut actor = first;
    for _ in 0..n_moves {
        let local = match actor {
            Party::Alice => dim_a * dim_m,
            Party::Bob => dim_b * dim_m,
        };
        moves.push(Move { party: actor, unitary: random_unitary(rng, local) });
        actor = actor.other();
    }

    let owner = if n_moves == 0 { first } else { moves[n_moves - 1].party.other() };
    let alice_dim = if owner == Party::Alice { dim_a * dim_m } else { dim_a };
    let bob_dim = if owner == Party::Bob { dim_b * dim_m } else { dim_b };
    let na = rng.gen_range(1..=caps.max_outcomes.min(alice_dim));
    let nb = rng.gen_range(1..=caps.max_outcomes.min(bob_dim));
    let final_alice = random_projector_family(rng, alice_dim, na);
    let final_bob = random_projector_family(rng, bob_dim, nb);

    Protocol::new(dim_a, dim_m, dim_b, first, moves, final_alice, final_bob, None, None)
        .expect("generated protocol is valid")
}

/// Samples an index from a finite distribution given by `probs` (assumed
/// normalized within roundoff; the last index absorbs any residual mass).
pub fn sample_discrete(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p.max(0.0);
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
