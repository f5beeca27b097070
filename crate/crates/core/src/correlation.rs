//! Device specifications, the correlations they induce, and structural tests
//! on those correlations.
//!
//! A [`DeviceSpec`] fixes a bipartite pure state and per-input projective
//! measurement families for each party. [`compute_correlation`] evaluates the
//! joint conditional table p(ab|xy) = ⟨ψ| M^x_a ⊗ N^y_b |ψ⟩. On top of the
//! table this module provides:
//!
//! * [`is_product`] — decides whether a correlation is a product of its
//!   marginals, returning a maximal-violation witness when it is not. Only
//!   positive deviations p(ab|xy) − p(a|x)p(b|y) need to be searched: if a
//!   correlation is non-product, some entry must exceed the product of its
//!   marginals, since each row/column of deviations sums to zero.
//! * [`bias_floor`] — the largest per-pair positive root δ of
//!   (p(a)+δ)(p(b)+δ) = p(ab) over pairs with p(ab) > p(a)p(b); any sampling
//!   protocol whose cheating marginals stay within δ of honest for δ below
//!   this floor is impossible.
//! * [`check_closeness`] — compares a candidate device against a target
//!   through caller-supplied local isometries, measuring the trace distance
//!   between unnormalized post-measurement outer products.
//! * [`multiparty_nonproduct`] — scans every bipartition of an n-party
//!   distribution for non-product structure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    self, C64, CMatrix, CVector, LinalgError, RegisterLayout, STRUCT_TOL, is_projector,
    permute_registers_vec,
};

/// Default tolerance for product/non-product decisions.
pub const DEFAULT_PRODUCT_TOL: f64 = 1e-8;

/// Probability entries below this are skipped when taking bias-floor roots.
pub const BIAS_FLOOR_SKIP_TOL: f64 = 1e-9;

/// Cap on the number of parties in a multiparty scan (table sizes explode
/// beyond desk scale past this).
pub const MAX_PARTIES: usize = 12;

#[derive(Debug, Error)]
pub enum CorrError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid device spec: {0}")]
    InvalidSpec(String),
    #[error("invalid correlation: {0}")]
    InvalidCorrelation(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid isometry: {0}")]
    InvalidIsometry(String),
    #[error("incompatible shapes: {0}")]
    Incompatible(String),
}

pub type Result<T> = std::result::Result<T, CorrError>;

// ---------------------------------------------------------------------------
// Device specifications
// ---------------------------------------------------------------------------

/// A bipartite device: shared pure state plus per-input projective
/// measurement families for each party.
///
/// Validation enforces: unit state norm, every measurement family complete
/// (sums to the identity), orthogonal, and projective, all within
/// [`STRUCT_TOL`]; every family on one side has the same number of outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    dim_a: usize,
    dim_b: usize,
    state: CVector,
    alice_meas: Vec<Vec<CMatrix>>,
    bob_meas: Vec<Vec<CMatrix>>,
}

impl DeviceSpec {
    pub fn new(
        dim_a: usize,
        dim_b: usize,
        state: CVector,
        alice_meas: Vec<Vec<CMatrix>>,
        bob_meas: Vec<Vec<CMatrix>>,
    ) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 {
            return Err(CorrError::InvalidSpec("local dimensions must be ≥ 1".into()));
        }
        if state.dim() != dim_a * dim_b {
            return Err(CorrError::InvalidSpec(format!(
                "state dimension {} ≠ dim_a·dim_b = {}",
                state.dim(),
                dim_a * dim_b
            )));
        }
        if (state.norm() - 1.0).abs() > STRUCT_TOL {
            return Err(CorrError::InvalidSpec(format!(
                "state norm {} is not 1 within {STRUCT_TOL:e}",
                state.norm()
            )));
        }
        validate_meas_side(&alice_meas, dim_a, "alice")?;
        validate_meas_side(&bob_meas, dim_b, "bob")?;
        Ok(DeviceSpec { dim_a, dim_b, state, alice_meas, bob_meas })
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn state(&self) -> &CVector {
        &self.state
    }

    /// Number of measurement settings for Alice.
    pub fn nx(&self) -> usize {
        self.alice_meas.len()
    }

    pub fn ny(&self) -> usize {
        self.bob_meas.len()
    }

    /// Number of outcomes per Alice setting.
    pub fn na(&self) -> usize {
        self.alice_meas[0].len()
    }

    pub fn nb(&self) -> usize {
        self.bob_meas[0].len()
    }

    pub fn alice_meas(&self) -> &[Vec<CMatrix>] {
        &self.alice_meas
    }

    pub fn bob_meas(&self) -> &[Vec<CMatrix>] {
        &self.bob_meas
    }

    /// Alice's reduced state Tr_B |ψ⟩⟨ψ|.
    pub fn alice_reduced(&self) -> Result<CMatrix> {
        let layout = RegisterLayout::new(vec![("A", self.dim_a), ("B", self.dim_b)])?;
        Ok(linalg::partial_trace(&self.state.outer(&self.state), &layout, &["A"])?)
    }
}

fn validate_meas_side(meas: &[Vec<CMatrix>], dim: usize, side: &str) -> Result<()> {
    if meas.is_empty() {
        return Err(CorrError::InvalidSpec(format!("{side}: needs at least one input")));
    }
    let n_out = meas[0].len();
    if n_out == 0 {
        return Err(CorrError::InvalidSpec(format!("{side}: needs at least one outcome")));
    }
    for (x, family) in meas.iter().enumerate() {
        if family.len() != n_out {
            return Err(CorrError::InvalidSpec(format!(
                "{side}: input {x} has {} outcomes, expected {n_out}",
                family.len()
            )));
        }
        let mut sum = CMatrix::zeros(dim, dim);
        for (k, m) in family.iter().enumerate() {
            if m.rows() != dim || m.cols() != dim {
                return Err(CorrError::InvalidSpec(format!(
                    "{side}: input {x} outcome {k} is {}x{}, expected {dim}x{dim}",
                    m.rows(),
                    m.cols()
                )));
            }
            if !is_projector(m, STRUCT_TOL) {
                return Err(CorrError::InvalidSpec(format!(
                    "{side}: input {x} outcome {k} is not a projector within {STRUCT_TOL:e}"
                )));
            }
            for other in family.iter().take(k) {
                let prod = m.matmul(other).expect("validated dims");
                if prod.max_abs() > STRUCT_TOL {
                    return Err(CorrError::InvalidSpec(format!(
                        "{side}: input {x} projectors are not pairwise orthogonal"
                    )));
                }
            }
            sum = sum.add(m).expect("validated dims");
        }
        if sum.sub(&CMatrix::identity(dim)).expect("same shape").max_abs() > STRUCT_TOL {
            return Err(CorrError::InvalidSpec(format!(
                "{side}: input {x} projectors do not sum to the identity"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Correlations
// ---------------------------------------------------------------------------

/// Conditional joint table p(ab|xy) with derived marginals.
///
/// Marginals are y- (resp. x-) independent by no-signalling, which is
/// validated within [`STRUCT_TOL`] at construction; the stored marginal is the
/// average over the other party's settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    nx: usize,
    ny: usize,
    na: usize,
    nb: usize,
    table: Vec<f64>,
    marg_a: Vec<f64>,
    marg_b: Vec<f64>,
}

impl Correlation {
    pub fn new(nx: usize, ny: usize, na: usize, nb: usize, table: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 || na == 0 || nb == 0 {
            return Err(CorrError::InvalidCorrelation("all sizes must be ≥ 1".into()));
        }
        if table.len() != nx * ny * na * nb {
            return Err(CorrError::InvalidCorrelation(format!(
                "table has {} entries, expected {}",
                table.len(),
                nx * ny * na * nb
            )));
        }
        let mut clean = table;
        for p in &mut clean {
            if !p.is_finite() || *p < -STRUCT_TOL {
                return Err(CorrError::InvalidCorrelation(format!("entry {p} is not a probability")));
            }
            *p = p.max(0.0);
        }
        let idx = |x: usize, y: usize, a: usize, b: usize| ((x * ny + y) * na + a) * nb + b;
        for x in 0..nx {
            for y in 0..ny {
                let s: f64 =
                    (0..na).flat_map(|a| (0..nb).map(move |b| (a, b))).map(|(a, b)| clean[idx(x, y, a, b)]).sum();
                if (s - 1.0).abs() > STRUCT_TOL {
                    return Err(CorrError::InvalidCorrelation(format!(
                        "p(·|x={x},y={y}) sums to {s}, expected 1"
                    )));
                }
            }
        }
        // No-signalling: Alice's conditional marginal must not depend on y.
        let mut marg_a = vec![0.0; nx * na];
        for x in 0..nx {
            for a in 0..na {
                let per_y: Vec<f64> =
                    (0..ny).map(|y| (0..nb).map(|b| clean[idx(x, y, a, b)]).sum()).collect();
                let mean = per_y.iter().sum::<f64>() / ny as f64;
                if per_y.iter().any(|v| (v - mean).abs() > STRUCT_TOL) {
                    return Err(CorrError::InvalidCorrelation(format!(
                        "signalling to Alice at (x={x}, a={a}): marginal varies with y"
                    )));
                }
                marg_a[x * na + a] = mean;
            }
        }
        let mut marg_b = vec![0.0; ny * nb];
        for y in 0..ny {
            for b in 0..nb {
                let per_x: Vec<f64> =
                    (0..nx).map(|x| (0..na).map(|a| clean[idx(x, y, a, b)]).sum()).collect();
                let mean = per_x.iter().sum::<f64>() / nx as f64;
                if per_x.iter().any(|v| (v - mean).abs() > STRUCT_TOL) {
                    return Err(CorrError::InvalidCorrelation(format!(
                        "signalling to Bob at (y={y}, b={b}): marginal varies with x"
                    )));
                }
                marg_b[y * nb + b] = mean;
            }
        }
        Ok(Correlation { nx, ny, na, nb, table: clean, marg_a, marg_b })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn na(&self) -> usize {
        self.na
    }

    pub fn nb(&self) -> usize {
        self.nb
    }

    #[inline]
    pub fn p(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.table[((x * self.ny + y) * self.na + a) * self.nb + b]
    }

    /// Conditional marginal p(a|x).
    #[inline]
    pub fn marginal_a(&self, x: usize, a: usize) -> f64 {
        self.marg_a[x * self.na + a]
    }

    /// Conditional marginal p(b|y).
    #[inline]
    pub fn marginal_b(&self, y: usize, b: usize) -> f64 {
        self.marg_b[y * self.nb + b]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// The joint distribution at a fixed input pair.
    pub fn joint_at(&self, x: usize, y: usize) -> JointDist {
        let mut table = Vec::with_capacity(self.na * self.nb);
        for a in 0..self.na {
            for b in 0..self.nb {
                table.push(self.p(x, y, a, b));
            }
        }
        JointDist::new(self.na, self.nb, table).expect("rows of a correlation are distributions")
    }
}

/// Evaluates ⟨ψ| (M ⊗ N) |ψ⟩ without materializing the Kronecker product:
/// with ψ reshaped to a dim_a×dim_b matrix Ψ, (M ⊗ N)ψ reshapes to M·Ψ·Nᵀ.
fn pair_expectation(state: &CVector, m: &CMatrix, n: &CMatrix) -> C64 {
    let (da, db) = (m.rows(), n.rows());
    debug_assert_eq!(state.dim(), da * db);
    let mut out = C64::new(0.0, 0.0);
    for i in 0..da {
        for j in 0..db {
            // (MΨNᵀ)[i][j] = Σ_kl M[i][k] Ψ[k][l] N[j][l]
            let mut v = C64::new(0.0, 0.0);
            for k in 0..da {
                let mik = m.get(i, k);
                if mik.norm_sqr() == 0.0 {
                    continue;
                }
                for l in 0..db {
                    v += mik * state.data()[k * db + l] * n.get(j, l);
                }
            }
            out += state.data()[i * db + j].conj() * v;
        }
    }
    out
}

/// Computes the full conditional correlation table of a device spec.
pub fn compute_correlation(spec: &DeviceSpec) -> Result<Correlation> {
    let (nx, ny, na, nb) = (spec.nx(), spec.ny(), spec.na(), spec.nb());
    let mut table = Vec::with_capacity(nx * ny * na * nb);
    for x in 0..nx {
        for y in 0..ny {
            for a in 0..na {
                for b in 0..nb {
                    let v = pair_expectation(&spec.state, &spec.alice_meas[x][a], &spec.bob_meas[y][b]);
                    if v.im.abs() > 1e-10 {
                        return Err(CorrError::InvalidCorrelation(format!(
                            "p({a}{b}|{x}{y}) has imaginary part {:e}",
                            v.im
                        )));
                    }
                    table.push(v.re);
                }
            }
        }
    }
    Correlation::new(nx, ny, na, nb, table)
}

// ---------------------------------------------------------------------------
// Product test
// ---------------------------------------------------------------------------

/// Evidence that a correlation is not a product of its marginals: the entry
/// p(ab|xy) exceeds p(a|x)·p(b|y) by `violation` (> the decision tolerance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonProductWitness {
    pub x: usize,
    pub y: usize,
    pub a: usize,
    pub b: usize,
    pub violation: f64,
}

/// Outcome of [`is_product`].
#[derive(Debug, Clone, PartialEq)]
pub enum ProductVerdict {
    Product,
    NonProduct(NonProductWitness),
}

impl ProductVerdict {
    pub fn is_product(&self) -> bool {
        matches!(self, ProductVerdict::Product)
    }

    pub fn witness(&self) -> Option<&NonProductWitness> {
        match self {
            ProductVerdict::Product => None,
            ProductVerdict::NonProduct(w) => Some(w),
        }
    }
}

/// Tests whether p(ab|xy) = p(a|x)·p(b|y) for all entries within `tol`.
///
/// Only positive deviations are scanned; a non-product correlation always has
/// one because deviations sum to zero over each outcome block. The returned
/// witness maximizes the violation, ties broken lexicographically on
/// (x, y, a, b).
pub fn is_product(corr: &Correlation, tol: f64) -> ProductVerdict {
    let mut best: Option<NonProductWitness> = None;
    for x in 0..corr.nx {
        for y in 0..corr.ny {
            for a in 0..corr.na {
                for b in 0..corr.nb {
                    let violation = corr.p(x, y, a, b) - corr.marginal_a(x, a) * corr.marginal_b(y, b);
                    if violation > tol && best.as_ref().is_none_or(|w| violation > w.violation) {
                        best = Some(NonProductWitness { x, y, a, b, violation });
                    }
                }
            }
        }
    }
    match best {
        Some(w) => ProductVerdict::NonProduct(w),
        None => ProductVerdict::Product,
    }
}

// ---------------------------------------------------------------------------
// Joint distributions and the bias floor
// ---------------------------------------------------------------------------

/// A bipartite joint distribution p(ab) (single-setting, unconditioned).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDist {
    na: usize,
    nb: usize,
    table: Vec<f64>,
}

impl JointDist {
    pub fn new(na: usize, nb: usize, table: Vec<f64>) -> Result<Self> {
        if na == 0 || nb == 0 {
            return Err(CorrError::InvalidDistribution("outcome counts must be ≥ 1".into()));
        }
        if table.len() != na * nb {
            return Err(CorrError::InvalidDistribution(format!(
                "table has {} entries, expected {}",
                table.len(),
                na * nb
            )));
        }
        let mut clean = table;
        for p in &mut clean {
            if !p.is_finite() || *p < -STRUCT_TOL {
                return Err(CorrError::InvalidDistribution(format!("entry {p} is not a probability")));
            }
            *p = p.max(0.0);
        }
        let s: f64 = clean.iter().sum();
        if (s - 1.0).abs() > STRUCT_TOL {
            return Err(CorrError::InvalidDistribution(format!("table sums to {s}, expected 1")));
        }
        Ok(JointDist { na, nb, table: clean })
    }

    pub fn na(&self) -> usize {
        self.na
    }

    pub fn nb(&self) -> usize {
        self.nb
    }

    #[inline]
    pub fn p(&self, a: usize, b: usize) -> f64 {
        self.table[a * self.nb + b]
    }

    pub fn marginal_a(&self, a: usize) -> f64 {
        (0..self.nb).map(|b| self.p(a, b)).sum()
    }

    pub fn marginal_b(&self, b: usize) -> f64 {
        (0..self.na).map(|a| self.p(a, b)).sum()
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Views the joint distribution as a single-setting correlation.
    pub fn as_correlation(&self) -> Correlation {
        Correlation::new(1, 1, self.na, self.nb, self.table.clone())
            .expect("a joint distribution is a one-setting correlation")
    }
}

/// Positive root δ for one outcome pair: (p(a)+δ)(p(b)+δ) = p(ab).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRoot {
    pub a: usize,
    pub b: usize,
    pub delta: f64,
}

/// Result of [`bias_floor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasFloor {
    /// Largest per-pair root; 0 when no pair violates p(ab) > p(a)p(b).
    pub floor: f64,
    /// Roots for every violating pair, in lexicographic (a, b) order.
    pub roots: Vec<PairRoot>,
}

/// Computes the bias floor of a joint distribution: for every pair with
/// p(ab) > p(a)·p(b) (and p(ab) above a small skip tolerance), the positive
/// root of (p(a)+δ)(p(b)+δ) = p(ab), maximized over pairs.
///
/// No two-party sampling protocol can keep both parties' forced marginals
/// within δ of honest for δ below this floor.
pub fn bias_floor(p: &JointDist) -> BiasFloor {
    let mut roots = Vec::new();
    let mut floor = 0.0f64;
    for a in 0..p.na {
        for b in 0..p.nb {
            let pab = p.p(a, b);
            if pab <= BIAS_FLOOR_SKIP_TOL {
                continue;
            }
            let pa = p.marginal_a(a);
            let pb = p.marginal_b(b);
            if pab <= pa * pb {
                continue;
            }
            // Positive root of δ² + (pa+pb)δ + (pa·pb − pab) = 0.
            let delta = 0.5 * (-(pa + pb) + ((pa - pb).powi(2) + 4.0 * pab).sqrt());
            roots.push(PairRoot { a, b, delta });
            floor = floor.max(delta);
        }
    }
    BiasFloor { floor, roots }
}

// ---------------------------------------------------------------------------
// Closeness through local isometries
// ---------------------------------------------------------------------------

/// Local isometries Φ_A: A′ → A ⊗ A″ and Φ_B: B′ → B ⊗ B″ plus the junk state
/// they are allowed to deposit on A″ ⊗ B″.
#[derive(Debug, Clone, PartialEq)]
pub struct IsometryPair {
    v_a: CMatrix,
    v_b: CMatrix,
    junk: CVector,
}

impl IsometryPair {
    /// Validates shapes and isometry identities V†V = 1 within [`STRUCT_TOL`].
    ///
    /// `v_a` must map dimension dim(A′) to dim(A)·dim(A″) for the `target_dim_a`
    /// of interest (so its row count must be a multiple of it); likewise for B.
    pub fn new(v_a: CMatrix, v_b: CMatrix, junk: CVector, target_dim_a: usize, target_dim_b: usize) -> Result<Self> {
        if target_dim_a == 0 || target_dim_b == 0 {
            return Err(CorrError::InvalidIsometry("target dimensions must be ≥ 1".into()));
        }
        if v_a.rows() == 0 || !v_a.rows().is_multiple_of(target_dim_a) {
            return Err(CorrError::InvalidIsometry(format!(
                "Φ_A output dimension {} is not a multiple of target dimension {target_dim_a}",
                v_a.rows()
            )));
        }
        if v_b.rows() == 0 || !v_b.rows().is_multiple_of(target_dim_b) {
            return Err(CorrError::InvalidIsometry(format!(
                "Φ_B output dimension {} is not a multiple of target dimension {target_dim_b}",
                v_b.rows()
            )));
        }
        let junk_a = v_a.rows() / target_dim_a;
        let junk_b = v_b.rows() / target_dim_b;
        if junk.dim() != junk_a * junk_b {
            return Err(CorrError::InvalidIsometry(format!(
                "junk dimension {} ≠ {junk_a}·{junk_b}",
                junk.dim()
            )));
        }
        if (junk.norm() - 1.0).abs() > STRUCT_TOL {
            return Err(CorrError::InvalidIsometry("junk state is not normalized".into()));
        }
        for (name, v) in [("Φ_A", &v_a), ("Φ_B", &v_b)] {
            let gram = v.dagger().matmul(v).expect("shape");
            if gram.sub(&CMatrix::identity(v.cols())).expect("shape").max_abs() > STRUCT_TOL {
                return Err(CorrError::InvalidIsometry(format!("{name} is not an isometry (V†V ≠ 1)")));
            }
        }
        Ok(IsometryPair { v_a, v_b, junk })
    }

    /// The trivial pair: identity isometries with no junk register.
    pub fn identity(dim_a: usize, dim_b: usize) -> Self {
        IsometryPair {
            v_a: CMatrix::identity(dim_a),
            v_b: CMatrix::identity(dim_b),
            junk: CVector::basis(1, 0),
        }
    }

    pub fn v_a(&self) -> &CMatrix {
        &self.v_a
    }

    pub fn v_b(&self) -> &CMatrix {
        &self.v_b
    }

    pub fn junk(&self) -> &CVector {
        &self.junk
    }
}

/// Result of [`check_closeness`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessReport {
    /// Whether every tuple stayed within the requested δ.
    pub within: bool,
    pub delta: f64,
    /// Largest trace distance observed over all (x, y, a, b).
    pub max_distance: f64,
    /// First tuple (lexicographic) achieving the maximum.
    pub worst: (usize, usize, usize, usize),
}

/// Applies (M ⊗ N) to a bipartite vector via the reshape trick; `m` is da×da',
/// `n` is db×db', and `v` has dimension da'·db'.
fn apply_pair(m: &CMatrix, n: &CMatrix, v: &CVector) -> CVector {
    let (da, dap) = (m.rows(), m.cols());
    let (db, dbp) = (n.rows(), n.cols());
    debug_assert_eq!(v.dim(), dap * dbp);
    let mut out = CVector::zeros(da * db);
    for i in 0..da {
        for j in 0..db {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..dap {
                let mik = m.get(i, k);
                if mik.norm_sqr() == 0.0 {
                    continue;
                }
                for l in 0..dbp {
                    s += mik * v.data()[k * dbp + l] * n.get(j, l);
                }
            }
            out.data_mut()[i * db + j] = s;
        }
    }
    out
}

/// Trace norm of u·u† − v·v† via the 2×2 restriction to span{u, v}.
///
/// In an orthonormal basis with u = √nᵤ·e₁ and v = c₁·e₁ + r·e₂, the
/// restriction has trace t = nᵤ − |c₁|² − r² and determinant −nᵤ·r² ≤ 0, so
/// its eigenvalues straddle zero and the trace norm is √(t² + 4·nᵤ·r²).
/// Computing r from the residual vector v − e₁c₁ (a difference of vectors,
/// not of squared norms) keeps near-identical u, v accurate to machine
/// precision instead of √ε.
fn outer_diff_trace_norm(u: &CVector, v: &CVector) -> f64 {
    let nu = u.inner(u).re;
    let nv = v.inner(v).re;
    if nu <= 0.0 {
        return nv;
    }
    if nv <= 0.0 {
        return nu;
    }
    let c = u.inner(v);
    let w = v.sub(&u.scale(c / C64::new(nu, 0.0)));
    let r2 = w.inner(&w).re.max(0.0);
    let t = nu - c.norm_sqr() / nu - r2;
    (t * t + 4.0 * nu * r2).sqrt()
}

/// Checks whether `candidate` reproduces `target` through the given local
/// isometries within trace distance `delta`, tuple by tuple.
///
/// For each (x, y, a, b), compares the unnormalized outer products of
/// (Φ_A ⊗ Φ_B)(N^x_a ⊗ N^y_b)|φ⟩ and (M^x_a ⊗ M^y_b)|ψ⟩ ⊗ |junk⟩, both
/// expressed on registers ordered (A, A″, B, B″).
pub fn check_closeness(
    candidate: &DeviceSpec,
    target: &DeviceSpec,
    iso: &IsometryPair,
    delta: f64,
) -> Result<ClosenessReport> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(CorrError::Incompatible(format!("δ must be finite and ≥ 0, got {delta}")));
    }
    if candidate.nx() != target.nx()
        || candidate.ny() != target.ny()
        || candidate.na() != target.na()
        || candidate.nb() != target.nb()
    {
        return Err(CorrError::Incompatible(
            "candidate and target must share input and outcome counts".into(),
        ));
    }
    if iso.v_a.cols() != candidate.dim_a || iso.v_b.cols() != candidate.dim_b {
        return Err(CorrError::Incompatible(format!(
            "isometries act on {}×{}, candidate is {}×{}",
            iso.v_a.cols(),
            iso.v_b.cols(),
            candidate.dim_a,
            candidate.dim_b
        )));
    }
    if !iso.v_a.rows().is_multiple_of(target.dim_a) || !iso.v_b.rows().is_multiple_of(target.dim_b)
    {
        return Err(CorrError::Incompatible(
            "isometry output dimensions are not multiples of the target dimensions".into(),
        ));
    }
    let junk_a = iso.v_a.rows() / target.dim_a;
    let junk_b = iso.v_b.rows() / target.dim_b;
    if iso.junk.dim() != junk_a * junk_b {
        return Err(CorrError::Incompatible(format!(
            "junk dimension {} ≠ {junk_a}·{junk_b}",
            iso.junk.dim()
        )));
    }

    // Reference side: registers come out as (A, B, A″, B″); reorder once.
    let ref_layout = RegisterLayout::new(vec![
        ("A", target.dim_a),
        ("B", target.dim_b),
        ("JA", junk_a),
        ("JB", junk_b),
    ])?;
    let order = ["A", "JA", "B", "JB"];

    let mut max_distance = f64::NEG_INFINITY;
    let mut worst = (0, 0, 0, 0);
    for x in 0..target.nx() {
        for y in 0..target.ny() {
            for a in 0..target.na() {
                for b in 0..target.nb() {
                    let cand_meas = apply_pair(
                        &candidate.alice_meas[x][a],
                        &candidate.bob_meas[y][b],
                        &candidate.state,
                    );
                    let u = apply_pair(&iso.v_a, &iso.v_b, &cand_meas);

                    let targ_meas =
                        apply_pair(&target.alice_meas[x][a], &target.bob_meas[y][b], &target.state);
                    let with_junk = targ_meas.tensor(&iso.junk)?;
                    let (v, _) = permute_registers_vec(&with_junk, &ref_layout, &order)?;

                    let dist = 0.5 * outer_diff_trace_norm(&u, &v);
                    if dist > max_distance {
                        max_distance = dist;
                        worst = (x, y, a, b);
                    }
                }
            }
        }
    }
    Ok(ClosenessReport { within: max_distance <= delta, delta, max_distance, worst })
}

// ---------------------------------------------------------------------------
// Multiparty distributions
// ---------------------------------------------------------------------------

/// An n-party joint distribution over finite alphabets; the table is flat,
/// row-major, with party 0 the most significant digit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipartyDist {
    sizes: Vec<usize>,
    table: Vec<f64>,
}

impl MultipartyDist {
    pub fn new(sizes: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(CorrError::InvalidDistribution("need at least two parties".into()));
        }
        if sizes.len() > MAX_PARTIES {
            return Err(CorrError::InvalidDistribution(format!(
                "{} parties exceeds the cap of {MAX_PARTIES}",
                sizes.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(CorrError::InvalidDistribution("alphabet sizes must be ≥ 1".into()));
        }
        let total: usize = sizes.iter().product();
        if table.len() != total {
            return Err(CorrError::InvalidDistribution(format!(
                "table has {} entries, expected {total}",
                table.len()
            )));
        }
        let mut clean = table;
        for p in &mut clean {
            if !p.is_finite() || *p < -STRUCT_TOL {
                return Err(CorrError::InvalidDistribution(format!("entry {p} is not a probability")));
            }
            *p = p.max(0.0);
        }
        let s: f64 = clean.iter().sum();
        if (s - 1.0).abs() > STRUCT_TOL {
            return Err(CorrError::InvalidDistribution(format!("table sums to {s}, expected 1")));
        }
        Ok(MultipartyDist { sizes, table: clean })
    }

    pub fn parties(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Coarse-grains into a bipartite joint distribution. `side_a` lists the
    /// party indices on the first side (ascending); composite outcomes keep
    /// ascending-party digit order on each side.
    pub fn bipartition(&self, side_a: &[usize]) -> Result<JointDist> {
        let n = self.parties();
        if side_a.is_empty() || side_a.len() >= n {
            return Err(CorrError::InvalidDistribution("bipartition sides must be proper and non-empty".into()));
        }
        let side_b: Vec<usize> = (0..n).filter(|p| !side_a.contains(p)).collect();
        let ka: usize = side_a.iter().map(|&p| self.sizes[p]).product();
        let kb: usize = side_b.iter().map(|&p| self.sizes[p]).product();
        let mut joint = vec![0.0; ka * kb];

        let mut strides = vec![1usize; n];
        for i in (0..n - 1).rev() {
            strides[i] = strides[i + 1] * self.sizes[i + 1];
        }
        for (flat, &p) in self.table.iter().enumerate() {
            let digit = |party: usize| (flat / strides[party]) % self.sizes[party];
            let mut ia = 0usize;
            for &party in side_a {
                ia = ia * self.sizes[party] + digit(party);
            }
            let mut ib = 0usize;
            for &party in &side_b {
                ib = ib * self.sizes[party] + digit(party);
            }
            joint[ia * kb + ib] += p;
        }
        JointDist::new(ka, kb, joint)
    }
}

/// A bipartition with non-product structure: `side_a` lists the party indices
/// grouped on the first side, and `witness` is the violating entry of the
/// coarse-grained joint distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionWitness {
    pub side_a: Vec<usize>,
    pub witness: NonProductWitness,
}

/// Scans all 2^(n−1) − 1 bipartitions of an n-party distribution in canonical
/// order (subsets containing party 0, by ascending bitmask) and returns the
/// first one whose coarse-grained joint distribution is non-product.
pub fn multiparty_nonproduct(dist: &MultipartyDist, tol: f64) -> Result<Option<PartitionWitness>> {
    let n = dist.parties();
    let full: u64 = (1u64 << n) - 1;
    let mut mask: u64 = 1;
    while mask < full {
        if mask & 1 == 1 {
            let side_a: Vec<usize> = (0..n).filter(|&p| mask >> p & 1 == 1).collect();
            let joint = dist.bipartition(&side_a)?;
            if let ProductVerdict::NonProduct(witness) = is_product(&joint.as_correlation(), tol) {
                return Ok(Some(PartitionWitness { side_a, witness }));
            }
        }
        mask += 1;
    }
    Ok(None)
}
