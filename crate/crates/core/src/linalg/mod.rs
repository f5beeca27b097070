//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Everything is stored row-major in flat `Vec<Complex64>` buffers; register
//! composites follow the convention that the *leftmost* register is the most
//! significant index digit. Dimensions stay desk-scale (tensor products are
//! capped at [`MAX_TENSOR_DIM`] by default), so all kernels are straightforward
//! O(n³) dense loops with no blocking or parallelism.

mod eig;

pub use eig::{herm_eig, herm_eig_with_tol, HermEig};

use num_complex::Complex64;
use thiserror::Error;

/// Shorthand for the scalar type used throughout the crate.
pub type C64 = Complex64;

/// Default cap on the total dimension produced by tensor products.
pub const MAX_TENSOR_DIM: usize = 4096;

/// Tolerance for structural validation (unitarity, projector families,
/// normalization, no-signalling).
pub const STRUCT_TOL: f64 = 1e-9;

/// Tolerance for accepting a matrix as Hermitian before eigendecomposition.
pub const HERM_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension {dim} exceeds limit {limit}")]
    DimLimit { dim: usize, limit: usize },
    #[error("matrix is not Hermitian within {tol:e}: max deviation {dev:e}")]
    NotHermitian { tol: f64, dev: f64 },
    #[error("not a density matrix: {0}")]
    NotDensity(String),
    #[error("register layout error: {0}")]
    Layout(String),
    #[error("eigensolver did not converge after {sweeps} sweeps")]
    EigNoConvergence { sweeps: usize },
    #[error("vector has zero norm")]
    ZeroNorm,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from nested rows. All rows must have equal length.
    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if r == 0 || c == 0 {
            return Err(LinalgError::DimMismatch("matrix must be non-empty".into()));
        }
        if rows.iter().any(|row| row.len() != c) {
            return Err(LinalgError::DimMismatch("ragged rows".into()));
        }
        Ok(CMatrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    /// Diagonal matrix from real entries.
    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in d.iter().enumerate() {
            m.data[i * n + i] = C64::new(v, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn add(&self, other: &CMatrix) -> Result<CMatrix> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(CMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn sub(&self, other: &CMatrix) -> Result<CMatrix> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(CMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn matmul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.cols != other.rows {
            return Err(LinalgError::DimMismatch(format!(
                "matmul: {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        debug_assert!(self.is_square());
        (0..self.rows).map(|i| self.data[i * self.cols + i]).sum()
    }

    /// Largest entry magnitude (max norm).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Hermitian part (X + X†)/2.
    pub fn hermitize(&self) -> CMatrix {
        debug_assert!(self.is_square());
        let n = self.rows;
        CMatrix::from_fn(n, n, |i, j| (self.get(i, j) + self.get(j, i).conj()) * 0.5)
    }

    /// Max deviation from Hermitian symmetry, ‖X − X†‖_max.
    pub fn herm_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.herm_deviation() <= tol
    }

    /// Real part of the Hilbert-Schmidt inner product tr(A† B).
    pub fn inner_re(&self, other: &CMatrix) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// Kronecker product with the default total-dimension cap.
    pub fn tensor(&self, other: &CMatrix) -> Result<CMatrix> {
        self.tensor_with_limit(other, MAX_TENSOR_DIM)
    }

    pub fn tensor_with_limit(&self, other: &CMatrix, limit: usize) -> Result<CMatrix> {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let dim = rows.max(cols);
        if dim > limit {
            return Err(LinalgError::DimLimit { dim, limit });
        }
        let mut out = CMatrix::zeros(rows, cols);
        for i1 in 0..self.rows {
            for j1 in 0..self.cols {
                let a = self.data[i1 * self.cols + j1];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for i2 in 0..other.rows {
                    for j2 in 0..other.cols {
                        out.data[(i1 * other.rows + i2) * cols + (j1 * other.cols + j2)] =
                            a * other.data[i2 * other.cols + j2];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Applies the matrix to a vector.
    pub fn apply(&self, v: &CVector) -> Result<CVector> {
        if self.cols != v.dim() {
            return Err(LinalgError::DimMismatch(format!(
                "apply: {}x{} to vector of dim {}",
                self.rows,
                self.cols,
                v.dim()
            )));
        }
        let mut out = vec![C64::new(0.0, 0.0); self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            out[i] = row.iter().zip(&v.data).map(|(a, b)| a * b).sum();
        }
        Ok(CVector { data: out })
    }

    fn check_same_shape(&self, other: &CMatrix) -> Result<()> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(LinalgError::DimMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

/// Dense complex column vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CVector {
    data: Vec<C64>,
}

impl CVector {
    pub fn zeros(dim: usize) -> Self {
        CVector { data: vec![C64::new(0.0, 0.0); dim] }
    }

    /// Computational basis vector |i⟩.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[i] = C64::new(1.0, 0.0);
        v
    }

    pub fn from_vec(data: Vec<C64>) -> Self {
        CVector { data }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    /// Inner product ⟨self|other⟩, conjugate-linear in `self`.
    pub fn inner(&self, other: &CVector) -> C64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Result<CVector> {
        let n = self.norm();
        if n == 0.0 {
            return Err(LinalgError::ZeroNorm);
        }
        Ok(self.scale(C64::new(1.0 / n, 0.0)))
    }

    pub fn scale(&self, s: C64) -> CVector {
        CVector { data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn add(&self, other: &CVector) -> CVector {
        debug_assert_eq!(self.dim(), other.dim());
        CVector { data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &CVector) -> CVector {
        debug_assert_eq!(self.dim(), other.dim());
        CVector { data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn tensor(&self, other: &CVector) -> Result<CVector> {
        let dim = self.dim() * other.dim();
        if dim > MAX_TENSOR_DIM {
            return Err(LinalgError::DimLimit { dim, limit: MAX_TENSOR_DIM });
        }
        let mut data = Vec::with_capacity(dim);
        for a in &self.data {
            for b in &other.data {
                data.push(a * b);
            }
        }
        Ok(CVector { data })
    }

    /// Outer product |self⟩⟨other|.
    pub fn outer(&self, other: &CVector) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim(), other.dim());
        for i in 0..self.dim() {
            for j in 0..other.dim() {
                m.data[i * other.dim() + j] = self.data[i] * other.data[j].conj();
            }
        }
        m
    }
}

/// Ordered list of labeled registers; the leftmost register is the most
/// significant digit of a composite index.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisterLayout {
    regs: Vec<(String, usize)>,
}

impl RegisterLayout {
    pub fn new(regs: Vec<(&str, usize)>) -> Result<Self> {
        if regs.is_empty() {
            return Err(LinalgError::Layout("layout must have at least one register".into()));
        }
        if regs.iter().any(|&(_, d)| d == 0) {
            return Err(LinalgError::Layout("register dimensions must be ≥ 1".into()));
        }
        for (i, (name, _)) in regs.iter().enumerate() {
            if regs[..i].iter().any(|(n, _)| n == name) {
                return Err(LinalgError::Layout(format!("duplicate register label `{name}`")));
            }
        }
        Ok(RegisterLayout { regs: regs.into_iter().map(|(n, d)| (n.to_string(), d)).collect() })
    }

    pub fn total_dim(&self) -> usize {
        self.regs.iter().map(|&(_, d)| d).product()
    }

    pub fn len(&self) -> usize {
        self.regs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regs.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.regs.iter().map(|(n, _)| n.as_str())
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        self.position(label).map(|i| self.regs[i].1)
    }

    fn position(&self, label: &str) -> Result<usize> {
        self.regs
            .iter()
            .position(|(n, _)| n == label)
            .ok_or_else(|| LinalgError::Layout(format!("unknown register label `{label}`")))
    }

    /// Stride of each register in a flat composite index.
    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.regs.len()];
        for i in (0..self.regs.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.regs[i + 1].1;
        }
        strides
    }

    /// Decomposes a flat index into per-register digits.
    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        let strides = self.strides();
        let mut digits = Vec::with_capacity(self.regs.len());
        for s in strides {
            digits.push(idx / s);
            idx %= s;
        }
        digits
    }

    /// Recomposes per-register digits into a flat index.
    pub fn ravel(&self, digits: &[usize]) -> usize {
        let strides = self.strides();
        digits.iter().zip(strides).map(|(d, s)| d * s).sum()
    }
}

/// Partial trace over all registers *not* listed in `keep`. Kept registers
/// retain their layout order in the result, regardless of the order given.
pub fn partial_trace(m: &CMatrix, layout: &RegisterLayout, keep: &[&str]) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.rows, cols: m.cols });
    }
    if m.rows != layout.total_dim() {
        return Err(LinalgError::DimMismatch(format!(
            "matrix dim {} does not match layout dim {}",
            m.rows,
            layout.total_dim()
        )));
    }
    let mut keep_pos: Vec<usize> = Vec::with_capacity(keep.len());
    for label in keep {
        let p = layout.position(label)?;
        if keep_pos.contains(&p) {
            return Err(LinalgError::Layout(format!("register `{label}` listed twice")));
        }
        keep_pos.push(p);
    }
    keep_pos.sort_unstable();
    let strides = layout.strides();
    let trace_pos: Vec<usize> =
        (0..layout.len()).filter(|p| !keep_pos.contains(p)).collect();

    // Flat offsets contributed by every kept (resp. traced) sub-index.
    let offsets = |positions: &[usize]| -> Vec<usize> {
        let mut offs = vec![0usize];
        for &p in positions {
            let d = layout.regs[p].1;
            let mut next = Vec::with_capacity(offs.len() * d);
            for &o in &offs {
                for k in 0..d {
                    next.push(o + k * strides[p]);
                }
            }
            offs = next;
        }
        offs
    };
    let keep_offs = offsets(&keep_pos);
    let trace_offs = offsets(&trace_pos);

    let dk = keep_offs.len();
    let mut out = CMatrix::zeros(dk, dk);
    for (i, &oi) in keep_offs.iter().enumerate() {
        for (j, &oj) in keep_offs.iter().enumerate() {
            let mut s = C64::new(0.0, 0.0);
            for &ot in &trace_offs {
                s += m.get(oi + ot, oj + ot);
            }
            out.set(i, j, s);
        }
    }
    Ok(out)
}

fn permutation_map(layout: &RegisterLayout, order: &[&str]) -> Result<(Vec<usize>, RegisterLayout)> {
    if order.len() != layout.len() {
        return Err(LinalgError::Layout(format!(
            "order lists {} registers, layout has {}",
            order.len(),
            layout.len()
        )));
    }
    let mut positions = Vec::with_capacity(order.len());
    for label in order {
        let p = layout.position(label)?;
        if positions.contains(&p) {
            return Err(LinalgError::Layout(format!("register `{label}` listed twice")));
        }
        positions.push(p);
    }
    let new_layout = RegisterLayout::new(
        positions.iter().map(|&p| (layout.regs[p].0.as_str(), layout.regs[p].1)).collect(),
    )?;
    let new_strides = new_layout.strides();
    let dim = layout.total_dim();
    let mut map = vec![0usize; dim];
    for g in 0..dim {
        let digits = layout.unravel(g);
        let mut ng = 0usize;
        for (new_pos, &old_pos) in positions.iter().enumerate() {
            ng += digits[old_pos] * new_strides[new_pos];
        }
        map[g] = ng;
    }
    Ok((map, new_layout))
}

/// Reorders the registers of a state vector. Returns the permuted vector and
/// the layout describing its new register order.
pub fn permute_registers_vec(
    v: &CVector,
    layout: &RegisterLayout,
    order: &[&str],
) -> Result<(CVector, RegisterLayout)> {
    if v.dim() != layout.total_dim() {
        return Err(LinalgError::DimMismatch(format!(
            "vector dim {} does not match layout dim {}",
            v.dim(),
            layout.total_dim()
        )));
    }
    let (map, new_layout) = permutation_map(layout, order)?;
    let mut out = CVector::zeros(v.dim());
    for (g, &ng) in map.iter().enumerate() {
        out.data[ng] = v.data[g];
    }
    Ok((out, new_layout))
}

/// Reorders the registers of an operator (rows and columns together).
pub fn permute_registers(
    m: &CMatrix,
    layout: &RegisterLayout,
    order: &[&str],
) -> Result<(CMatrix, RegisterLayout)> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.rows, cols: m.cols });
    }
    if m.rows != layout.total_dim() {
        return Err(LinalgError::DimMismatch(format!(
            "matrix dim {} does not match layout dim {}",
            m.rows,
            layout.total_dim()
        )));
    }
    let (map, new_layout) = permutation_map(layout, order)?;
    let mut out = CMatrix::zeros(m.rows, m.cols);
    for i in 0..m.rows {
        for j in 0..m.cols {
            out.set(map[i], map[j], m.get(i, j));
        }
    }
    Ok((out, new_layout))
}

fn validate_density(m: &CMatrix, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.rows, cols: m.cols });
    }
    let dev = m.herm_deviation();
    if dev > STRUCT_TOL {
        return Err(LinalgError::NotDensity(format!(
            "{what}: not Hermitian (deviation {dev:e})"
        )));
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > STRUCT_TOL || tr.im.abs() > STRUCT_TOL {
        return Err(LinalgError::NotDensity(format!("{what}: trace is {tr}, expected 1")));
    }
    let eig = herm_eig_with_tol(m, STRUCT_TOL)?;
    let min = eig.values.last().copied().unwrap_or(0.0);
    if min < -STRUCT_TOL {
        return Err(LinalgError::NotDensity(format!(
            "{what}: negative eigenvalue {min:e}"
        )));
    }
    Ok(())
}

/// Trace distance ½‖ρ − σ‖₁ between two density matrices. Both inputs are
/// validated (Hermitian, unit trace, PSD within [`STRUCT_TOL`]); the result is
/// clamped to [0, 1].
pub fn trace_distance(rho: &CMatrix, sigma: &CMatrix) -> Result<f64> {
    rho.check_same_shape(sigma)?;
    validate_density(rho, "first argument")?;
    validate_density(sigma, "second argument")?;
    let d = 0.5 * trace_norm(&rho.sub(sigma)?)?;
    Ok(d.clamp(0.0, 1.0))
}

/// Trace norm ‖X‖₁ = Σ|λᵢ| of a Hermitian matrix (no density validation).
pub fn trace_norm(x: &CMatrix) -> Result<f64> {
    let eig = herm_eig(x)?;
    Ok(eig.values.iter().map(|v| v.abs()).sum())
}

/// Whether `m` is an orthogonal projector: Hermitian and idempotent within
/// `tol` in max norm. Non-square matrices are never projectors.
pub fn is_projector(m: &CMatrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    if m.herm_deviation() > tol {
        return false;
    }
    let m2 = m.matmul(m).expect("square matmul");
    m2.sub(m).expect("same shape").max_abs() <= tol
}

/// Orthonormal Hermitian basis of d×d matrices under ⟨A,B⟩ = tr(A†B):
/// diagonal units, and (E_jk ± E_kj)-type combinations scaled by 1/√2.
pub fn hermitian_basis(d: usize) -> Vec<CMatrix> {
    let mut basis = Vec::with_capacity(d * d);
    for j in 0..d {
        let mut m = CMatrix::zeros(d, d);
        m.set(j, j, C64::new(1.0, 0.0));
        basis.push(m);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..d {
        for k in (j + 1)..d {
            let mut re = CMatrix::zeros(d, d);
            re.set(j, k, C64::new(s, 0.0));
            re.set(k, j, C64::new(s, 0.0));
            basis.push(re);
            let mut im = CMatrix::zeros(d, d);
            im.set(j, k, C64::new(0.0, s));
            im.set(k, j, C64::new(0.0, -s));
            basis.push(im);
        }
    }
    basis
}

#[cfg(test)]
mod tests;
