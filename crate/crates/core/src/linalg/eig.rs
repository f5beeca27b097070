//! Hermitian eigendecomposition by cyclic complex Jacobi rotations.
//!
//! Each rotation zeroes one off-diagonal pair with a unitary plane rotation
//! whose phase absorbs the off-diagonal argument; off-diagonal mass decreases
//! monotonically, giving the usual quadratic tail convergence. Adequate for
//! the desk-scale matrices this crate works with.

use super::{C64, CMatrix, HERM_TOL, LinalgError, Result};

/// Eigendecomposition of a Hermitian matrix: `values` sorted descending, and
/// `vectors` holding the matching eigenvectors as columns, so that
/// X = V · diag(values) · V†.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

const MAX_SWEEPS: usize = 64;

/// [`herm_eig_with_tol`] with the default Hermiticity tolerance [`HERM_TOL`].
pub fn herm_eig(x: &CMatrix) -> Result<HermEig> {
    herm_eig_with_tol(x, HERM_TOL)
}

/// Eigendecomposition of a Hermitian matrix. The input must be Hermitian
/// within `tol_herm` in max norm; it is symmetrized to (X + X†)/2 before the
/// iteration so roundoff asymmetry never propagates.
pub fn herm_eig_with_tol(x: &CMatrix, tol_herm: f64) -> Result<HermEig> {
    if !x.is_square() {
        return Err(LinalgError::NotSquare { rows: x.rows(), cols: x.cols() });
    }
    let dev = x.herm_deviation();
    if dev > tol_herm {
        return Err(LinalgError::NotHermitian { tol: tol_herm, dev });
    }
    let n = x.rows();
    let mut a = x.hermitize();
    let mut v = CMatrix::identity(n);
    if n == 1 {
        return Ok(HermEig { values: vec![a.get(0, 0).re], vectors: v });
    }

    let scale = a.fro_norm().max(1e-300);
    let stop = 1e-14 * scale;

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let off = off_diag_fro(&a);
        if off <= stop {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged && off_diag_fro(&a) > stop {
        return Err(LinalgError::EigNoConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a.get(i, i).re).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).expect("finite eigenvalues"));
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, k| v.get(i, order[k]));
    Ok(HermEig { values, vectors })
}

fn off_diag_fro(a: &CMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for p in 0..n {
        for q in (p + 1)..n {
            s += 2.0 * a.get(p, q).norm_sqr();
        }
    }
    s.sqrt()
}

/// One Jacobi rotation zeroing A[p][q] (and A[q][p]); updates V in step.
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let h = a.get(p, q);
    let r = h.norm();
    if r <= 1e-300 {
        return;
    }
    let phase = h / r; // e^{i·arg(h)}
    let app = a.get(p, p).re;
    let aqq = a.get(q, q).re;
    // cot(2φ) for the zeroing angle; the smaller-root choice keeps |t| ≤ 1.
    let theta = (app - aqq) / (2.0 * r);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let n = a.rows();
    let cs = C64::new(c, 0.0);
    let sp = phase * s; // s·e^{iθ}
    let spc = phase.conj() * s; // s·e^{−iθ}

    // Column update: A ← A·G with G = [[c, −s·e^{iθ}], [s·e^{−iθ}, c]].
    for k in 0..n {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.set(k, p, cs * akp + spc * akq);
        a.set(k, q, cs * akq - sp * akp);
    }
    // Row update: A ← G†·A.
    for k in 0..n {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.set(p, k, cs * apk + sp * aqk);
        a.set(q, k, cs * aqk - spc * apk);
    }
    // Eigenvector accumulation: V ← V·G.
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, cs * vkp + spc * vkq);
        v.set(k, q, cs * vkq - sp * vkp);
    }
    // Scrub roundoff: the pivot pair is exactly zero, diagonals exactly real.
    a.set(p, q, C64::new(0.0, 0.0));
    a.set(q, p, C64::new(0.0, 0.0));
    let dp = a.get(p, p);
    let dq = a.get(q, q);
    a.set(p, p, C64::new(dp.re, 0.0));
    a.set(q, q, C64::new(dq.re, 0.0));
}
