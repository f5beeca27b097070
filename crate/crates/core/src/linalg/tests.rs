use super::*;
use crate::random::{random_hermitian, random_state, random_unitary, rng_from};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn assert_close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "expected {a} ≈ {b} within {tol:e}");
}

#[test]
fn tensor_identities() {
    let i2 = CMatrix::identity(2);
    let i4 = i2.tensor(&i2).unwrap();
    assert_eq!(i4, CMatrix::identity(4));

    // |0⟩⟨0| ⊗ |1⟩⟨1| has a single unit entry at (1, 1).
    let p0 = CVector::basis(2, 0).outer(&CVector::basis(2, 0));
    let p1 = CVector::basis(2, 1).outer(&CVector::basis(2, 1));
    let t = p0.tensor(&p1).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let expect = if i == 1 && j == 1 { 1.0 } else { 0.0 };
            assert_close(t.get(i, j).re, expect, 1e-12);
            assert_close(t.get(i, j).im, 0.0, 1e-12);
        }
    }
}

#[test]
fn tensor_is_bilinear_and_multiplicative_on_traces() {
    let mut rng = rng_from(11);
    for _ in 0..50 {
        let a = random_hermitian(&mut rng, 3);
        let b = random_hermitian(&mut rng, 2);
        let t = a.tensor(&b).unwrap();
        let ta = a.trace();
        let tb = b.trace();
        assert!((t.trace() - ta * tb).norm() <= 1e-10);

        // (αA) ⊗ B == α (A ⊗ B)
        let alpha = c(0.7, -0.3);
        let lhs = a.scale(alpha).tensor(&b).unwrap();
        let rhs = t.scale(alpha);
        assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-12);
    }
}

#[test]
fn tensor_rejects_oversized_products() {
    let big = CMatrix::identity(100);
    let err = big.tensor(&CMatrix::identity(64)).unwrap_err();
    match err {
        LinalgError::DimLimit { dim, limit } => {
            assert_eq!(dim, 6400);
            assert_eq!(limit, MAX_TENSOR_DIM);
        }
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn partial_trace_of_bell_state_is_maximally_mixed() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let bell = CVector::from_vec(vec![c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]);
    let rho = bell.outer(&bell);
    let layout = RegisterLayout::new(vec![("A", 2), ("B", 2)]).unwrap();
    let ra = partial_trace(&rho, &layout, &["A"]).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let expect = if i == j { 0.5 } else { 0.0 };
            assert_close(ra.get(i, j).re, expect, 1e-12);
            assert_close(ra.get(i, j).im, 0.0, 1e-12);
        }
    }
}

#[test]
fn partial_trace_factorizes_products_and_preserves_trace() {
    let mut rng = rng_from(12);
    for _ in 0..25 {
        let a = random_state(&mut rng, 2);
        let b = random_state(&mut rng, 3);
        let rho_a = a.outer(&a);
        let rho_b = b.outer(&b);
        let rho = rho_a.tensor(&rho_b).unwrap();
        let layout = RegisterLayout::new(vec![("A", 2), ("B", 3)]).unwrap();

        let got_a = partial_trace(&rho, &layout, &["A"]).unwrap();
        let got_b = partial_trace(&rho, &layout, &["B"]).unwrap();
        assert!(got_a.sub(&rho_a).unwrap().max_abs() <= 1e-12);
        assert!(got_b.sub(&rho_b).unwrap().max_abs() <= 1e-12);
        assert!((got_b.trace().re - 1.0).abs() <= 1e-12);

        // Keeping every register is the identity.
        let all = partial_trace(&rho, &layout, &["A", "B"]).unwrap();
        assert!(all.sub(&rho).unwrap().max_abs() <= 1e-12);
    }
}

#[test]
fn partial_trace_composes_across_registers() {
    let mut rng = rng_from(13);
    let layout = RegisterLayout::new(vec![("X", 2), ("Y", 2), ("Z", 2)]).unwrap();
    for _ in 0..10 {
        let psi = random_state(&mut rng, 8);
        let rho = psi.outer(&psi);
        // Tracing Y then Z equals tracing {Y, Z} at once.
        let xy = partial_trace(&rho, &layout, &["X", "Y"]).unwrap();
        let sub_layout = RegisterLayout::new(vec![("X", 2), ("Y", 2)]).unwrap();
        let x_via_two = partial_trace(&xy, &sub_layout, &["X"]).unwrap();
        let x_direct = partial_trace(&rho, &layout, &["X"]).unwrap();
        assert!(x_via_two.sub(&x_direct).unwrap().max_abs() <= 1e-12);
    }
}

#[test]
fn permute_registers_round_trip() {
    let mut rng = rng_from(14);
    let layout = RegisterLayout::new(vec![("A", 2), ("M", 3), ("B", 2)]).unwrap();
    let psi = random_state(&mut rng, 12);
    let (permuted, new_layout) = permute_registers_vec(&psi, &layout, &["B", "A", "M"]).unwrap();
    assert_eq!(new_layout.dim_of("B").unwrap(), 2);
    let (back, _) = permute_registers_vec(&permuted, &new_layout, &["A", "M", "B"]).unwrap();
    assert_eq!(back, psi);

    // Operator permutation is consistent with vector permutation on outer products.
    let rho = psi.outer(&psi);
    let (rho_p, _) = permute_registers(&rho, &layout, &["B", "A", "M"]).unwrap();
    let expect = permuted.outer(&permuted);
    assert!(rho_p.sub(&expect).unwrap().max_abs() <= 1e-12);
}

#[test]
fn herm_eig_diagonal_and_pauli_x() {
    let d = CMatrix::from_diag(&[1.0, 3.0]);
    let eig = herm_eig(&d).unwrap();
    assert_eq!(eig.values.len(), 2);
    assert_close(eig.values[0], 3.0, 1e-12);
    assert_close(eig.values[1], 1.0, 1e-12);

    let x = CMatrix::from_rows(vec![vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]])
        .unwrap();
    let eig = herm_eig(&x).unwrap();
    assert_close(eig.values[0], 1.0, 1e-12);
    assert_close(eig.values[1], -1.0, 1e-12);
}

#[test]
fn herm_eig_reconstructs_random_matrices() {
    let mut rng = rng_from(15);
    for trial in 0..100 {
        let n = 2 + (trial % 7);
        let h = random_hermitian(&mut rng, n);
        let eig = herm_eig(&h).unwrap();
        // Descending order.
        for w in eig.values.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
        // Unitary eigenvector matrix.
        let vtv = eig.vectors.dagger().matmul(&eig.vectors).unwrap();
        assert!(vtv.sub(&CMatrix::identity(n)).unwrap().max_abs() <= 1e-9);
        // X = V Λ V†.
        let lambda = CMatrix::from_diag(&eig.values);
        let recon = eig.vectors.matmul(&lambda).unwrap().matmul(&eig.vectors.dagger()).unwrap();
        assert!(recon.sub(&h).unwrap().max_abs() <= 1e-9);
    }
}

#[test]
fn herm_eig_rejects_non_hermitian() {
    let m = CMatrix::from_rows(vec![vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0)]])
        .unwrap();
    assert!(matches!(herm_eig(&m), Err(LinalgError::NotHermitian { .. })));
}

#[test]
fn psd_matrices_have_nonnegative_spectra() {
    let mut rng = rng_from(16);
    for _ in 0..25 {
        let g = random_hermitian(&mut rng, 4);
        let psd = g.matmul(&g).unwrap(); // G² of Hermitian G is PSD
        let eig = herm_eig(&psd).unwrap();
        assert!(eig.values.iter().all(|&v| v >= -1e-9));
    }
}

#[test]
fn trace_distance_frozen_values() {
    let p0 = CVector::basis(2, 0);
    let rho = p0.outer(&p0);
    assert_close(trace_distance(&rho, &rho).unwrap(), 0.0, 1e-15);

    let p1 = CVector::basis(2, 1);
    let sigma = p1.outer(&p1);
    assert_close(trace_distance(&rho, &sigma).unwrap(), 1.0, 1e-12);

    // |0⟩⟨0| vs |+⟩⟨+| at distance 1/√2.
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = CVector::from_vec(vec![c(s, 0.0), c(s, 0.0)]);
    let tau = plus.outer(&plus);
    assert_close(trace_distance(&rho, &tau).unwrap(), s, 1e-12);
}

#[test]
fn trace_distance_triangle_inequality() {
    let mut rng = rng_from(17);
    for _ in 0..25 {
        let states: Vec<CMatrix> =
            (0..3).map(|_| { let v = random_state(&mut rng, 3); v.outer(&v) }).collect();
        let dab = trace_distance(&states[0], &states[1]).unwrap();
        let dbc = trace_distance(&states[1], &states[2]).unwrap();
        let dac = trace_distance(&states[0], &states[2]).unwrap();
        assert!(dac <= dab + dbc + 1e-10);
    }
}

#[test]
fn trace_distance_validates_inputs() {
    let not_density = CMatrix::identity(2); // trace 2
    let rho = CVector::basis(2, 0).outer(&CVector::basis(2, 0));
    assert!(matches!(trace_distance(&not_density, &rho), Err(LinalgError::NotDensity(_))));
}

#[test]
fn projector_checks() {
    assert!(is_projector(&CMatrix::identity(3), 1e-9));
    assert!(is_projector(&CMatrix::zeros(2, 2), 1e-9));
    assert!(!is_projector(&CMatrix::identity(2).scale(c(0.5, 0.0)), 1e-9));

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = CVector::from_vec(vec![c(s, 0.0), c(s, 0.0)]);
    assert!(is_projector(&plus.outer(&plus), 1e-9));
    assert!(!is_projector(&CMatrix::zeros(2, 3), 1e-9));
}

#[test]
fn random_unitaries_are_unitary() {
    let mut rng = rng_from(18);
    for _ in 0..20 {
        let u = random_unitary(&mut rng, 4);
        let utu = u.dagger().matmul(&u).unwrap();
        assert!(utu.sub(&CMatrix::identity(4)).unwrap().max_abs() <= 1e-10);
    }
}

#[test]
fn hermitian_basis_is_orthonormal_and_spans() {
    for d in 1..=4 {
        let basis = hermitian_basis(d);
        assert_eq!(basis.len(), d * d);
        for (i, a) in basis.iter().enumerate() {
            assert!(a.is_hermitian(1e-15));
            for (j, b) in basis.iter().enumerate() {
                let ip = a.dagger().matmul(b).unwrap().trace();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_close(ip.re, expect, 1e-12);
                assert_close(ip.im, 0.0, 1e-12);
            }
        }
    }
}

#[test]
fn layout_ravel_unravel() {
    let layout = RegisterLayout::new(vec![("A", 2), ("M", 3), ("B", 2)]).unwrap();
    assert_eq!(layout.total_dim(), 12);
    // Leftmost register is most significant: (1, 2, 0) ↦ 1·6 + 2·2 + 0 = 10.
    assert_eq!(layout.ravel(&[1, 2, 0]), 10);
    assert_eq!(layout.unravel(10), vec![1, 2, 0]);
    for g in 0..12 {
        assert_eq!(layout.ravel(&layout.unravel(g)), g);
    }
    assert!(RegisterLayout::new(vec![("A", 2), ("A", 2)]).is_err());
    assert!(RegisterLayout::new(vec![("A", 0)]).is_err());
}
