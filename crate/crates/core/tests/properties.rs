use num_complex::Complex64;
use opspec::analytic::normalized_determinant;
use opspec::boundary::{admissibility_check, boundary_residual, canonical_unitary, BoundaryKind, BoundaryUnitary, COMMUTATOR_TOL};
use opspec::directsum::direct_sum_membership;
use opspec::discrete::{discretize, normality_residual};
use opspec::hilbert::{inner_product, Block, CoefficientMatrix, GridFunction, Interval};
use opspec::linalg::{block_diag2, c, frobenius, CMat};
use proptest::prelude::*;

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| c(a, b)), n)
}

fn grid(values: Vec<Complex64>, d: usize) -> GridFunction {
    let m = values.len() / d;
    GridFunction::from_values(Interval::new(-0.5, 1.5).unwrap(), d, m, values).unwrap()
}

/// Unitary Q factor of a random complex matrix, with the phases of R's
/// diagonal moved into Q.
fn unitary_from(entries: &[Complex64], n: usize) -> CMat {
    let g = CMat::from_row_slice(n, n, entries);
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q.clone();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

fn hermitian_pd(entries: &[Complex64], d: usize) -> CoefficientMatrix {
    let g = CMat::from_row_slice(d, d, entries);
    let a = &g * g.adjoint() + CMat::identity(d, d) * c(0.5, 0.0);
    CoefficientMatrix::new((&a + a.adjoint()).scale(0.5)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inner_product_is_sesquilinear(u in complex_vec(22), v in complex_vec(22), w in complex_vec(22), a in (-2.0f64..2.0, -2.0f64..2.0), b in (-2.0f64..2.0, -2.0f64..2.0)) {
        let (u, v, w) = (grid(u, 2), grid(v, 2), grid(w, 2));
        let (a, b) = (c(a.0, a.1), c(b.0, b.1));
        let lhs = inner_product(&u.combine(a, &v, b).unwrap(), &w).unwrap();
        let rhs = a * inner_product(&u, &w).unwrap() + b * inner_product(&v, &w).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
        let uv = inner_product(&u, &v).unwrap();
        let vu = inner_product(&v, &u).unwrap();
        prop_assert!((uv - vu.conj()).norm() <= 1e-14 * (1.0 + uv.norm()));
        prop_assert!(inner_product(&u, &u).unwrap().re >= 0.0);
    }

    #[test]
    fn boundary_residual_is_linear(u in complex_vec(24), v in complex_vec(24), g in complex_vec(16), a in (-2.0f64..2.0, -2.0f64..2.0)) {
        let w = BoundaryUnitary::custom(unitary_from(&g, 4)).unwrap();
        let (u, v) = (grid(u, 2), grid(v, 2));
        let a = c(a.0, a.1);
        let lhs = boundary_residual(&w, &u.combine(a, &v, c(1.0, 0.0)).unwrap()).unwrap().to_vector();
        let rhs = boundary_residual(&w, &u).unwrap().to_vector() * a + boundary_residual(&w, &v).unwrap().to_vector();
        prop_assert!((lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn canonical_extensions_admissible_and_normal(g in complex_vec(9), d in 1usize..=3) {
        let a = hermitian_pd(&g[..d * d], d);
        for kind in [BoundaryKind::Periodic, BoundaryKind::Dirichlet, BoundaryKind::Neumann] {
            let w = canonical_unitary(kind, d).unwrap();
            prop_assert!(admissibility_check(&w, &a).unwrap().admissible);
            let block = Block::new(1, Interval::new(0.0, 1.0).unwrap(), a.clone());
            prop_assert!(normality_residual(&discretize(&block, &w, 24).unwrap()) <= 1e-12);
        }
    }

    #[test]
    fn conjugation_preserves_admissibility_and_determinant(g in complex_vec(4), h in complex_vec(16), lam in (0.5f64..40.0, 0.1f64..5.0)) {
        // (A, W) and (UAU*, diag(U, U) W diag(U, U)*) describe the same problem in rotated coordinates.
        let u = unitary_from(&g, 2);
        let a = CoefficientMatrix::from_real_diagonal(&[1.0, 4.0]).unwrap();
        let a_rot = CoefficientMatrix::new(&u * a.matrix() * u.adjoint()).unwrap();
        let w = BoundaryUnitary::custom(unitary_from(&h, 4)).unwrap();
        let w_rot = w.conjugated(&block_diag2(&u)).unwrap();
        let adm = admissibility_check(&w, &a).unwrap();
        let adm_rot = admissibility_check(&w_rot, &a_rot).unwrap();
        prop_assert_eq!(adm.admissible, adm_rot.admissible);
        prop_assert!((adm.commutator_norm - adm_rot.commutator_norm).abs() <= 1e-10);
        let b = Block::new(1, Interval::new(0.0, 1.0).unwrap(), a);
        let b_rot = Block::new(1, Interval::new(0.0, 1.0).unwrap(), a_rot);
        let z = c(lam.0, lam.1);
        let f = normalized_determinant(&b, &w, z).unwrap().norm();
        let f_rot = normalized_determinant(&b_rot, &w_rot, z).unwrap().norm();
        prop_assert!((f - f_rot).abs() <= 1e-9 * (1.0 + f), "{} vs {}", f, f_rot);
    }

    #[test]
    fn partial_sums_are_monotone(norms in prop::collection::vec(0.0f64..3.0, 2..60)) {
        let levels: Vec<usize> = (1..=norms.len()).collect();
        let report = direct_sum_membership(&norms, &levels).unwrap();
        prop_assert!(report.partial_sums.windows(2).all(|p| p[1].1 >= p[0].1));
    }
}

/// For A = diag(1, 4), W commutes with diag(A, A) exactly when it does not
/// mix the two components of H; build half the samples that way.
fn structured_unitary(g: &[Complex64]) -> CMat {
    let u1 = unitary_from(&g[..4], 2);
    let u4 = unitary_from(&g[4..8], 2);
    // Basis order (top_1, top_2, bottom_1, bottom_2); component j sits at rows j and 2 + j.
    let mut w = CMat::zeros(4, 4);
    for (comp, u) in [(0usize, &u1), (1, &u4)] {
        let idx = [comp, 2 + comp];
        for i in 0..2 {
            for j in 0..2 {
                w[(idx[i], idx[j])] = u[(i, j)];
            }
        }
    }
    w
}

#[test]
fn admissibility_agrees_with_commutator_on_random_unitaries() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let a = CoefficientMatrix::from_real_diagonal(&[1.0, 4.0]).unwrap();
    let a2 = block_diag2(a.matrix());
    let (mut admissible, mut rejected) = (0, 0);
    for k in 0..200 {
        let g: Vec<Complex64> = (0..16).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let w = if k % 2 == 0 { unitary_from(&g, 4) } else { structured_unitary(&g) };
        let comm = frobenius(&(&w * &a2 - &a2 * &w));
        let check = admissibility_check(&BoundaryUnitary::custom(w).unwrap(), &a).unwrap();
        assert_eq!(check.admissible, comm <= COMMUTATOR_TOL, "sample {k}: commutator {comm:e}");
        assert!(check.consistent);
        if check.admissible {
            admissible += 1;
        } else {
            rejected += 1;
        }
    }
    assert_eq!((admissible, rejected), (100, 100));
}
