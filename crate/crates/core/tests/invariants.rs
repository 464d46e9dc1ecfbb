use std::sync::Arc;

use proptest::prelude::*;

use paro_core::fem::{assemble_mass, assemble_stiffness, Constant, Diffusion, DiscreteFunction, FeSpace};
use paro_core::linalg::{b_orthonormalize, cg_solve, dense_sym_geneig, gram_deviation, DenseSymPencil, Preconditioner};
use paro_core::mesh::{bisect, create_box_mesh, BoxDomain, Mesh};

fn refine_random(mesh: &Arc<Mesh>, picks: &[usize]) -> Arc<Mesh> {
    let mut m = mesh.clone();
    for &p in picks {
        let e = p % m.num_elements();
        m = bisect(&m, &[e]).unwrap();
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bisection_keeps_mesh_conforming_and_volume(dim in 2usize..=3, picks in prop::collection::vec(0usize..10_000, 1..25)) {
        let coarse = create_box_mesh(BoxDomain::unit(dim), &[2]).unwrap();
        let fine = refine_random(&coarse, &picks);
        prop_assert!(fine.is_conforming());
        prop_assert!(fine.descends_from(&coarse));
        prop_assert!((fine.total_volume() - 1.0).abs() < 1e-12);
        // newest-vertex bisection produces finitely many similarity classes
        prop_assert!(fine.shape_regularity() <= coarse.shape_regularity() * 8.0);
    }

    #[test]
    fn prolongation_preserves_the_coarse_function(picks in prop::collection::vec(0usize..10_000, 1..30), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let coarse = create_box_mesh(BoxDomain::unit(2), &[3]).unwrap();
        let fine = refine_random(&coarse, &picks);
        let f = |x: &[f64; 3]| (a * x[0] + b * x[1]) * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
        let coarse_fn = DiscreteFunction::interpolate(FeSpace::new(coarse.clone()), f);
        let lifted = coarse_fn.prolongate(&FeSpace::new(fine.clone())).unwrap();
        // the lifted function agrees with the coarse one at every fine vertex
        for (v, x) in fine.vertices().iter().enumerate() {
            let expected = coarse_fn.evaluate(x).unwrap();
            let got = lifted.space().dof_of_vertex(v).map_or(0.0, |d| lifted.coefficients()[d]);
            prop_assert!((expected - got).abs() < 1e-12);
        }
        prop_assert!((coarse_fn.integral() - lifted.integral()).abs() < 1e-12);
    }

    #[test]
    fn b_orthonormalization_certificate(seed in 0u64..1000, k in 1usize..6) {
        let space = FeSpace::new(create_box_mesh(BoxDomain::unit(2), &[6]).unwrap());
        let b = assemble_mass(&space);
        let n = space.dof_count();
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let vectors: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| next()).collect()).collect();
        let ortho = b_orthonormalize(&vectors, &b, 1e-10).unwrap();
        prop_assert_eq!(ortho.vectors.len(), k);
        prop_assert!(gram_deviation(&ortho.vectors, &b) <= 1e-8);
    }

    #[test]
    fn cg_residual_meets_tolerance(m in 3usize..12, rhs_scale in 0.1f64..100.0) {
        let space = FeSpace::new(create_box_mesh(BoxDomain::unit(2), &[m]).unwrap());
        let a = assemble_stiffness(&space, &Diffusion::identity(), &Constant(0.0)).unwrap();
        let b: Vec<f64> = (0..space.dof_count()).map(|i| rhs_scale * ((i % 7) as f64 - 3.0)).collect();
        let sol = cg_solve(&a, &b, 1e-10, 10_000, Preconditioner::Jacobi).unwrap();
        let ax = a.mul_vec(&sol.x);
        let r: f64 = ax.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        prop_assert!(r / nb <= 1e-10 * 1.0001);
    }

    #[test]
    fn dense_pencil_pairs_satisfy_the_equation(entries in prop::collection::vec(-1.0f64..1.0, 16), diag in prop::collection::vec(0.5f64..2.0, 4)) {
        let m = nalgebra::DMatrix::from_vec(4, 4, entries);
        let a = &m + m.transpose();
        let b = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)) + m.transpose() * &m * 0.1;
        let pairs = dense_sym_geneig(&DenseSymPencil::new(a.clone(), b.clone()).unwrap()).unwrap();
        for w in pairs.values.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        for (l, v) in pairs.values.iter().zip(&pairs.vectors) {
            let v = nalgebra::DVector::from_column_slice(v);
            let r = &a * &v - &b * &v * *l;
            prop_assert!(r.norm() <= 1e-9 * (1.0 + l.abs()));
            prop_assert!(((v.transpose() * &b * &v)[0] - 1.0).abs() <= 1e-10);
        }
    }
}
