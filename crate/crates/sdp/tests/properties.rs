use nalgebra::{DMatrix, SymmetricEigen};
use nlt_sdp::{BlockKind, SdpProblem, Sense, Status, Term};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |_, _| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
}

fn hermitian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let g = gaussian(n, rng);
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

fn density(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let g = gaussian(n, rng);
    let r = &g * g.adjoint();
    let t = r.trace();
    r / t
}

fn eig_range(m: &DMatrix<Complex64>) -> (f64, f64) {
    let e = SymmetricEigen::new(m.clone()).eigenvalues;
    (e.min(), e.max())
}

fn trace_one(p: &mut SdpProblem, b: usize, n: usize) {
    p.add_constraint((0..n).map(|i| Term::re(b, i, i, 1.0)).collect(), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn density_optimum_is_extreme_eigenvalue(seed in any::<u64>(), n in 2usize..6, maximize in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = hermitian(n, &mut rng);
        let (lo, hi) = eig_range(&c);
        let mut p = SdpProblem::new(if maximize { Sense::Maximize } else { Sense::Minimize });
        let x = p.add_block(BlockKind::Hermitian(n));
        trace_one(&mut p, x, n);
        p.add_objective(Term::trace_with(x, &c));
        let s = p.solve().unwrap();
        prop_assert_eq!(s.status, Status::Optimal);
        let want = if maximize { hi } else { lo };
        prop_assert!((s.primal_objective - want).abs() < 1e-7, "{} vs {}", s.primal_objective, want);
    }

    #[test]
    fn optimal_solutions_meet_the_contract(seed in any::<u64>(), n in 2usize..5, m in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = density(n, &mut rng);
        let c = hermitian(n, &mut rng);
        let mut p = SdpProblem::new(Sense::Maximize);
        let x = p.add_block(BlockKind::Hermitian(n));
        trace_one(&mut p, x, n);
        for _ in 0..m {
            let a = hermitian(n, &mut rng);
            let rhs = (&a * &x0).trace().re;
            p.add_constraint(Term::trace_with(x, &a), rhs);
        }
        p.add_objective(Term::trace_with(x, &c));
        let s = p.solve().unwrap();
        prop_assert_eq!(s.status, Status::Optimal);
        prop_assert!(s.primal_objective <= s.dual_objective + 1e-6);
        prop_assert!(s.primal_residual < 1e-7);
        prop_assert!(s.gap < 1e-6);
        let (lo, _) = eig_range(&s.block(x).to_complex());
        prop_assert!(lo > -1e-9);
        // x0 is feasible, so the optimum is at least its value
        prop_assert!(s.primal_objective >= (&c * &x0).trace().re - 1e-7);
    }

    #[test]
    fn objective_scales_linearly(seed in any::<u64>(), lambda in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = hermitian(3, &mut rng);
        let solve = |k: f64| {
            let mut p = SdpProblem::new(Sense::Maximize);
            let x = p.add_block(BlockKind::Hermitian(3));
            trace_one(&mut p, x, 3);
            p.add_objective(Term::trace_with(x, &(&c * Complex64::new(k, 0.0))));
            p.solve().unwrap().primal_objective
        };
        let (a, b) = (solve(1.0), solve(lambda));
        prop_assert!((b - lambda * a).abs() < 1e-6 * lambda.max(1.0));
    }

    #[test]
    fn scalar_box(lo in -5.0f64..0.0, width in 0.1f64..5.0) {
        // y = x + lo with x >= 0; max y subject to y <= hi
        let hi = lo + width;
        let mut p = SdpProblem::new(Sense::Maximize);
        let x = p.add_block(BlockKind::Real(1));
        let s = p.add_block(BlockKind::Real(1));
        p.add_constraint(vec![Term::re(x, 0, 0, 1.0), Term::re(s, 0, 0, 1.0)], hi - lo);
        p.add_objective([Term::re(x, 0, 0, 1.0)]);
        let sol = p.solve().unwrap();
        prop_assert!((sol.primal_objective + lo - hi).abs() < 1e-7);
    }
}
