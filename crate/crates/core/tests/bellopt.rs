use std::f64::consts::SQRT_2;

use nlt_core::bellopt::*;
use nlt_core::qcore::*;
use nlt_core::states::{cg04_ab_marginal, cg04_ac_marginal, phi, psi_plus, rotated_bell, triangle_state, w_marginal};
use proptest::prelude::*;

fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

fn proj(o: &CMat) -> Vec<CMat> {
    let id = CMat::identity(2, 2);
    vec![(&id + o) * c(0.5), (&id - o) * c(0.5)]
}

/// Local bound by enumerating every pair of deterministic strategies.
fn brute_local_bound(s: &Scenario, coeffs: &[f64]) -> f64 {
    let strategies = |p: usize| -> Vec<Vec<usize>> {
        let mut all = vec![vec![]];
        for x in 0..s.settings(p) {
            all = all
                .into_iter()
                .flat_map(|v| (0..s.outcomes(p, x)).map(move |a| [v.clone(), vec![a]].concat()))
                .collect();
        }
        all
    };
    let mut best = f64::NEG_INFINITY;
    for sa in strategies(0) {
        for sb in strategies(1) {
            let p = Correlation::deterministic(s, &[sa.clone(), sb]);
            best = best.max(coeffs.iter().zip(p.table()).map(|(b, q)| b * q).sum());
        }
    }
    best
}

fn random_two_qubit(seed: u64) -> DensityOp {
    haar_random_ket(&Layout::qubits(4), seed).projector().partial_trace(&[0, 1]).unwrap()
}

#[test]
fn rotated_bell_chsh_is_tsirelson() {
    let rho = rotated_bell().projector();
    let obs = vec![pauli_z(), pauli_x()];
    let asm = Assemblage::from_observables(vec![obs.clone(), obs]).unwrap();
    let p = born_correlation(&rho, &asm).unwrap();
    assert!((chsh().value(&p).unwrap() - 2.0 * SQRT_2).abs() < 1e-12);
}

#[test]
fn born_rule_matches_kronecker_oracle() {
    let rho = random_two_qubit(3);
    let s = Scenario::uniform(2, 3, 2).unwrap();
    let asm = Assemblage::random_projective(&[2, 2], &s, &mut rng_from_seed(4));
    let p = born_correlation(&rho, &asm).unwrap();
    s.for_each(|ins, outs, i| {
        let op = kron(asm.effect(0, ins[0], outs[0]), asm.effect(1, ins[1], outs[1]));
        assert!((p.table()[i] - rho.expectation(&op)).abs() < 1e-14);
    });
}

#[test]
fn maximally_mixed_gives_uniform() {
    let rho = DensityOp::maximally_mixed(Layout::qubits(2));
    let s = Scenario::uniform(2, 2, 2).unwrap();
    let asm = Assemblage::random_projective(&[2, 2], &s, &mut rng_from_seed(1));
    let p = born_correlation(&rho, &asm).unwrap();
    assert!(p.table().iter().all(|v| (v - 0.25).abs() < 1e-14));
}

#[test]
fn triangle_s_value() {
    // A = A1 A2, B = B1 B2; the S functional reads A1 and B2.
    let z = proj(&pauli_z());
    let x = proj(&pauli_x());
    let alice = Assemblage::product_party(&[z.clone(), x.clone()], &[z.clone(), z.clone()]);
    let bob = Assemblage::product_party(&[z.clone(), z.clone()], &[z.clone(), x.clone()]);
    let carol = Assemblage::product_party(&[z.clone()], &[z.clone()]);
    let asm = Assemblage::new(vec![alice.clone(), bob.clone(), carol]).unwrap();
    let p = born_correlation(&triangle_state(), &asm).unwrap();
    let ab = p.marginal_of(&[0, 1], 1e-10).unwrap();
    let v = s_ext().value(&ab).unwrap();
    assert!((v - 8.0 * SQRT_2).abs() < 1e-10, "{v}");
}

#[test]
fn signaling_table_detected() {
    let s = Scenario::uniform(2, 2, 2).unwrap();
    // Alice's outcome copies Bob's setting.
    let mut t = vec![0.0; s.len()];
    s.for_each(|ins, outs, i| {
        if outs[0] == ins[1] && outs[1] == 0 {
            t[i] = 1.0;
        }
    });
    let p = Correlation::new(s, t).unwrap();
    assert!(!p.is_nonsignaling(1e-9));
    assert!(matches!(p.marginal_of(&[0], 1e-9), Err(nlt_core::Error::Signaling(_))));
}

#[test]
fn tripartite_marginal_matches_reduced_state() {
    let ket = haar_random_ket(&Layout::new(vec![2, 3, 2]).unwrap(), 17);
    let rho = ket.projector();
    let s = Scenario::uniform(3, 2, 2).unwrap();
    let asm = Assemblage::random_projective(&[2, 3, 2], &s, &mut rng_from_seed(2));
    let p = born_correlation(&rho, &asm).unwrap();
    assert!(p.is_nonsignaling(1e-10));
    let ab = p.marginal_of(&[0, 1], 1e-10).unwrap();
    let pair = Assemblage::new(vec![asm.party(0).to_vec(), asm.party(1).to_vec()]).unwrap();
    let direct = born_correlation(&rho.partial_trace(&[0, 1]).unwrap(), &pair).unwrap();
    let diff = ab.table().iter().zip(direct.table()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(diff < 1e-12);
}

#[test]
fn named_local_bounds() {
    let f = chsh();
    assert_eq!(f.local_bound(), 2.0);
    assert_eq!(local_bound(&f).unwrap(), 2.0);
    assert_eq!(brute_local_bound(f.scenario(), f.coeffs()), 2.0);
    assert!((s_ext().local_bound() - 8.0).abs() < 1e-12);
    let i = i3322();
    assert!(local_bound(&i).unwrap().abs() < 1e-12);
    assert!(brute_local_bound(i.scenario(), i.coeffs()).abs() < 1e-12);
    let t = i.swapped().unwrap();
    assert!(local_bound(&t).unwrap().abs() < 1e-12);
}

#[test]
fn chsh_coefficient_pattern() {
    let f = chsh();
    assert_eq!(f.coeffs().len(), 16);
    assert!(f.coeffs().iter().all(|b| b.abs() == 1.0));
    assert_eq!(f.coeffs().iter().filter(|b| **b < 0.0).count(), 8);
}

#[test]
fn enumeration_limit_is_a_capacity_error() {
    let s = Scenario::uniform(2, 30, 2).unwrap();
    let coeffs = vec![0.0; s.len()];
    let e = local_bound_of(&s, &coeffs).unwrap_err();
    assert!(e.is_capacity(), "{e}");
}

#[test]
fn kv_functional_is_a_capped_game() {
    let f = make_functional("kv(3, 0.2)").unwrap();
    assert_eq!(f.kind, FunctionalKind::Game);
    assert!(!f.bound_exact);
    assert!(f.coeffs().iter().all(|&b| b >= 0.0));
    assert!((f.local_bound() - 8f64.powf(-0.25)).abs() < 1e-12);
    assert!(make_functional("cglmp").is_err());
    assert!(make_functional("kv(3)").is_err());
}

#[test]
fn horodecki_examples() {
    assert!((horodecki_chsh(&psi_plus().projector()).unwrap() - 2.0 * SQRT_2).abs() < 1e-12);
    // T = diag(2/3, 2/3, -1/3)
    let t = correlation_matrix(&w_marginal(3).unwrap()).unwrap();
    let want = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0));
    assert!((t - want).abs().max() < 1e-14);
    assert!((horodecki_chsh(&w_marginal(3).unwrap()).unwrap() - 4.0 * SQRT_2 / 3.0).abs() < 1e-12);
    assert!(horodecki_chsh(&cg04_ac_marginal(0.540).unwrap()).unwrap() > 2.0);
    assert!(horodecki_chsh(&cg04_ac_marginal(0.543).unwrap()).unwrap() < 2.0);
    assert!(horodecki_chsh(&phi(3).unwrap().projector()).is_err());
}

#[test]
fn horodecki_agrees_with_seesaw() {
    // Traceless observables give the Horodecki value; constant ones give 2.
    for seed in 0..100 {
        let rho = random_two_qubit(1000 + seed);
        let h = horodecki_chsh(&rho).unwrap();
        let opts = SeesawOptions { restarts: 20, seed, ..SeesawOptions::default() };
        let s = seesaw_optimize(&rho, &chsh(), &opts).unwrap().value;
        assert!((h.max(2.0) - s).abs() < 1e-5, "seed {seed}: h {h}, see-saw {s}");
    }
}

#[test]
fn seesaw_bell_state_chsh() {
    let r = seesaw_optimize(&psi_plus().projector(), &chsh(), &SeesawOptions::default()).unwrap();
    assert!((r.value - 2.0 * SQRT_2).abs() < 1e-6);
    assert!(r.converged);
    let p = born_correlation(&psi_plus().projector(), &r.assemblage).unwrap();
    assert!((chsh().value(&p).unwrap() - r.value).abs() < 1e-9);
}

#[test]
fn seesaw_i3322_values() {
    let rho = cg04_ab_marginal(0.852).unwrap();
    let opts = SeesawOptions { restarts: 100, seed: 3, ..SeesawOptions::default() };
    let v = seesaw_optimize(&rho, &i3322(), &opts).unwrap().value;
    assert!(v > 0.0, "{v}");
    let bell = phi(2).unwrap().projector();
    let v = seesaw_optimize(&bell, &i3322(), &opts).unwrap().value;
    assert!((v - 0.25).abs() < 1e-4, "{v}");
}

#[test]
fn seesaw_is_reproducible_and_monotone() {
    let rho = random_two_qubit(5);
    let opts = SeesawOptions { restarts: 8, seed: 11, ..SeesawOptions::default() };
    let a = seesaw_optimize(&rho, &i3322(), &opts).unwrap();
    let b = seesaw_optimize(&rho, &i3322(), &opts).unwrap();
    assert_eq!(a.values, b.values);
    assert_eq!(a.seed, b.seed);
    let init = Assemblage::random_projective(&[2, 2], i3322().scenario(), &mut rng_from_seed(9));
    let run = seesaw_run(&rho, &i3322(), init, UpdateRule::Sign, 500, 1e-8, 9).unwrap();
    assert!(run.history.windows(2).all(|w| w[1] >= w[0] - 1e-10));
}

#[test]
fn seesaw_never_below_local_bound() {
    for seed in 0..10 {
        let rho = random_two_qubit(200 + seed);
        let opts = SeesawOptions { restarts: 2, seed, ..SeesawOptions::default() };
        for f in [chsh(), i3322(), lifted_chsh(3).unwrap()] {
            let r = seesaw_optimize(&rho, &f, &opts).unwrap();
            assert!(r.value >= f.local_bound() - 1e-9);
            assert!(r.deterministic.is_some());
        }
    }
}

#[test]
fn povm_rule_matches_sign_rule_on_chsh() {
    let rho = random_two_qubit(77);
    let sign = SeesawOptions { restarts: 10, seed: 1, rule: UpdateRule::Sign, ..SeesawOptions::default() };
    let povm = SeesawOptions { rule: UpdateRule::Povm, ..sign.clone() };
    let a = seesaw_optimize(&rho, &chsh(), &sign).unwrap().value;
    let b = seesaw_optimize(&rho, &chsh(), &povm).unwrap().value;
    assert!((a - b).abs() < 1e-5, "{a} vs {b}");
}

#[test]
fn seesaw_rejects_bad_input() {
    let rho = random_two_qubit(1);
    let opts = SeesawOptions { restarts: 0, ..SeesawOptions::default() };
    assert!(seesaw_optimize(&rho, &chsh(), &opts).is_err());
    let tri = DensityOp::maximally_mixed(Layout::qubits(3));
    assert!(seesaw_optimize(&tri, &chsh(), &SeesawOptions::default()).is_err());
}

#[test]
fn correlation_file_round_trip() {
    let s = Scenario::new(vec![vec![2, 3], vec![2]]).unwrap();
    let asm = Assemblage::random_projective(&[3, 2], &s, &mut rng_from_seed(6));
    let rho = haar_random_ket(&Layout::new(vec![3, 2]).unwrap(), 6).projector();
    let p = born_correlation(&rho, &asm).unwrap();
    let back = Correlation::from_json(&p.to_json().unwrap()).unwrap();
    assert_eq!(back.scenario(), p.scenario());
    assert_eq!(back.table(), p.table());
}

#[test]
fn invalid_povms_rejected() {
    let z = pauli_z();
    assert!(Assemblage::new(vec![vec![vec![z.clone(), CMat::zeros(2, 2)]]]).is_err());
    let half = CMat::identity(2, 2) * c(0.5);
    assert!(Assemblage::new(vec![vec![vec![half.clone(), half.clone(), half]]]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn local_models_respect_chsh(weights in prop::collection::vec(0.0f64..1.0, 16)) {
        prop_assume!(weights.iter().sum::<f64>() > 1e-6);
        let s = Scenario::uniform(2, 2, 2).unwrap();
        let det: Vec<Correlation> = (0..16)
            .map(|k| Correlation::deterministic(&s, &[vec![k & 1, (k >> 1) & 1], vec![(k >> 2) & 1, (k >> 3) & 1]]))
            .collect();
        let parts: Vec<(f64, &Correlation)> = weights.iter().copied().zip(&det).collect();
        let p = Correlation::mixture(&parts).unwrap();
        prop_assert!(chsh().value(&p).unwrap() <= 2.0 + 1e-12);
        prop_assert!(p.is_nonsignaling(1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn local_bound_matches_brute_force(
        coeffs in prop::collection::vec(-3.0f64..3.0, 36),
        o in 2usize..=3,
    ) {
        let s = Scenario::new(vec![vec![o, 2], vec![2, o]]).unwrap();
        let c = &coeffs[..s.len()];
        let fast = local_bound_of(&s, c).unwrap();
        prop_assert!((fast - brute_local_bound(&s, c)).abs() < 1e-12);
    }

    #[test]
    fn born_correlations_are_nonsignaling(seed in any::<u64>(), da in 2usize..4, db in 2usize..4) {
        let s = Scenario::uniform(2, 3, 2).unwrap();
        let rho = haar_random_ket(&Layout::new(vec![da, db, 2]).unwrap(), seed)
            .projector()
            .partial_trace(&[0, 1])
            .unwrap();
        let asm = Assemblage::random_projective(&[da, db], &s, &mut rng_from_seed(seed ^ 7));
        let p = born_correlation(&rho, &asm).unwrap();
        prop_assert!(p.signaling_deviation() <= 1e-10);
        prop_assert!(p.table().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn scaling_scales_bound_and_value(seed in 0u64..1000, lambda in 0.1f64..10.0) {
        let rho = random_two_qubit(seed);
        let f = i3322();
        let g = f.scaled(lambda);
        prop_assert!((local_bound(&g).unwrap() - lambda * local_bound(&f).unwrap()).abs() < 1e-9 * lambda.max(1.0));
        let opts = SeesawOptions { restarts: 3, seed, ..SeesawOptions::default() };
        let a = seesaw_optimize(&rho, &f, &opts).unwrap();
        let b = seesaw_optimize(&rho, &g, &opts).unwrap();
        prop_assert!((b.value - lambda * a.value).abs() < 1e-6 * lambda.max(1.0));
        prop_assert_eq!(a.value > f.local_bound() + 1e-6, b.value > g.local_bound() + 1e-6 * lambda);
    }
}
