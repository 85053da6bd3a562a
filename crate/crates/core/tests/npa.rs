use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use nlt_core::bellopt::*;
use nlt_core::npa::*;
use nlt_core::qcore::*;
use proptest::prelude::*;

fn chsh_scenario() -> Scenario {
    Scenario::uniform(2, 2, 2).unwrap()
}

/// `v PR + (1 - v) uniform`; CHSH value `4 v`.
fn noisy_pr(v: f64) -> Correlation {
    let u = Correlation::uniform(&chsh_scenario());
    Correlation::mixture(&[(v, &pr_box()), (1.0 - v, &u)]).unwrap()
}

#[test]
fn moment_index_size() {
    for (s, want) in [
        (Scenario::uniform(2, 2, 2).unwrap(), 5),
        (Scenario::uniform(2, 3, 2).unwrap(), 7),
        (Scenario::uniform(2, 2, 3).unwrap(), 9),
        (Scenario::new(vec![vec![2, 3], vec![4]]).unwrap(), 1 + 1 + 2 + 3),
    ] {
        let idx = MomentIndex::new(&Correlation::uniform(&s)).unwrap();
        assert_eq!(idx.len(), want);
        assert_eq!(idx.ops[0], MomentOp::Id);
    }
    let tri = Correlation::uniform(&Scenario::uniform(3, 2, 2).unwrap());
    assert!(MomentIndex::new(&tri).is_err());
}

#[test]
fn pr_box_is_outside_and_uniform_inside() {
    let pr = pr_box();
    assert_eq!(chsh().value(&pr).unwrap(), 4.0);
    assert!(!q1_membership(&pr, 1e-7).unwrap());
    assert!(q1_slack(&pr).unwrap() < -1e-3);
    let u = Correlation::uniform(&chsh_scenario());
    assert!(q1_membership(&u, 1e-7).unwrap());
    assert!(q1_visibility(&u).unwrap().capped);
}

#[test]
fn pr_visibility_is_inverse_sqrt2() {
    let v = q1_visibility(&pr_box()).unwrap();
    assert!((v.v - FRAC_1_SQRT_2).abs() < 1e-4, "{}", v.v);
    assert!(!v.capped);
    let b = q1_visibility_bisect(&pr_box(), 1e-7).unwrap();
    assert!((v.v - b).abs() < 1e-5, "{} vs {b}", v.v);
}

#[test]
fn deterministic_points_have_visibility_at_least_one() {
    let s = Scenario::uniform(2, 3, 2).unwrap();
    let p = Correlation::deterministic(&s, &[vec![0, 1, 1], vec![1, 0, 1]]);
    assert!(q1_membership(&p, 1e-7).unwrap());
    assert!(q1_visibility(&p).unwrap().v >= 1.0 - 1e-6);
}

#[test]
fn beyond_tsirelson_is_excluded() {
    for eps in [1e-3, 1e-2, 0.1] {
        let v = FRAC_1_SQRT_2 + eps;
        assert!(!q1_membership(&noisy_pr(v), 1e-7).unwrap(), "v = {v}");
    }
    assert!(q1_membership(&noisy_pr(FRAC_1_SQRT_2 - 1e-3), 1e-7).unwrap());
}

#[test]
fn signaling_input_is_refused() {
    let s = chsh_scenario();
    let mut t = vec![0.0; s.len()];
    s.for_each(|ins, outs, i| {
        if outs[0] == ins[1] && outs[1] == 0 {
            t[i] = 1.0;
        }
    });
    let p = Correlation::new(s, t).unwrap();
    assert!(matches!(q1_membership(&p, 1e-7), Err(nlt_core::Error::Signaling(_))));
    assert!(matches!(q1_visibility(&p), Err(nlt_core::Error::Signaling(_))));
}

#[test]
fn quantum_correlations_with_more_outcomes() {
    let s = Scenario::new(vec![vec![3, 2], vec![3, 3]]).unwrap();
    let mut rng = rng_from_seed(21);
    for i in 0..30 {
        let rho = haar_random_ket(&Layout::new(vec![3, 3]).unwrap(), 300 + i).projector();
        let asm = Assemblage::random_projective(&[3, 3], &s, &mut rng);
        let p = born_correlation(&rho, &asm).unwrap();
        assert!(q1_membership(&p, 1e-7).unwrap(), "instance {i}");
    }
}

#[test]
fn coretti_placeholder_is_empty_or_reproduces_visibility() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/coretti_pab.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let raw: CorrelationFile = serde_json::from_str(&text).unwrap();
    if raw.settings.is_empty() {
        // no user data: the file must stay a value-free placeholder
        assert!(raw.p.as_array().is_none_or(|a| a.is_empty()));
        assert!(Correlation::from_file(&raw).is_err());
        return;
    }
    let p = Correlation::from_file(&raw).unwrap();
    let v = q1_visibility(&p).unwrap().v;
    assert!((v - 0.8571).abs() < 1e-3, "{v}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_quantum_points_are_in_q1(seed in any::<u64>()) {
        let rho = haar_random_ket(&Layout::qubits(3), seed).projector().partial_trace(&[0, 1]).unwrap();
        let asm = Assemblage::random_projective(&[2, 2], &chsh_scenario(), &mut rng_from_seed(seed ^ 3));
        let p = born_correlation(&rho, &asm).unwrap();
        prop_assert!(q1_membership(&p, 1e-7).unwrap());
        prop_assert!(q1_visibility(&p).unwrap().v >= 1.0 - 1e-6);
    }

    #[test]
    fn direct_and_bisected_visibility_agree(v in 0.75f64..1.0) {
        // uniform noise on the PR box: v* = (1/sqrt2) / v
        let p = noisy_pr(v);
        let direct = q1_visibility(&p).unwrap().v;
        let bisect = q1_visibility_bisect(&p, 1e-7).unwrap();
        prop_assert!((direct - bisect).abs() < 1e-5);
        prop_assert!((direct - FRAC_1_SQRT_2 / v).abs() < 1e-4);
    }
}
