use std::collections::BTreeSet;

use nlt_core::bellopt::{Correlation, Scenario};
use nlt_core::kvgame::*;
use proptest::prelude::*;

const ETAS: [f64; 9] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45];

/// Sylvester Hadamard matrix with entries +-1.
fn sylvester(n: usize) -> Vec<Vec<i32>> {
    let mut h = vec![vec![1]];
    while h.len() < n {
        let m = h.len();
        let mut next = vec![vec![0; 2 * m]; 2 * m];
        for i in 0..m {
            for j in 0..m {
                next[i][j] = h[i][j];
                next[i][j + m] = h[i][j];
                next[i + m][j] = h[i][j];
                next[i + m][j + m] = -h[i][j];
            }
        }
        h = next;
    }
    h
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Averages over every question string `x`, with no symmetry reduction.
fn brute_win(inst: &KvInstance) -> f64 {
    let n = inst.n;
    let size = 1u32 << n;
    let mut total = 0.0;
    for x in 0..size {
        let xs = inst.coset(inst.coset_of[x as usize] as usize);
        for z in 0..size {
            let ys = inst.coset(inst.coset_of[(x ^ z) as usize] as usize);
            let mut win = 0.0;
            for &a in &xs {
                for &b in &ys {
                    if a ^ b == z {
                        win += dot(&inst.measurement_vector(a), &inst.measurement_vector(b)).powi(2) / n as f64;
                    }
                }
            }
            total += inst.noise_weight(z) * win;
        }
    }
    total / size as f64
}

#[test]
fn l2_partition() {
    let inst = build_kv_instance(2, 0.1).unwrap();
    assert_eq!(inst.num_cosets(), 4);
    let mut seen = BTreeSet::new();
    for k in 0..4 {
        let c = inst.coset(k);
        assert_eq!(c.len(), 4);
        assert_eq!(c.iter().copied().min(), Some(inst.reps[k]));
        for g in c {
            assert!(seen.insert(g));
            assert_eq!(inst.coset_of[g as usize] as usize, k);
        }
    }
    assert_eq!(seen, (0..16).collect());
}

#[test]
fn codewords_are_hadamard_rows() {
    for n in [4, 8, 16] {
        let h = sylvester(n);
        let want: Vec<u32> = h.iter().map(|row| row.iter().enumerate().fold(0, |acc, (i, &s)| acc | (((s == -1) as u32) << i))).collect();
        assert_eq!(hadamard_codewords(n), want);
    }
}

#[test]
fn coset_measurements_are_complete() {
    for ell in 2..=4 {
        let inst = build_kv_instance(ell, 0.2).unwrap();
        let n = inst.n;
        for k in [0, 1, inst.num_cosets() / 2, inst.num_cosets() - 1] {
            let vs: Vec<Vec<f64>> = inst.coset(k).iter().map(|&t| inst.measurement_vector(t)).collect();
            for i in 0..n {
                for j in 0..n {
                    let proj_sum: f64 = vs.iter().map(|v| v[i] * v[j]).sum();
                    assert!((proj_sum - (i == j) as u8 as f64).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn quantum_value_beats_lower_bound() {
    for ell in 2..=4 {
        for eta in ETAS {
            let inst = build_kv_instance(ell, eta).unwrap();
            let w = kv_quantum_win_prob(&inst, WinMode::Exact).unwrap().value;
            assert!(w >= kv_quantum_lower_bound(eta) - 1e-9, "l {ell} eta {eta}: {w}");
        }
    }
    let half = build_kv_instance(3, 0.5).unwrap();
    assert_eq!(kv_quantum_lower_bound(0.5), 0.0);
    assert!(kv_quantum_win_prob(&half, WinMode::Exact).unwrap().value >= 0.0);
}

#[test]
fn exact_matches_brute_force() {
    for ell in [2, 3] {
        for eta in [0.0, 0.15, 0.4] {
            let inst = build_kv_instance(ell, eta).unwrap();
            let w = kv_quantum_win_prob(&inst, WinMode::Exact).unwrap().value;
            assert!((w - brute_win(&inst)).abs() < 1e-12, "l {ell} eta {eta}");
        }
    }
}

#[test]
fn exact_matches_monte_carlo() {
    let inst = build_kv_instance(3, 0.2).unwrap();
    let exact = kv_quantum_win_prob(&inst, WinMode::Exact).unwrap().value;
    let mc = kv_quantum_win_prob(&inst, WinMode::MonteCarlo { seed: 5, trials: 1_000_000 }).unwrap();
    assert!((mc.value - exact).abs() < 3.0 * mc.std_error, "{} +- {} vs {exact}", mc.value, mc.std_error);
    let again = kv_quantum_win_prob(&inst, WinMode::MonteCarlo { seed: 5, trials: 1000 }).unwrap();
    let again2 = kv_quantum_win_prob(&inst, WinMode::MonteCarlo { seed: 5, trials: 1000 }).unwrap();
    assert_eq!(again.value, again2.value);
    assert!(kv_quantum_win_prob(&inst, WinMode::MonteCarlo { seed: 5, trials: 0 }).is_err());
}

#[test]
fn win_probability_decreases_with_noise() {
    for ell in 2..=3 {
        let mut prev = f64::INFINITY;
        for i in 0..=20 {
            let inst = build_kv_instance(ell, 0.025 * i as f64).unwrap();
            let w = kv_quantum_win_prob(&inst, WinMode::Exact).unwrap().value;
            assert!(w <= prev + 1e-12);
            prev = w;
        }
    }
}

#[test]
fn classical_caps() {
    assert_eq!(kv_classical_cap(8.0, 0.0).unwrap().cap, 1.0);
    assert!((kv_classical_cap(8.0, 0.25).unwrap().cap - 0.5).abs() < 1e-15);
    let n = 541.0;
    let c = kv_classical_cap(n, default_eta(n)).unwrap();
    let (first, second) = c.default_eta_forms.unwrap();
    assert!((c.cap - first).abs() < 1e-12);
    assert!(first <= second);
    assert!(second < 4.0 / n.ln().powi(2));
    assert!((kv_quantum_lower_bound(default_eta(n)) - 4.0 / n.ln().powi(2)).abs() < 1e-15);
    assert!(kv_classical_cap(8.0, 0.3).unwrap().default_eta_forms.is_none());
    assert!(kv_classical_cap(1.0, 0.1).is_err());
    assert!(kv_classical_cap(8.0, 0.6).is_err());
}

#[test]
fn unsupported_sizes_are_rejected() {
    assert!(build_kv_instance(1, 0.1).is_err());
    assert!(build_kv_instance(5, 0.1).is_err());
    assert!(build_kv_instance(3, -0.1).is_err());
}

#[test]
fn functional_value_equals_win_probability() {
    for eta in [0.1, 0.3] {
        let inst = build_kv_instance(2, eta).unwrap();
        let f = kv_functional(&inst).unwrap();
        assert!(f.bound_exact);
        let (m, n) = (inst.num_cosets(), inst.n);
        let s = Scenario::uniform(2, m, n).unwrap();
        let mut t = vec![0.0; s.len()];
        s.for_each(|ins, outs, i| {
            let a = inst.coset(ins[0])[outs[0]];
            let b = inst.coset(ins[1])[outs[1]];
            t[i] = dot(&inst.measurement_vector(a), &inst.measurement_vector(b)).powi(2) / n as f64;
        });
        let p = Correlation::new(s, t).unwrap();
        let w = kv_quantum_win_prob(&inst, WinMode::Exact).unwrap().value;
        assert!((f.value(&p).unwrap() - w).abs() < 1e-12);
        // no separation yet at n = 4
        assert!(f.local_bound() > w && f.local_bound() <= 1.0);
    }
    let big = kv_functional(&build_kv_instance(3, 0.2).unwrap()).unwrap();
    assert!(!big.bound_exact);
    assert!((big.local_bound() - kv_classical_cap(8.0, 0.2).unwrap().cap).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cosets_are_closed_under_codewords(ell in 2u32..5, k in any::<prop::sample::Index>()) {
        let inst = build_kv_instance(ell, 0.1).unwrap();
        let k = k.index(inst.num_cosets());
        let set: BTreeSet<u32> = inst.coset(k).into_iter().collect();
        for &h in &inst.codewords {
            let moved: BTreeSet<u32> = set.iter().map(|g| g ^ h).collect();
            prop_assert_eq!(&moved, &set);
        }
    }

    #[test]
    fn coset_vectors_are_orthonormal(ell in 2u32..5, k in any::<prop::sample::Index>()) {
        let inst = build_kv_instance(ell, 0.1).unwrap();
        let vs: Vec<Vec<f64>> = inst.coset(k.index(inst.num_cosets())).iter().map(|&t| inst.measurement_vector(t)).collect();
        for i in 0..vs.len() {
            for j in 0..vs.len() {
                prop_assert!((dot(&vs[i], &vs[j]) - (i == j) as u8 as f64).abs() < 1e-12);
            }
        }
    }
}
