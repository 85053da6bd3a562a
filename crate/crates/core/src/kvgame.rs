//! Khot-Vishnoi game on cosets of the Hadamard code.
//!
//! Strings of `n = 2^l` bits are `u32` masks, bit `i` being coordinate `i`.
//! Codeword `j` of the Sylvester Hadamard code has bit `i` equal to
//! `popcount(i & j) mod 2`. Cosets are ordered by their smallest element
//! (the representative); element `k` of a coset is `rep ^ codeword[k]`.

use rand::Rng;
use serde::Serialize;

use crate::bellopt::{local_bound_of, BellFunctional, FunctionalKind, Scenario, ENUMERATION_LIMIT};
use crate::error::{Error, Result};
use crate::qcore::rng_from_seed;

#[derive(Clone, Debug)]
pub struct KvInstance {
    pub ell: u32,
    pub n: usize,
    pub eta: f64,
    pub codewords: Vec<u32>,
    /// Coset representatives, ascending.
    pub reps: Vec<u32>,
    /// `coset_of[g]` is the index of the coset containing `g`.
    pub coset_of: Vec<u32>,
}

impl KvInstance {
    pub fn num_cosets(&self) -> usize {
        self.reps.len()
    }

    pub fn coset(&self, k: usize) -> Vec<u32> {
        self.codewords.iter().map(|&h| self.reps[k] ^ h).collect()
    }

    /// Position of `g` inside its coset.
    pub fn position(&self, g: u32) -> usize {
        let rep = self.reps[self.coset_of[g as usize] as usize];
        self.codewords.iter().position(|&h| h == g ^ rep).unwrap()
    }

    /// `|psi_t> = sum_i (-1)^t(i) |i> / sqrt n`, real.
    pub fn measurement_vector(&self, t: u32) -> Vec<f64> {
        let s = 1.0 / (self.n as f64).sqrt();
        (0..self.n).map(|i| if t >> i & 1 == 1 { -s } else { s }).collect()
    }

    /// Noise weight `eta^|z| (1 - eta)^(n - |z|)`.
    pub fn noise_weight(&self, z: u32) -> f64 {
        let w = z.count_ones() as i32;
        self.eta.powi(w) * (1.0 - self.eta).powi(self.n as i32 - w)
    }
}

pub fn hadamard_codewords(n: usize) -> Vec<u32> {
    (0..n as u32)
        .map(|j| (0..n as u32).fold(0u32, |acc, i| acc | (((i & j).count_ones() & 1) << i)))
        .collect()
}

/// Supported `l` is 2, 3 or 4.
pub fn build_kv_instance(ell: u32, eta: f64) -> Result<KvInstance> {
    if !(2..=4).contains(&ell) {
        return Err(Error::Domain(format!("l = {ell} unsupported; use 2, 3 or 4")));
    }
    if !(0.0..=0.5).contains(&eta) {
        return Err(Error::Domain(format!("eta = {eta} outside [0, 1/2]")));
    }
    let n = 1usize << ell;
    let codewords = hadamard_codewords(n);
    let size = 1usize << n;
    let mut coset_of = vec![u32::MAX; size];
    let mut reps = Vec::with_capacity(size / n);
    for g in 0..size as u32 {
        if coset_of[g as usize] != u32::MAX {
            continue;
        }
        // g is the smallest unvisited string, hence its coset's minimum.
        let k = reps.len() as u32;
        reps.push(g);
        for &h in &codewords {
            coset_of[(g ^ h) as usize] = k;
        }
    }
    Ok(KvInstance { ell, n, eta, codewords, reps, coset_of })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WinMode {
    Exact,
    MonteCarlo { seed: u64, trials: u64 },
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WinProb {
    pub value: f64,
    /// Zero in exact mode.
    pub std_error: f64,
}

fn overlap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Winning probability of the canonical strategy on `|Phi_n>`: both parties
/// measure `{|psi_t>}` over the elements of their coset, so
/// `P(a, b | X, Y) = <psi_a|psi_b>^2 / n`.
pub fn kv_quantum_win_prob(inst: &KvInstance, mode: WinMode) -> Result<WinProb> {
    let n = inst.n;
    match mode {
        WinMode::Exact => {
            if n > 16 {
                return Err(Error::Capacity(format!("exact mode needs n <= 16, got {n}")));
            }
            // The win probability given (x, z) does not depend on x; use x = 0,
            // whose coset is the code itself.
            let home: Vec<Vec<f64>> = inst.codewords.iter().map(|&a| inst.measurement_vector(a)).collect();
            let mut total = 0.0;
            for z in 0..(1u32 << n) {
                let w = inst.noise_weight(z);
                if w == 0.0 {
                    continue;
                }
                let win: f64 = inst
                    .codewords
                    .iter()
                    .zip(&home)
                    .map(|(&a, va)| overlap(va, &inst.measurement_vector(a ^ z)).powi(2) / n as f64)
                    .sum();
                total += w * win;
            }
            Ok(WinProb { value: total, std_error: 0.0 })
        }
        WinMode::MonteCarlo { seed, trials } => {
            if trials == 0 {
                return Err(Error::Domain("trials must be >= 1".into()));
            }
            let mut rng = rng_from_seed(seed);
            let mut wins = 0u64;
            let mut weights = vec![0.0; n];
            for _ in 0..trials {
                let x: u32 = rng.random_range(0..(1u32 << n));
                let mut z = 0u32;
                for i in 0..n {
                    if rng.random::<f64>() < inst.eta {
                        z |= 1 << i;
                    }
                }
                let y = x ^ z;
                let xs = inst.coset(inst.coset_of[x as usize] as usize);
                let ys = inst.coset(inst.coset_of[y as usize] as usize);
                // Alice's outcome is uniform; Bob's is Born-conditioned on it.
                let a = xs[rng.random_range(0..n)];
                let va = inst.measurement_vector(a);
                for (k, &b) in ys.iter().enumerate() {
                    weights[k] = overlap(&va, &inst.measurement_vector(b)).powi(2);
                }
                let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
                let mut pick = n - 1;
                for (k, w) in weights.iter().enumerate() {
                    if u < *w {
                        pick = k;
                        break;
                    }
                    u -= w;
                }
                if a ^ ys[pick] == z {
                    wins += 1;
                }
            }
            let p = wins as f64 / trials as f64;
            Ok(WinProb { value: p, std_error: (p * (1.0 - p) / trials as f64).sqrt() })
        }
    }
}

/// `(1 - 2 eta)^2`.
pub fn kv_quantum_lower_bound(eta: f64) -> f64 {
    (1.0 - 2.0 * eta).powi(2)
}

/// `1/2 - 1/ln n`.
pub fn default_eta(n: f64) -> f64 {
    0.5 - 1.0 / n.ln()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ClassicalCap {
    /// `n^(-eta/(1-eta))`.
    pub cap: f64,
    /// At `eta = 1/2 - 1/ln n`: `n^(-1 + 4/(2 + ln n))` and `e^4/n`.
    pub default_eta_forms: Option<(f64, f64)>,
}

pub fn kv_classical_cap(n: f64, eta: f64) -> Result<ClassicalCap> {
    if n < 2.0 || !n.is_finite() {
        return Err(Error::Domain(format!("n = {n} < 2")));
    }
    if !(0.0..=0.5).contains(&eta) {
        return Err(Error::Domain(format!("eta = {eta} outside [0, 1/2]")));
    }
    let cap = n.powf(-eta / (1.0 - eta));
    let forms = if (eta - default_eta(n)).abs() < 1e-12 {
        let l = n.ln();
        Some((n.powf(-1.0 + 4.0 / (2.0 + l)), 4f64.exp() / n))
    } else {
        None
    };
    Ok(ClassicalCap { cap, default_eta_forms: forms })
}

/// The game as a Bell functional over coset questions and coset-position
/// answers: `beta(a, b | X, Y) = eta^|z| (1 - eta)^(n - |z|) / #cosets` with
/// `z = a ^ b`. The local bound is exact when enumeration is feasible
/// (`l = 2`) and the analytic cap otherwise.
pub fn kv_functional(inst: &KvInstance) -> Result<BellFunctional> {
    let m = inst.num_cosets();
    let n = inst.n;
    let entries = (m * m) as u64 * (n * n) as u64;
    if entries > 1 << 24 {
        return Err(Error::Capacity(format!("KV functional with {entries} coefficients")));
    }
    let scenario = Scenario::uniform(2, m, n)?;
    let mut coeffs = vec![0.0; scenario.len()];
    let cosets: Vec<Vec<u32>> = (0..m).map(|k| inst.coset(k)).collect();
    scenario.for_each(|ins, outs, i| {
        let z = cosets[ins[0]][outs[0]] ^ cosets[ins[1]][outs[1]];
        coeffs[i] = inst.noise_weight(z) / m as f64;
    });
    let name = format!("kv({},{})", inst.ell, inst.eta);
    let strategies = (n as f64).powi(m as i32);
    if strategies <= ENUMERATION_LIMIT as f64 {
        let bound = local_bound_of(&scenario, &coeffs)?;
        BellFunctional::with_bound(&name, scenario, coeffs, FunctionalKind::Game, bound, true)
    } else {
        let cap = kv_classical_cap(n as f64, inst.eta)?.cap;
        BellFunctional::with_bound(&name, scenario, coeffs, FunctionalKind::Game, cap, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codewords_have_half_weight() {
        for n in [4, 8, 16] {
            let h = hadamard_codewords(n);
            assert_eq!(h[0], 0);
            assert!(h[1..].iter().all(|w| w.count_ones() as usize == n / 2));
        }
    }

    #[test]
    fn positions_round_trip() {
        let inst = build_kv_instance(3, 0.2).unwrap();
        for k in [0, 5, 31] {
            for (p, g) in inst.coset(k).into_iter().enumerate() {
                assert_eq!(inst.position(g), p);
            }
        }
    }
}
