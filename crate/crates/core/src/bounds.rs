//! Closed-form certificates: fully entangled fraction, LV lower bounds,
//! copy thresholds, FEF steering criterion.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{self, c, derive_seed, rng_from_seed, CMat, CVec, DensityOp, C64};

/// Restarts for the general-`d` FEF search.
pub const FEF_RESTARTS: usize = 50;
const FEF_MAX_ITERS: usize = 2000;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Fef {
    pub value: f64,
    /// False when `value` is only a lower bound from local optimization.
    pub exact: bool,
}

fn square_dim(rho: &DensityOp) -> Result<usize> {
    match rho.layout().dims() {
        [a, b] if a == b => Ok(*a),
        dims => Err(Error::Dimension(format!("need a d x d layout, got {dims:?}"))),
    }
}

/// Magic basis: `Phi+`, `i Phi-`, `i Psi+`, `Psi-`. Maximally entangled
/// two-qubit states are exactly the real combinations, up to phase.
fn magic_basis() -> CMat {
    let h = FRAC_1_SQRT_2;
    let i = C64::new(0.0, h);
    let z = C64::new(0.0, 0.0);
    let r = c(h);
    // columns e1..e4 over |00>, |01>, |10>, |11>
    CMat::from_row_slice(4, 4, &[r, i, z, z, z, z, i, r, z, z, i, -r, r, -i, z, z])
}

/// Fully entangled fraction `max <Phi'|rho|Phi'>` over maximally entangled
/// `Phi'`. Exact for two qubits; for `d > 2` a seeded multi-start lower bound.
pub fn fef(rho: &DensityOp) -> Result<Fef> {
    let d = square_dim(rho)?;
    if d == 2 {
        let b = magic_basis();
        let m = b.adjoint() * rho.matrix() * &b;
        let re = DMatrix::from_fn(4, 4, |i, j| m[(i, j)].re);
        let value = re.symmetric_eigenvalues().max();
        return Ok(Fef { value, exact: true });
    }
    Ok(Fef { value: fef_search(rho, FEF_RESTARTS, 0)?, exact: false })
}

/// Multi-start maximization of `<Phi_W|rho|Phi_W>`, `Phi_W = vec(W)/sqrt d`
/// over unitaries `W`. Each step replaces `W` by the unitary polar factor of
/// `unvec(rho vec W)`, which never decreases the (convex) objective.
pub fn fef_search(rho: &DensityOp, restarts: usize, seed: u64) -> Result<f64> {
    let d = square_dim(rho)?;
    let m = rho.matrix();
    let value = |w: &CVec| -> f64 { w.dotc(&(m * w)).re / d as f64 };
    let mut best = f64::NEG_INFINITY;
    for r in 0..restarts.max(1) {
        let mut rng = rng_from_seed(derive_seed(seed, r as u64));
        let u = if r == 0 { CMat::identity(d, d) } else { qcore::haar_unitary(d, &mut rng) };
        let mut w = CVec::from_fn(d * d, |k, _| u[(k / d, k % d)]);
        let mut f = value(&w);
        for _ in 0..FEF_MAX_ITERS {
            let g = m * &w;
            let gm = CMat::from_fn(d, d, |i, j| g[i * d + j]);
            let svd = gm.svd(true, true);
            let p = svd.u.unwrap() * svd.v_t.unwrap();
            let next = CVec::from_fn(d * d, |k, _| p[(k / d, k % d)]);
            let fn_ = value(&next);
            w = next;
            let done = fn_ - f < 1e-14;
            f = fn_.max(f);
            if done {
                break;
            }
        }
        best = best.max(f);
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LvVariant {
    /// `F^k 4 n^(1 - 4/(2 + ln n)) / (ln n)^2`, `n = d^k`.
    Tight,
    /// `(4/e^4) (F d)^k / (k ln d)^2`.
    Loose,
}

impl std::str::FromStr for LvVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tight" => Ok(LvVariant::Tight),
            "loose" => Ok(LvVariant::Loose),
            _ => Err(Error::Domain(format!("unknown variant {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LvParams {
    pub f: f64,
    pub d: u32,
    pub k: u64,
    pub variant: LvVariant,
}

fn check_lv(p: &LvParams) -> Result<()> {
    if !(0.0..=1.0).contains(&p.f) || p.d < 2 || p.k < 1 {
        return Err(Error::Domain(format!("invalid LV parameters {p:?}")));
    }
    Ok(())
}

/// `ln` of the bound; requires `k ln d >= 2` (the noise rate behind the
/// bound, `1/2 - 1/ln n`, is negative below that).
fn log_lv(f: f64, d: f64, k: f64, variant: LvVariant) -> f64 {
    let l = k * d.ln();
    match variant {
        LvVariant::Tight => k * f.ln() + 4f64.ln() + l * (1.0 - 4.0 / (2.0 + l)) - 2.0 * l.ln(),
        LvVariant::Loose => 4f64.ln() - 4.0 + k * (f * d).ln() - 2.0 * l.ln(),
    }
}

/// Lower bound on the nonlocality fraction of `k` copies of the isotropic
/// state with singlet fraction `F`. Values above 1 certify a Bell violation.
pub fn lv_lower_bound(p: &LvParams) -> Result<f64> {
    check_lv(p)?;
    let l = p.k as f64 * (p.d as f64).ln();
    if l < 2.0 {
        return Err(Error::Domain(format!("bound needs k ln d >= 2, got {l:.4}")));
    }
    if p.f == 0.0 {
        return Ok(0.0);
    }
    Ok(log_lv(p.f, p.d as f64, p.k as f64, p.variant).exp())
}

const LINEAR_SCAN: u64 = 10_000_000;

/// Smallest `k` with `lv_lower_bound > 1`; `None` when `F d <= 1`.
///
/// `ln bound` is eventually increasing: for `k >= k_c` (`2/a` loose, `6/a`
/// tight, `a = ln(F d)`) its derivative is nonnegative. Below `k_c` the
/// scan is linear; above it, exponential search plus bisection.
pub fn min_k_for_violation(f: f64, d: u32, variant: LvVariant) -> Result<Option<u64>> {
    if !(f > 0.0 && f <= 1.0) || d < 2 {
        return Err(Error::Domain(format!("F = {f}, d = {d}")));
    }
    let a = (f * d as f64).ln();
    if a <= 0.0 {
        return Ok(None);
    }
    let df = d as f64;
    let exceeds = |k: u64| log_lv(f, df, k as f64, variant) > 0.0;
    let k0 = (2.0 / df.ln()).ceil().max(1.0) as u64;
    let kc = match variant {
        LvVariant::Loose => 2.0 / a,
        LvVariant::Tight => 6.0 / a,
    };
    let kc = kc.ceil().max(k0 as f64) as u64;
    for k in k0..=kc.min(LINEAR_SCAN) {
        if exceeds(k) {
            return Ok(Some(k));
        }
    }
    // Decreasing on [LINEAR_SCAN, kc] if kc is larger; increasing after kc.
    let mut lo = kc;
    let mut hi = kc.max(1);
    while !exceeds(hi) {
        lo = hi;
        hi = hi.checked_mul(2).ok_or_else(|| Error::Capacity("copy threshold overflows u64".into()))?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if exceeds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KvLvBound {
    /// `4 n^(1 - 4/(2 + ln n)) / (ln n)^2`.
    pub first: f64,
    /// `4 n / ((ln n)^2 e^4)`.
    pub second: f64,
    /// `ln n >= 2`, i.e. the underlying noise rate is nonnegative.
    pub valid: bool,
}

/// LV lower bounds for the `n`-dimensional maximally entangled state.
pub fn kv_maxent_lv_bound(n: u64) -> Result<KvLvBound> {
    if n < 2 {
        return Err(Error::Domain(format!("n = {n} < 2")));
    }
    let nf = n as f64;
    let l = nf.ln();
    Ok(KvLvBound {
        first: 4.0 * nf.powf(1.0 - 4.0 / (2.0 + l)) / (l * l),
        second: 4.0 * nf / (l * l * 4f64.exp()),
        valid: l >= 2.0,
    })
}

/// Smallest valid `n` whose bound exceeds 1 (`Tight` = first, `Loose` = second form).
pub fn min_n_exceeding_one(variant: LvVariant) -> u64 {
    let mut n = 2;
    loop {
        let b = kv_maxent_lv_bound(n).unwrap();
        let v = match variant {
            LvVariant::Tight => b.first,
            LvVariant::Loose => b.second,
        };
        if b.valid && v >= 1.0 {
            return n;
        }
        n += 1;
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `H_d` as a reduced fraction, for `d <= 64`.
pub fn harmonic_exact(d: u32) -> Option<(u128, u128)> {
    if d == 0 || d > 64 {
        return None;
    }
    let (mut num, mut den) = (0u128, 1u128);
    for k in 1..=d as u128 {
        // num/den + 1/k
        let g = gcd(den, k);
        let l = den / g * k;
        num = num * (l / den) + l / k;
        den = l;
        let g = gcd(num, den);
        (num, den) = (num / g, den / g);
    }
    Some((num, den))
}

/// `(d+1)/d^2 H_d - 1/d` as a reduced fraction, for `d <= 64`.
pub fn steering_threshold_exact(d: u32) -> Option<(u128, u128)> {
    let (hn, hd) = harmonic_exact(d)?;
    let d = d as u128;
    let num = (d + 1) * hn - d * hd;
    let den = d * d * hd;
    let g = gcd(num, den);
    Some((num / g, den / g))
}

/// FEF above which a `d x d` state is steerable.
pub fn steering_threshold(d: u32) -> Result<f64> {
    if d < 2 {
        return Err(Error::Domain(format!("d = {d} < 2")));
    }
    if let Some((n, m)) = steering_threshold_exact(d) {
        return Ok(n as f64 / m as f64);
    }
    let h: f64 = (1..=d).map(|k| 1.0 / k as f64).sum();
    let df = d as f64;
    Ok((df + 1.0) / (df * df) * h - 1.0 / df)
}

/// Sufficient steerability test `fef(rho) > F_steer(d)`.
pub fn is_steerable_by_fef(rho: &DensityOp) -> Result<bool> {
    let d = square_dim(rho)?;
    Ok(fef(rho)?.value > steering_threshold(d as u32)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magic_basis_is_unitary() {
        let b = magic_basis();
        assert!(qcore::max_abs(&(b.adjoint() * &b - CMat::identity(4, 4))) < 1e-15);
    }

    #[test]
    fn harmonic_small() {
        assert_eq!(harmonic_exact(3), Some((11, 6)));
        assert_eq!(harmonic_exact(4), Some((25, 12)));
        assert!(harmonic_exact(64).is_some());
    }
}
