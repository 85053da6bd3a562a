//! Named states.
//!
//! Conventions: `|Psi±> = (|01> ± |10>)/sqrt2`, `|Phi_d> = sum_i |ii>/sqrt d`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{c, CMat, CVec, DensityOp, Ket, Layout, State, C64};

fn r(x: f64) -> C64 {
    c(x)
}

/// Rejects values outside `[lo, hi]`; returns whether `x` sits on an endpoint.
fn closed(name: &str, x: f64, lo: f64, hi: f64) -> Result<bool> {
    if !x.is_finite() || x < lo || x > hi {
        return Err(Error::Domain(format!("{name} = {x} outside [{lo}, {hi}]")));
    }
    Ok(x == lo || x == hi)
}

pub fn psi_plus() -> Ket {
    Ket::from_terms(Layout::qubits(2), &[(&[0, 1], r(1.0)), (&[1, 0], r(1.0))]).unwrap()
}

pub fn psi_minus() -> Ket {
    Ket::from_terms(Layout::qubits(2), &[(&[0, 1], r(1.0)), (&[1, 0], r(-1.0))]).unwrap()
}

pub fn phi(d: usize) -> Result<Ket> {
    if d < 2 {
        return Err(Error::Domain(format!("d = {d} < 2")));
    }
    let mut v = CVec::zeros(d * d);
    for i in 0..d {
        v[i * d + i] = r(1.0);
    }
    Ket::normalized(v, Layout::uniform(d, 2))
}

/// `[cos(pi/8)(|00> - |11>) + sin(pi/8)(|01> + |10>)]/sqrt2`; sigma_z/sigma_x
/// on both sides give the maximal CHSH value.
pub fn rotated_bell() -> Ket {
    let (cs, sn) = (FRAC_PI_8.cos(), FRAC_PI_8.sin());
    Ket::from_terms(
        Layout::qubits(2),
        &[(&[0, 0], r(cs)), (&[1, 1], r(-cs)), (&[0, 1], r(sn)), (&[1, 0], r(sn))],
    )
    .unwrap()
}

pub fn w_state(n: usize) -> Result<Ket> {
    if n < 2 {
        return Err(Error::Domain(format!("W state needs n >= 2, got {n}")));
    }
    let mut v = CVec::zeros(1 << n);
    for k in 0..n {
        v[1 << k] = r(1.0);
    }
    Ket::normalized(v, Layout::qubits(n))
}

/// `tau_n = (2/n)|Psi+><Psi+| + ((n-2)/n)|00><00|`.
pub fn w_marginal(n: usize) -> Result<DensityOp> {
    if n < 2 {
        return Err(Error::Domain(format!("W state needs n >= 2, got {n}")));
    }
    let n = n as f64;
    let mut m = psi_plus().projector().into_matrix() * r(2.0 / n);
    m[(0, 0)] += r((n - 2.0) / n);
    DensityOp::new(m, Layout::qubits(2))
}

/// `cos a (|021> + |120>)/sqrt2 + sin a (|000> + |111>)/sqrt2` on qubit-qutrit-qubit.
pub fn sg05_state(alpha: f64) -> Result<Ket> {
    closed("alpha", alpha, 0.0, FRAC_PI_2)?;
    let (ca, sa) = (alpha.cos(), alpha.sin());
    Ket::from_terms(
        Layout::new(vec![2, 3, 2])?,
        &[(&[0, 2, 1], r(ca)), (&[1, 2, 0], r(ca)), (&[0, 0, 0], r(sa)), (&[1, 1, 1], r(sa))],
    )
}

/// `rho_AB(a) = (|Psi1><Psi1| + |Psi2><Psi2|)/2` with
/// `Psi1 = sin a|00> + cos a|12>`, `Psi2 = sin a|11> + cos a|02>`; equals `rho_CB`.
pub fn sg05_ab_marginal(alpha: f64) -> Result<DensityOp> {
    closed("alpha", alpha, 0.0, FRAC_PI_2)?;
    let l = Layout::new(vec![2, 3])?;
    let (ca, sa) = (alpha.cos(), alpha.sin());
    let p1 = Ket::from_terms(l.clone(), &[(&[0, 0], r(sa)), (&[1, 2], r(ca))])?.projector();
    let p2 = Ket::from_terms(l.clone(), &[(&[1, 1], r(sa)), (&[0, 2], r(ca))])?.projector();
    DensityOp::new((p1.into_matrix() + p2.into_matrix()) * r(0.5), l)
}

/// `cos^2 a |Psi+><Psi+| + (sin^2 a / 2)(|00><00| + |11><11|)`.
pub fn sg05_ac_marginal(alpha: f64) -> Result<DensityOp> {
    closed("alpha", alpha, 0.0, FRAC_PI_2)?;
    let (c2, s2) = (alpha.cos().powi(2), alpha.sin().powi(2));
    let mut m = psi_plus().projector().into_matrix() * r(c2);
    m[(0, 0)] += r(s2 / 2.0);
    m[(3, 3)] += r(s2 / 2.0);
    DensityOp::new(m, Layout::qubits(2))
}

fn cg04_s(mu: f64) -> f64 {
    ((1.0 - mu * mu) / 2.0).max(0.0).sqrt()
}

/// `mu|000> + sqrt((1-mu^2)/2)(|110> + |011>)`.
pub fn cg04_state(mu: f64) -> Result<Ket> {
    closed("mu", mu, 0.0, 1.0)?;
    let s = cg04_s(mu);
    Ket::from_terms(
        Layout::qubits(3),
        &[(&[0, 0, 0], r(mu)), (&[1, 1, 0], r(s)), (&[0, 1, 1], r(s))],
    )
}

/// `(1 - mu^2)|Psi+><Psi+| + mu^2 |00><00|`.
pub fn cg04_ac_marginal(mu: f64) -> Result<DensityOp> {
    closed("mu", mu, 0.0, 1.0)?;
    let mut m = psi_plus().projector().into_matrix() * r(1.0 - mu * mu);
    m[(0, 0)] += r(mu * mu);
    DensityOp::new(m, Layout::qubits(2))
}

/// `|v><v| + s^2|01><01|` with `v = mu|00> + s|11>`, `s^2 = (1 - mu^2)/2`.
pub fn cg04_ab_marginal(mu: f64) -> Result<DensityOp> {
    closed("mu", mu, 0.0, 1.0)?;
    let s = cg04_s(mu);
    let mut m = CMat::zeros(4, 4);
    m[(0, 0)] = r(mu * mu);
    m[(0, 3)] = r(mu * s);
    m[(3, 0)] = r(mu * s);
    m[(3, 3)] = r(s * s);
    m[(1, 1)] = r(s * s);
    DensityOp::new(m, Layout::qubits(2))
}

/// `rho_BC` of the cg04 state: `|v><v| + s^2|10><10|`.
pub fn cg04_bc_marginal(mu: f64) -> Result<DensityOp> {
    cg04_ab_marginal(mu)?.permute(&[1, 0])
}

/// Amplitudes `(a, b)` with `b^2 = sin^2 t / (2 sin^2 t + 1)`, `a^2 + 3b^2 = 1`.
pub fn bv_amplitudes(theta: f64) -> Result<(f64, f64)> {
    closed("theta", theta, 0.0, FRAC_PI_2)?;
    let s2 = theta.sin().powi(2);
    let b2 = s2 / (2.0 * s2 + 1.0);
    let a2 = theta.cos().powi(2) / (2.0 * s2 + 1.0);
    Ok((a2.sqrt(), b2.sqrt()))
}

/// `a|000> + b(|012> + |201> + |120>)` on three qutrits.
pub fn bv_state(theta: f64) -> Result<Ket> {
    let (a, b) = bv_amplitudes(theta)?;
    Ket::from_terms(
        Layout::uniform(3, 3),
        &[(&[0, 0, 0], r(a)), (&[0, 1, 2], r(b)), (&[2, 0, 1], r(b)), (&[1, 2, 0], r(b))],
    )
}

/// `(1 - 2b^2)|psi_t><psi_t| + b^2(|01><01| + |20><20|)`,
/// `psi_t = cos t|00> + sin t|12>`; shared by AB, BC and CA.
pub fn bv_marginal(theta: f64) -> Result<DensityOp> {
    let (_, b) = bv_amplitudes(theta)?;
    let l = Layout::uniform(3, 2);
    let psi = Ket::from_terms(l.clone(), &[(&[0, 0], r(theta.cos())), (&[1, 2], r(theta.sin()))])?;
    let mut m = psi.projector().into_matrix() * r(1.0 - 2.0 * b * b);
    m[(1, 1)] += r(b * b);
    m[(6, 6)] += r(b * b);
    DensityOp::new(m, l)
}

/// `|v><v| + b^2|201><201|` with `v = a|000> + b(|012> + |120>)`.
pub fn bv_alternative(theta: f64) -> Result<DensityOp> {
    let (a, b) = bv_amplitudes(theta)?;
    let l = Layout::uniform(3, 3);
    let mut v = CVec::zeros(27);
    v[0] = r(a);
    v[5] = r(b);
    v[15] = r(b);
    let mut m = &v * v.adjoint();
    m[(19, 19)] += r(b * b);
    DensityOp::new(m, l)
}

/// `F|Phi_d><Phi_d| + (1 - F)(I - |Phi_d><Phi_d|)/(d^2 - 1)`.
pub fn isotropic(d: usize, f: f64) -> Result<DensityOp> {
    closed("F", f, 0.0, 1.0)?;
    let phi = phi(d)?.projector().into_matrix();
    let n = d * d;
    let rest = (CMat::identity(n, n) - &phi) * r((1.0 - f) / (n as f64 - 1.0));
    DensityOp::new(phi * r(f) + rest, Layout::uniform(d, 2))
}

/// `p|Phi_d><Phi_d| + (1 - p) I/d^2`, valid for `p` in `[-1/(d^2-1), 1]`.
pub fn isotropic_p(d: usize, p: f64) -> Result<DensityOp> {
    let n = (d * d) as f64;
    closed("p", p, -1.0 / (n - 1.0), 1.0)?;
    isotropic(d, p + (1.0 - p) / n)
}

pub fn isotropic_f_from_p(d: usize, p: f64) -> f64 {
    let n = (d * d) as f64;
    p + (1.0 - p) / n
}

pub fn isotropic_p_from_f(d: usize, f: f64) -> f64 {
    let n = (d * d) as f64;
    (f * n - 1.0) / (n - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pair {
    AB,
    BC,
    AC,
}

impl Pair {
    pub const ALL: [Pair; 3] = [Pair::AB, Pair::BC, Pair::AC];

    /// Party indices kept by this pair.
    pub fn parties(self) -> [usize; 2] {
        match self {
            Pair::AB => [0, 1],
            Pair::BC => [1, 2],
            Pair::AC => [0, 2],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pair::AB => "AB",
            Pair::BC => "BC",
            Pair::AC => "AC",
        }
    }
}

impl std::str::FromStr for Pair {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AB" | "BA" => Ok(Pair::AB),
            "BC" | "CB" => Ok(Pair::BC),
            "AC" | "CA" => Ok(Pair::AC),
            _ => Err(Error::Domain(format!("unknown pair {s}"))),
        }
    }
}

// Qubit order of the raw triangle product: A1 B2 | B1 C2 | A2 C1.
// Reordered to A1 A2 B1 B2 C1 C2, i.e. new position i holds raw PERM[i].
const TRIANGLE_PERM: [usize; 6] = [0, 4, 2, 1, 5, 3];

/// `|psi_A1B2> (x) |psi_B1C2> (x) |psi_A2C1>`, parties grouped as 4-dim A, B, C.
pub fn triangle_state() -> DensityOp {
    let psi = rotated_bell();
    let raw = psi.kron(&psi).kron(&psi);
    raw.permute(&TRIANGLE_PERM).unwrap().regroup(&[2, 2, 2]).unwrap().projector()
}

/// `|psi_A1B2><psi_A1B2| (x) I_A2/2 (x) I_B1/2`, and its BC and AC analogues, in
/// party order (first party's two qubits, then the second's).
pub fn triangle_marginal(pair: Pair) -> DensityOp {
    let psi = rotated_bell().projector();
    let mixed = DensityOp::maximally_mixed(Layout::qubits(1));
    // raw order: psi on (0,1), then mixed on 2 and 3
    let raw = psi.kron(&mixed).kron(&mixed);
    let perm: [usize; 4] = match pair {
        // (i1, i2, j1, j2) with psi on (i1, j2)
        Pair::AB | Pair::BC => [0, 2, 3, 1],
        // (A1, A2, C1, C2) with psi on (A2, C1)
        Pair::AC => [2, 0, 1, 3],
    };
    raw.permute(&perm).unwrap().regroup(&[2, 2]).unwrap()
}

/// `|psi_A1B2><psi_A1B2| (x) |psi_B1C2><psi_B1C2| (x) I_A2/2 (x) I_C1/2`.
pub fn triangle_alternative() -> DensityOp {
    let psi = rotated_bell().projector();
    let mixed = DensityOp::maximally_mixed(Layout::qubits(1));
    let raw = psi.kron(&psi).kron(&mixed).kron(&mixed);
    // raw qubits: A1 B2 B1 C2 A2 C1
    raw.permute(&[0, 4, 2, 1, 5, 3]).unwrap().regroup(&[2, 2, 2]).unwrap()
}

/// Serializable description of a named state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum StateSpec {
    W { n: usize },
    WMarginal { n: usize },
    Sg05 { alpha: f64 },
    Sg05Ab { alpha: f64 },
    Sg05Ac { alpha: f64 },
    Cg04 { mu: f64 },
    Cg04Ac { mu: f64 },
    Cg04Ab { mu: f64 },
    Bv { theta: f64 },
    BvMarginal { theta: f64 },
    BvAlternative { theta: f64 },
    Isotropic { d: usize, f: f64 },
    IsotropicP { d: usize, p: f64 },
    Phi { d: usize },
    PsiPlus,
    PsiMinus,
    RotatedBell,
    Triangle,
    TriangleMarginal { pair: Pair },
    TriangleAlternative,
}

impl StateSpec {
    pub const FAMILIES: [&'static str; 20] = [
        "w",
        "w-marginal",
        "sg05",
        "sg05-ab",
        "sg05-ac",
        "cg04",
        "cg04-ac",
        "cg04-ab",
        "bv",
        "bv-marginal",
        "bv-alternative",
        "isotropic",
        "isotropic-p",
        "phi",
        "psi-plus",
        "psi-minus",
        "rotated-bell",
        "triangle",
        "triangle-marginal",
        "triangle-alternative",
    ];

    /// Builds a spec from a family name and `key=value` parameters.
    pub fn parse(family: &str, params: &[(String, String)]) -> Result<StateSpec> {
        let get = |key: &str| -> Result<&str> {
            params
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Domain(format!("family {family} needs parameter {key}")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?.parse::<f64>().map_err(|e| Error::Domain(format!("{key}: {e}")))
        };
        let int = |key: &str| -> Result<usize> {
            get(key)?.parse::<usize>().map_err(|e| Error::Domain(format!("{key}: {e}")))
        };
        Ok(match family {
            "w" => StateSpec::W { n: int("n")? },
            "w-marginal" => StateSpec::WMarginal { n: int("n")? },
            "sg05" => StateSpec::Sg05 { alpha: num("alpha")? },
            "sg05-ab" => StateSpec::Sg05Ab { alpha: num("alpha")? },
            "sg05-ac" => StateSpec::Sg05Ac { alpha: num("alpha")? },
            "cg04" => StateSpec::Cg04 { mu: num("mu")? },
            "cg04-ac" => StateSpec::Cg04Ac { mu: num("mu")? },
            "cg04-ab" => StateSpec::Cg04Ab { mu: num("mu")? },
            "bv" => StateSpec::Bv { theta: num("theta")? },
            "bv-marginal" => StateSpec::BvMarginal { theta: num("theta")? },
            "bv-alternative" => StateSpec::BvAlternative { theta: num("theta")? },
            "isotropic" => StateSpec::Isotropic { d: int("d")?, f: num("F").or_else(|_| num("f"))? },
            "isotropic-p" => StateSpec::IsotropicP { d: int("d")?, p: num("p")? },
            "phi" => StateSpec::Phi { d: int("d")? },
            "psi-plus" => StateSpec::PsiPlus,
            "psi-minus" => StateSpec::PsiMinus,
            "rotated-bell" => StateSpec::RotatedBell,
            "triangle" => StateSpec::Triangle,
            "triangle-marginal" => StateSpec::TriangleMarginal { pair: get("pair")?.parse()? },
            "triangle-alternative" => StateSpec::TriangleAlternative,
            other => return Err(Error::Domain(format!("unknown state family {other}"))),
        })
    }

    pub fn build(&self) -> Result<State> {
        Ok(match *self {
            StateSpec::W { n } => State::Ket(w_state(n)?),
            StateSpec::WMarginal { n } => State::Density(w_marginal(n)?),
            StateSpec::Sg05 { alpha } => State::Ket(sg05_state(alpha)?),
            StateSpec::Sg05Ab { alpha } => State::Density(sg05_ab_marginal(alpha)?),
            StateSpec::Sg05Ac { alpha } => State::Density(sg05_ac_marginal(alpha)?),
            StateSpec::Cg04 { mu } => State::Ket(cg04_state(mu)?),
            StateSpec::Cg04Ac { mu } => State::Density(cg04_ac_marginal(mu)?),
            StateSpec::Cg04Ab { mu } => State::Density(cg04_ab_marginal(mu)?),
            StateSpec::Bv { theta } => State::Ket(bv_state(theta)?),
            StateSpec::BvMarginal { theta } => State::Density(bv_marginal(theta)?),
            StateSpec::BvAlternative { theta } => State::Density(bv_alternative(theta)?),
            StateSpec::Isotropic { d, f } => State::Density(isotropic(d, f)?),
            StateSpec::IsotropicP { d, p } => State::Density(isotropic_p(d, p)?),
            StateSpec::Phi { d } => State::Ket(phi(d)?),
            StateSpec::PsiPlus => State::Ket(psi_plus()),
            StateSpec::PsiMinus => State::Ket(psi_minus()),
            StateSpec::RotatedBell => State::Ket(rotated_bell()),
            StateSpec::Triangle => State::Density(triangle_state()),
            StateSpec::TriangleMarginal { pair } => State::Density(triangle_marginal(pair)),
            StateSpec::TriangleAlternative => State::Density(triangle_alternative()),
        })
    }

    /// True when a parameter sits on the boundary of its domain, where the
    /// family degenerates (e.g. a product or unentangled state).
    pub fn is_degenerate(&self) -> Result<bool> {
        match *self {
            StateSpec::Sg05 { alpha } | StateSpec::Sg05Ab { alpha } | StateSpec::Sg05Ac { alpha } => {
                closed("alpha", alpha, 0.0, FRAC_PI_2)
            }
            StateSpec::Cg04 { mu } | StateSpec::Cg04Ac { mu } | StateSpec::Cg04Ab { mu } => {
                closed("mu", mu, 0.0, 1.0)
            }
            StateSpec::Bv { theta }
            | StateSpec::BvMarginal { theta }
            | StateSpec::BvAlternative { theta } => closed("theta", theta, 0.0, FRAC_PI_2),
            _ => Ok(false),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_plus_amplitudes() {
        let k = psi_plus();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((k.amplitudes()[1].re - h).abs() < 1e-15);
        assert!((k.amplitudes()[2].re - h).abs() < 1e-15);
    }

    #[test]
    fn endpoints_accepted_outside_rejected() {
        assert!(StateSpec::Cg04 { mu: 1.0 }.is_degenerate().unwrap());
        assert!(!StateSpec::Cg04 { mu: 0.5 }.is_degenerate().unwrap());
        assert!(sg05_state(-0.1).is_err());
        assert!(bv_state(2.0).is_err());
    }
}
