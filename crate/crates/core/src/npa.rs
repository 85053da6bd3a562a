//! NPA level 1 (`Q1`) for bipartite correlations.
//!
//! The moment matrix is indexed by the identity and the Collins-Gisin
//! projectors `A_(a|x)`, `B_(b|y)` with the last outcome of every setting
//! dropped. Level 1 data are real, so the matrix is taken real symmetric.

use nlt_sdp::{BlockKind, SdpProblem, Sense, Term};
use serde::Serialize;

use crate::bellopt::Correlation;
use crate::error::{Error, Result};

/// Signaling tolerance for inputs.
pub const NS_TOL: f64 = 1e-8;
/// Cap on the visibility variable; `v*` at the cap means "at least this".
pub const VISIBILITY_CAP: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MomentOp {
    Id,
    A { x: usize, a: usize },
    B { y: usize, b: usize },
}

#[derive(Clone, Debug)]
pub struct MomentIndex {
    pub ops: Vec<MomentOp>,
}

impl MomentIndex {
    pub fn new(p: &Correlation) -> Result<Self> {
        let s = p.scenario();
        if s.parties() != 2 {
            return Err(Error::Dimension("Q1 is implemented for two parties".into()));
        }
        let mut ops = vec![MomentOp::Id];
        for x in 0..s.settings(0) {
            ops.extend((0..s.outcomes(0, x) - 1).map(|a| MomentOp::A { x, a }));
        }
        for y in 0..s.settings(1) {
            ops.extend((0..s.outcomes(1, y) - 1).map(|b| MomentOp::B { y, b }));
        }
        Ok(MomentIndex { ops })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Entries of the moment matrix fixed by `p`: `(i, j, value)` with `i <= j`.
/// Unlisted entries (e.g. `<A_(a|x) A_(a'|x')>` for `x != x'`) are free.
fn fixed_entries(idx: &MomentIndex, p: &Correlation) -> Vec<(usize, usize, f64)> {
    let pa = |a: usize, x: usize| p.party_marginal(0, a, x);
    let pb = |b: usize, y: usize| p.party_marginal(1, b, y);
    let mut out = Vec::new();
    for (i, oi) in idx.ops.iter().enumerate() {
        for (j, oj) in idx.ops.iter().enumerate().skip(i) {
            let v = match (*oi, *oj) {
                (MomentOp::Id, MomentOp::Id) => Some(1.0),
                (MomentOp::Id, MomentOp::A { x, a }) => Some(pa(a, x)),
                (MomentOp::Id, MomentOp::B { y, b }) => Some(pb(b, y)),
                (MomentOp::A { x, a }, MomentOp::A { x: x2, a: a2 }) if x == x2 => {
                    Some(if a == a2 { pa(a, x) } else { 0.0 })
                }
                (MomentOp::B { y, b }, MomentOp::B { y: y2, b: b2 }) if y == y2 => {
                    Some(if b == b2 { pb(b, y) } else { 0.0 })
                }
                (MomentOp::A { x, a }, MomentOp::B { y, b }) => Some(p.get(&[a, b], &[x, y])),
                _ => None,
            };
            if let Some(v) = v {
                out.push((i, j, v));
            }
        }
    }
    out
}

fn check_ns(p: &Correlation) -> Result<()> {
    let dev = p.signaling_deviation();
    if dev > NS_TOL {
        return Err(Error::Signaling(dev));
    }
    Ok(())
}

/// Largest `t` with a level-1 moment matrix `Gamma >= t I` reproducing `p`.
/// `t >= 0` iff `p` is in `Q1`; `t <= 1` always since `Gamma_00 = 1`.
pub fn q1_slack(p: &Correlation) -> Result<f64> {
    check_ns(p)?;
    let idx = MomentIndex::new(p)?;
    slack_of(idx.len(), &fixed_entries(&idx, p))
}

fn slack_of(n: usize, entries: &[(usize, usize, f64)]) -> Result<f64> {
    // Gamma = Z + (1 - s) I with Z >= 0, s >= 0; minimize s.
    let mut prob = SdpProblem::new(Sense::Minimize);
    let z = prob.add_block(BlockKind::Real(n));
    let s = prob.add_block(BlockKind::Real(1));
    for &(i, j, v) in entries {
        if i == j {
            prob.add_constraint(vec![Term::re(z, i, i, 1.0), Term::re(s, 0, 0, -1.0)], v - 1.0);
        } else {
            prob.add_constraint(vec![Term::re(z, i, j, 1.0)], v);
        }
    }
    prob.add_objective([Term::re(s, 0, 0, 1.0)]);
    let sol = prob.solve()?;
    if !sol.is_optimal() {
        return Err(Error::Invalid(format!("Q1 slack SDP returned {:?}", sol.status)));
    }
    Ok(1.0 - sol.primal_objective)
}

/// Feasibility of the level-1 moment matrix, decided by [`q1_slack`] `>= -tol`.
pub fn q1_membership(p: &Correlation, tol: f64) -> Result<bool> {
    Ok(q1_slack(p)? >= -tol)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Visibility {
    pub v: f64,
    /// `v` reached [`VISIBILITY_CAP`]; the true optimum may be larger.
    pub capped: bool,
}

/// Largest `v >= 0` with `v p + (1 - v) p_w` in `Q1`, `p_w` uniform; one SDP
/// with `v` as a variable.
pub fn q1_visibility(p: &Correlation) -> Result<Visibility> {
    check_ns(p)?;
    let idx = MomentIndex::new(p)?;
    let w = Correlation::uniform(p.scenario());
    let fp = fixed_entries(&idx, p);
    let fw = fixed_entries(&idx, &w);
    let n = idx.len();
    let mut prob = SdpProblem::new(Sense::Maximize);
    let g = prob.add_block(BlockKind::Real(n));
    let v = prob.add_block(BlockKind::Real(1));
    let slack = prob.add_block(BlockKind::Real(1));
    for ((i, j, vp), (_, _, vw)) in fp.iter().zip(&fw) {
        // Gamma_ij = v p_ij + (1 - v) w_ij
        prob.add_constraint(vec![Term::re(g, *i, *j, 1.0), Term::re(v, 0, 0, vw - vp)], *vw);
    }
    prob.add_constraint(vec![Term::re(v, 0, 0, 1.0), Term::re(slack, 0, 0, 1.0)], VISIBILITY_CAP);
    prob.add_objective([Term::re(v, 0, 0, 1.0)]);
    let sol = prob.solve()?;
    if !sol.is_optimal() {
        return Err(Error::Invalid(format!("visibility SDP returned {:?}", sol.status)));
    }
    let value = sol.scalar(v);
    Ok(Visibility { v: value, capped: value > VISIBILITY_CAP - 1e-6 })
}

/// Visibility by bisection on the slack of the mixture; cross-check for
/// [`q1_visibility`].
pub fn q1_visibility_bisect(p: &Correlation, tol: f64) -> Result<f64> {
    check_ns(p)?;
    let idx = MomentIndex::new(p)?;
    let fp = fixed_entries(&idx, p);
    let fw = fixed_entries(&idx, &Correlation::uniform(p.scenario()));
    let inside = |v: f64| -> Result<bool> {
        let mix: Vec<_> = fp.iter().zip(&fw).map(|(&(i, j, a), &(_, _, b))| (i, j, v * a + (1.0 - v) * b)).collect();
        Ok(slack_of(idx.len(), &mix)? >= -1e-9)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while inside(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > VISIBILITY_CAP {
            return Ok(VISIBILITY_CAP);
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if inside(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// PR box: `P(a, b | x, y) = 1/2` if `a ^ b = x y`.
pub fn pr_box() -> Correlation {
    let s = crate::bellopt::Scenario::uniform(2, 2, 2).unwrap();
    let mut table = vec![0.0; s.len()];
    s.for_each(|ins, outs, i| {
        if (outs[0] ^ outs[1]) == ins[0] * ins[1] {
            table[i] = 0.5;
        }
    });
    Correlation::new(s, table).unwrap()
}
