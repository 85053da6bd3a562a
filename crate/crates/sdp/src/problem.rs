//! Problem description: blocks, linear terms and equality constraints.
//!
//! A problem is stated over a list of matrix blocks. Each block is either a
//! real symmetric matrix or a complex Hermitian matrix, and every block is
//! constrained to be positive semidefinite. Linear functionals are given as
//! lists of [`Term`]s; a term `(block, row, col, coef)` contributes
//! `Re(conj(coef) * X[row, col])`. With this convention the real and
//! imaginary parts of an off-diagonal entry are addressed by `coef = 1` and
//! `coef = i` respectively, and `tr(A X)` for Hermitian `A` is produced by
//! [`Term::trace_with`].

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Shape of one semidefinite variable block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// Real symmetric `n x n`.
    Real(usize),
    /// Complex Hermitian `n x n`, solved through the real `2n x 2n` embedding.
    Hermitian(usize),
}

impl BlockKind {
    pub fn dim(&self) -> usize {
        match *self {
            BlockKind::Real(n) | BlockKind::Hermitian(n) => n,
        }
    }

    /// Size of the real symmetric block the solver actually works with.
    pub fn real_dim(&self) -> usize {
        match *self {
            BlockKind::Real(n) => n,
            BlockKind::Hermitian(n) => 2 * n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// One entry of a linear functional on the block variables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub coef: Complex64,
}

impl Term {
    pub fn new(block: usize, row: usize, col: usize, coef: Complex64) -> Self {
        Term { block, row, col, coef }
    }

    /// Real coefficient on `Re X[row, col]`.
    pub fn re(block: usize, row: usize, col: usize, coef: f64) -> Self {
        Term::new(block, row, col, Complex64::new(coef, 0.0))
    }

    /// Real coefficient on `Im X[row, col]`.
    pub fn im(block: usize, row: usize, col: usize, coef: f64) -> Self {
        Term::new(block, row, col, Complex64::new(0.0, coef))
    }

    /// Terms representing `Re tr(A X)` for a square matrix `A` acting on `block`.
    pub fn trace_with(block: usize, a: &DMatrix<Complex64>) -> Vec<Term> {
        let mut out = Vec::new();
        for p in 0..a.nrows() {
            for q in 0..a.ncols() {
                // tr(A X) = sum_pq A[q,p] X[p,q]; Re(A_qp X_pq) = Re(conj(conj A_qp) X_pq)
                let v = a[(q, p)];
                if v.norm_sqr() > 0.0 {
                    out.push(Term::new(block, p, q, v.conj()));
                }
            }
        }
        out
    }

    /// Terms representing `tr(A X)` for a real matrix `A` on a real block.
    pub fn trace_with_real(block: usize, a: &DMatrix<f64>) -> Vec<Term> {
        let mut out = Vec::new();
        for p in 0..a.nrows() {
            for q in 0..a.ncols() {
                let v = a[(q, p)];
                if v != 0.0 {
                    out.push(Term::re(block, p, q, v));
                }
            }
        }
        out
    }
}

/// `sum(terms) == rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub terms: Vec<Term>,
    pub rhs: f64,
}

/// Solver tolerances and limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative primal and dual residual tolerance.
    pub feas_tol: f64,
    /// Relative duality gap tolerance.
    pub gap_tol: f64,
    /// Tolerance used when deciding an infeasibility certificate is conclusive.
    pub infeas_tol: f64,
    pub max_iters: usize,
    /// Largest accepted real block dimension.
    pub max_block_dim: usize,
    /// Largest accepted number of scalar constraints.
    pub max_constraints: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-9,
            gap_tol: 1e-9,
            infeas_tol: 1e-8,
            max_iters: 200,
            max_block_dim: 320,
            max_constraints: 10_000,
        }
    }
}

/// A semidefinite program in equality form.
///
/// ```text
///   opt  sum_k <C_k, X_k>
///   s.t. sum_k <A_ik, X_k> = b_i,   X_k >= 0
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdpProblem {
    pub blocks: Vec<BlockKind>,
    pub objective: Vec<Term>,
    pub constraints: Vec<Constraint>,
    pub sense: Sense,
    /// Known upper bound on the sum of block traces over the feasible set,
    /// used to turn approximate infeasibility rays into rigorous ones.
    pub trace_bound: Option<f64>,
    pub options: SolverOptions,
}

impl SdpProblem {
    pub fn new(sense: Sense) -> Self {
        SdpProblem {
            blocks: Vec::new(),
            objective: Vec::new(),
            constraints: Vec::new(),
            sense,
            trace_bound: None,
            options: SolverOptions::default(),
        }
    }

    /// A problem with no objective; the solver only looks for a feasible point.
    pub fn feasibility() -> Self {
        SdpProblem::new(Sense::Minimize)
    }

    pub fn is_feasibility(&self) -> bool {
        self.objective.is_empty()
    }

    pub fn add_block(&mut self, kind: BlockKind) -> usize {
        self.blocks.push(kind);
        self.blocks.len() - 1
    }

    pub fn add_constraint(&mut self, terms: Vec<Term>, rhs: f64) -> usize {
        self.constraints.push(Constraint { terms, rhs });
        self.constraints.len() - 1
    }

    pub fn add_objective(&mut self, terms: impl IntoIterator<Item = Term>) {
        self.objective.extend(terms);
    }

    /// Pins every entry of a Hermitian block's affine image: for each
    /// `(p, q)` with `p <= q`, `sum(terms_pq) == target[p, q]`, split into real
    /// and imaginary parts. `terms_pq` must be real-linear in the block
    /// variables and give the complex value `Z[p, q]` of the image.
    ///
    /// Used for marginal constraints such as `tr_C X = rho_AB`.
    pub fn pin_hermitian<F>(&mut self, target: &DMatrix<Complex64>, mut entry_terms: F)
    where
        F: FnMut(usize, usize) -> Vec<(usize, usize, usize, Complex64)>,
    {
        let n = target.nrows();
        for p in 0..n {
            for q in p..n {
                // entry_terms yields (block, row, col, weight) meaning Z_pq = sum weight * X[row, col]
                let parts = entry_terms(p, q);
                // Re Z_pq = sum Re(w X) = sum Re(conj(conj w) X)
                let re_terms: Vec<Term> = parts
                    .iter()
                    .map(|&(b, r, c, w)| Term::new(b, r, c, w.conj()))
                    .collect();
                self.add_constraint(re_terms, target[(p, q)].re);
                if p != q {
                    // Im(w X) = Re(-i w X) = Re(conj(i conj w) X)
                    let im_terms: Vec<Term> = parts
                        .iter()
                        .map(|&(b, r, c, w)| Term::new(b, r, c, Complex64::i() * w.conj()))
                        .collect();
                    self.add_constraint(im_terms, target[(p, q)].im);
                }
            }
        }
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }
}

/// Symmetric sparse matrix over one real block, both triangles stored.
#[derive(Clone, Debug, Default)]
pub(crate) struct SparseSym {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn dot(&self, x: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(r, c, v)| v * x[(r, c)]).sum()
    }

    pub fn add_to(&self, target: &mut DMatrix<f64>, scale: f64) {
        for &(r, c, v) in &self.entries {
            target[(r, c)] += scale * v;
        }
    }

    pub fn frob_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.2 * e.2).sum()
    }
}

/// A linear functional split per block into real symmetric sparse parts.
#[derive(Clone, Debug, Default)]
pub(crate) struct RealFunctional {
    /// (block index, matrix)
    pub parts: Vec<(usize, SparseSym)>,
}

impl RealFunctional {
    pub fn eval(&self, x: &[DMatrix<f64>]) -> f64 {
        self.parts.iter().map(|(b, s)| s.dot(&x[*b])).sum()
    }

    pub fn frob_sq(&self) -> f64 {
        self.parts.iter().map(|(_, s)| s.frob_sq()).sum()
    }

    pub fn scale(&mut self, f: f64) {
        for (_, s) in &mut self.parts {
            for e in &mut s.entries {
                e.2 *= f;
            }
        }
    }
}

/// Lowers complex terms onto the real symmetric embedding.
///
/// For a Hermitian block `X = R + iI` the embedding is `Y = [[R, -I], [I, R]]`;
/// the solver optimizes over arbitrary symmetric PSD `Y`, and reads
/// `R = (Y11 + Y22)/2`, `I = (Y21 - Y12)/2`.
pub(crate) fn lower_terms(blocks: &[BlockKind], terms: &[Term]) -> RealFunctional {
    use std::collections::BTreeMap;
    let mut acc: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    let mut put = |b: usize, r: usize, c: usize, w: f64| {
        if w == 0.0 {
            return;
        }
        if r == c {
            *acc.entry((b, r, r)).or_insert(0.0) += w;
        } else {
            *acc.entry((b, r, c)).or_insert(0.0) += 0.5 * w;
            *acc.entry((b, c, r)).or_insert(0.0) += 0.5 * w;
        }
    };
    for t in terms {
        match blocks[t.block] {
            BlockKind::Real(_) => put(t.block, t.row, t.col, t.coef.re),
            BlockKind::Hermitian(n) => {
                let (p, q) = (t.row, t.col);
                let (a, b) = (t.coef.re, t.coef.im);
                put(t.block, p, q, 0.5 * a);
                put(t.block, n + p, n + q, 0.5 * a);
                put(t.block, n + p, q, 0.5 * b);
                put(t.block, p, n + q, -0.5 * b);
            }
        }
    }
    let mut parts: Vec<(usize, SparseSym)> = Vec::new();
    for ((b, r, c), v) in acc {
        if v.abs() < 1e-300 {
            continue;
        }
        match parts.last_mut() {
            Some((lb, s)) if *lb == b => s.entries.push((r, c, v)),
            _ => parts.push((b, SparseSym { entries: vec![(r, c, v)] })),
        }
    }
    RealFunctional { parts }
}

/// Reads a Hermitian matrix back out of its real embedding.
pub(crate) fn lift_hermitian(y: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = y.nrows() / 2;
    DMatrix::from_fn(n, n, |p, q| {
        let re = 0.5 * (y[(p, q)] + y[(n + p, n + q)]);
        let im = 0.5 * (y[(n + p, q)] - y[(p, n + q)]);
        Complex64::new(re, im)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowering_matches_complex_trace() {
        // X = [[2, 1+i],[1-i, 3]], A = [[1, i],[-i, 0]] -> tr(AX) = 2 + (i)(1-i) + (-i)(1+i) = 2 + (i+1) + (-i+1) = 4
        let x = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(1.0, 1.0),
                Complex64::new(1.0, -1.0),
                Complex64::new(3.0, 0.0),
            ],
        );
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(0.0, 0.0),
            ],
        );
        let blocks = [BlockKind::Hermitian(2)];
        let f = lower_terms(&blocks, &Term::trace_with(0, &a));
        let mut y = DMatrix::zeros(4, 4);
        for p in 0..2 {
            for q in 0..2 {
                y[(p, q)] = x[(p, q)].re;
                y[(p + 2, q + 2)] = x[(p, q)].re;
                y[(p + 2, q)] = x[(p, q)].im;
                y[(p, q + 2)] = -x[(p, q)].im;
            }
        }
        assert!((f.eval(&[y.clone()]) - 4.0).abs() < 1e-12);
        let back = lift_hermitian(&y);
        assert!((back - x).norm() < 1e-12);
    }

    #[test]
    fn imaginary_diagonal_terms_vanish() {
        let blocks = [BlockKind::Hermitian(3)];
        let f = lower_terms(&blocks, &[Term::im(0, 1, 1, 1.0)]);
        assert!(f.parts.is_empty());
    }
}
