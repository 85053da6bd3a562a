//! Homogeneous self-dual interior-point method with Nesterov-Todd scaling.
//!
//! The problem is lowered to real symmetric blocks, rows are normalized and
//! linearly dependent rows are removed (an inconsistent dependent row is an
//! immediate infeasibility certificate). The embedding
//!
//! ```text
//!   A(X) - b tau = 0,   A*(y) + S - C tau = 0,   b'y - <C,X> - kappa = 0
//! ```
//!
//! is followed with a Mehrotra predictor-corrector. `tau -> 0` with
//! `kappa > 0` yields a Farkas ray.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::problem::{lift_hermitian, lower_terms, BlockKind, RealFunctional, SdpProblem, Sense};
use crate::{BlockValue, Certificate, SdpError, SdpSolution, Status};

/// Relative threshold below which a row is treated as a combination of earlier rows.
const DEPENDENCY_TOL: f64 = 1e-10;
/// Contract thresholds accepted when the iteration stalls before the tight targets.
const STALL_FEAS: f64 = 1e-7;
const STALL_GAP: f64 = 1e-6;
/// A certificate must beat the best possible feasible value by this much.
const CERT_MARGIN: f64 = 1e-7;
const STEP_FRACTION: f64 = 0.98;
const RECENTER_BELOW: f64 = 1e-3;

struct Lowered {
    dims: Vec<usize>,
    rows: Vec<RealFunctional>,
    b: Vec<f64>,
    c: Vec<DMatrix<f64>>,
    /// original constraint index of each kept row
    origin: Vec<usize>,
    /// multiplier applied to each kept row
    scale: Vec<f64>,
    /// kept rows touching each block: (row, index into row.parts)
    by_block: Vec<Vec<(usize, usize)>>,
}

/// Raw lowered data before row reduction.
struct RawRows {
    rows: Vec<RealFunctional>,
    b: Vec<f64>,
}

pub fn solve(problem: &SdpProblem) -> Result<SdpSolution, SdpError> {
    validate(problem)?;
    let dims: Vec<usize> = problem.blocks.iter().map(BlockKind::real_dim).collect();
    let raw = RawRows {
        rows: problem
            .constraints
            .iter()
            .map(|c| lower_terms(&problem.blocks, &c.terms))
            .collect(),
        b: problem.constraints.iter().map(|c| c.rhs).collect(),
    };
    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let obj = lower_terms(&problem.blocks, &problem.objective);
    let mut c: Vec<DMatrix<f64>> = dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    for (blk, s) in &obj.parts {
        s.add_to(&mut c[*blk], sign);
    }

    let lowered = match reduce_rows(&dims, raw, c) {
        Ok(l) => l,
        Err(y) => return Ok(inconsistent_rows(problem, &dims, y)),
    };
    let mut ipm = Ipm::new(problem, lowered);
    ipm.run()
}

fn validate(p: &SdpProblem) -> Result<(), SdpError> {
    if p.blocks.is_empty() {
        return Err(SdpError::Invalid("problem has no variable blocks".into()));
    }
    for (k, b) in p.blocks.iter().enumerate() {
        if b.dim() == 0 {
            return Err(SdpError::Invalid(format!("block {k} has dimension 0")));
        }
        if b.real_dim() > p.options.max_block_dim {
            return Err(SdpError::Capacity(format!(
                "block {k} has real dimension {} > {}",
                b.real_dim(),
                p.options.max_block_dim
            )));
        }
    }
    if p.constraints.len() > p.options.max_constraints {
        return Err(SdpError::Capacity(format!(
            "{} constraints > {}",
            p.constraints.len(),
            p.options.max_constraints
        )));
    }
    let check = |t: &crate::Term| -> Result<(), SdpError> {
        let n = p
            .blocks
            .get(t.block)
            .ok_or_else(|| SdpError::Invalid(format!("term refers to missing block {}", t.block)))?
            .dim();
        if t.row >= n || t.col >= n {
            return Err(SdpError::Invalid(format!(
                "term index ({}, {}) outside block {} of size {n}",
                t.row, t.col, t.block
            )));
        }
        if !t.coef.re.is_finite() || !t.coef.im.is_finite() {
            return Err(SdpError::Invalid("non-finite coefficient".into()));
        }
        Ok(())
    };
    for t in p.objective.iter().chain(p.constraints.iter().flat_map(|c| c.terms.iter())) {
        check(t)?;
    }
    Ok(())
}

/// Normalizes rows and drops dependent ones. `Err(y)` carries a combination of
/// original rows with `A*(y) = 0` and `b'y > 0`.
fn reduce_rows(dims: &[usize], raw: RawRows, c: Vec<DMatrix<f64>>) -> Result<Lowered, Vec<f64>> {
    let m = raw.rows.len();
    let mut rows = raw.rows;
    let mut b = raw.b;
    let mut scale = vec![1.0; m];
    let mut live = Vec::with_capacity(m);
    for i in 0..m {
        let nrm = rows[i].frob_sq().sqrt();
        if nrm < 1e-14 {
            if b[i].abs() > 1e-12 {
                let mut y = vec![0.0; m];
                y[i] = b[i].signum();
                return Err(y);
            }
            continue;
        }
        rows[i].scale(1.0 / nrm);
        b[i] /= nrm;
        scale[i] = 1.0 / nrm;
        live.push(i);
    }

    // Gram matrix of live rows via a scatter buffer per block.
    let k = live.len();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut buf: Vec<DMatrix<f64>> = dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    for (ii, &i) in live.iter().enumerate() {
        for (blk, s) in &rows[i].parts {
            s.add_to(&mut buf[*blk], 1.0);
        }
        for (jj, &j) in live.iter().enumerate().skip(ii) {
            let v: f64 = rows[j].parts.iter().map(|(blk, s)| s.dot(&buf[*blk])).sum();
            gram[(ii, jj)] = v;
            gram[(jj, ii)] = v;
        }
        for (blk, s) in &rows[i].parts {
            s.add_to(&mut buf[*blk], -1.0);
        }
    }

    // Cholesky with deletion: keep a row iff it is not (numerically) spanned by kept rows.
    let mut kept: Vec<usize> = Vec::new(); // indices into live
    let mut l = DMatrix::<f64>::zeros(k, k);
    for ii in 0..k {
        let r = kept.len();
        let mut z = DVector::<f64>::zeros(r);
        for a in 0..r {
            let mut s = gram[(kept[a], ii)];
            for t in 0..a {
                s -= l[(a, t)] * z[t];
            }
            z[a] = s / l[(a, a)];
        }
        let d = gram[(ii, ii)] - z.norm_squared();
        if d > DEPENDENCY_TOL * gram[(ii, ii)].max(1.0) {
            for t in 0..r {
                l[(r, t)] = z[t];
            }
            l[(r, r)] = d.sqrt();
            kept.push(ii);
        } else {
            // coefficients of the combination: L^T coef = z
            let mut coef = DVector::<f64>::zeros(r);
            for a in (0..r).rev() {
                let mut s = z[a];
                for t in a + 1..r {
                    s -= l[(t, a)] * coef[t];
                }
                coef[a] = s / l[(a, a)];
            }
            let bi = b[live[ii]];
            let pred: f64 = (0..r).map(|a| coef[a] * b[live[kept[a]]]).sum();
            let miss = bi - pred;
            if miss.abs() > 1e-8 * (1.0 + bi.abs()) {
                // y = e_i - sum coef e_k, then undo row scaling
                let mut y = vec![0.0; m];
                let sgn = miss.signum();
                y[live[ii]] = sgn * scale[live[ii]];
                for a in 0..r {
                    y[live[kept[a]]] -= sgn * coef[a] * scale[live[kept[a]]];
                }
                return Err(y);
            }
        }
    }

    let origin: Vec<usize> = kept.iter().map(|&ii| live[ii]).collect();
    let mut kept_rows = Vec::with_capacity(origin.len());
    let mut kept_b = Vec::with_capacity(origin.len());
    let mut kept_scale = Vec::with_capacity(origin.len());
    for &i in &origin {
        kept_rows.push(std::mem::take(&mut rows[i]));
        kept_b.push(b[i]);
        kept_scale.push(scale[i]);
    }
    let mut by_block = vec![Vec::new(); dims.len()];
    for (i, r) in kept_rows.iter().enumerate() {
        for (pi, (blk, _)) in r.parts.iter().enumerate() {
            by_block[*blk].push((i, pi));
        }
    }
    Ok(Lowered {
        dims: dims.to_vec(),
        rows: kept_rows,
        b: kept_b,
        c,
        origin,
        scale: kept_scale,
        by_block,
    })
}

fn inconsistent_rows(problem: &SdpProblem, dims: &[usize], y: Vec<f64>) -> SdpSolution {
    let cert = certificate_from(problem, dims, &y);
    SdpSolution {
        status: Status::Infeasible,
        primal: empty_primal(problem),
        dual: vec![0.0; problem.constraints.len()],
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        gap: f64::NAN,
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        iterations: 0,
        certificate: Some(cert),
    }
}

fn empty_primal(problem: &SdpProblem) -> Vec<BlockValue> {
    problem
        .blocks
        .iter()
        .map(|b| match *b {
            BlockKind::Real(n) => BlockValue::Real(DMatrix::zeros(n, n)),
            BlockKind::Hermitian(n) => BlockValue::Hermitian(DMatrix::zeros(n, n)),
        })
        .collect()
}

/// Evaluates a candidate ray `y` (original row indexing) against the original data.
fn certificate_from(problem: &SdpProblem, dims: &[usize], y: &[f64]) -> Certificate {
    let nrm = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let y: Vec<f64> = y.iter().map(|v| v / nrm).collect();
    let mut aty: Vec<DMatrix<f64>> = dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    let mut margin = 0.0;
    for (i, c) in problem.constraints.iter().enumerate() {
        if y[i] == 0.0 {
            continue;
        }
        margin += y[i] * c.rhs;
        for (blk, s) in &lower_terms(&problem.blocks, &c.terms).parts {
            s.add_to(&mut aty[*blk], y[i]);
        }
    }
    let residual = aty
        .iter()
        .map(|m| SymmetricEigen::new(m.clone()).eigenvalues.max())
        .fold(0.0f64, f64::max)
        .max(0.0);
    let violation = match problem.trace_bound {
        Some(t) => margin - residual * t,
        None if residual <= 1e-12 => margin,
        None => f64::NEG_INFINITY,
    };
    Certificate { y, margin, residual, violation }
}

struct Scaling {
    /// W = G G^T with W S W = X
    w: DMatrix<f64>,
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    lambda: DVector<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<Scaling> {
    let lx = Cholesky::new(x.clone())?.l();
    let ls = Cholesky::new(s.clone())?.l();
    let prod = ls.transpose() * &lx;
    let svd = prod.svd(false, true);
    let v_t = svd.v_t?;
    let sig = svd.singular_values;
    if sig.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return None;
    }
    let v = v_t.transpose();
    let n = x.nrows();
    let mut g = &lx * &v;
    for j in 0..n {
        let f = 1.0 / sig[j].sqrt();
        for i in 0..n {
            g[(i, j)] *= f;
        }
    }
    let lx_inv = lx.solve_lower_triangular(&DMatrix::identity(n, n))?;
    let mut g_inv = &v_t * lx_inv;
    for i in 0..n {
        let f = sig[i].sqrt();
        for j in 0..n {
            g_inv[(i, j)] *= f;
        }
    }
    let w = &g * g.transpose();
    Some(Scaling { w, g, g_inv, lambda: sig })
}

/// Largest `alpha` (capped at `cap`) with `lambda + alpha * d >= 0` for diagonal `lambda`.
fn max_step(lambda: &DVector<f64>, d: &DMatrix<f64>, cap: f64) -> f64 {
    let n = lambda.len();
    let mut t = d.clone();
    for i in 0..n {
        for j in 0..n {
            t[(i, j)] /= (lambda[i] * lambda[j]).sqrt();
        }
    }
    let t = 0.5 * (&t + t.transpose());
    let emin = SymmetricEigen::new(t).eigenvalues.min();
    if emin >= 0.0 {
        cap
    } else {
        (-1.0 / emin).min(cap)
    }
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (&m + m.transpose())
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

struct Ipm<'a> {
    problem: &'a SdpProblem,
    d: Lowered,
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    tau: f64,
    kappa: f64,
    nu: f64,
    bnorm: f64,
    cnorm: f64,
    /// Iterate with the smallest `max(pres, dres, gap)` seen so far.
    best: Option<(f64, Snapshot)>,
}

#[derive(Clone)]
struct Snapshot {
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Residuals {
    rp: DVector<f64>,
    rd: Vec<DMatrix<f64>>,
    rg: f64,
    pres: f64,
    dres: f64,
    gap: f64,
    pobj: f64,
    dobj: f64,
}

impl<'a> Ipm<'a> {
    fn new(problem: &'a SdpProblem, d: Lowered) -> Self {
        let m = d.b.len();
        let x: Vec<_> = d.dims.iter().map(|&n| DMatrix::identity(n, n)).collect();
        let s = x.clone();
        let nu = d.dims.iter().sum::<usize>() as f64;
        let bnorm = d.b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cnorm = d.c.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt();
        Ipm {
            problem,
            d,
            x,
            s,
            y: DVector::zeros(m),
            tau: 1.0,
            kappa: 1.0,
            nu,
            bnorm,
            cnorm,
            best: None,
        }
    }

    fn a_op(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(self.d.rows.len(), self.d.rows.iter().map(|r| r.eval(x)))
    }

    fn at_op(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.d.dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (i, r) in self.d.rows.iter().enumerate() {
            if y[i] != 0.0 {
                for (blk, s) in &r.parts {
                    s.add_to(&mut out[*blk], y[i]);
                }
            }
        }
        out
    }

    fn bvec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.d.b)
    }

    fn residuals(&self) -> Residuals {
        let b = self.bvec();
        let ax = self.a_op(&self.x);
        let rp = &b * self.tau - &ax;
        let aty = self.at_op(&self.y);
        let rd: Vec<DMatrix<f64>> = (0..self.d.dims.len())
            .map(|k| &aty[k] + &self.s[k] - &self.d.c[k] * self.tau)
            .collect();
        let cx = inner(&self.d.c, &self.x);
        let by = b.dot(&self.y);
        let rg = self.kappa + cx - by;
        let pres = rp.norm() / self.tau / (1.0 + self.bnorm);
        let dres = rd.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt() / self.tau / (1.0 + self.cnorm);
        let pobj = cx / self.tau;
        let dobj = by / self.tau;
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        Residuals { rp, rd, rg, pres, dres, gap, pobj, dobj }
    }

    fn mu(&self) -> f64 {
        (inner(&self.x, &self.s) + self.tau * self.kappa) / (self.nu + 1.0)
    }

    /// Schur complement `M_ij = <A_i, W A_j W>`.
    fn schur(&self, sc: &[Scaling]) -> DMatrix<f64> {
        let m = self.d.rows.len();
        let mut mat = DMatrix::<f64>::zeros(m, m);
        for (k, list) in self.d.by_block.iter().enumerate() {
            let w = &sc[k].w;
            for (ai, &(i, pi)) in list.iter().enumerate() {
                let ei = &self.d.rows[i].parts[pi].1.entries;
                for &(j, pj) in &list[ai..] {
                    let ej = &self.d.rows[j].parts[pj].1.entries;
                    let mut acc = 0.0;
                    for &(p, q, v) in ei {
                        for &(r, s, u) in ej {
                            acc += v * u * w[(q, r)] * w[(s, p)];
                        }
                    }
                    mat[(i, j)] += acc;
                    if i != j {
                        mat[(j, i)] += acc;
                    }
                }
            }
        }
        mat
    }

    fn run(&mut self) -> Result<SdpSolution, SdpError> {
        let opts = self.problem.options;
        let nblk = self.d.dims.len();
        for iter in 0..opts.max_iters {
            let res = self.residuals();
            let res = &res;
            if res.pres < opts.feas_tol && res.dres < opts.feas_tol && res.gap < opts.gap_tol {
                return Ok(self.finish(Status::Optimal, iter));
            }
            if let Some(st) = self.check_infeasible(opts.infeas_tol) {
                return self.finish_infeasible(st, iter);
            }
            let merit = res.pres.max(res.dres).max(res.gap);
            if self.best.as_ref().is_none_or(|(m, _)| merit < *m) {
                let snap = Snapshot {
                    x: self.x.clone(),
                    s: self.s.clone(),
                    y: self.y.clone(),
                    tau: self.tau,
                    kappa: self.kappa,
                };
                self.best = Some((merit, snap));
            }

            let sc: Option<Vec<Scaling>> = (0..nblk).map(|k| nt_scaling(&self.x[k], &self.s[k])).collect();
            let Some(sc) = sc else {
                return self.stalled(iter, "loss of positive definiteness");
            };
            let mut schur = self.schur(&sc);
            let chol = match Cholesky::new(schur.clone()) {
                Some(c) => c,
                None => {
                    let reg = 1e-12 * schur.diagonal().max().max(1e-300);
                    for i in 0..schur.nrows() {
                        schur[(i, i)] += reg;
                    }
                    match Cholesky::new(schur) {
                        Some(c) => c,
                        None => return self.stalled(iter, "singular Schur complement"),
                    }
                }
            };

            let b = self.bvec();
            let wcw: Vec<DMatrix<f64>> = (0..nblk).map(|k| &sc[k].w * &self.d.c[k] * &sc[k].w).collect();
            let g = self.a_op(&wcw);
            let cwc = inner(&self.d.c, &wcw);
            let v = chol.solve(&(&g + &b));
            let bmg = &b - &g;
            let denom_base = bmg.dot(&v) + cwc;

            let mu = self.mu();
            let solve_dir = |ipm: &Ipm, sigma: f64, eta: f64, corr: Option<&Direction>| -> Direction {
                // scaled complementarity right-hand side
                let mut rc = Vec::with_capacity(nblk);
                for k in 0..nblk {
                    let s = &sc[k];
                    let n = s.lambda.len();
                    let mut h = DMatrix::<f64>::zeros(n, n);
                    for i in 0..n {
                        h[(i, i)] = sigma * mu - s.lambda[i] * s.lambda[i];
                    }
                    if let Some(a) = corr {
                        let dxs = &s.g_inv * &a.dx[k] * s.g_inv.transpose();
                        let dss = s.g.transpose() * &a.ds[k] * &s.g;
                        let p = &dxs * &dss;
                        h -= sym(p);
                    }
                    for i in 0..n {
                        for j in 0..n {
                            h[(i, j)] *= 2.0 / (s.lambda[i] + s.lambda[j]);
                        }
                    }
                    rc.push(&s.g * h * s.g.transpose());
                }
                let mut rtk = sigma * mu - ipm.tau * ipm.kappa;
                if let Some(a) = corr {
                    rtk -= a.dtau * a.dkappa;
                }
                let t: Vec<DMatrix<f64>> = (0..nblk)
                    .map(|k| &rc[k] + (&sc[k].w * &res.rd[k] * &sc[k].w) * eta)
                    .collect();
                let h1 = &res.rp * eta - ipm.a_op(&t);
                let h2 = eta * res.rg + inner(&ipm.d.c, &t) + rtk / ipm.tau;
                let u = chol.solve(&h1);
                let dtau = (h2 - bmg.dot(&u)) / (denom_base + ipm.kappa / ipm.tau);
                let dy = &u + &v * dtau;
                let aty = ipm.at_op(&dy);
                let ds: Vec<DMatrix<f64>> = (0..nblk)
                    .map(|k| -&aty[k] + &ipm.d.c[k] * dtau - &res.rd[k] * eta)
                    .collect();
                let dx: Vec<DMatrix<f64>> = (0..nblk)
                    .map(|k| sym(&rc[k] - &sc[k].w * &ds[k] * &sc[k].w))
                    .collect();
                let dkappa = (rtk - ipm.kappa * dtau) / ipm.tau;
                Direction { dx, ds, dy, dtau, dkappa }
            };

            let step_len = |ipm: &Ipm, d: &Direction| -> f64 {
                let mut a = 1.0f64;
                for k in 0..nblk {
                    let s = &sc[k];
                    let dxs = &s.g_inv * &d.dx[k] * s.g_inv.transpose();
                    let dss = s.g.transpose() * &d.ds[k] * &s.g;
                    a = max_step(&s.lambda, &dxs, a);
                    a = max_step(&s.lambda, &dss, a);
                }
                if d.dtau < 0.0 {
                    a = a.min(-ipm.tau / d.dtau);
                }
                if d.dkappa < 0.0 {
                    a = a.min(-ipm.kappa / d.dkappa);
                }
                a
            };

            let aff = solve_dir(self, 0.0, 1.0, None);
            let a_aff = step_len(self, &aff);
            let xs_aff: f64 = (0..nblk)
                .map(|k| (&self.x[k] + &aff.dx[k] * a_aff).dot(&(&self.s[k] + &aff.ds[k] * a_aff)))
                .sum::<f64>()
                + (self.tau + a_aff * aff.dtau) * (self.kappa + a_aff * aff.dkappa);
            let mu_aff = xs_aff / (self.nu + 1.0);
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            let mut dir = solve_dir(self, sigma, 1.0 - sigma, Some(&aff));
            let mut alpha = (STEP_FRACTION * step_len(self, &dir)).min(1.0);
            if alpha < RECENTER_BELOW {
                // Off the central path: a pure centering step restores room to move.
                let center = solve_dir(self, 1.0, 0.0, None);
                let a = (STEP_FRACTION * step_len(self, &center)).min(1.0);
                if a > alpha {
                    dir = center;
                    alpha = a;
                }
            }
            if alpha < 1e-10 {
                return self.stalled(iter, "step length collapsed");
            }
            for k in 0..nblk {
                self.x[k] += &dir.dx[k] * alpha;
                self.s[k] += &dir.ds[k] * alpha;
                self.x[k] = sym(self.x[k].clone());
                self.s[k] = sym(self.s[k].clone());
            }
            self.y += &dir.dy * alpha;
            self.tau += alpha * dir.dtau;
            self.kappa += alpha * dir.dkappa;

            // rescale the homogeneous iterate to keep magnitudes tame
            let scale = self.tau + self.kappa;
            if !(1e-8..=1e8).contains(&scale) {
                let f = 1.0 / scale;
                for k in 0..nblk {
                    self.x[k] *= f;
                    self.s[k] *= f;
                }
                self.y *= f;
                self.tau *= f;
                self.kappa *= f;
            }
        }
        self.stalled(opts.max_iters, "iteration limit")
    }

    fn check_infeasible(&self, tol: f64) -> Option<Status> {
        let b = self.bvec();
        let by = b.dot(&self.y);
        if by > 0.0 {
            let aty = self.at_op(&self.y);
            let r: f64 = (0..self.d.dims.len())
                .map(|k| (&aty[k] + &self.s[k]).norm_squared())
                .sum::<f64>()
                .sqrt();
            if r / by < tol && self.tau / by < tol.sqrt() {
                return Some(Status::Infeasible);
            }
        }
        let cx = inner(&self.d.c, &self.x);
        if cx < 0.0 {
            let ax = self.a_op(&self.x);
            if ax.norm() / (-cx) < tol && self.tau / (-cx) < tol.sqrt() {
                return Some(Status::Unbounded);
            }
        }
        None
    }

    fn stalled(&mut self, iter: usize, why: &str) -> Result<SdpSolution, SdpError> {
        let res = self.residuals();
        if res.pres < STALL_FEAS && res.dres < STALL_FEAS && res.gap < STALL_GAP {
            return Ok(self.finish(Status::Optimal, iter));
        }
        // Late iterations can lose accuracy; fall back to the best one seen.
        if let Some((merit, snap)) = self.best.take() {
            if merit < STALL_FEAS.min(STALL_GAP) {
                self.x = snap.x;
                self.s = snap.s;
                self.y = snap.y;
                self.tau = snap.tau;
                self.kappa = snap.kappa;
                return Ok(self.finish(Status::Optimal, iter));
            }
        }
        if let Some(st) = self.check_infeasible(1e-6) {
            return self.finish_infeasible(st, iter);
        }
        Err(SdpError::Numerical {
            iterations: iter,
            reason: format!(
                "{why} (primal res {:.2e}, dual res {:.2e}, gap {:.2e}, tau {:.2e}, kappa {:.2e})",
                res.pres, res.dres, res.gap, self.tau, self.kappa
            ),
        })
    }

    fn original_y(&self, y: &DVector<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.problem.constraints.len()];
        for (k, &i) in self.d.origin.iter().enumerate() {
            out[i] = y[k] * self.d.scale[k];
        }
        out
    }

    fn lift(&self, x: &[DMatrix<f64>]) -> Vec<BlockValue> {
        self.problem
            .blocks
            .iter()
            .zip(x)
            .map(|(kind, m)| match kind {
                BlockKind::Real(_) => BlockValue::Real(m.clone()),
                BlockKind::Hermitian(_) => BlockValue::Hermitian(lift_hermitian(m)),
            })
            .collect()
    }

    fn finish(&self, status: Status, iterations: usize) -> SdpSolution {
        let res = self.residuals();
        let xs: Vec<DMatrix<f64>> = self.x.iter().map(|m| m / self.tau).collect();
        let yv = &self.y / self.tau;
        let sign = match self.problem.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let primal = self.lift(&xs);
        let dual = self.original_y(&yv);
        // residual in the caller's units
        let primal_residual = self
            .problem
            .constraints
            .iter()
            .map(|c| {
                let f = lower_terms(&self.problem.blocks, &c.terms);
                (f.eval(&xs) - c.rhs).abs()
            })
            .fold(0.0, f64::max);
        SdpSolution {
            status,
            primal,
            dual: dual.iter().map(|v| v * sign).collect(),
            primal_objective: sign * res.pobj,
            dual_objective: sign * res.dobj,
            gap: (res.pobj - res.dobj).abs(),
            primal_residual,
            dual_residual: res.dres,
            iterations,
            certificate: None,
        }
    }

    fn finish_infeasible(&self, status: Status, iterations: usize) -> Result<SdpSolution, SdpError> {
        let mut sol = SdpSolution {
            status,
            primal: empty_primal(self.problem),
            dual: vec![0.0; self.problem.constraints.len()],
            primal_objective: f64::NAN,
            dual_objective: f64::NAN,
            gap: f64::NAN,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            iterations,
            certificate: None,
        };
        match status {
            Status::Infeasible => {
                let y = self.original_y(&self.y);
                let cert = certificate_from(self.problem, &self.d.dims, &y);
                if cert.violation <= CERT_MARGIN {
                    return Err(SdpError::Numerical {
                        iterations,
                        reason: format!(
                            "infeasibility ray inconclusive (margin {:.2e}, residual {:.2e})",
                            cert.margin, cert.residual
                        ),
                    });
                }
                sol.certificate = Some(cert);
            }
            Status::Unbounded => {
                let nrm = self.x.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
                let ray: Vec<DMatrix<f64>> = self.x.iter().map(|m| m / nrm).collect();
                sol.primal = self.lift(&ray);
            }
            Status::Optimal => unreachable!(),
        }
        Ok(sol)
    }
}
