//! Tripartite marginal problems: compatibility, extremal overlaps,
//! PPT-compatible AC marginals, symmetric extensions, transitivity verdicts.
//!
//! Global states live on `A (x) B (x) C` with the layout `[d_A, d_B, d_C]`.
//! When every input is real the SDPs use real symmetric blocks, which loses
//! nothing for linear objectives (the real part of a feasible point is
//! feasible with the same value).

use nlt_sdp::{BlockKind, Certificate, SdpProblem, SdpSolution, Sense, Status, Term};
use serde::{Deserialize, Serialize};

use crate::bellopt::{horodecki_chsh, make_functional, seesaw_optimize, SeesawOptions};
use crate::bounds::{self, LvParams, LvVariant};
use crate::error::{Error, Result};
use crate::qcore::{self, c, CMat, DensityOp, Ket, Layout, State, StateFile, TraceMap, C64};

/// Local compatibility tolerance at B.
pub const LOCAL_TOL: f64 = 1e-9;
/// Largest global dimension accepted by the compatibility SDPs.
pub const MAX_GLOBAL_DIM: usize = 64;
/// Largest symmetric-extension dimension.
pub const MAX_EXTENSION_DIM: usize = 64;
const REAL_TOL: f64 = 1e-14;
const WITNESS_PPT_TOL: f64 = 1e-8;

/// A pair `(rho_AB, rho_BC)` agreeing on B.
#[derive(Clone, Debug)]
pub struct MarginalSpec {
    ab: DensityOp,
    bc: DensityOp,
    dims: [usize; 3],
}

impl MarginalSpec {
    pub fn new(ab: DensityOp, bc: DensityOp) -> Result<Self> {
        let (da, db) = match ab.layout().dims() {
            [a, b] => (*a, *b),
            d => return Err(Error::Dimension(format!("rho_AB needs two factors, got {d:?}"))),
        };
        let (db2, dc) = match bc.layout().dims() {
            [b, c] => (*b, *c),
            d => return Err(Error::Dimension(format!("rho_BC needs two factors, got {d:?}"))),
        };
        if db != db2 {
            return Err(Error::Dimension(format!("B has dimension {db} in rho_AB but {db2} in rho_BC")));
        }
        let gap = qcore::max_abs(&(ab.partial_trace(&[1])?.matrix() - bc.partial_trace(&[0])?.matrix()));
        if gap > LOCAL_TOL {
            return Err(Error::Invalid(format!("B marginals differ by {gap:.3e}")));
        }
        Ok(MarginalSpec { ab, bc, dims: [da, db, dc] })
    }

    pub fn ab(&self) -> &DensityOp {
        &self.ab
    }

    pub fn bc(&self) -> &DensityOp {
        &self.bc
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.dims.to_vec()).unwrap()
    }

    pub fn global_dim(&self) -> usize {
        self.dims.iter().product()
    }

    fn is_real(&self) -> bool {
        is_real(self.ab.matrix()) && is_real(self.bc.matrix())
    }

    fn check_capacity(&self) -> Result<()> {
        let d = self.global_dim();
        if d > MAX_GLOBAL_DIM {
            return Err(Error::Capacity(format!("global dimension {d} exceeds {MAX_GLOBAL_DIM}")));
        }
        Ok(())
    }
}

fn is_real(m: &CMat) -> bool {
    m.iter().all(|z| z.im.abs() < REAL_TOL)
}

/// SDP under construction with real or Hermitian blocks.
struct Builder {
    prob: SdpProblem,
    real: bool,
}

impl Builder {
    fn new(sense: Sense, real: bool) -> Self {
        Builder { prob: SdpProblem::new(sense), real }
    }

    fn block(&mut self, n: usize) -> usize {
        self.prob.add_block(if self.real { BlockKind::Real(n) } else { BlockKind::Hermitian(n) })
    }

    fn scalar(&mut self) -> usize {
        self.prob.add_block(BlockKind::Real(1))
    }

    /// Pins `Z = target` where `Z[p, q] = sum w X[r, c]` over `entry(p, q)`.
    fn pin<F>(&mut self, target: &CMat, mut entry: F)
    where
        F: FnMut(usize, usize) -> Vec<(usize, usize, usize, C64)>,
    {
        if !self.real {
            self.prob.pin_hermitian(target, entry);
            return;
        }
        let n = target.nrows();
        for p in 0..n {
            for q in p..n {
                let terms = entry(p, q).into_iter().map(|(b, r, col, w)| Term::new(b, r, col, w.conj())).collect();
                self.prob.add_constraint(terms, target[(p, q)].re);
            }
        }
    }

    /// `tr(X op)` added to the objective.
    fn objective_trace(&mut self, x: usize, op: &CMat) {
        if self.real {
            let re = op.map(|z| z.re);
            self.prob.add_objective(Term::trace_with_real(x, &re));
        } else {
            self.prob.add_objective(Term::trace_with(x, op));
        }
    }

    fn pin_marginals(&mut self, x: usize, spec: &MarginalSpec) -> Result<()> {
        let layout = spec.layout();
        for (keep, target) in [([0, 1], spec.ab.matrix()), ([1, 2], spec.bc.matrix())] {
            let map = TraceMap::new(&layout, &keep)?;
            self.pin(target, |p, q| (0..map.traced_dim).map(|t| (x, map.full(p, t), map.full(q, t), c(1.0))).collect());
        }
        Ok(())
    }
}

fn state_from(sol: &SdpSolution, block: usize, layout: Layout) -> Result<DensityOp> {
    DensityOp::from_noisy(sol.block(block).to_complex(), layout, 1e-6)
}

fn optimal_or_incompatible(sol: SdpSolution) -> Result<SdpSolution> {
    match sol.status {
        Status::Optimal => Ok(sol),
        Status::Infeasible => Err(Error::Incompatible(sol.certificate.clone().expect("infeasible without certificate"))),
        Status::Unbounded => Err(Error::Invalid("compatibility SDP reported unbounded".into())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extremum {
    Min,
    Max,
}

#[derive(Clone, Debug)]
pub struct Overlap {
    pub value: f64,
    pub state: DensityOp,
    pub gap: f64,
    pub residual: f64,
}

/// Optimizes `tr(rho_ABC target)` over the states compatible with `spec`.
/// `target` is a Hermitian operator on ABC (a projector for a ket target).
pub fn compatible_extremal_overlap(spec: &MarginalSpec, target: &CMat, ext: Extremum) -> Result<Overlap> {
    spec.check_capacity()?;
    let d = spec.global_dim();
    if target.shape() != (d, d) {
        return Err(Error::Dimension(format!("target is {:?}, expected {d} x {d}", target.shape())));
    }
    let sense = match ext {
        Extremum::Min => Sense::Minimize,
        Extremum::Max => Sense::Maximize,
    };
    let mut b = Builder::new(sense, spec.is_real() && is_real(target));
    let x = b.block(d);
    b.pin_marginals(x, spec)?;
    b.objective_trace(x, target);
    b.prob.trace_bound = Some(1.0);
    let sol = optimal_or_incompatible(b.prob.solve()?)?;
    let state = state_from(&sol, x, spec.layout())?;
    Ok(Overlap {
        value: sol.primal_objective,
        state,
        gap: sol.gap,
        residual: sol.primal_residual,
    })
}

/// Min and max overlap with `target`, solved in parallel.
pub fn overlap_range(spec: &MarginalSpec, target: &CMat) -> Result<(Overlap, Overlap)> {
    let (lo, hi) = rayon::join(
        || compatible_extremal_overlap(spec, target, Extremum::Min),
        || compatible_extremal_overlap(spec, target, Extremum::Max),
    );
    Ok((lo?, hi?))
}

/// Some compatible global state (the solver's interior-ish feasible point).
pub fn find_compatible(spec: &MarginalSpec) -> Result<DensityOp> {
    spec.check_capacity()?;
    let mut b = Builder::new(Sense::Minimize, spec.is_real());
    let x = b.block(spec.global_dim());
    b.pin_marginals(x, spec)?;
    b.prob.trace_bound = Some(1.0);
    let sol = optimal_or_incompatible(b.prob.solve()?)?;
    state_from(&sol, x, spec.layout())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Uniqueness {
    pub min: f64,
    pub max: f64,
    pub unique: bool,
}

/// `|psi>` is the only compatible state iff the minimal overlap is 1.
pub fn check_uniqueness(spec: &MarginalSpec, candidate: &Ket, tol: f64) -> Result<Uniqueness> {
    let proj = candidate.projector().into_matrix();
    let (lo, hi) = overlap_range(spec, &proj)?;
    let unique = lo.value >= 1.0 - tol && (hi.value - lo.value).abs() <= tol;
    Ok(Uniqueness { min: lo.value, max: hi.value, unique })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Separability {
    /// `2 x 2` or `2 x 3` cut, where PPT is equivalent to separability.
    ExactCut,
    /// The AC marginal is a product state.
    Product { distance: f64 },
    /// Inside the separable ball `|sigma - I/D|_2 <= 1/D`.
    Ball { distance: f64, radius: f64 },
    /// PPT only; separability not established.
    PptOnly,
}

impl Separability {
    pub fn is_certified(&self) -> bool {
        !matches!(self, Separability::PptOnly)
    }
}

/// Sufficient separability checks for a PPT bipartite state.
pub fn classify_ppt(sigma: &DensityOp) -> Result<Separability> {
    let [da, dc] = match sigma.layout().dims() {
        [a, b] => [*a, *b],
        d => return Err(Error::Dimension(format!("need two factors, got {d:?}"))),
    };
    if da.min(dc) == 1 || (da.min(dc) == 2 && da.max(dc) <= 3) {
        return Ok(Separability::ExactCut);
    }
    let prod = sigma.partial_trace(&[0])?.kron(&sigma.partial_trace(&[1])?);
    let distance = qcore::max_abs(&(sigma.matrix() - prod.matrix()));
    if distance <= 1e-9 {
        return Ok(Separability::Product { distance });
    }
    let d = sigma.dim() as f64;
    let shifted = sigma.matrix() - CMat::identity(sigma.dim(), sigma.dim()) * c(1.0 / d);
    let distance = shifted.norm();
    if distance <= 1.0 / d {
        return Ok(Separability::Ball { distance, radius: 1.0 / d });
    }
    Ok(Separability::PptOnly)
}

#[derive(Clone, Debug)]
pub struct PptSearch {
    pub feasible: bool,
    /// Compatible global state whose AC marginal is PPT, chosen to maximize
    /// the smallest eigenvalue of that marginal.
    pub witness: Option<DensityOp>,
    pub ac: Option<DensityOp>,
    pub ac_min_eigenvalue: Option<f64>,
    pub separability: Option<Separability>,
    /// Infeasibility proof when no PPT-compatible AC exists.
    pub certificate: Option<Certificate>,
}

/// Searches for a compatible `rho_ABC` whose AC marginal is PPT.
///
/// One SDP: blocks `X` (global), `Z = sigma^(T_C)` and `W = sigma - t I`
/// with `sigma = tr_B X`, `t = 1/D - s`; minimize `s`. The `W` constraint is
/// always satisfiable, so infeasibility means no PPT AC marginal exists.
pub fn exists_compatible_ppt_ac(spec: &MarginalSpec) -> Result<PptSearch> {
    spec.check_capacity()?;
    let [da, db, dc] = spec.dims;
    let dac = da * dc;
    let layout = spec.layout();
    let map = TraceMap::new(&layout, &[0, 2])?;
    let mut b = Builder::new(Sense::Minimize, spec.is_real());
    let x = b.block(spec.global_dim());
    let z = b.block(dac);
    let w = b.block(dac);
    let s = b.scalar();
    b.pin_marginals(x, spec)?;
    let zero = CMat::zeros(dac, dac);
    b.pin(&zero, |p, q| {
        let (a, cc) = (p / dc, p % dc);
        let (a2, c2) = (q / dc, q % dc);
        let mut t: Vec<_> = (0..db).map(|j| (x, map.full(a * dc + c2, j), map.full(a2 * dc + cc, j), c(-1.0))).collect();
        t.push((z, p, q, c(1.0)));
        t
    });
    let shift = CMat::identity(dac, dac) * c(-1.0 / dac as f64);
    b.pin(&shift, |p, q| {
        let mut t: Vec<_> = (0..db).map(|j| (x, map.full(p, j), map.full(q, j), c(-1.0))).collect();
        t.push((w, p, q, c(1.0)));
        if p == q {
            t.push((s, 0, 0, c(-1.0)));
        }
        t
    });
    b.prob.add_objective([Term::re(s, 0, 0, 1.0)]);
    b.prob.trace_bound = Some(4.0);
    let sol = b.prob.solve()?;
    match sol.status {
        Status::Infeasible => Ok(PptSearch {
            feasible: false,
            witness: None,
            ac: None,
            ac_min_eigenvalue: None,
            separability: None,
            certificate: sol.certificate.clone(),
        }),
        Status::Unbounded => Err(Error::Invalid("PPT search reported unbounded".into())),
        Status::Optimal => {
            let witness = state_from(&sol, x, layout)?;
            let ac = witness.partial_trace(&[0, 2])?;
            if !ac.is_ppt(1, WITNESS_PPT_TOL)? {
                return Err(Error::Invalid("PPT witness fails the PPT re-check".into()));
            }
            let separability = classify_ppt(&ac)?;
            Ok(PptSearch {
                feasible: true,
                ac_min_eigenvalue: Some(qcore::min_eigenvalue(ac.matrix())),
                witness: Some(witness),
                ac: Some(ac),
                separability: Some(separability),
                certificate: None,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Side::A),
            "B" | "b" => Ok(Side::B),
            _ => Err(Error::Domain(format!("side must be A or B, got {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SymmetricExtension {
    pub feasible: bool,
    /// `min lambda` with `X + lambda I >= 0` over Hermitian `X` with the
    /// required copy-pair marginals; extendible iff `lambda <= tol`.
    pub lambda: f64,
}

/// Whether `rho` on `A (x) B` has an extension to `copies` copies of `side`
/// whose every copy-pair marginal equals `rho`. Symmetrizing such an
/// extension over copy permutations keeps it valid, so symmetry is not
/// imposed explicitly.
pub fn symmetric_extension(rho: &DensityOp, side: Side, copies: usize, tol: f64) -> Result<SymmetricExtension> {
    let (da, db) = match rho.layout().dims() {
        [a, b] => (*a, *b),
        d => return Err(Error::Dimension(format!("need two factors, got {d:?}"))),
    };
    if copies < 1 {
        return Err(Error::Domain("copies must be >= 1".into()));
    }
    let dims: Vec<usize> = match side {
        Side::A => std::iter::repeat_n(da, copies).chain([db]).collect(),
        Side::B => std::iter::once(da).chain(std::iter::repeat_n(db, copies)).collect(),
    };
    let layout = Layout::new(dims)?;
    let total = layout.total();
    if total > MAX_EXTENSION_DIM {
        return Err(Error::Capacity(format!("extension dimension {total} exceeds {MAX_EXTENSION_DIM}")));
    }
    let mut b = Builder::new(Sense::Minimize, is_real(rho.matrix()));
    let x = b.block(total);
    let s = b.scalar();
    // X' = X + lambda I, lambda = s - 1/D (lambda >= -1/D since tr X = 1).
    for i in 0..copies {
        let keep = match side {
            Side::A => [i, copies],
            Side::B => [0, i + 1],
        };
        let map = TraceMap::new(&layout, &keep)?;
        let tr = map.traced_dim as f64;
        let target = rho.matrix() - CMat::identity(rho.dim(), rho.dim()) * c(tr / total as f64);
        b.pin(&target, |p, q| {
            let mut t: Vec<_> = (0..map.traced_dim).map(|j| (x, map.full(p, j), map.full(q, j), c(1.0))).collect();
            if p == q {
                t.push((s, 0, 0, c(-tr)));
            }
            t
        });
    }
    b.prob.add_objective([Term::re(s, 0, 0, 1.0)]);
    let sol = b.prob.solve()?;
    if !sol.is_optimal() {
        return Err(Error::Invalid(format!("extension SDP returned {:?}", sol.status)));
    }
    let lambda = sol.primal_objective - 1.0 / total as f64;
    Ok(SymmetricExtension { feasible: lambda <= tol, lambda })
}

/// Smallest parameter in `[lo, hi]` at which `family` becomes extendible,
/// by bisection to `step`. Needs non-extendible at `lo`, extendible at `hi`.
pub fn extension_threshold<F>(family: F, side: Side, copies: usize, lo: f64, hi: f64, step: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<DensityOp>,
{
    let ext = |p: f64| -> Result<bool> { Ok(symmetric_extension(&family(p)?, side, copies, tol)?.feasible) };
    if ext(lo)? || !ext(hi)? {
        return Err(Error::Domain(format!("no threshold bracketed in [{lo}, {hi}]")));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > step {
        let mid = 0.5 * (lo + hi);
        if ext(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct VerdictConfig {
    /// Functionals tried by the see-saw on non-qubit pairs.
    pub inequalities: Vec<String>,
    pub seesaw: SeesawOptions,
    pub violation_tol: f64,
    pub uniqueness_tol: f64,
    /// Candidate global ket; otherwise the top eigenvector of a compatible state.
    pub candidate: Option<StateFile>,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        VerdictConfig {
            inequalities: vec!["chsh".into(), "i3322".into()],
            seesaw: SeesawOptions::default(),
            violation_tol: 1e-6,
            uniqueness_tol: 1e-5,
            candidate: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AcStatus {
    ForcedNonlocal,
    RefutedBySeparableAc,
    Undetermined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Numeric,
    Analytic,
}

/// Outcome of one nonlocality test on a bipartite state.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum NonlocalityTest {
    Horodecki { value: f64, nonlocal: bool },
    Seesaw { functional: String, value: f64, bound: f64, nonlocal: bool },
    LvBound { f: f64, d: u32, k: u64, value: f64, nonlocal: bool },
}

impl NonlocalityTest {
    pub fn nonlocal(&self) -> bool {
        match self {
            NonlocalityTest::Horodecki { nonlocal, .. }
            | NonlocalityTest::Seesaw { nonlocal, .. }
            | NonlocalityTest::LvBound { nonlocal, .. } => *nonlocal,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PairReport {
    pub pair: String,
    pub nonlocal: bool,
    pub tests: Vec<NonlocalityTest>,
    pub ppt: bool,
    pub fef: Option<f64>,
    pub steerable: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "criterion", rename_all = "snake_case")]
pub enum Evidence {
    PptInfeasible { violation: f64 },
    PptWitness { separability: Separability, ac_min_eigenvalue: f64 },
    Uniqueness { min: f64, max: f64, tol: f64 },
    ForcedGlobalState { copies: u64 },
    ForcedAc { report: PairReport },
}

#[derive(Clone, Debug, Serialize)]
pub struct TransitivityVerdict {
    pub inputs_nonlocal: Vec<PairReport>,
    pub ac_status: AcStatus,
    pub nonlocality_transitive: Option<bool>,
    pub steering_transitive: Option<bool>,
    pub entanglement_transitive: Option<bool>,
    pub evidence: Vec<Evidence>,
    pub provenance: Provenance,
    /// Compatible global state refuting transitivity.
    pub witness: Option<StateFile>,
}

/// Horodecki for two qubits, the see-saw over `config.inequalities` otherwise.
pub fn nonlocality_report(name: &str, rho: &DensityOp, config: &VerdictConfig) -> Result<PairReport> {
    let dims = rho.layout().dims().to_vec();
    let mut tests = Vec::new();
    if dims == [2, 2] {
        let value = horodecki_chsh(rho)?;
        tests.push(NonlocalityTest::Horodecki { value, nonlocal: value > 2.0 + config.violation_tol });
    }
    if !tests.iter().any(NonlocalityTest::nonlocal) {
        // Horodecki is exact for CHSH on two qubits
        for fname in config.inequalities.iter().filter(|n| dims != [2, 2] || n.as_str() != "chsh") {
            let f = make_functional(fname)?;
            let r = seesaw_optimize(rho, &f, &config.seesaw)?;
            let bound = f.local_bound();
            tests.push(NonlocalityTest::Seesaw {
                functional: fname.clone(),
                value: r.value,
                bound,
                nonlocal: r.value > bound + config.violation_tol,
            });
            if r.value > bound + config.violation_tol {
                break;
            }
        }
    }
    let (fef, steerable) = if dims[0] == dims[1] {
        let f = bounds::fef(rho)?.value;
        (Some(f), Some(f > bounds::steering_threshold(dims[0] as u32)?))
    } else {
        (None, None)
    };
    Ok(PairReport {
        pair: name.into(),
        nonlocal: tests.iter().any(NonlocalityTest::nonlocal),
        tests,
        ppt: rho.is_ppt(1, 1e-9)?,
        fef,
        steerable,
    })
}

fn candidate_ket(spec: &MarginalSpec, config: &VerdictConfig) -> Result<Option<Ket>> {
    if let Some(file) = &config.candidate {
        return match State::from_file_format(file)? {
            State::Ket(k) => Ok(Some(k.with_layout(spec.layout())?)),
            State::Density(_) => Err(Error::Invalid("candidate must be a ket".into())),
        };
    }
    let rho = find_compatible(spec)?;
    let (vals, vecs) = qcore::eigh(rho.matrix());
    let top = vals.len() - 1;
    if vals[top] < 1.0 - 1e-6 {
        return Ok(None);
    }
    Ok(Some(Ket::normalized(vecs.column(top).into_owned(), spec.layout())?))
}

/// The verdict pipeline: input nonlocality, PPT refutation, uniqueness-based
/// certification on the forced AC marginal.
pub fn transitivity_verdict(spec: &MarginalSpec, config: &VerdictConfig) -> Result<TransitivityVerdict> {
    spec.check_capacity()?;
    let inputs = vec![nonlocality_report("AB", &spec.ab, config)?, nonlocality_report("BC", &spec.bc, config)?];
    let inputs_nonlocal = inputs.iter().all(|r| r.nonlocal);
    let inputs_steerable = inputs.iter().all(|r| r.steerable == Some(true));
    let inputs_entangled = inputs.iter().all(|r| !r.ppt || r.nonlocal || r.steerable == Some(true));
    let mut evidence = Vec::new();
    let mut verdict = TransitivityVerdict {
        inputs_nonlocal: inputs,
        ac_status: AcStatus::Undetermined,
        nonlocality_transitive: None,
        steering_transitive: None,
        entanglement_transitive: None,
        evidence: Vec::new(),
        provenance: Provenance::Numeric,
        witness: None,
    };

    let ppt = exists_compatible_ppt_ac(spec)?;
    if ppt.feasible {
        let sep = ppt.separability.clone().unwrap();
        let certified = sep.is_certified();
        evidence.push(Evidence::PptWitness { separability: sep, ac_min_eigenvalue: ppt.ac_min_eigenvalue.unwrap() });
        if certified {
            verdict.ac_status = AcStatus::RefutedBySeparableAc;
            verdict.nonlocality_transitive = Some(false);
            verdict.steering_transitive = Some(false);
            verdict.entanglement_transitive = Some(false);
            verdict.witness = Some(State::Density(ppt.witness.unwrap()).to_file_format());
            verdict.evidence = evidence;
            return Ok(verdict);
        }
    } else {
        let violation = ppt.certificate.as_ref().map_or(f64::NAN, |c| c.violation);
        evidence.push(Evidence::PptInfeasible { violation });
        if inputs_entangled {
            verdict.entanglement_transitive = Some(true);
        }
    }

    if let Some(psi) = candidate_ket(spec, config)? {
        let u = check_uniqueness(spec, &psi, config.uniqueness_tol)?;
        evidence.push(Evidence::Uniqueness { min: u.min, max: u.max, tol: config.uniqueness_tol });
        if u.unique {
            let ac = psi.projector().partial_trace(&[0, 2])?;
            let report = nonlocality_report("AC", &ac, config)?;
            if report.nonlocal {
                verdict.ac_status = AcStatus::ForcedNonlocal;
                verdict.nonlocality_transitive = Some(inputs_nonlocal);
            }
            if inputs_steerable && report.steerable == Some(true) {
                verdict.steering_transitive = Some(true);
            }
            if inputs_entangled && !report.ppt {
                verdict.entanglement_transitive = Some(true);
            }
            evidence.push(Evidence::ForcedAc { report });
        }
    }
    verdict.evidence = evidence;
    Ok(verdict)
}

/// Analytic verdict for `(tau_3^(x k), tau_3^(x k))`. The global state is
/// forced to `|W_3>^(x k)`, so every pair is `tau_3^(x k)`. Its overlap with
/// the maximally entangled state of local dimension `2^k` is `(2/3)^k`, and
/// twirling (a local operation) turns it into the isotropic state with that
/// singlet fraction, whose nonlocality the LV bound certifies.
pub fn w_copies_verdict(k: u64, variant: LvVariant) -> Result<TransitivityVerdict> {
    if k < 1 || k > 63 {
        return Err(Error::Domain(format!("copies k = {k} outside 1..=63")));
    }
    let f = 2.0 / 3.0;
    let lv = if (k as f64) * 2f64.ln() >= 2.0 {
        let value = bounds::lv_lower_bound(&LvParams { f, d: 2, k, variant })?;
        Some(NonlocalityTest::LvBound { f, d: 2, k, value, nonlocal: value > 1.0 })
    } else {
        None
    };
    let nonlocal = lv.as_ref().is_some_and(NonlocalityTest::nonlocal);
    let steer = f > bounds::steering_threshold(2)?;
    let report = |pair: &str| PairReport {
        pair: pair.into(),
        nonlocal,
        tests: lv.clone().into_iter().collect(),
        ppt: false,
        fef: (k == 1).then_some(f),
        steerable: (k == 1).then_some(steer),
    };
    let ac_status = if nonlocal { AcStatus::ForcedNonlocal } else { AcStatus::Undetermined };
    Ok(TransitivityVerdict {
        inputs_nonlocal: vec![report("AB"), report("BC")],
        ac_status,
        nonlocality_transitive: nonlocal.then_some(true),
        steering_transitive: (k == 1 && steer).then_some(true),
        entanglement_transitive: Some(true),
        evidence: vec![Evidence::ForcedGlobalState { copies: k }, Evidence::ForcedAc { report: report("AC") }],
        provenance: Provenance::Analytic,
        witness: None,
    })
}
