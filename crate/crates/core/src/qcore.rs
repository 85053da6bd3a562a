//! Dense complex linear algebra and state primitives.
//!
//! Basis convention: subsystem 0 is the leftmost tensor factor and
//! multi-indices are flattened row-major, so for dims `[2, 3]` the basis
//! index of `|a b>` is `3 a + b`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const NORM_TOL: f64 = 1e-10;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Seeded generator used by every stochastic routine.
pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for restart/sample `index`; independent of scheduling.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Layout {
    dims: Vec<usize>,
}

impl Layout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Dimension(format!("invalid layout {dims:?}")));
        }
        Ok(Layout { dims })
    }

    pub fn qubits(n: usize) -> Self {
        Layout { dims: vec![2; n] }
    }

    pub fn uniform(d: usize, n: usize) -> Self {
        Layout { dims: vec![d; n] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn concat(&self, other: &Layout) -> Layout {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Layout { dims }
    }

    fn digits(&self, mut index: usize, out: &mut [usize]) {
        for (k, &d) in self.dims.iter().enumerate().rev() {
            out[k] = index % d;
            index /= d;
        }
    }

    fn flatten(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.dims).fold(0, |acc, (&x, &d)| acc * d + x)
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.len() {
            return Err(Error::Dimension(format!(
                "subsystem {k} out of range for {} subsystems",
                self.len()
            )));
        }
        Ok(())
    }

    /// Merges consecutive runs of subsystems; `sizes` must sum to `len()`.
    pub fn regroup(&self, sizes: &[usize]) -> Result<Layout> {
        if sizes.iter().sum::<usize>() != self.len() || sizes.contains(&0) {
            return Err(Error::Dimension(format!(
                "cannot group {} subsystems as {sizes:?}",
                self.len()
            )));
        }
        let mut dims = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for &s in sizes {
            dims.push(self.dims[at..at + s].iter().product());
            at += s;
        }
        Ok(Layout { dims })
    }
}

/// Index table for tracing out the complement of `keep`.
///
/// `full(k, t)` is the ambient basis index whose kept digits flatten to `k`
/// and whose traced digits flatten to `t`.
#[derive(Clone, Debug)]
pub struct TraceMap {
    pub kept: Layout,
    pub kept_dim: usize,
    pub traced_dim: usize,
    index: Vec<usize>,
}

impl TraceMap {
    pub fn new(layout: &Layout, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::Dimension("keep set is empty".into()));
        }
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        for &k in &keep {
            layout.check_index(k)?;
        }
        let traced: Vec<usize> = (0..layout.len()).filter(|k| !keep.contains(k)).collect();
        let kept = Layout { dims: keep.iter().map(|&k| layout.dims[k]).collect() };
        let kept_dim = kept.total();
        let traced_dim = layout.total() / kept_dim;
        let mut index = vec![0; layout.total()];
        let mut digits = vec![0; layout.len()];
        for f in 0..layout.total() {
            layout.digits(f, &mut digits);
            let k = keep.iter().fold(0, |acc, &s| acc * layout.dims[s] + digits[s]);
            let t = traced.iter().fold(0, |acc, &s| acc * layout.dims[s] + digits[s]);
            index[k * traced_dim + t] = f;
        }
        Ok(TraceMap { kept, kept_dim, traced_dim, index })
    }

    pub fn full(&self, k: usize, t: usize) -> usize {
        self.index[k * self.traced_dim + t]
    }

    pub fn apply(&self, m: &CMat) -> CMat {
        let (kd, td) = (self.kept_dim, self.traced_dim);
        CMat::from_fn(kd, kd, |p, q| (0..td).map(|t| m[(self.full(p, t), self.full(q, t))]).sum())
    }
}

/// Partial trace of an arbitrary operator; kept subsystems stay in order.
pub fn partial_trace_matrix(m: &CMat, layout: &Layout, keep: &[usize]) -> Result<CMat> {
    check_square(m, layout)?;
    Ok(TraceMap::new(layout, keep)?.apply(m))
}

pub fn partial_transpose_matrix(m: &CMat, layout: &Layout, sub: usize) -> Result<CMat> {
    check_square(m, layout)?;
    layout.check_index(sub)?;
    let n = layout.total();
    let mut dr = vec![0; layout.len()];
    let mut dc = vec![0; layout.len()];
    let mut out = CMat::zeros(n, n);
    for r in 0..n {
        layout.digits(r, &mut dr);
        for col in 0..n {
            layout.digits(col, &mut dc);
            std::mem::swap(&mut dr[sub], &mut dc[sub]);
            out[(r, col)] = m[(layout.flatten(&dr), layout.flatten(&dc))];
            std::mem::swap(&mut dr[sub], &mut dc[sub]);
        }
    }
    Ok(out)
}

/// Basis map for reordering subsystems: new subsystem `i` is old `perm[i]`.
fn permutation_map(layout: &Layout, perm: &[usize]) -> Result<(Vec<usize>, Layout)> {
    let mut seen = perm.to_vec();
    seen.sort_unstable();
    if seen != (0..layout.len()).collect::<Vec<_>>() {
        return Err(Error::Dimension(format!("{perm:?} is not a permutation")));
    }
    let new = Layout { dims: perm.iter().map(|&p| layout.dims[p]).collect() };
    let mut nd = vec![0; new.len()];
    let mut od = vec![0; layout.len()];
    let map = (0..new.total())
        .map(|i| {
            new.digits(i, &mut nd);
            for (k, &p) in perm.iter().enumerate() {
                od[p] = nd[k];
            }
            layout.flatten(&od)
        })
        .collect();
    Ok((map, new))
}

fn check_square(m: &CMat, layout: &Layout) -> Result<()> {
    let n = layout.total();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!(
            "matrix is {}x{}, layout {:?} needs {n}x{n}",
            m.nrows(),
            m.ncols(),
            layout.dims
        )));
    }
    Ok(())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let e = nalgebra::SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| e.eigenvalues[i].total_cmp(&e.eigenvalues[j]));
    let vals = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(m.nrows(), m.nrows(), |r, k| e.eigenvectors[(r, order[k])]);
    (vals, vecs)
}

pub fn eigvalsh(m: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = nalgebra::SymmetricEigen::new(hermitian_part(m)).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    eigvalsh(m)[0]
}

pub fn max_eigenvalue(m: &CMat) -> f64 {
    *eigvalsh(m).last().unwrap()
}

/// `f` applied to the spectrum of a Hermitian matrix.
pub fn spectral_map(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for k in 0..n {
        let s = c(f(vals[k]));
        for z in scaled.column_mut(k).iter_mut() {
            *z *= s;
        }
    }
    &scaled * vecs.adjoint()
}

pub fn psd_sqrt(m: &CMat) -> CMat {
    spectral_map(m, |x| x.max(0.0).sqrt())
}

/// Haar-random unitary: QR of a Ginibre matrix with the phase fix.
pub fn haar_unitary<R: Rng>(d: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(d, d, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..d {
        let rk = r[(k, k)];
        let phase = if rk.norm() > 0.0 { rk / rk.norm() } else { c(1.0) };
        for i in 0..d {
            q[(i, k)] *= phase;
        }
    }
    q
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    amps: CVec,
    layout: Layout,
}

impl Ket {
    pub fn new(amps: CVec, layout: Layout) -> Result<Self> {
        if amps.len() != layout.total() {
            return Err(Error::Dimension(format!(
                "{} amplitudes for layout {:?}",
                amps.len(),
                layout.dims
            )));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("ket norm {norm}")));
        }
        Ok(Ket { amps, layout })
    }

    pub fn normalized(amps: CVec, layout: Layout) -> Result<Self> {
        let norm = amps.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite vector".into()));
        }
        Ket::new(amps.unscale(norm), layout)
    }

    /// Unnormalized real amplitudes given as `(basis digits, weight)`.
    pub fn from_terms(layout: Layout, terms: &[(&[usize], C64)]) -> Result<Self> {
        let mut amps = CVec::zeros(layout.total());
        for (digits, w) in terms {
            if digits.len() != layout.len() || digits.iter().zip(&layout.dims).any(|(x, d)| x >= d) {
                return Err(Error::Dimension(format!("basis label {digits:?}")));
            }
            amps[layout.flatten(digits)] += *w;
        }
        Ket::normalized(amps, layout)
    }

    pub fn basis(layout: Layout, index: usize) -> Result<Self> {
        if index >= layout.total() {
            return Err(Error::Dimension(format!("basis index {index}")));
        }
        let mut amps = CVec::zeros(layout.total());
        amps[index] = c(1.0);
        Ok(Ket { amps, layout })
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amps
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn inner(&self, other: &Ket) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn kron(&self, other: &Ket) -> Ket {
        Ket { amps: self.amps.kronecker(&other.amps), layout: self.layout.concat(&other.layout) }
    }

    pub fn projector(&self) -> DensityOp {
        DensityOp { matrix: &self.amps * self.amps.adjoint(), layout: self.layout.clone() }
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Ket> {
        let (map, layout) = permutation_map(&self.layout, perm)?;
        Ok(Ket { amps: CVec::from_fn(map.len(), |i, _| self.amps[map[i]]), layout })
    }

    pub fn regroup(&self, sizes: &[usize]) -> Result<Ket> {
        Ok(Ket { amps: self.amps.clone(), layout: self.layout.regroup(sizes)? })
    }

    pub fn with_layout(&self, layout: Layout) -> Result<Ket> {
        Ket::new(self.amps.clone(), layout)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityOp {
    matrix: CMat,
    layout: Layout,
}

impl DensityOp {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: CMat, layout: Layout) -> Result<Self> {
        check_square(&matrix, &layout)?;
        let herm = max_abs(&(&matrix - matrix.adjoint()));
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:.2e})")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let lo = min_eigenvalue(&matrix);
        if lo < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {lo:.3e}")));
        }
        Ok(DensityOp { matrix: hermitian_part(&matrix), layout })
    }

    /// Hermitizes, clips eigenvalues below zero and renormalizes.
    ///
    /// Accepts matrices whose negative eigenvalues are at most `tol` relative
    /// to the trace, the usual condition for solver output.
    pub fn from_noisy(matrix: CMat, layout: Layout, tol: f64) -> Result<Self> {
        check_square(&matrix, &layout)?;
        let h = hermitian_part(&matrix);
        let tr = h.trace().re;
        if !(tr > 0.0) {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let (vals, _) = eigh(&h);
        if vals[0] < -tol * tr {
            return Err(Error::InvalidState(format!("negative eigenvalue {:.3e}", vals[0])));
        }
        let clipped = if vals[0] < 0.0 { spectral_map(&h, |x| x.max(0.0)) } else { h };
        let tr = clipped.trace().re;
        Ok(DensityOp { matrix: clipped.unscale(tr), layout })
    }

    pub fn maximally_mixed(layout: Layout) -> Self {
        let n = layout.total();
        DensityOp { matrix: CMat::identity(n, n).unscale(n as f64), layout }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn kron(&self, other: &DensityOp) -> DensityOp {
        DensityOp {
            matrix: self.matrix.kronecker(&other.matrix),
            layout: self.layout.concat(&other.layout),
        }
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityOp> {
        let map = TraceMap::new(&self.layout, keep)?;
        Ok(DensityOp { matrix: map.apply(&self.matrix), layout: map.kept })
    }

    pub fn partial_transpose(&self, sub: usize) -> Result<CMat> {
        partial_transpose_matrix(&self.matrix, &self.layout, sub)
    }

    pub fn is_ppt(&self, sub: usize, tol: f64) -> Result<bool> {
        Ok(min_eigenvalue(&self.partial_transpose(sub)?) >= -tol)
    }

    pub fn permute(&self, perm: &[usize]) -> Result<DensityOp> {
        let (map, layout) = permutation_map(&self.layout, perm)?;
        let n = map.len();
        Ok(DensityOp { matrix: CMat::from_fn(n, n, |i, j| self.matrix[(map[i], map[j])]), layout })
    }

    pub fn regroup(&self, sizes: &[usize]) -> Result<DensityOp> {
        Ok(DensityOp { matrix: self.matrix.clone(), layout: self.layout.regroup(sizes)? })
    }

    pub fn with_layout(&self, layout: Layout) -> Result<DensityOp> {
        check_square(&self.matrix, &layout)?;
        Ok(DensityOp { matrix: self.matrix.clone(), layout })
    }

    /// `Re tr(rho op)`.
    pub fn expectation(&self, op: &CMat) -> f64 {
        self.matrix.iter().zip(op.transpose().iter()).map(|(a, b)| (a * b).re).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigvalsh(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn rank(&self, tol: f64) -> usize {
        self.eigenvalues().iter().filter(|&&v| v > tol).count()
    }

    pub fn distance(&self, other: &DensityOp) -> f64 {
        max_abs(&(&self.matrix - &other.matrix))
    }
}

/// Either kind of state, as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Ket(Ket),
    Density(DensityOp),
}

impl State {
    pub fn layout(&self) -> &Layout {
        match self {
            State::Ket(k) => k.layout(),
            State::Density(r) => r.layout(),
        }
    }

    pub fn to_density(&self) -> DensityOp {
        match self {
            State::Ket(k) => k.projector(),
            State::Density(r) => r.clone(),
        }
    }

    pub fn to_file_format(&self) -> StateFile {
        match self {
            State::Ket(k) => StateFile {
                dims: k.layout.dims.clone(),
                kind: StateKind::Ket,
                re: vec![k.amps.iter().map(|z| z.re).collect()],
                im: vec![k.amps.iter().map(|z| z.im).collect()],
            },
            State::Density(r) => {
                let n = r.dim();
                StateFile {
                    dims: r.layout.dims.clone(),
                    kind: StateKind::Density,
                    re: (0..n).map(|i| (0..n).map(|j| r.matrix[(i, j)].re).collect()).collect(),
                    im: (0..n).map(|i| (0..n).map(|j| r.matrix[(i, j)].im).collect()).collect(),
                }
            }
        }
    }

    pub fn from_file_format(f: &StateFile) -> Result<State> {
        let layout = Layout::new(f.dims.clone())?;
        let n = layout.total();
        let shape = |rows: &[Vec<f64>]| -> Vec<f64> { rows.iter().flatten().copied().collect() };
        let (re, im) = (shape(&f.re), shape(&f.im));
        if re.len() != im.len() {
            return Err(Error::Dimension("re and im sizes differ".into()));
        }
        match f.kind {
            StateKind::Ket => {
                if re.len() != n {
                    return Err(Error::Dimension(format!("{} amplitudes, expected {n}", re.len())));
                }
                let amps = CVec::from_fn(n, |i, _| C64::new(re[i], im[i]));
                Ok(State::Ket(Ket::new(amps, layout)?))
            }
            StateKind::Density => {
                if re.len() != n * n {
                    return Err(Error::Dimension(format!("{} entries, expected {}", re.len(), n * n)));
                }
                let m = CMat::from_fn(n, n, |i, j| C64::new(re[i * n + j], im[i * n + j]));
                Ok(State::Density(DensityOp::new(m, layout)?))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file_format())?)
    }

    pub fn from_json(text: &str) -> Result<State> {
        State::from_file_format(&serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<State> {
        State::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Ket,
    Density,
}

/// On-disk layout. Kets store a single row of amplitudes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateFile {
    pub dims: Vec<usize>,
    pub kind: StateKind,
    #[serde(deserialize_with = "rows")]
    pub re: Vec<Vec<f64>>,
    #[serde(deserialize_with = "rows")]
    pub im: Vec<Vec<f64>>,
}

/// Accepts either a flat list or a list of rows.
fn rows<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<f64>>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Shape {
        Flat(Vec<f64>),
        Nested(Vec<Vec<f64>>),
    }
    Ok(match Shape::deserialize(d)? {
        Shape::Flat(v) => vec![v],
        Shape::Nested(v) => v,
    })
}

/// Kronecker product of same-kind states.
pub fn tensor(factors: &[State]) -> Result<State> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| Error::Invalid("empty factor list".into()))?;
    let mut acc = first.clone();
    for f in rest {
        acc = match (acc, f) {
            (State::Ket(a), State::Ket(b)) => State::Ket(a.kron(b)),
            (State::Density(a), State::Density(b)) => State::Density(a.kron(b)),
            _ => return Err(Error::Invalid("cannot mix kets and density operators".into())),
        };
    }
    Ok(acc)
}

pub fn haar_random_ket(layout: &Layout, seed: u64) -> Ket {
    let mut rng = rng_from_seed(seed);
    haar_random_ket_with(layout, &mut rng)
}

pub fn haar_random_ket_with<R: Rng>(layout: &Layout, rng: &mut R) -> Ket {
    let n = layout.total();
    loop {
        let v = CVec::from_fn(n, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        if let Ok(k) = Ket::normalized(v, layout.clone()) {
            return k;
        }
    }
}

/// `x` with 10 significant digits, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let s = if (-5..10).contains(&mag) {
        format!("{:.*}", (9 - mag).max(0) as usize, x)
    } else {
        return format!("{x:.9e}");
    };
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Uhlmann fidelity `(tr |sqrt(rho) sqrt(sigma)|)^2`.
pub fn fidelity(rho: &DensityOp, sigma: &DensityOp) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension(format!("{} vs {}", rho.dim(), sigma.dim())));
    }
    let s = psd_sqrt(rho.matrix());
    let inner = &s * sigma.matrix() * &s;
    let root: f64 = eigvalsh(&inner).iter().map(|&v| v.max(0.0).sqrt()).sum();
    Ok((root * root).clamp(0.0, 1.0))
}

/// `<psi|rho|psi>`.
pub fn overlap(rho: &DensityOp, psi: &Ket) -> Result<f64> {
    if rho.dim() != psi.dim() {
        return Err(Error::Dimension(format!("{} vs {}", rho.dim(), psi.dim())));
    }
    Ok(psi.amps.dotc(&(rho.matrix() * &psi.amps)).re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits_round_trip() {
        let l = Layout::new(vec![2, 3, 4]).unwrap();
        let mut d = vec![0; 3];
        for i in 0..24 {
            l.digits(i, &mut d);
            assert_eq!(l.flatten(&d), i);
        }
        l.digits(23, &mut d);
        assert_eq!(d, vec![1, 2, 3]);
    }

    #[test]
    fn derive_seed_spreads() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = rng_from_seed(1);
        let u = haar_unitary(4, &mut rng);
        let e = &u.adjoint() * &u - CMat::identity(4, 4);
        assert!(max_abs(&e) < 1e-12);
    }
}
