//! Bell scenarios, correlations, functionals and the see-saw optimizer.

use nalgebra::Matrix3;
use nlt_sdp::{BlockKind, SdpProblem, Sense, Term};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::qcore::{self, c, derive_seed, eigh, CMat, DensityOp, C64};

/// Local-strategy enumeration limit for [`local_bound`].
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

const POVM_TOL: f64 = 1e-9;

/// Party count and outcome count per (party, setting).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    outcomes: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    len: usize,
}

impl Scenario {
    pub fn new(outcomes: Vec<Vec<usize>>) -> Result<Self> {
        if !(2..=3).contains(&outcomes.len()) {
            return Err(Error::Dimension(format!("{} parties; only 2 or 3 supported", outcomes.len())));
        }
        if outcomes.iter().any(|p| p.is_empty() || p.contains(&0)) {
            return Err(Error::Dimension("every party needs >= 1 setting with >= 1 outcome".into()));
        }
        let mut s = Scenario { outcomes, offsets: Vec::new(), len: 0 };
        let combos = s.setting_combos();
        let mut ins = vec![0; s.parties()];
        let mut at = 0;
        for k in 0..combos {
            s.unflatten_settings(k, &mut ins);
            s.offsets.push(at);
            at += s.block_size(&ins);
        }
        s.len = at;
        Ok(s)
    }

    pub fn uniform(parties: usize, settings: usize, outcomes: usize) -> Result<Self> {
        Scenario::new(vec![vec![outcomes; settings]; parties])
    }

    pub fn parties(&self) -> usize {
        self.outcomes.len()
    }

    pub fn settings(&self, party: usize) -> usize {
        self.outcomes[party].len()
    }

    pub fn outcomes(&self, party: usize, setting: usize) -> usize {
        self.outcomes[party][setting]
    }

    pub fn outcome_table(&self) -> &[Vec<usize>] {
        &self.outcomes
    }

    pub fn is_binary(&self) -> bool {
        self.outcomes.iter().flatten().all(|&o| o == 2)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn setting_combos(&self) -> usize {
        (0..self.parties()).map(|p| self.settings(p)).product()
    }

    fn flatten_settings(&self, ins: &[usize]) -> usize {
        ins.iter().enumerate().fold(0, |acc, (p, &x)| acc * self.settings(p) + x)
    }

    fn unflatten_settings(&self, mut k: usize, ins: &mut [usize]) {
        for p in (0..self.parties()).rev() {
            ins[p] = k % self.settings(p);
            k /= self.settings(p);
        }
    }

    fn block_size(&self, ins: &[usize]) -> usize {
        ins.iter().enumerate().map(|(p, &x)| self.outcomes[p][x]).product()
    }

    /// Flat position of `P(outs | ins)`.
    pub fn index(&self, outs: &[usize], ins: &[usize]) -> usize {
        let base = self.offsets[self.flatten_settings(ins)];
        base + outs.iter().enumerate().fold(0, |acc, (p, &a)| acc * self.outcomes[p][ins[p]] + a)
    }

    /// Calls `f(ins, outs, index)` for every table entry in storage order.
    pub fn for_each(&self, mut f: impl FnMut(&[usize], &[usize], usize)) {
        let n = self.parties();
        let mut ins = vec![0; n];
        let mut outs = vec![0; n];
        let mut idx = 0;
        for k in 0..self.setting_combos() {
            self.unflatten_settings(k, &mut ins);
            let size = self.block_size(&ins);
            for mut j in 0..size {
                for p in (0..n).rev() {
                    let o = self.outcomes[p][ins[p]];
                    outs[p] = j % o;
                    j /= o;
                }
                f(&ins, &outs, idx);
                idx += 1;
            }
        }
    }

    /// Scenario of a subset of parties, in the given order.
    pub fn restrict(&self, parties: &[usize]) -> Result<Scenario> {
        Scenario::new(parties.iter().map(|&p| self.outcomes[p].clone()).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Correlation {
    scenario: Scenario,
    table: Vec<f64>,
}

impl Correlation {
    pub fn new(scenario: Scenario, table: Vec<f64>) -> Result<Self> {
        if table.len() != scenario.len() {
            return Err(Error::Dimension(format!("table has {} entries, need {}", table.len(), scenario.len())));
        }
        if let Some(v) = table.iter().find(|v| !v.is_finite() || **v < -POVM_TOL) {
            return Err(Error::Invalid(format!("probability {v} out of range")));
        }
        let p = Correlation { scenario, table };
        let worst = p.normalization_error();
        if worst > 1e-9 {
            return Err(Error::Invalid(format!("normalization off by {worst:.3e}")));
        }
        Ok(p)
    }

    pub fn uniform(scenario: &Scenario) -> Correlation {
        let mut table = vec![0.0; scenario.len()];
        scenario.for_each(|ins, _, i| table[i] = 1.0 / scenario.block_size(ins) as f64);
        Correlation { scenario: scenario.clone(), table }
    }

    /// Deterministic strategy: `strategy[p][x]` is party p's answer to x.
    pub fn deterministic(scenario: &Scenario, strategy: &[Vec<usize>]) -> Correlation {
        let mut table = vec![0.0; scenario.len()];
        scenario.for_each(|ins, outs, i| {
            if outs.iter().enumerate().all(|(p, &a)| strategy[p][ins[p]] == a) {
                table[i] = 1.0;
            }
        });
        Correlation { scenario: scenario.clone(), table }
    }

    /// Convex combination; weights are normalized.
    pub fn mixture(parts: &[(f64, &Correlation)]) -> Result<Correlation> {
        let first = parts.first().ok_or_else(|| Error::Invalid("empty mixture".into()))?.1;
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        let mut table = vec![0.0; first.table.len()];
        for (w, p) in parts {
            if p.scenario != first.scenario {
                return Err(Error::Dimension("mixture of different scenarios".into()));
            }
            for (t, v) in table.iter_mut().zip(&p.table) {
                *t += w / total * v;
            }
        }
        Ok(Correlation { scenario: first.scenario.clone(), table })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn get(&self, outs: &[usize], ins: &[usize]) -> f64 {
        self.table[self.scenario.index(outs, ins)]
    }

    fn normalization_error(&self) -> f64 {
        let mut sums = vec![0.0; self.scenario.setting_combos()];
        self.scenario.for_each(|ins, _, i| sums[self.scenario.flatten_settings(ins)] += self.table[i]);
        sums.iter().fold(0.0, |acc, s| acc.max((s - 1.0).abs()))
    }

    /// Largest change of any party-subset marginal under a change of the
    /// other parties' settings.
    pub fn signaling_deviation(&self) -> f64 {
        let n = self.scenario.parties();
        let mut worst = 0.0f64;
        // For each party q, summing q's outcome must not depend on q's setting.
        for q in 0..n {
            let mut reduced: std::collections::HashMap<(Vec<usize>, Vec<usize>), Vec<f64>> = Default::default();
            self.scenario.for_each(|ins, outs, i| {
                let mut key_in = ins.to_vec();
                let mut key_out = outs.to_vec();
                let x = key_in.remove(q);
                key_out.remove(q);
                let e = reduced
                    .entry((key_in, key_out))
                    .or_insert_with(|| vec![0.0; self.scenario.settings(q)]);
                e[x] += self.table[i];
            });
            for v in reduced.values() {
                let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
                worst = worst.max(hi - lo);
            }
        }
        worst
    }

    pub fn is_nonsignaling(&self, tol: f64) -> bool {
        self.signaling_deviation() <= tol
    }

    /// Marginal on `parties` (in that order); refuses signaling input.
    pub fn marginal_of(&self, parties: &[usize], tol: f64) -> Result<Correlation> {
        let dev = self.signaling_deviation();
        if dev > tol {
            return Err(Error::Signaling(dev));
        }
        let n = self.scenario.parties();
        if parties.iter().any(|&p| p >= n) {
            return Err(Error::Dimension(format!("party index out of range in {parties:?}")));
        }
        let sub = self.scenario.restrict(parties)?;
        let rest: Vec<usize> = (0..n).filter(|p| !parties.contains(p)).collect();
        let mut table = vec![0.0; sub.len()];
        // Fix the other parties' settings at 0 and sum their outcomes.
        self.scenario.for_each(|ins, outs, i| {
            if rest.iter().any(|&p| ins[p] != 0) {
                return;
            }
            let si: Vec<usize> = parties.iter().map(|&p| ins[p]).collect();
            let so: Vec<usize> = parties.iter().map(|&p| outs[p]).collect();
            table[sub.index(&so, &si)] += self.table[i];
        });
        Ok(Correlation { scenario: sub, table })
    }

    /// `P(a|x)` for one party of a nonsignaling correlation.
    pub fn party_marginal(&self, party: usize, a: usize, x: usize) -> f64 {
        let mut s = 0.0;
        self.scenario.for_each(|ins, outs, i| {
            if ins[party] == x && outs[party] == a && ins.iter().enumerate().all(|(p, &v)| p == party || v == 0) {
                s += self.table[i];
            }
        });
        s
    }

    pub fn to_file(&self) -> CorrelationFile {
        let n = self.scenario.parties();
        CorrelationFile {
            parties: n,
            settings: (0..n).map(|p| self.scenario.settings(p)).collect(),
            outcomes: self.scenario.outcomes.clone(),
            p: self.nested(),
        }
    }

    pub fn from_file(f: &CorrelationFile) -> Result<Correlation> {
        if f.outcomes.len() != f.parties || f.settings.len() != f.parties {
            return Err(Error::Dimension("parties, settings and outcomes disagree".into()));
        }
        let outcomes: Vec<Vec<usize>> = f
            .outcomes
            .iter()
            .zip(&f.settings)
            .map(|(o, &m)| if o.len() == 1 && m > 1 { vec![o[0]; m] } else { o.clone() })
            .collect();
        if outcomes.iter().zip(&f.settings).any(|(o, &m)| o.len() != m) {
            return Err(Error::Dimension("outcome list length differs from settings".into()));
        }
        let scenario = Scenario::new(outcomes)?;
        let mut table = vec![0.0; scenario.len()];
        let mut err = None;
        scenario.for_each(|ins, outs, i| {
            let mut v = &f.p;
            for &k in ins.iter().chain(outs) {
                v = match v.get(k) {
                    Some(x) => x,
                    None => {
                        err.get_or_insert_with(|| format!("missing entry at {ins:?} {outs:?}"));
                        return;
                    }
                };
            }
            match v.as_f64() {
                Some(x) => table[i] = x,
                None => {
                    err.get_or_insert_with(|| format!("entry at {ins:?} {outs:?} is not a number"));
                }
            }
        });
        if let Some(e) = err {
            return Err(Error::Invalid(e));
        }
        Correlation::new(scenario, table)
    }

    /// Nested array indexed `[x][y]..[a][b]..`.
    fn nested(&self) -> Value {
        let s = &self.scenario;
        let n = s.parties();
        fn build(c: &Correlation, ins: &mut Vec<usize>, outs: &mut Vec<usize>, n: usize) -> Value {
            let s = &c.scenario;
            if ins.len() < n {
                let p = ins.len();
                return Value::Array(
                    (0..s.settings(p))
                        .map(|x| {
                            ins.push(x);
                            let v = build(c, ins, outs, n);
                            ins.pop();
                            v
                        })
                        .collect(),
                );
            }
            if outs.len() < n {
                let p = outs.len();
                return Value::Array(
                    (0..s.outcomes(p, ins[p]))
                        .map(|a| {
                            outs.push(a);
                            let v = build(c, ins, outs, n);
                            outs.pop();
                            v
                        })
                        .collect(),
                );
            }
            Value::from(c.get(outs, ins))
        }
        build(self, &mut Vec::new(), &mut Vec::new(), n)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Correlation> {
        Correlation::from_file(&serde_json::from_str(text)?)
    }
}

/// On-disk correlation: `P[x][y][a][b]` (tripartite: `P[x][y][z][a][b][c]`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationFile {
    pub parties: usize,
    pub settings: Vec<usize>,
    /// Outcome counts per party and setting; a single entry applies to all settings.
    #[serde(deserialize_with = "outcome_lists")]
    pub outcomes: Vec<Vec<usize>>,
    #[serde(rename = "P")]
    pub p: Value,
}

fn outcome_lists<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<usize>>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entry {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(Vec::<Entry>::deserialize(d)?
        .into_iter()
        .map(|e| match e {
            Entry::One(o) => vec![o],
            Entry::Many(v) => v,
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionalKind {
    Inequality,
    Game,
}

#[derive(Clone, Debug)]
pub struct BellFunctional {
    pub name: String,
    scenario: Scenario,
    coeffs: Vec<f64>,
    local_bound: f64,
    /// False when `local_bound` is only an analytic upper cap.
    pub bound_exact: bool,
    pub kind: FunctionalKind,
}

impl BellFunctional {
    /// Builds a functional and caches its exact local bound.
    pub fn new(name: &str, scenario: Scenario, coeffs: Vec<f64>, kind: FunctionalKind) -> Result<Self> {
        let bound = local_bound_of(&scenario, &coeffs)?;
        BellFunctional::with_bound(name, scenario, coeffs, kind, bound, true)
    }

    pub fn with_bound(
        name: &str,
        scenario: Scenario,
        coeffs: Vec<f64>,
        kind: FunctionalKind,
        local_bound: f64,
        bound_exact: bool,
    ) -> Result<Self> {
        if coeffs.len() != scenario.len() {
            return Err(Error::Dimension(format!("{} coefficients, need {}", coeffs.len(), scenario.len())));
        }
        if kind == FunctionalKind::Game && coeffs.iter().any(|&b| b < 0.0) {
            return Err(Error::Invalid("game coefficients must be nonnegative".into()));
        }
        Ok(BellFunctional { name: name.into(), scenario, coeffs, local_bound, bound_exact, kind })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, outs: &[usize], ins: &[usize]) -> f64 {
        self.coeffs[self.scenario.index(outs, ins)]
    }

    pub fn local_bound(&self) -> f64 {
        self.local_bound
    }

    pub fn value(&self, p: &Correlation) -> Result<f64> {
        if p.scenario != self.scenario {
            return Err(Error::Dimension(format!("functional {} does not match correlation scenario", self.name)));
        }
        Ok(self.coeffs.iter().zip(&p.table).map(|(b, q)| b * q).sum())
    }

    pub fn scaled(&self, lambda: f64) -> BellFunctional {
        BellFunctional {
            name: self.name.clone(),
            scenario: self.scenario.clone(),
            coeffs: self.coeffs.iter().map(|b| b * lambda).collect(),
            local_bound: self.local_bound * lambda,
            bound_exact: self.bound_exact,
            kind: self.kind,
        }
    }

    /// The same functional with the two parties exchanged.
    pub fn swapped(&self) -> Result<BellFunctional> {
        if self.scenario.parties() != 2 {
            return Err(Error::Dimension("swap needs a bipartite functional".into()));
        }
        let scenario = self.scenario.restrict(&[1, 0])?;
        let mut coeffs = vec![0.0; scenario.len()];
        self.scenario.for_each(|ins, outs, i| {
            coeffs[scenario.index(&[outs[1], outs[0]], &[ins[1], ins[0]])] = self.coeffs[i];
        });
        Ok(BellFunctional {
            name: format!("{}^T", self.name),
            scenario,
            coeffs,
            local_bound: self.local_bound,
            bound_exact: self.bound_exact,
            kind: self.kind,
        })
    }
}

/// Exact local bound by deterministic-strategy enumeration.
///
/// All parties but the last are enumerated; the last best-responds. For two
/// parties the one with fewer strategies is enumerated.
pub fn local_bound_of(scenario: &Scenario, coeffs: &[f64]) -> Result<f64> {
    let n = scenario.parties();
    let count = |p: usize| -> u64 {
        scenario.outcomes[p].iter().try_fold(1u64, |acc, &o| acc.checked_mul(o as u64)).unwrap_or(u64::MAX)
    };
    // Order so that the best-responding party is last.
    let mut order: Vec<usize> = (0..n).collect();
    if n == 2 && count(0) > count(1) {
        order = vec![1, 0];
    }
    let responder = *order.last().unwrap();
    let enumerated = &order[..n - 1];
    let total = enumerated
        .iter()
        .try_fold(1u64, |acc, &p| acc.checked_mul(count(p)))
        .unwrap_or(u64::MAX);
    if total > ENUMERATION_LIMIT {
        return Err(Error::Capacity(format!(
            "{total} deterministic strategies exceed the enumeration limit {ENUMERATION_LIMIT}"
        )));
    }
    // Coefficients grouped by the responder's setting: entries (ins, outs, beta).
    let mut by_setting: Vec<Vec<(Vec<usize>, Vec<usize>, f64)>> = vec![Vec::new(); scenario.settings(responder)];
    scenario.for_each(|ins, outs, i| {
        if coeffs[i] != 0.0 {
            by_setting[ins[responder]].push((ins.to_vec(), outs.to_vec(), coeffs[i]));
        }
    });
    let mut strategy: Vec<Vec<usize>> = (0..n).map(|p| vec![0; scenario.settings(p)]).collect();
    let mut best = f64::NEG_INFINITY;
    let mut scores: Vec<f64> = Vec::new();
    for _ in 0..total {
        let mut value = 0.0;
        for (z, entries) in by_setting.iter().enumerate() {
            scores.clear();
            scores.resize(scenario.outcomes(responder, z), 0.0);
            for (ins, outs, b) in entries {
                if enumerated.iter().all(|&p| strategy[p][ins[p]] == outs[p]) {
                    scores[outs[responder]] += b;
                }
            }
            value += scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        best = best.max(value);
        // odometer over the enumerated parties' strategies
        'advance: for &p in enumerated.iter().rev() {
            for x in (0..scenario.settings(p)).rev() {
                strategy[p][x] += 1;
                if strategy[p][x] < scenario.outcomes(p, x) {
                    break 'advance;
                }
                strategy[p][x] = 0;
            }
        }
    }
    Ok(best)
}

pub fn local_bound(f: &BellFunctional) -> Result<f64> {
    local_bound_of(&f.scenario, &f.coeffs)
}

pub fn chsh() -> BellFunctional {
    let s = Scenario::uniform(2, 2, 2).unwrap();
    let mut coeffs = vec![0.0; s.len()];
    s.for_each(|ins, outs, i| {
        coeffs[i] = if (outs[0] + outs[1] + ins[0] * ins[1]) % 2 == 0 { 1.0 } else { -1.0 };
    });
    BellFunctional::with_bound("chsh", s, coeffs, FunctionalKind::Inequality, 2.0, true).unwrap()
}

/// CHSH on settings 0 and 1 of an `m`-setting binary scenario.
pub fn lifted_chsh(m: usize) -> Result<BellFunctional> {
    if m < 2 {
        return Err(Error::Domain("lifted CHSH needs >= 2 settings".into()));
    }
    let s = Scenario::uniform(2, m, 2)?;
    let mut coeffs = vec![0.0; s.len()];
    s.for_each(|ins, outs, i| {
        if ins[0] < 2 && ins[1] < 2 {
            coeffs[i] = if (outs[0] + outs[1] + ins[0] * ins[1]) % 2 == 0 { 1.0 } else { -1.0 };
        }
    });
    BellFunctional::with_bound(&format!("chsh@{m}"), s, coeffs, FunctionalKind::Inequality, 2.0, true)
}

/// I3322 in Collins-Gisin form, local bound 0:
/// `p(00|00)+p(00|01)+p(00|02)+p(00|10)+p(00|11)-p(00|12)+p(00|20)-p(00|21)
///  - pA(0|0) - 2 pB(0|0) - pB(0|1)`.
/// Single-party terms are spread evenly over the other party's settings.
pub fn i3322() -> BellFunctional {
    let s = Scenario::uniform(2, 3, 2).unwrap();
    let joint = [[1.0, 1.0, 1.0], [1.0, 1.0, -1.0], [1.0, -1.0, 0.0]];
    let alice = [-1.0, 0.0, 0.0];
    let bob = [-2.0, -1.0, 0.0];
    let mut coeffs = vec![0.0; s.len()];
    s.for_each(|ins, outs, i| {
        let (x, y) = (ins[0], ins[1]);
        let mut b = 0.0;
        if outs[0] == 0 && outs[1] == 0 {
            b += joint[x][y];
        }
        if outs[0] == 0 {
            b += alice[x] / 3.0;
        }
        if outs[1] == 0 {
            b += bob[y] / 3.0;
        }
        coeffs[i] = b;
    });
    BellFunctional::with_bound("i3322", s, coeffs, FunctionalKind::Inequality, 0.0, true).unwrap()
}

/// Four-setting, four-outcome extension of CHSH:
/// `sum (-1)^(a1 + b2 + x1 y2) P(a1 a2, b1 b2 | x1 x2, y1 y2)` with
/// setting `x = 2 x1 + x2` and outcome `a = 2 a1 + a2`. Local bound 8.
pub fn s_ext() -> BellFunctional {
    let s = Scenario::uniform(2, 4, 4).unwrap();
    let mut coeffs = vec![0.0; s.len()];
    s.for_each(|ins, outs, i| {
        let (x1, y2) = (ins[0] / 2, ins[1] % 2);
        let (a1, b2) = (outs[0] / 2, outs[1] % 2);
        coeffs[i] = if (a1 + b2 + x1 * y2) % 2 == 0 { 1.0 } else { -1.0 };
    });
    BellFunctional::new("s_ext", s, coeffs, FunctionalKind::Inequality).unwrap()
}

/// Parses `chsh`, `i3322`, `i3322t` (parties swapped), `s_ext`, `chsh3`
/// (CHSH lifted to three settings) or `kv(l,eta)`.
pub fn make_functional(name: &str) -> Result<BellFunctional> {
    let key = name.trim().to_ascii_lowercase();
    match key.as_str() {
        "chsh" => Ok(chsh()),
        "chsh3" => lifted_chsh(3),
        "i3322" => Ok(i3322()),
        "i3322t" => i3322().swapped(),
        "s_ext" | "s-ext" | "s" => Ok(s_ext()),
        _ => {
            if let Some(args) = key.strip_prefix("kv(").and_then(|r| r.strip_suffix(')')) {
                let mut it = args.split(',').map(str::trim);
                let ell = it.next().and_then(|v| v.parse::<u32>().ok());
                let eta = it.next().and_then(|v| v.parse::<f64>().ok());
                if let (Some(ell), Some(eta), None) = (ell, eta, it.next()) {
                    let inst = crate::kvgame::build_kv_instance(ell, eta)?;
                    return crate::kvgame::kv_functional(&inst);
                }
            }
            Err(Error::Domain(format!("unknown functional {name}")))
        }
    }
}

/// Local measurements: `povms[party][setting][outcome]`.
#[derive(Clone, Debug)]
pub struct Assemblage {
    povms: Vec<Vec<Vec<CMat>>>,
}

impl Assemblage {
    pub fn new(povms: Vec<Vec<Vec<CMat>>>) -> Result<Self> {
        for (p, party) in povms.iter().enumerate() {
            let d = party
                .first()
                .and_then(|s| s.first())
                .map(|e| e.nrows())
                .ok_or_else(|| Error::InvalidPovm(format!("party {p} has no effects")))?;
            for (x, povm) in party.iter().enumerate() {
                let mut sum = CMat::zeros(d, d);
                for e in povm {
                    if e.nrows() != d || e.ncols() != d {
                        return Err(Error::InvalidPovm(format!("party {p} setting {x}: mixed dimensions")));
                    }
                    if qcore::max_abs(&(e - e.adjoint())) > POVM_TOL {
                        return Err(Error::InvalidPovm(format!("party {p} setting {x}: non-Hermitian effect")));
                    }
                    if qcore::min_eigenvalue(e) < -POVM_TOL {
                        return Err(Error::InvalidPovm(format!("party {p} setting {x}: effect not PSD")));
                    }
                    sum += e;
                }
                if qcore::max_abs(&(sum - CMat::identity(d, d))) > POVM_TOL {
                    return Err(Error::InvalidPovm(format!("party {p} setting {x}: effects do not sum to I")));
                }
            }
        }
        Ok(Assemblage { povms })
    }

    /// Dichotomic measurements from +-1 observables: `M_0 = (I + O)/2`.
    pub fn from_observables(observables: Vec<Vec<CMat>>) -> Result<Self> {
        let povms = observables
            .into_iter()
            .map(|party| {
                party
                    .into_iter()
                    .map(|o| {
                        let id = CMat::identity(o.nrows(), o.nrows());
                        vec![(&id + &o) * c(0.5), (&id - &o) * c(0.5)]
                    })
                    .collect()
            })
            .collect();
        Assemblage::new(povms)
    }

    /// Product measurements `M_(a1 a2 | x1 x2) = M1_(a1|x1) (x) M2_(a2|x2)`
    /// with combined indices `x = x1 * m2 + x2`, `a = a1 * o2 + a2`.
    pub fn product_party(first: &[Vec<CMat>], second: &[Vec<CMat>]) -> Vec<Vec<CMat>> {
        let mut out = Vec::new();
        for p in first {
            for q in second {
                let mut povm = Vec::new();
                for e in p {
                    for f in q {
                        povm.push(e.kronecker(f));
                    }
                }
                out.push(povm);
            }
        }
        out
    }

    /// Random projective measurements: a Haar basis per setting split
    /// among the outcomes at random.
    pub fn random_projective<R: rand::Rng>(dims: &[usize], scenario: &Scenario, rng: &mut R) -> Assemblage {
        let povms = dims
            .iter()
            .enumerate()
            .map(|(p, &d)| {
                (0..scenario.settings(p))
                    .map(|x| random_projective_povm(d, scenario.outcomes(p, x), rng))
                    .collect()
            })
            .collect();
        Assemblage { povms }
    }

    pub fn parties(&self) -> usize {
        self.povms.len()
    }

    pub fn party(&self, p: usize) -> &[Vec<CMat>] {
        &self.povms[p]
    }

    pub fn effect(&self, party: usize, setting: usize, outcome: usize) -> &CMat {
        &self.povms[party][setting][outcome]
    }

    pub fn dim(&self, party: usize) -> usize {
        self.povms[party][0][0].nrows()
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::new(self.povms.iter().map(|p| p.iter().map(|s| s.len()).collect()).collect())
    }

    pub fn into_parts(self) -> Vec<Vec<Vec<CMat>>> {
        self.povms
    }
}

fn random_projective_povm<R: rand::Rng>(d: usize, outcomes: usize, rng: &mut R) -> Vec<CMat> {
    let u = qcore::haar_unitary(d, rng);
    let mut effects = vec![CMat::zeros(d, d); outcomes];
    // Distinct outcomes for the first min(d, o) vectors so no effect is
    // trivially zero when d >= o; the rest are uniform.
    let mut labels: Vec<usize> = (0..outcomes).collect();
    labels.shuffle(rng);
    for k in 0..d {
        let a = if k < outcomes { labels[k] } else { rng.random_range(0..outcomes) };
        let v = u.column(k);
        effects[a] += &v * v.adjoint();
    }
    effects
}

/// `M[u, v] = sum_{i,i'} A[i', i] rho[(i, u), (i', v)]`, so that
/// `tr((A (x) X) rho) = tr(X M)`.
pub(crate) fn contract_first(rho: &CMat, da: usize, a: &CMat) -> CMat {
    let dr = rho.nrows() / da;
    let mut m = CMat::zeros(dr, dr);
    for i in 0..da {
        for ip in 0..da {
            let w = a[(ip, i)];
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            let blk = rho.view((i * dr, ip * dr), (dr, dr));
            m.zip_apply(&blk, |x, y| *x += w * y);
        }
    }
    m
}

/// `N[u, v] = sum_{j,j'} B[j', j] rho[(u, j), (v, j')]`, so that
/// `tr((X (x) B) rho) = tr(X N)`.
pub(crate) fn contract_last(rho: &CMat, db: usize, b: &CMat) -> CMat {
    let dr = rho.nrows() / db;
    CMat::from_fn(dr, dr, |u, v| {
        let mut s = C64::new(0.0, 0.0);
        for j in 0..db {
            for jp in 0..db {
                s += b[(jp, j)] * rho[(u * db + j, v * db + jp)];
            }
        }
        s
    })
}

fn trace_product(x: &CMat, m: &CMat) -> f64 {
    // Re tr(X M)
    let n = x.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += (x[(i, j)] * m[(j, i)]).re;
        }
    }
    s
}

/// Born-rule correlation `tr(rho (x)_p M_p)`; `rho` has one subsystem per party.
pub fn born_correlation(rho: &DensityOp, asm: &Assemblage) -> Result<Correlation> {
    let dims = rho.layout().dims();
    if dims.len() != asm.parties() {
        return Err(Error::Dimension(format!("state has {} subsystems, assemblage {} parties", dims.len(), asm.parties())));
    }
    for (p, &d) in dims.iter().enumerate() {
        if asm.dim(p) != d {
            return Err(Error::Dimension(format!("party {p}: state dim {d}, effects dim {}", asm.dim(p))));
        }
    }
    let scenario = asm.scenario()?;
    let mut table = vec![0.0; scenario.len()];
    let m = rho.matrix();
    match dims.len() {
        2 => {
            for x in 0..scenario.settings(0) {
                for (a, ea) in asm.party(0)[x].iter().enumerate() {
                    let r = contract_first(m, dims[0], ea);
                    for y in 0..scenario.settings(1) {
                        for (b, eb) in asm.party(1)[y].iter().enumerate() {
                            table[scenario.index(&[a, b], &[x, y])] = trace_product(eb, &r);
                        }
                    }
                }
            }
        }
        _ => {
            for x in 0..scenario.settings(0) {
                for (a, ea) in asm.party(0)[x].iter().enumerate() {
                    let r = contract_first(m, dims[0], ea);
                    for y in 0..scenario.settings(1) {
                        for (b, eb) in asm.party(1)[y].iter().enumerate() {
                            let s = contract_first(&r, dims[1], eb);
                            for z in 0..scenario.settings(2) {
                                for (cc, ec) in asm.party(2)[z].iter().enumerate() {
                                    table[scenario.index(&[a, b, cc], &[x, y, z])] = trace_product(ec, &s);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    for v in table.iter_mut() {
        if *v < 0.0 && *v > -1e-12 {
            *v = 0.0;
        }
    }
    Correlation::new(scenario, table)
}

fn pauli() -> [CMat; 3] {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    [
        CMat::from_row_slice(2, 2, &[z, one, one, z]),
        CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        CMat::from_row_slice(2, 2, &[one, z, z, -one]),
    ]
}

/// Correlation matrix `T_ij = tr(rho sigma_i (x) sigma_j)` of a two-qubit state.
pub fn correlation_matrix(rho: &DensityOp) -> Result<Matrix3<f64>> {
    if rho.layout().dims() != [2, 2] {
        return Err(Error::Dimension(format!("need a 2x2 layout, got {:?}", rho.layout().dims())));
    }
    let s = pauli();
    Ok(Matrix3::from_fn(|i, j| rho.expectation(&s[i].kronecker(&s[j]))))
}

/// Maximal CHSH value over dichotomic observables:
/// `2 sqrt(u1 + u2)` with `u1 >= u2` the top eigenvalues of `T^T T`.
pub fn horodecki_chsh(rho: &DensityOp) -> Result<f64> {
    let t = correlation_matrix(rho)?;
    let mut u: Vec<f64> = (t.transpose() * t).symmetric_eigenvalues().iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    Ok(2.0 * (u[0] + u[1]).max(0.0).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    /// `Sign` for binary scenarios, `Povm` otherwise.
    Auto,
    /// Projector onto the nonnegative eigenspace of `K_0 - K_1`. Binary only.
    Sign,
    /// Per-party SDP over general POVMs.
    Povm,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeesawOptions {
    pub restarts: usize,
    pub max_sweeps: usize,
    pub tol: f64,
    pub seed: u64,
    pub rule: UpdateRule,
}

impl Default for SeesawOptions {
    fn default() -> Self {
        SeesawOptions { restarts: 36, max_sweeps: 500, tol: 1e-8, seed: 0, rule: UpdateRule::Auto }
    }
}

#[derive(Clone, Debug)]
pub struct SeesawRun {
    pub value: f64,
    pub assemblage: Assemblage,
    pub seed: u64,
    pub sweeps: usize,
    pub converged: bool,
    /// Value after every sweep.
    pub history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SeesawResult {
    pub value: f64,
    pub assemblage: Assemblage,
    /// Seed of the best restart.
    pub seed: u64,
    /// Index of the best restart; `restarts` means the deterministic start.
    pub restart: usize,
    /// False if the best restart hit `max_sweeps`.
    pub converged: bool,
    pub rule: UpdateRule,
    /// Best value of every restart, in restart order.
    pub values: Vec<f64>,
    /// Value of the run started from Bob's optimal deterministic strategy,
    /// when that strategy could be enumerated. It is at least the local bound.
    pub deterministic: Option<f64>,
}

fn check_seesaw_input(rho: &DensityOp, f: &BellFunctional) -> Result<(usize, usize)> {
    let dims = rho.layout().dims();
    if dims.len() != 2 || f.scenario().parties() != 2 {
        return Err(Error::Dimension("see-saw needs a bipartite state and functional".into()));
    }
    Ok((dims[0], dims[1]))
}

fn resolve_rule(rule: UpdateRule, f: &BellFunctional) -> Result<UpdateRule> {
    match rule {
        UpdateRule::Auto if f.scenario().is_binary() => Ok(UpdateRule::Sign),
        UpdateRule::Auto => Ok(UpdateRule::Povm),
        UpdateRule::Sign if !f.scenario().is_binary() => {
            Err(Error::Invalid("sign update needs binary outcomes".into()))
        }
        r => Ok(r),
    }
}

/// Best see-saw value over `opts.restarts` seeded restarts plus one run
/// from a deterministic local strategy, so the result is at least the local bound.
pub fn seesaw_optimize(rho: &DensityOp, f: &BellFunctional, opts: &SeesawOptions) -> Result<SeesawResult> {
    let (da, db) = check_seesaw_input(rho, f)?;
    let rule = resolve_rule(opts.rule, f)?;
    if opts.restarts == 0 {
        return Err(Error::Domain("restarts must be >= 1".into()));
    }
    let runs: Vec<Result<SeesawRun>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(opts.seed, r as u64);
            let mut rng = qcore::rng_from_seed(seed);
            let init = Assemblage::random_projective(&[da, db], f.scenario(), &mut rng);
            seesaw_run(rho, f, init, rule, opts.max_sweeps, opts.tol, seed)
        })
        .collect();
    let mut best: Option<(usize, SeesawRun)> = None;
    let mut values = Vec::with_capacity(runs.len());
    for (r, run) in runs.into_iter().enumerate() {
        let run = run?;
        values.push(run.value);
        if best.as_ref().is_none_or(|(_, b)| run.value > b.value) {
            best = Some((r, run));
        }
    }
    let mut deterministic = None;
    if let Some(init) = deterministic_start(f, da, db) {
        let run = seesaw_run(rho, f, init, rule, opts.max_sweeps, opts.tol, derive_seed(opts.seed, opts.restarts as u64))?;
        deterministic = Some(run.value);
        if best.as_ref().is_none_or(|(_, b)| run.value > b.value) {
            best = Some((opts.restarts, run));
        }
    }
    let (restart, run) = best.unwrap();
    Ok(SeesawResult {
        value: run.value,
        assemblage: run.assemblage,
        seed: run.seed,
        restart,
        converged: run.converged,
        rule,
        values,
        deterministic,
    })
}

/// Measurements where Bob plays his half of an optimal deterministic local
/// strategy. Alice's effects are placeholders: the see-saw updates her first.
/// `None` if Bob's strategies exceed [`ENUMERATION_LIMIT`].
fn deterministic_start(f: &BellFunctional, da: usize, db: usize) -> Option<Assemblage> {
    let s = f.scenario();
    let total = (0..s.settings(1)).try_fold(1u64, |acc, y| acc.checked_mul(s.outcomes(1, y) as u64))?;
    if total > ENUMERATION_LIMIT {
        return None;
    }
    let mut strategy = vec![0; s.settings(1)];
    let mut best = (f64::NEG_INFINITY, strategy.clone());
    for _ in 0..total {
        let value: f64 = (0..s.settings(0))
            .map(|x| {
                (0..s.outcomes(0, x))
                    .map(|a| (0..s.settings(1)).map(|y| f.coeff(&[a, strategy[y]], &[x, y])).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum();
        if value > best.0 {
            best = (value, strategy.clone());
        }
        for y in (0..s.settings(1)).rev() {
            strategy[y] += 1;
            if strategy[y] < s.outcomes(1, y) {
                break;
            }
            strategy[y] = 0;
        }
    }
    let fixed = |d: usize, o: usize, hit: usize| -> Vec<CMat> {
        (0..o).map(|b| if b == hit { CMat::identity(d, d) } else { CMat::zeros(d, d) }).collect()
    };
    let alice = (0..s.settings(0)).map(|x| fixed(da, s.outcomes(0, x), 0)).collect();
    let bob = (0..s.settings(1)).map(|y| fixed(db, s.outcomes(1, y), best.1[y])).collect();
    Some(Assemblage { povms: vec![alice, bob] })
}

/// One see-saw descent from given measurements. Only Bob's part of `init`
/// matters: Alice is optimized first.
pub fn seesaw_run(
    rho: &DensityOp,
    f: &BellFunctional,
    init: Assemblage,
    rule: UpdateRule,
    max_sweeps: usize,
    tol: f64,
    seed: u64,
) -> Result<SeesawRun> {
    let (da, db) = check_seesaw_input(rho, f)?;
    let rule = resolve_rule(rule, f)?;
    let s = f.scenario().clone();
    let m = rho.matrix();
    let mut parts = init.into_parts();
    if parts.len() != 2 || parts[1].len() != s.settings(1) {
        return Err(Error::Dimension("initial assemblage does not match the functional".into()));
    }
    // SDP updates are only accurate to the solver gap.
    let slack = if rule == UpdateRule::Povm { 1e-6 } else { 1e-10 };
    let stop = tol.max(if rule == UpdateRule::Povm { 1e-6 } else { 0.0 });
    let mut history = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        // Alice given Bob.
        let nb: Vec<Vec<CMat>> = parts[1]
            .iter()
            .map(|povm| povm.iter().map(|e| contract_last(m, db, e)).collect())
            .collect();
        let mut alice = Vec::with_capacity(s.settings(0));
        for x in 0..s.settings(0) {
            let ops: Vec<CMat> = (0..s.outcomes(0, x))
                .map(|a| {
                    let mut k = CMat::zeros(da, da);
                    for y in 0..s.settings(1) {
                        for b in 0..s.outcomes(1, y) {
                            let beta = f.coeff(&[a, b], &[x, y]);
                            if beta != 0.0 {
                                k += &nb[y][b] * c(beta);
                            }
                        }
                    }
                    k
                })
                .collect();
            alice.push(best_povm(&ops, rule)?.0);
        }
        parts[0] = alice;
        // Bob given Alice.
        let ma: Vec<Vec<CMat>> = parts[0]
            .iter()
            .map(|povm| povm.iter().map(|e| contract_first(m, da, e)).collect())
            .collect();
        let mut bob = Vec::with_capacity(s.settings(1));
        let mut value = 0.0;
        for y in 0..s.settings(1) {
            let ops: Vec<CMat> = (0..s.outcomes(1, y))
                .map(|b| {
                    let mut k = CMat::zeros(db, db);
                    for x in 0..s.settings(0) {
                        for a in 0..s.outcomes(0, x) {
                            let beta = f.coeff(&[a, b], &[x, y]);
                            if beta != 0.0 {
                                k += &ma[x][a] * c(beta);
                            }
                        }
                    }
                    k
                })
                .collect();
            let (povm, v) = best_povm(&ops, rule)?;
            value += v;
            bob.push(povm);
        }
        parts[1] = bob;
        debug_assert!(value >= prev - slack, "see-saw value decreased: {prev} -> {value}");
        history.push(value);
        if value - prev < stop {
            converged = true;
            prev = prev.max(value);
            break;
        }
        prev = value;
    }
    let assemblage = Assemblage::new(parts)?;
    Ok(SeesawRun { value: prev, assemblage, seed, sweeps, converged, history })
}

/// POVM maximizing `sum_a tr(M_a K_a)`, and that maximum.
fn best_povm(ops: &[CMat], rule: UpdateRule) -> Result<(Vec<CMat>, f64)> {
    match rule {
        UpdateRule::Sign => {
            let (vals, vecs) = eigh(&(&ops[0] - &ops[1]));
            let d = vals.len();
            let mut plus = CMat::zeros(d, d);
            for (k, &v) in vals.iter().enumerate() {
                if v >= -1e-12 {
                    let col = vecs.column(k);
                    plus += &col * col.adjoint();
                }
            }
            let minus = CMat::identity(d, d) - &plus;
            let value = trace_product(&plus, &ops[0]) + trace_product(&minus, &ops[1]);
            Ok((vec![plus, minus], value))
        }
        _ => povm_sdp(ops),
    }
}

fn povm_sdp(ops: &[CMat]) -> Result<(Vec<CMat>, f64)> {
    let d = ops[0].nrows();
    let o = ops.len();
    let mut p = SdpProblem::new(Sense::Maximize);
    let blocks: Vec<usize> = (0..o).map(|_| p.add_block(BlockKind::Hermitian(d))).collect();
    let id = CMat::identity(d, d);
    p.pin_hermitian(&id, |r, q| blocks.iter().map(|&b| (b, r, q, c(1.0))).collect());
    for (b, k) in blocks.iter().zip(ops) {
        p.add_objective(Term::trace_with(*b, k));
    }
    p.trace_bound = Some(d as f64);
    let sol = p.solve()?;
    if !sol.is_optimal() {
        return Err(Error::Invalid(format!("POVM update SDP returned {:?}", sol.status)));
    }
    // Clip and re-normalize so the effects sum to I exactly.
    let raw: Vec<CMat> = blocks
        .iter()
        .map(|&b| qcore::spectral_map(&sol.block(b).to_complex(), |x| x.max(0.0)))
        .collect();
    let total = raw.iter().fold(CMat::zeros(d, d), |acc, e| acc + e);
    let inv_sqrt = qcore::spectral_map(&total, |x| 1.0 / x.max(1e-300).sqrt());
    let effects: Vec<CMat> = raw.iter().map(|e| qcore::hermitian_part(&(&inv_sqrt * e * &inv_sqrt))).collect();
    let value = effects.iter().zip(ops).map(|(e, k)| trace_product(e, k)).sum();
    Ok((effects, value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chsh_local_bound_by_enumeration() {
        let f = chsh();
        assert_eq!(local_bound(&f).unwrap(), 2.0);
    }

    #[test]
    fn index_matches_iteration_order() {
        let s = Scenario::new(vec![vec![2, 3], vec![4]]).unwrap();
        let mut n = 0;
        s.for_each(|ins, outs, i| {
            assert_eq!(s.index(outs, ins), i);
            n += 1;
        });
        assert_eq!(n, s.len());
        assert_eq!(s.len(), 2 * 4 + 3 * 4);
    }
}
