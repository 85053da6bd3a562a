//! Haar-random three-qudit scan: how many of the three two-party marginals
//! of a random pure state violate a Bell inequality.
//!
//! Sample `i` uses seed `derive_seed(base_seed, i)`; its ket, every pair's
//! see-saw and every restart derive their seeds from it, so records do not
//! depend on scheduling or on how a run was split by resumes.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellopt::{chsh, make_functional, seesaw_optimize, SeesawOptions, UpdateRule};
use crate::error::{Error, Result};
use crate::qcore::{derive_seed, fmt_sig, haar_random_ket, Ket, Layout};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_FILE: &str = "scan_config.json";
pub const SUMMARY_HEADER: &str = "d,M,samples,guesses,none_pct,one_pct,two_pct,all_pct";

/// Restart counts per `(d, M)`.
pub fn default_guesses(d: usize, m: usize) -> usize {
    match (d, m) {
        (2, 2) => 36,
        (2, _) => 81,
        (3, 2) => 256,
        (3, _) => 576,
        (4, 2) => 900,
        (4, _) => 2056,
        (_, 2) => 2304,
        _ => 5184,
    }
}

pub fn default_samples(d: usize) -> usize {
    match d {
        0..=3 => 2000,
        4 => 500,
        _ => 100,
    }
}

/// `chsh` for two settings; lifted CHSH and both I3322 orientations for three.
pub fn default_inequalities(m: usize) -> Vec<String> {
    match m {
        2 => vec!["chsh".into()],
        _ => vec!["chsh3".into(), "i3322".into(), "i3322t".into()],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub d: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub samples: usize,
    /// See-saw restarts per pair and inequality.
    pub guesses: usize,
    pub base_seed: u64,
    pub inequalities: Vec<String>,
    pub tol: f64,
    pub max_sweeps: usize,
    pub sweep_tol: f64,
    /// Samples per checkpoint.
    pub batch: usize,
}

impl ScanConfig {
    pub fn new(d: usize, m: usize, base_seed: u64) -> Result<Self> {
        let cfg = ScanConfig {
            d,
            m,
            samples: default_samples(d),
            guesses: default_guesses(d, m),
            base_seed,
            inequalities: default_inequalities(m),
            tol: 1e-6,
            max_sweeps: 500,
            sweep_tol: 1e-8,
            batch: 50,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=5).contains(&self.d) {
            return Err(Error::Domain(format!("d = {} outside 2..=5", self.d)));
        }
        if !(2..=3).contains(&self.m) {
            return Err(Error::Domain(format!("M = {} outside 2..=3", self.m)));
        }
        if self.guesses == 0 || self.batch == 0 || self.inequalities.is_empty() {
            return Err(Error::Domain("guesses, batch and inequalities must be nonempty".into()));
        }
        for name in &self.inequalities {
            let f = make_functional(name)?;
            let s = f.scenario();
            if s.parties() != 2 || !s.is_binary() || s.settings(0).max(s.settings(1)) > self.m {
                return Err(Error::Domain(format!("{name} is not a two-outcome inequality with <= {} settings", self.m)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    None,
    One,
    Two,
    All,
}

impl Classification {
    pub fn from_count(n: usize) -> Self {
        match n {
            0 => Classification::None,
            1 => Classification::One,
            2 => Classification::Two,
            _ => Classification::All,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub pair: String,
    /// Inequality with the largest `value - bound`.
    pub functional: String,
    pub value: f64,
    pub bound: f64,
    pub nonlocal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub index: u64,
    pub seed: u64,
    pub pairs: Vec<PairResult>,
    pub classification: Classification,
}

const PAIRS: [(&str, [usize; 2]); 3] = [("AB", [0, 1]), ("BC", [1, 2]), ("AC", [0, 2])];

/// Restart seeds are shared between `chsh` and `chsh3`, so the first
/// restarts of a three-setting run repeat the two-setting run exactly.
fn functional_tag(name: &str) -> u64 {
    match name {
        "chsh" | "chsh3" => 0,
        "i3322" => 1,
        "i3322t" => 2,
        other => 3 + other.bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64)),
    }
}

/// Flags each pair marginal of `ket` (layout `[d, d, d]`).
pub fn classify_sample(ket: &Ket, cfg: &ScanConfig, seed: u64) -> Result<ScanRecord> {
    if ket.layout().dims() != [cfg.d; 3] {
        return Err(Error::Dimension(format!("expected a [{0}, {0}, {0}] ket", cfg.d)));
    }
    let rho = ket.projector();
    let mut pairs = Vec::with_capacity(3);
    for (p, (name, keep)) in PAIRS.iter().enumerate() {
        let marginal = rho.partial_trace(keep)?;
        let pair_seed = derive_seed(seed, 1 + p as u64);
        let mut best: Option<PairResult> = None;
        for fname in &cfg.inequalities {
            // Lifted CHSH ignores the extra settings; optimize plain CHSH.
            let f = if fname == "chsh3" { chsh() } else { make_functional(fname)? };
            let opts = SeesawOptions {
                restarts: cfg.guesses,
                max_sweeps: cfg.max_sweeps,
                tol: cfg.sweep_tol,
                seed: derive_seed(pair_seed, functional_tag(fname)),
                rule: UpdateRule::Auto,
            };
            let r = seesaw_optimize(&marginal, &f, &opts)?;
            let bound = f.local_bound();
            let res = PairResult {
                pair: name.to_string(),
                functional: fname.clone(),
                value: r.value,
                bound,
                nonlocal: r.value > bound + cfg.tol,
            };
            let better = best.as_ref().is_none_or(|b| res.value - res.bound > b.value - b.bound);
            let done = res.nonlocal;
            if better {
                best = Some(res);
            }
            if done {
                break;
            }
        }
        pairs.push(best.unwrap());
    }
    let count = pairs.iter().filter(|p| p.nonlocal).count();
    Ok(ScanRecord { index: 0, seed, pairs, classification: Classification::from_count(count) })
}

/// Sample `index` of the scan: Haar ket from its seed, then classification.
pub fn sample_record(cfg: &ScanConfig, index: u64) -> Result<ScanRecord> {
    let seed = derive_seed(cfg.base_seed, index);
    let ket = haar_random_ket(&Layout::uniform(cfg.d, 3), seed);
    Ok(ScanRecord { index, ..classify_sample(&ket, cfg, seed)? })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanSummary {
    pub d: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub samples: usize,
    pub guesses: usize,
    pub none_pct: f64,
    pub one_pct: f64,
    pub two_pct: f64,
    pub all_pct: f64,
}

impl ScanSummary {
    pub fn counts(&self) -> [usize; 4] {
        let n = self.samples as f64;
        [self.none_pct, self.one_pct, self.two_pct, self.all_pct].map(|p| (p * n / 100.0).round() as usize)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.d,
            self.m,
            self.samples,
            self.guesses,
            fmt_sig(self.none_pct),
            fmt_sig(self.one_pct),
            fmt_sig(self.two_pct),
            fmt_sig(self.all_pct)
        )
    }
}

/// Fractions over `records`, in percent.
pub fn summarize(d: usize, m: usize, guesses: usize, records: &[ScanRecord]) -> ScanSummary {
    let mut counts = [0usize; 4];
    for r in records {
        counts[r.classification as usize] += 1;
    }
    let n = records.len();
    let pct = |k: usize| if n == 0 { 0.0 } else { 100.0 * counts[k] as f64 / n as f64 };
    ScanSummary { d, m, samples: n, guesses, none_pct: pct(0), one_pct: pct(1), two_pct: pct(2), all_pct: pct(3) }
}

/// Reads a records file. A torn last line (interrupted write) is dropped;
/// malformed lines elsewhere are errors.
pub fn read_records(path: &Path) -> Result<Vec<ScanRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let lines: Vec<String> = BufReader::new(File::open(path)?).lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::with_capacity(lines.len());
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i == last => break,
            Err(e) => return Err(Error::Invalid(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

fn write_records(path: &Path, records: &[ScanRecord], append: bool) -> Result<()> {
    let mut file = OpenOptions::new().create(true).write(true).append(append).truncate(!append).open(path)?;
    let mut buf = String::new();
    for r in records {
        buf.push_str(&serde_json::to_string(r)?);
        buf.push('\n');
    }
    file.write_all(buf.as_bytes())?;
    file.sync_data()?;
    Ok(())
}

pub fn write_summary(path: &Path, summary: Option<&ScanSummary>) -> Result<()> {
    let mut text = format!("{SUMMARY_HEADER}\n");
    if let Some(s) = summary {
        text.push_str(&s.csv_row());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ScanOutcome {
    pub summary: ScanSummary,
    pub records: PathBuf,
    pub summary_path: PathBuf,
    /// Samples computed by this call (the rest came from the checkpoint).
    pub computed: usize,
}

/// Runs (or resumes) a scan into `out`. Records are appended in index
/// order after every batch; an existing directory must hold the same
/// configuration apart from `samples`.
pub fn run_scan(cfg: &ScanConfig, out: &Path) -> Result<ScanOutcome> {
    run_scan_with(cfg, out, |_, _| {})
}

/// [`run_scan`] with a callback `(done, total)` after every batch.
pub fn run_scan_with(cfg: &ScanConfig, out: &Path, mut progress: impl FnMut(usize, usize)) -> Result<ScanOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let config_path = out.join(CONFIG_FILE);
    if config_path.exists() {
        let old: ScanConfig = serde_json::from_str(&fs::read_to_string(&config_path)?)?;
        if (ScanConfig { samples: cfg.samples, ..old }) != *cfg {
            return Err(Error::Invalid(format!("{} holds a different scan configuration", out.display())));
        }
    }
    fs::write(&config_path, serde_json::to_string_pretty(cfg)?)?;

    let records_path = out.join(RECORDS_FILE);
    let mut records = read_records(&records_path)?;
    records.retain(|r| (r.index as usize) < cfg.samples);
    records.sort_by_key(|r| r.index);
    records.dedup_by_key(|r| r.index);
    if records.iter().enumerate().any(|(i, r)| r.index != i as u64) {
        return Err(Error::Invalid("records file is not a prefix of the scan".into()));
    }
    // Rewrite so a torn tail or extra samples do not linger.
    write_records(&records_path, &records, false)?;

    let start = records.len();
    let mut next = start;
    while next < cfg.samples {
        let end = (next + cfg.batch).min(cfg.samples);
        let batch: Vec<ScanRecord> =
            (next..end).into_par_iter().map(|i| sample_record(cfg, i as u64)).collect::<Result<_>>()?;
        write_records(&records_path, &batch, true)?;
        records.extend(batch);
        next = end;
        progress(next, cfg.samples);
    }

    let summary = summarize(cfg.d, cfg.m, cfg.guesses, &records);
    let summary_path = out.join(SUMMARY_FILE);
    write_summary(&summary_path, Some(&summary))?;
    Ok(ScanOutcome { summary, records: records_path, summary_path, computed: cfg.samples - start })
}
