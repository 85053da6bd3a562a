//! Run context: printing, config layering, and the per-run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nlt_core::qcore::fmt_sig;
use serde::Serialize;
use serde_json::Value;

/// Default output directory when `--out-dir` is not given.
pub const OUT_DIR_ENV: &str = "NLT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "nlt-out";

#[derive(Debug)]
pub enum CliError {
    Core(nlt_core::Error),
    Usage(String),
    /// A demanded certificate could not be produced.
    Uncertified(String),
}

impl From<nlt_core::Error> for CliError {
    fn from(e: nlt_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_capacity() => 3,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(nlt_core::Error::Incompatible(c)) => write!(
                f,
                "marginals are incompatible; infeasibility certificate: violation {}, margin {}, residual {}",
                fmt_sig(c.violation),
                fmt_sig(c.margin),
                fmt_sig(c.residual)
            ),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Uncertified(m) => write!(f, "{m}"),
        }
    }
}

pub type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Rounds every float in `v` to 10 significant digits.
pub fn sig(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap();
            fmt_sig(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sig).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, sig(v))).collect()),
        other => other,
    }
}

/// Overlays `over` onto `base`, recursing into objects.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

/// Reads a JSON config file, or an empty object.
pub fn read_config(path: Option<&Path>) -> CliResult<Value> {
    match path {
        None => Ok(Value::Object(Default::default())),
        Some(p) => {
            let v: Value = serde_json::from_str(&fs::read_to_string(p)?)?;
            if !v.is_object() {
                return Err(CliError::Usage(format!("{} must hold a JSON object", p.display())));
            }
            Ok(v)
        }
    }
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    argv: &'a [String],
    version: &'static str,
    config: &'a Value,
    seeds: &'a [u64],
    started_unix_ms: u128,
    finished_unix_ms: u128,
    outputs: Vec<String>,
    exit_code: i32,
    error: Option<String>,
}

pub struct Ctx {
    pub argv: Vec<String>,
    pub command: String,
    pub out_dir: PathBuf,
    manifest_dir: Option<PathBuf>,
    config: Value,
    seeds: Vec<u64>,
    outputs: Vec<PathBuf>,
    started: u128,
}

impl Ctx {
    pub fn new(argv: Vec<String>, command: String, out_dir: PathBuf) -> Self {
        Ctx {
            argv,
            command,
            out_dir,
            manifest_dir: None,
            config: Value::Null,
            seeds: Vec::new(),
            outputs: Vec::new(),
            started: now_ms(),
        }
    }

    pub fn record_config(&mut self, config: &impl Serialize) -> CliResult {
        self.config = serde_json::to_value(config)?;
        Ok(())
    }

    pub fn record_seed(&mut self, seed: u64) {
        self.seeds.push(seed);
    }

    /// Registers an output file; the manifest goes next to the first one.
    pub fn record_output(&mut self, path: &Path) {
        if self.manifest_dir.is_none() {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            self.manifest_dir = Some(dir.to_path_buf());
        }
        self.outputs.push(path.to_path_buf());
    }

    pub fn record_output_dir(&mut self, dir: &Path) {
        self.manifest_dir = Some(dir.to_path_buf());
        self.outputs.push(dir.to_path_buf());
    }

    pub fn print_json(&self, v: &impl Serialize) -> CliResult {
        println!("{}", serde_json::to_string_pretty(&sig(serde_json::to_value(v)?))?);
        Ok(())
    }

    pub fn print_scalar(&self, x: f64) {
        println!("{}", fmt_sig(x));
    }

    /// Writes the manifest and returns its path.
    pub fn finish(&self, result: &CliResult) -> std::io::Result<PathBuf> {
        let dir = self.manifest_dir.clone().unwrap_or_else(|| self.out_dir.clone());
        fs::create_dir_all(&dir)?;
        let slug = self.command.replace(' ', "-");
        let started = self.started;
        let mut path = dir.join(format!("manifest-{slug}-{started}.json"));
        let mut bump = 1;
        while path.exists() {
            path = dir.join(format!("manifest-{slug}-{started}-{bump}.json"));
            bump += 1;
        }
        let m = Manifest {
            command: &self.command,
            argv: &self.argv,
            version: env!("CARGO_PKG_VERSION"),
            config: &self.config,
            seeds: &self.seeds,
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            exit_code: result.as_ref().map_or_else(CliError::exit_code, |_| 0),
            error: result.as_ref().err().map(|e| e.to_string()),
        };
        fs::write(&path, serde_json::to_string_pretty(&m)?)?;
        Ok(path)
    }
}
