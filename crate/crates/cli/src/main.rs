mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use output::{Ctx, DEFAULT_OUT_DIR, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "nlt", version, about = "Nonlocality transitivity toolkit")]
struct Cli {
    /// Directory for manifests and default outputs.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Build and inspect named states.
    #[command(subcommand)]
    State(StateCmd),
    /// Bell functionals, Horodecki values and see-saw optimization.
    #[command(subcommand)]
    Bell(BellCmd),
    /// Level-1 NPA relaxation.
    #[command(subcommand)]
    Npa(NpaCmd),
    /// Marginal compatibility SDPs.
    #[command(subcommand)]
    Marginal(MarginalCmd),
    /// Transitivity verdicts.
    #[command(subcommand)]
    Transitivity(TransitivityCmd),
    /// Analytic bounds.
    #[command(subcommand)]
    Bounds(BoundsCmd),
    /// Khot-Vishnoi game.
    #[command(subcommand)]
    Kv(KvCmd),
    /// Haar-random tripartite scans.
    #[command(subcommand)]
    Scan(ScanCmd),
    /// Tables from record files.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Subcommand, Serialize)]
pub enum StateCmd {
    /// Writes a named state to a file (or stdout).
    Make {
        #[arg(long)]
        family: String,
        /// Family parameter as key=value; repeatable.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dimensions, purity, spectrum and PPT status.
    Info {
        #[arg(long)]
        state: PathBuf,
    },
}

#[derive(Subcommand, Serialize)]
pub enum BellCmd {
    /// Closed-form CHSH maximum for two qubits.
    Horodecki {
        #[arg(long)]
        state: PathBuf,
    },
    /// Exact local bound of a named functional.
    LocalBound {
        #[arg(long)]
        ineq: String,
    },
    /// See-saw lower bound on the quantum value.
    Seesaw(SeesawArgs),
    /// Functional value of a correlation file.
    Value {
        #[arg(long)]
        corr: PathBuf,
        #[arg(long)]
        ineq: String,
    },
    /// Horodecki value along a one-parameter family, as JSON lines.
    Sweep {
        #[arg(long)]
        family: String,
        /// Name of the swept parameter.
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// Other family parameters as key=value; repeatable.
        #[arg(long = "fixed", value_name = "KEY=VALUE")]
        fixed: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Serialize)]
pub struct SeesawArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long)]
    pub ineq: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_enum)]
    pub rule: Option<Rule>,
    /// JSON file with see-saw options; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
pub enum Rule {
    Auto,
    Sign,
    Povm,
}

#[derive(Subcommand, Serialize)]
pub enum NpaCmd {
    /// Whether the correlation passes the level-1 test.
    Membership {
        #[arg(long)]
        corr: PathBuf,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
    },
    /// Critical white-noise visibility at level 1.
    Visibility {
        #[arg(long)]
        corr: PathBuf,
        /// Cross-check by bisection on membership.
        #[arg(long)]
        bisect: bool,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
pub enum SenseArg {
    Min,
    Max,
}

#[derive(Subcommand, Serialize)]
pub enum MarginalCmd {
    /// Extremal overlap with a target over compatible global states.
    Overlap {
        #[arg(long)]
        rho_ab: PathBuf,
        #[arg(long)]
        rho_bc: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum)]
        sense: SenseArg,
        /// Writes the optimizing global state.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Whether a candidate pure state is the only compatible one.
    Unique {
        #[arg(long)]
        rho_ab: PathBuf,
        #[arg(long)]
        rho_bc: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Searches for a compatible state with a PPT AC marginal.
    Ppt {
        #[arg(long)]
        rho_ab: PathBuf,
        #[arg(long)]
        rho_bc: PathBuf,
        /// Writes the witness global state.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Symmetric extendibility of a bipartite state.
    Extension {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        side: String,
        #[arg(long)]
        copies: usize,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
    },
    /// Smallest family parameter at which the extension exists.
    Threshold {
        #[arg(long)]
        family: String,
        #[arg(long)]
        param: String,
        #[arg(long = "fixed", value_name = "KEY=VALUE")]
        fixed: Vec<String>,
        #[arg(long)]
        side: String,
        #[arg(long)]
        copies: usize,
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
        #[arg(long)]
        step: f64,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
    },
}

#[derive(Subcommand, Serialize)]
pub enum TransitivityCmd {
    /// Decides what the two marginals force on AC.
    Verdict(VerdictArgs),
    /// Analytic verdict for k copies of the W-state marginals.
    WCopies {
        #[arg(long)]
        k: u64,
        #[arg(long, default_value = "tight")]
        variant: String,
    },
}

#[derive(Args, Serialize)]
pub struct VerdictArgs {
    #[arg(long)]
    pub rho_ab: PathBuf,
    #[arg(long)]
    pub rho_bc: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// JSON verdict configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Exit with status 1 unless the verdict is certified.
    #[arg(long)]
    pub require_certified: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Serialize)]
pub enum BoundsCmd {
    /// Fully entangled fraction of a d x d state.
    Fef {
        #[arg(long)]
        state: PathBuf,
    },
    /// LV lower bound for k copies of an isotropic state.
    Lv {
        #[arg(long = "F")]
        f: f64,
        #[arg(long)]
        d: u32,
        #[arg(long)]
        k: u64,
        #[arg(long, default_value = "tight")]
        variant: String,
    },
    /// Smallest k whose LV bound exceeds 1.
    MinK {
        #[arg(long = "F")]
        f: f64,
        #[arg(long)]
        d: u32,
        #[arg(long, default_value = "tight")]
        variant: String,
    },
    /// LV bounds for the n-dimensional maximally entangled state.
    Kv {
        #[arg(long)]
        n: u64,
    },
    /// Smallest valid n whose bound exceeds 1.
    KvThreshold {
        #[arg(long, default_value = "tight")]
        variant: String,
    },
    /// Isotropic steering threshold, or a state's steerability by FEF.
    Steering {
        #[arg(long)]
        d: Option<u32>,
        #[arg(long, conflicts_with = "d")]
        state: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ModeArg {
    Exact,
    Mc,
}

#[derive(Subcommand, Serialize)]
pub enum KvCmd {
    /// Winning probability of the canonical quantum strategy.
    Winprob {
        #[arg(long)]
        l: u32,
        #[arg(long)]
        eta: f64,
        #[arg(long, value_enum, default_value = "exact")]
        mode: ModeArg,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, required_if_eq("mode", "mc"))]
        seed: Option<u64>,
    },
    /// Classical value cap.
    Cap {
        #[arg(long)]
        n: f64,
        #[arg(long)]
        eta: f64,
    },
}

#[derive(Subcommand, Serialize)]
pub enum ScanCmd {
    /// Runs or resumes a scan.
    Run(ScanArgs),
}

#[derive(Args, Serialize)]
pub struct ScanArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub guesses: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// JSON scan configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scan directory; resumed when it already holds records.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ReportKind {
    Auto,
    Scan,
    Sweep,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Serialize)]
pub enum ReportCmd {
    /// Summary table from a scan or sweep record file.
    Table {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        kind: ReportKind,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::State(StateCmd::Make { .. }) => "state make",
        Command::State(StateCmd::Info { .. }) => "state info",
        Command::Bell(BellCmd::Horodecki { .. }) => "bell horodecki",
        Command::Bell(BellCmd::LocalBound { .. }) => "bell local-bound",
        Command::Bell(BellCmd::Seesaw(_)) => "bell seesaw",
        Command::Bell(BellCmd::Value { .. }) => "bell value",
        Command::Bell(BellCmd::Sweep { .. }) => "bell sweep",
        Command::Npa(NpaCmd::Membership { .. }) => "npa membership",
        Command::Npa(NpaCmd::Visibility { .. }) => "npa visibility",
        Command::Marginal(MarginalCmd::Overlap { .. }) => "marginal overlap",
        Command::Marginal(MarginalCmd::Unique { .. }) => "marginal unique",
        Command::Marginal(MarginalCmd::Ppt { .. }) => "marginal ppt",
        Command::Marginal(MarginalCmd::Extension { .. }) => "marginal extension",
        Command::Marginal(MarginalCmd::Threshold { .. }) => "marginal threshold",
        Command::Transitivity(TransitivityCmd::Verdict(_)) => "transitivity verdict",
        Command::Transitivity(TransitivityCmd::WCopies { .. }) => "transitivity w-copies",
        Command::Bounds(BoundsCmd::Fef { .. }) => "bounds fef",
        Command::Bounds(BoundsCmd::Lv { .. }) => "bounds lv",
        Command::Bounds(BoundsCmd::MinK { .. }) => "bounds min-k",
        Command::Bounds(BoundsCmd::Kv { .. }) => "bounds kv",
        Command::Bounds(BoundsCmd::KvThreshold { .. }) => "bounds kv-threshold",
        Command::Bounds(BoundsCmd::Steering { .. }) => "bounds steering",
        Command::Kv(KvCmd::Winprob { .. }) => "kv winprob",
        Command::Kv(KvCmd::Cap { .. }) => "kv cap",
        Command::Scan(ScanCmd::Run(_)) => "scan run",
        Command::Report(ReportCmd::Table { .. }) => "report table",
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut ctx = Ctx::new(argv, command_name(&cli.command).to_string(), cli.out_dir.clone());
    let result = ctx.record_config(&cli.command).and_then(|()| commands::dispatch(cli.command, &mut ctx));
    let mut code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    if let Err(e) = ctx.finish(&result) {
        eprintln!("error: could not write manifest: {e}");
        if code == 0 {
            code = 1;
        }
    }
    ExitCode::from(code as u8)
}
