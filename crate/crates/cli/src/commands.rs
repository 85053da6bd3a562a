use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nlt_core::bellopt::{horodecki_chsh, make_functional, seesaw_optimize, Correlation, SeesawOptions};
use nlt_core::bounds::*;
use nlt_core::haarscan::{self, ScanConfig};
use nlt_core::kvgame::*;
use nlt_core::marginal::*;
use nlt_core::npa::{q1_membership, q1_slack, q1_visibility, q1_visibility_bisect};
use nlt_core::qcore::{fmt_sig, DensityOp, State};
use nlt_core::states::StateSpec;
use nlt_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::output::{merge, read_config, CliError, CliResult, Ctx};
use crate::*;

pub fn dispatch(cmd: Command, ctx: &mut Ctx) -> CliResult {
    match cmd {
        Command::State(c) => state(c, ctx),
        Command::Bell(c) => bell(c, ctx),
        Command::Npa(c) => npa(c, ctx),
        Command::Marginal(c) => marginal(c, ctx),
        Command::Transitivity(c) => transitivity(c, ctx),
        Command::Bounds(c) => bounds(c, ctx),
        Command::Kv(c) => kv(c, ctx),
        Command::Scan(ScanCmd::Run(a)) => scan_run(a, ctx),
        Command::Report(c) => report(c, ctx),
    }
}

fn parse_pairs(raw: &[String]) -> CliResult<Vec<(String, String)>> {
    raw.iter()
        .map(|kv| match kv.split_once('=') {
            Some((k, v)) => Ok((k.trim().to_string(), v.trim().to_string())),
            None => Err(CliError::Usage(format!("expected KEY=VALUE, got {kv}"))),
        })
        .collect()
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> CliResult<T> {
    Ok(s.parse::<T>()?)
}

fn load_density(path: &Path) -> CliResult<DensityOp> {
    Ok(State::load(path)?.to_density())
}

fn load_spec(ab: &Path, bc: &Path) -> CliResult<MarginalSpec> {
    Ok(MarginalSpec::new(load_density(ab)?, load_density(bc)?)?)
}

fn save_state(ctx: &mut Ctx, state: &State, path: &Path) -> CliResult {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    state.save(path)?;
    ctx.record_output(path);
    Ok(())
}

fn state(cmd: StateCmd, ctx: &mut Ctx) -> CliResult {
    match cmd {
        StateCmd::Make { family, params, out } => {
            let spec = StateSpec::parse(&family, &parse_pairs(&params)?)?;
            ctx.record_config(&spec)?;
            if spec.is_degenerate()? {
                eprintln!("warning: parameter at a degenerate endpoint of {family}");
            }
            let s = spec.build()?;
            match out {
                Some(p) => save_state(ctx, &s, &p),
                None => {
                    println!("{}", s.to_json()?);
                    Ok(())
                }
            }
        }
        StateCmd::Info { state } => {
            let s = State::load(&state)?;
            let rho = s.to_density();
            let dims = rho.layout().dims().to_vec();
            let ppt = if dims.len() >= 2 {
                Some((0..dims.len()).map(|k| rho.is_ppt(k, 1e-9)).collect::<nlt_core::Result<Vec<_>>>()?)
            } else {
                None
            };
            ctx.print_json(&json!({
                "dims": dims,
                "kind": s.to_file_format().kind,
                "purity": rho.purity(),
                "eigenvalues": rho.eigenvalues(),
                "ppt": ppt,
            }))
        }
    }
}

fn bell(cmd: BellCmd, ctx: &mut Ctx) -> CliResult {
    match cmd {
        BellCmd::Horodecki { state } => {
            ctx.print_scalar(horodecki_chsh(&load_density(&state)?)?);
            Ok(())
        }
        BellCmd::LocalBound { ineq } => {
            let f = make_functional(&ineq)?;
            ctx.print_json(&json!({ "functional": ineq, "local_bound": f.local_bound(), "exact": f.bound_exact }))
        }
        BellCmd::Seesaw(a) => seesaw(a, ctx),
        BellCmd::Value { corr, ineq } => {
            let p = Correlation::from_json(&fs::read_to_string(&corr)?)?;
            let f = make_functional(&ineq)?;
            let value = f.value(&p)?;
            ctx.print_json(&json!({
                "functional": ineq,
                "value": value,
                "local_bound": f.local_bound(),
                "violation": value - f.local_bound(),
                "signaling_deviation": p.signaling_deviation(),
            }))
        }
        BellCmd::Sweep { family, param, from, to, steps, fixed, out } => {
            if steps == 0 {
                return Err(CliError::Usage("--steps must be at least 1".into()));
            }
            let fixed = parse_pairs(&fixed)?;
            let path = out.unwrap_or_else(|| ctx.out_dir.join(format!("sweep-{family}-{param}.jsonl")));
            if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            ctx.record_config(&json!({ "family": family, "param": param, "from": from, "to": to, "steps": steps, "fixed": fixed }))?;
            let mut file = fs::File::create(&path)?;
            for i in 0..=steps {
                let x = from + (to - from) * i as f64 / steps as f64;
                let mut params = fixed.clone();
                params.push((param.clone(), format!("{x:?}")));
                let rho = StateSpec::parse(&family, &params)?.build()?.to_density();
                let h = horodecki_chsh(&rho)?;
                let line = crate::output::sig(json!({ "param": param, "x": x, "horodecki": h }));
                writeln!(file, "{line}")?;
            }
            ctx.record_output(&path);
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn seesaw(a: SeesawArgs, ctx: &mut Ctx) -> CliResult {
    let mut cfg = serde_json::to_value(SeesawOptions::default())?;
    merge(&mut cfg, read_config(a.config.as_deref())?);
    let rule = a.rule.map(|r| match r {
        Rule::Auto => "auto",
        Rule::Sign => "sign",
        Rule::Povm => "povm",
    });
    let mut flags = json!({ "seed": a.seed });
    for (k, v) in [
        ("restarts", a.restarts.map(Value::from)),
        ("max_sweeps", a.max_sweeps.map(Value::from)),
        ("tol", a.tol.map(Value::from)),
        ("rule", rule.map(Value::from)),
    ] {
        if let Some(v) = v {
            flags[k] = v;
        }
    }
    merge(&mut cfg, flags);
    let opts: SeesawOptions = serde_json::from_value(cfg)?;
    ctx.record_config(&opts)?;
    ctx.record_seed(opts.seed);
    let rho = load_density(&a.state)?;
    let f = make_functional(&a.ineq)?;
    let r = seesaw_optimize(&rho, &f, &opts)?;
    let bound = f.local_bound();
    ctx.print_json(&json!({
        "functional": a.ineq,
        "value": r.value,
        "local_bound": bound,
        "bound_exact": f.bound_exact,
        "violation": r.value - bound,
        "best_seed": r.seed,
        "best_restart": r.restart,
        "converged": r.converged,
        "rule": r.rule,
        "restart_values": r.values,
        "deterministic_start": r.deterministic,
    }))
}

fn npa(cmd: NpaCmd, ctx: &mut Ctx) -> CliResult {
    match cmd {
        NpaCmd::Membership { corr, tol } => {
            let p = Correlation::from_json(&fs::read_to_string(&corr)?)?;
            let slack = q1_slack(&p)?;
            ctx.print_json(&json!({ "member": q1_membership(&p, tol)?, "slack": slack, "tol": tol }))
        }
        NpaCmd::Visibility { corr, bisect } => {
            let p = Correlation::from_json(&fs::read_to_string(&corr)?)?;
            let v = q1_visibility(&p)?;
            let mut out = serde_json::to_value(v)?;
            if bisect {
                out["bisect"] = json!(q1_visibility_bisect(&p, 1e-6)?);
            }
            ctx.print_json(&out)
        }
    }
}

fn marginal(cmd: MarginalCmd, ctx: &mut Ctx) -> CliResult {
    match cmd {
        MarginalCmd::Overlap { rho_ab, rho_bc, target, sense, out } => {
            let spec = load_spec(&rho_ab, &rho_bc)?;
            let t = load_density(&target)?.into_matrix();
            let ext = match sense {
                SenseArg::Min => Extremum::Min,
                SenseArg::Max => Extremum::Max,
            };
            let o = compatible_extremal_overlap(&spec, &t, ext)?;
            if let Some(p) = out {
                save_state(ctx, &State::Density(o.state.clone()), &p)?;
            }
            ctx.print_json(&json!({ "sense": ext, "value": o.value, "gap": o.gap, "residual": o.residual }))
        }
        MarginalCmd::Unique { rho_ab, rho_bc, candidate, tol } => {
            let spec = load_spec(&rho_ab, &rho_bc)?;
            let ket = match State::load(&candidate)? {
                State::Ket(k) => k,
                State::Density(_) => return Err(CliError::Usage("--candidate must be a ket file".into())),
            };
            ctx.print_json(&check_uniqueness(&spec, &ket, tol)?)
        }
        MarginalCmd::Ppt { rho_ab, rho_bc, out } => {
            let spec = load_spec(&rho_ab, &rho_bc)?;
            let r = exists_compatible_ppt_ac(&spec)?;
            if let (Some(p), Some(w)) = (out, &r.witness) {
                save_state(ctx, &State::Density(w.clone()), &p)?;
            }
            ctx.print_json(&json!({
                "feasible": r.feasible,
                "ac_min_eigenvalue": r.ac_min_eigenvalue,
                "separability": r.separability,
                "certified_separable": r.separability.as_ref().is_some_and(|s| s.is_certified()),
                "certificate": r.certificate.map(|c| json!({ "violation": c.violation, "margin": c.margin, "residual": c.residual })),
            }))
        }
        MarginalCmd::Extension { state, side, copies, tol } => {
            let rho = load_density(&state)?;
            ctx.print_json(&symmetric_extension(&rho, parse(&side)?, copies, tol)?)
        }
        MarginalCmd::Threshold { family, param, fixed, side, copies, lo, hi, step, tol } => {
            let fixed = parse_pairs(&fixed)?;
            let build = |x: f64| -> nlt_core::Result<DensityOp> {
                let mut params = fixed.clone();
                params.push((param.clone(), format!("{x:?}")));
                Ok(StateSpec::parse(&family, &params)?.build()?.to_density())
            };
            ctx.print_scalar(extension_threshold(build, parse(&side)?, copies, lo, hi, step, tol)?);
            Ok(())
        }
    }
}

fn transitivity(cmd: TransitivityCmd, ctx: &mut Ctx) -> CliResult {
    match cmd {
        TransitivityCmd::Verdict(a) => {
            let mut cfg = serde_json::to_value(VerdictConfig::default())?;
            merge(&mut cfg, read_config(a.config.as_deref())?);
            let mut flags = json!({ "seesaw": { "seed": a.seed } });
            if let Some(r) = a.restarts {
                flags["seesaw"]["restarts"] = json!(r);
            }
            merge(&mut cfg, flags);
            let config: VerdictConfig = serde_json::from_value(cfg)?;
            ctx.record_config(&config)?;
            ctx.record_seed(a.seed);
            let spec = load_spec(&a.rho_ab, &a.rho_bc)?;
            let v = transitivity_verdict(&spec, &config)?;
            if let Some(p) = &a.out {
                if let Some(dir) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)?;
                }
                fs::write(p, serde_json::to_string_pretty(&crate::output::sig(serde_json::to_value(&v)?))?)?;
                ctx.record_output(p);
            }
            ctx.print_json(&v)?;
            if a.require_certified && v.ac_status == AcStatus::Undetermined {
                return Err(CliError::Uncertified("verdict is undetermined and --require-certified was given".into()));
            }
            Ok(())
        }
        TransitivityCmd::WCopies { k, variant } => ctx.print_json(&w_copies_verdict(k, parse(&variant)?)?),
    }
}

fn bounds(cmd: BoundsCmd, ctx: &mut Ctx) -> CliResult {
    match cmd {
        BoundsCmd::Fef { state } => ctx.print_json(&fef(&load_density(&state)?)?),
        BoundsCmd::Lv { f, d, k, variant } => {
            ctx.print_scalar(lv_lower_bound(&LvParams { f, d, k, variant: parse(&variant)? })?);
            Ok(())
        }
        BoundsCmd::MinK { f, d, variant } => {
            match min_k_for_violation(f, d, parse(&variant)?)? {
                Some(k) => println!("{k}"),
                None => println!("none"),
            }
            Ok(())
        }
        BoundsCmd::Kv { n } => ctx.print_json(&kv_maxent_lv_bound(n)?),
        BoundsCmd::KvThreshold { variant } => {
            println!("{}", min_n_exceeding_one(parse(&variant)?));
            Ok(())
        }
        BoundsCmd::Steering { d, state } => match (d, state) {
            (Some(d), None) => {
                ctx.print_scalar(steering_threshold(d)?);
                Ok(())
            }
            (None, Some(p)) => {
                let rho = load_density(&p)?;
                let d = rho.layout().dims()[0] as u32;
                ctx.print_json(&json!({
                    "fef": fef(&rho)?,
                    "threshold": steering_threshold(d)?,
                    "steerable": is_steerable_by_fef(&rho)?,
                }))
            }
            _ => Err(CliError::Usage("give exactly one of --d or --state".into())),
        },
    }
}

fn kv(cmd: KvCmd, ctx: &mut Ctx) -> CliResult {
    match cmd {
        KvCmd::Winprob { l, eta, mode, trials, seed } => {
            let inst = build_kv_instance(l, eta)?;
            let mode = match mode {
                ModeArg::Exact => WinMode::Exact,
                ModeArg::Mc => {
                    let seed = seed.ok_or_else(|| CliError::Usage("--seed is required with --mode mc".into()))?;
                    ctx.record_seed(seed);
                    WinMode::MonteCarlo { seed, trials }
                }
            };
            ctx.record_config(&json!({ "l": l, "eta": eta, "mode": mode }))?;
            let w = kv_quantum_win_prob(&inst, mode)?;
            ctx.print_json(&json!({
                "n": inst.n,
                "eta": eta,
                "value": w.value,
                "std_error": w.std_error,
                "lower_bound": kv_quantum_lower_bound(eta),
            }))
        }
        KvCmd::Cap { n, eta } => ctx.print_json(&kv_classical_cap(n, eta)?),
    }
}

fn scan_run(a: ScanArgs, ctx: &mut Ctx) -> CliResult {
    let file = read_config(a.config.as_deref())?;
    let d = a.d.or_else(|| file.get("d").and_then(Value::as_u64).map(|x| x as usize));
    let d = d.ok_or_else(|| CliError::Usage("--d is required (or d in --config)".into()))?;
    let m = a.m.or_else(|| file.get("M").and_then(Value::as_u64).map(|x| x as usize)).unwrap_or(2);
    let mut cfg = serde_json::to_value(ScanConfig::new(d, m, a.seed)?)?;
    merge(&mut cfg, file);
    let mut flags = json!({ "d": d, "M": m, "base_seed": a.seed });
    for (k, v) in [
        ("samples", a.samples.map(Value::from)),
        ("guesses", a.guesses.map(Value::from)),
        ("batch", a.batch.map(Value::from)),
        ("tol", a.tol.map(Value::from)),
    ] {
        if let Some(v) = v {
            flags[k] = v;
        }
    }
    merge(&mut cfg, flags);
    let cfg: ScanConfig = serde_json::from_value(cfg)?;
    cfg.validate()?;
    ctx.record_config(&cfg)?;
    ctx.record_seed(cfg.base_seed);
    let dir = a.out.unwrap_or_else(|| ctx.out_dir.join(format!("scan-d{}-M{}-seed{}", cfg.d, cfg.m, cfg.base_seed)));
    ctx.record_output_dir(&dir);
    let outcome = haarscan::run_scan_with(&cfg, &dir, |done, total| eprintln!("scan: {done}/{total}"))?;
    ctx.print_json(&json!({
        "summary": outcome.summary,
        "computed": outcome.computed,
        "records": outcome.records,
        "summary_csv": outcome.summary_path,
    }))
}

#[derive(Serialize, Deserialize)]
struct SweepLine {
    param: String,
    x: f64,
    horodecki: f64,
}

fn report(cmd: ReportCmd, ctx: &mut Ctx) -> CliResult {
    let ReportCmd::Table { records, kind, format, out } = cmd;
    let config_path = records.parent().unwrap_or(Path::new(".")).join(haarscan::CONFIG_FILE);
    let kind = match kind {
        ReportKind::Auto if config_path.exists() => ReportKind::Scan,
        ReportKind::Auto => ReportKind::Sweep,
        k => k,
    };
    let text = match kind {
        ReportKind::Scan => {
            let cfg: ScanConfig = serde_json::from_str(&fs::read_to_string(&config_path)?)?;
            let recs = haarscan::read_records(&records)?;
            let summary = (!recs.is_empty()).then(|| haarscan::summarize(cfg.d, cfg.m, cfg.guesses, &recs));
            match format {
                Format::Csv => {
                    let mut s = format!("{}\n", haarscan::SUMMARY_HEADER);
                    if let Some(sum) = &summary {
                        s.push_str(&sum.csv_row());
                        s.push('\n');
                    }
                    s
                }
                Format::Json => json_text(&json!({ "kind": "scan", "rows": summary.into_iter().collect::<Vec<_>>() }))?,
            }
        }
        _ => {
            let mut lines = Vec::new();
            for (i, l) in fs::read_to_string(&records)?.lines().enumerate() {
                if l.trim().is_empty() {
                    continue;
                }
                let line: SweepLine = serde_json::from_str(l)
                    .map_err(|e| CliError::Core(Error::Invalid(format!("{}:{}: {e}", records.display(), i + 1))))?;
                lines.push(line);
            }
            let name = lines.first().map_or("x", |l| l.param.as_str()).to_string();
            match format {
                Format::Csv => {
                    let mut s = format!("{name},horodecki\n");
                    for l in &lines {
                        s.push_str(&format!("{},{}\n", fmt_sig(l.x), fmt_sig(l.horodecki)));
                    }
                    s
                }
                Format::Json => json_text(&json!({ "kind": "sweep", "param": name, "rows": lines }))?,
            }
        }
    };
    write_or_print(ctx, &text, out)
}

fn json_text(v: &Value) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(&crate::output::sig(v.clone()))? + "\n")
}

fn write_or_print(ctx: &mut Ctx, text: &str, out: Option<PathBuf>) -> CliResult {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&p, text)?;
            ctx.record_output(&p);
        }
        None => print!("{text}"),
    }
    Ok(())
}
