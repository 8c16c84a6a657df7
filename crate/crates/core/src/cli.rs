//! Command-line front end.
//!
//! Exit codes: 0 success (and a converging verdict), 1 inconclusive or
//! diverging verdict, 2 usage or parse error, 3 infinite-mean density,
//! 4 any other runtime failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::asymptotics::{self, AsymptoticPrediction, AsymptoticsError, Law};
use crate::density::{parse_spec, DensityError, DensityModel, TailClass};
use crate::solver::{self, recurrence_residual, SolverConfig, SolverError, TurningSequence};
use crate::verify::{self, CompareConfig, ComparisonReport, Verdict, VerifyError};

pub const SCHEMA: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGING: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFINITE_MEAN: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "lsp-lab",
    version,
    about = "Optimal turning points for the symmetric linear search problem"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute optimal turning points.
    Solve(SolveArgs),
    /// Evaluate an asymptotic law without solving.
    Predict(PredictArgs),
    /// Compare computed turning points with an asymptotic law.
    Verify(VerifyArgs),
    /// Run solve, predict and verify for every density in a manifest.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LawArg {
    Increment,
    IndexIntegral,
    ClosedForm,
    ParetoRate,
    CompactDoubleExp,
}

impl LawArg {
    fn law(self, model: &DensityModel) -> Law {
        match self {
            LawArg::Increment => Law::IncrementFormula,
            LawArg::IndexIntegral => Law::IndexIntegral,
            LawArg::ClosedForm => Law::ClosedForm(family_name(model)),
            LawArg::ParetoRate => Law::ParetoRate,
            LawArg::CompactDoubleExp => Law::CompactDoubleExp,
        }
    }
}

fn family_name(model: &DensityModel) -> String {
    model
        .spec_string()
        .split(':')
        .next()
        .unwrap_or_default()
        .to_string()
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Density spec, e.g. `exponential:1`, `stretchedexp:1,1`, `triangular`.
    #[arg(long)]
    dist: String,
    /// Number of turning points beyond the origin.
    #[arg(long, default_value_t = 100)]
    k_max: usize,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Clone, Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Horizon of the shooting cross-check oracle.
    #[arg(long, default_value_t = 40)]
    horizon_n: usize,
}

#[derive(Debug, Clone, Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    /// Law to evaluate; defaults to the law matching the tail class.
    #[arg(long, value_enum)]
    law: Option<LawArg>,
}

#[derive(Debug, Clone, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    law: Option<LawArg>,
    /// Index window `A:B` (inclusive) for the comparison.
    #[arg(long, value_parser = parse_window)]
    window: Option<(usize, usize)>,
    /// Ratio band half-width; defaults per law.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 40)]
    horizon_n: usize,
    /// Monte-Carlo samples for the objective identity check (0 skips it).
    #[arg(long, default_value_t = 0)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Clone, Args)]
struct SweepArgs {
    /// Manifest with one density spec per line; `#` starts a comment.
    #[arg(long)]
    dist_list: PathBuf,
    #[arg(long, default_value_t = 100)]
    k_max: usize,
    #[arg(long, default_value_t = 40)]
    horizon_n: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Entries processed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = 0)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn parse_window(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("window '{s}' must look like A:B"))?;
    let a: usize = a
        .trim()
        .parse()
        .map_err(|_| format!("bad window start '{a}'"))?;
    let b: usize = b
        .trim()
        .parse()
        .map_err(|_| format!("bad window end '{b}'"))?;
    if a > b {
        return Err(format!("window start {a} exceeds end {b}"));
    }
    Ok((a, b))
}

/// Error carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<DensityError> for Failure {
    fn from(e: DensityError) -> Self {
        let code = match e {
            DensityError::InfiniteMean(_) => EXIT_INFINITE_MEAN,
            DensityError::Parse { .. }
            | DensityError::InvalidParameter { .. }
            | DensityError::UnknownTailClass(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Density(d) => d.into(),
            SolverError::Config(m) => Failure::usage(m),
            other => Failure::runtime(other.to_string()),
        }
    }
}

impl From<AsymptoticsError> for Failure {
    fn from(e: AsymptoticsError) -> Self {
        match e {
            AsymptoticsError::Density(d) => d.into(),
            AsymptoticsError::NotApplicable(_) | AsymptoticsError::NotAvailable(_) => {
                Failure::usage(e.to_string())
            }
            other => Failure::runtime(other.to_string()),
        }
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Self {
        Failure::usage(e.to_string())
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run(argv: Vec<OsString>) -> i32 {
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("LSP_LAB_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), Failure> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)
                    .map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
            }
            fs::write(p, body).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body.as_bytes())
                .map_err(|e| Failure::runtime(e.to_string()))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn config_for(k_max: usize, horizon_n: usize) -> Result<SolverConfig, Failure> {
    let cfg = SolverConfig {
        k_max,
        horizon_n,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

// ----- solve -----

fn sequence_json(model: &DensityModel, sol: &solver::Solution) -> Value {
    let seq = &sol.sequence;
    let residuals = recurrence_residual(model, seq);
    let objective = verify::objective_value(model, seq);
    let mut v = json!({
        "schema": SCHEMA,
        "kind": "turning-sequence",
        "model": seq.model(),
        "support": seq.support(),
        "terminated": seq.terminated(),
        "points": seq.points(),
        "increments": seq.increments(),
        "recurrence_residuals": residuals,
        "objective": num(objective.value),
        "objective_tail_bound": num(objective.tail_bound),
    });
    if model.is_compact() {
        v["one_minus_x"] = Value::Array((0..seq.len()).map(|k| num(seq.residual(k))).collect());
    }
    if let Some(c) = &sol.x1_check {
        v["x1_check"] = json!({
            "oracle_x1": c.oracle_x1,
            "shooting_x1": c.shooting_x1,
            "relative_difference": c.relative_difference,
            "note": c.note,
        });
    }
    v
}

fn sequence_csv(model: &DensityModel, seq: &TurningSequence) -> String {
    let residuals = recurrence_residual(model, seq);
    let compact = model.is_compact();
    let mut header = vec!["k", "x_k", "delta_k", "residual_k"];
    if compact {
        header.push("one_minus_x_k");
    }
    let rows = (0..seq.len())
        .map(|k| {
            let mut r = vec![
                k.to_string(),
                seq.point(k).to_string(),
                if k == 0 {
                    String::new()
                } else {
                    seq.increment(k).to_string()
                },
                if k >= 1 && k <= residuals.len() {
                    residuals[k - 1].to_string()
                } else {
                    String::new()
                },
            ];
            if compact {
                r.push(seq.residual(k).to_string());
            }
            r
        })
        .collect();
    csv_string(&header, rows)
}

fn solve_body(
    model: &DensityModel,
    k_max: usize,
    horizon_n: usize,
    format: Format,
) -> Result<String, Failure> {
    let cfg = config_for(k_max, horizon_n)?;
    let sol = solver::solve_detailed(model, &cfg)?;
    Ok(match format {
        Format::Json => to_json(&sequence_json(model, &sol)),
        Format::Csv => sequence_csv(model, &sol.sequence),
    })
}

fn cmd_solve(a: &SolveArgs) -> Result<i32, Failure> {
    let model = parse_spec(&a.common.dist)?;
    let body = solve_body(&model, a.common.k_max, a.horizon_n, a.common.format)?;
    emit(a.common.out.as_deref(), &body)?;
    Ok(EXIT_OK)
}

// ----- predict -----

fn prediction_json(p: &AsymptoticPrediction) -> Value {
    let values: Vec<Value> = p
        .values
        .iter()
        .map(|(k, v)| json!({"k": k, "value": num(*v)}))
        .collect();
    json!({
        "schema": SCHEMA,
        "kind": "asymptotic-prediction",
        "model": p.model,
        "law": p.law.name(),
        "quantity": p.quantity.name(),
        "values": values,
        "fitted_constants": p.fitted_constants.clone().unwrap_or_default(),
    })
}

fn prediction_csv(p: &AsymptoticPrediction) -> String {
    let rows = p
        .values
        .iter()
        .map(|(k, v)| {
            vec![
                k.to_string(),
                p.law.name().to_string(),
                p.quantity.name().to_string(),
                v.to_string(),
            ]
        })
        .collect();
    csv_string(&["k", "law", "quantity", "value"], rows)
}

fn resolve_law(model: &DensityModel, law: Option<LawArg>) -> Result<(Law, TailClass), Failure> {
    let class = model.classify_tail()?;
    if class == TailClass::CompactTerminating {
        return Err(Failure::usage(format!(
            "{}: the optimum reaches the boundary in finitely many turns, so no asymptotic law applies",
            model.spec_string()
        )));
    }
    let law = match law {
        Some(l) => l.law(model),
        None => asymptotics::default_law(&class),
    };
    Ok((law, class))
}

fn predict_body(
    model: &DensityModel,
    law: Option<LawArg>,
    k_max: usize,
    format: Format,
) -> Result<String, Failure> {
    if model.support() == crate::density::Support::HalfLine {
        model.first_abs_moment()?;
    }
    let (law, _) = resolve_law(model, law)?;
    let ks: Vec<usize> = (2..=k_max.max(2)).collect();
    let p = asymptotics::predict(model, &law, &ks)?;
    Ok(match format {
        Format::Json => to_json(&prediction_json(&p)),
        Format::Csv => prediction_csv(&p),
    })
}

fn cmd_predict(a: &PredictArgs) -> Result<i32, Failure> {
    let model = parse_spec(&a.common.dist)?;
    let body = predict_body(&model, a.law, a.common.k_max, a.common.format)?;
    emit(a.common.out.as_deref(), &body)?;
    Ok(EXIT_OK)
}

// ----- verify -----

fn default_tol(law: &Law) -> f64 {
    match law {
        Law::ParetoRate => 0.01,
        Law::CompactDoubleExp => 0.02,
        Law::IncrementFormula | Law::IndexIntegral => 0.05,
        Law::ClosedForm(_) => 0.10,
    }
}

struct VerifyOutcome {
    report: ComparisonReport,
    mc: Option<Value>,
}

fn run_verify(
    model: &DensityModel,
    law: Option<LawArg>,
    k_max: usize,
    horizon_n: usize,
    window: Option<(usize, usize)>,
    tol: Option<f64>,
    samples: usize,
    seed: u64,
) -> Result<VerifyOutcome, Failure> {
    let (law, _) = resolve_law(model, law)?;
    let cfg = config_for(k_max, horizon_n)?;
    let seq = solver::solve(model, &cfg)?;
    let window = window.unwrap_or((k_max / 4, 3 * k_max / 4));
    if window.1 > k_max {
        return Err(Failure::usage(format!(
            "window end {} exceeds k_max {k_max}",
            window.1
        )));
    }
    let ks: Vec<usize> = (window.0.max(1)..=window.1).collect();
    let prediction = asymptotics::predict_for_sequence(model, &law, &seq, &ks)?;
    let config = CompareConfig {
        tol: tol.unwrap_or_else(|| default_tol(&law)),
        ..Default::default()
    };
    let report = verify::compare(&seq, &prediction, window, &config)?;
    let mc = if samples > 0 {
        let est = verify::expected_search_time_mc(model, &seq, samples, seed);
        let m1 = model.first_abs_moment()?;
        let j = verify::objective_value(model, &seq).value;
        Some(json!({
            "estimate": est,
            "first_abs_moment": m1,
            "objective": j,
            "identity_gap_sigmas": (est.mean - (m1 + j)).abs() / est.std_error,
        }))
    } else {
        None
    };
    Ok(VerifyOutcome { report, mc })
}

fn report_json(o: &VerifyOutcome, fitted: Option<BTreeMap<String, f64>>) -> Value {
    let r = &o.report;
    let rows: Vec<Value> = r
        .rows
        .iter()
        .map(|row| json!({"k": row.k, "numeric": num(row.numeric), "predicted": num(row.predicted), "ratio": num(row.ratio)}))
        .collect();
    let mut v = json!({
        "schema": SCHEMA,
        "kind": "comparison-report",
        "model": r.model,
        "law": r.law,
        "quantity": r.quantity,
        "window": [r.window.0, r.window.1],
        "rows": rows,
        "summary": {
            "tail_mean_ratio": num(r.summary.tail_mean_ratio),
            "log_ratio_slope": num(r.summary.log_ratio_slope),
            "min_ratio": num(r.summary.min_ratio),
            "max_ratio": num(r.summary.max_ratio),
            "tol": r.summary.tol,
            "slope_tol": r.summary.slope_tol,
        },
        "verdict": r.verdict.as_str(),
    });
    if let Some(f) = fitted {
        v["fitted_constants"] = json!(f);
    }
    if let Some(mc) = &o.mc {
        v["monte_carlo"] = mc.clone();
    }
    v
}

fn report_csv(r: &ComparisonReport) -> String {
    let rows = r
        .rows
        .iter()
        .map(|row| {
            vec![
                row.k.to_string(),
                row.numeric.to_string(),
                row.predicted.to_string(),
                row.ratio.to_string(),
                r.verdict.as_str().to_string(),
            ]
        })
        .collect();
    csv_string(&["k", "numeric", "predicted", "ratio", "verdict"], rows)
}

fn verdict_code(v: Verdict) -> i32 {
    if v == Verdict::Converging {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGING
    }
}

fn cmd_verify(a: &VerifyArgs) -> Result<i32, Failure> {
    let model = parse_spec(&a.common.dist)?;
    let o = run_verify(
        &model,
        a.law,
        a.common.k_max,
        a.horizon_n,
        a.window,
        a.tol,
        a.samples,
        a.seed,
    )?;
    let body = match a.common.format {
        Format::Json => to_json(&report_json(&o, None)),
        Format::Csv => report_csv(&o.report),
    };
    emit(a.common.out.as_deref(), &body)?;
    Ok(verdict_code(o.report.verdict))
}

// ----- sweep -----

/// Density specs from a manifest: one per line, `#` comments, blank lines ignored.
pub fn read_manifest(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

fn file_stem(spec: &str) -> String {
    spec.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct SweepEntry {
    dist: String,
    exit_code: i32,
    verdict: Option<String>,
    error: Option<String>,
}

fn sweep_one(a: &SweepArgs, spec: &str) -> SweepEntry {
    let ext = match a.format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    let stem = a.out.join(file_stem(spec));
    let path = |what: &str| PathBuf::from(format!("{}.{what}.{ext}", stem.display()));
    let run = || -> Result<(i32, Option<String>), Failure> {
        let model = parse_spec(spec)?;
        let solved = solve_body(&model, a.k_max, a.horizon_n, a.format)?;
        emit(Some(&path("solve")), &solved)?;
        if model.classify_tail()? == TailClass::CompactTerminating {
            return Ok((EXIT_OK, None));
        }
        let predicted = predict_body(&model, None, a.k_max, a.format)?;
        emit(Some(&path("predict")), &predicted)?;
        let o = run_verify(
            &model,
            None,
            a.k_max,
            a.horizon_n,
            None,
            None,
            a.samples,
            a.seed,
        )?;
        let body = match a.format {
            Format::Json => to_json(&report_json(&o, None)),
            Format::Csv => report_csv(&o.report),
        };
        emit(Some(&path("verify")), &body)?;
        Ok((
            verdict_code(o.report.verdict),
            Some(o.report.verdict.as_str().to_string()),
        ))
    };
    match run() {
        Ok((code, verdict)) => SweepEntry {
            dist: spec.to_string(),
            exit_code: code,
            verdict,
            error: None,
        },
        Err(f) => SweepEntry {
            dist: spec.to_string(),
            exit_code: f.code,
            verdict: None,
            error: Some(f.message),
        },
    }
}

fn cmd_sweep(a: &SweepArgs) -> Result<i32, Failure> {
    let text = fs::read_to_string(&a.dist_list)
        .map_err(|e| Failure::usage(format!("{}: {e}", a.dist_list.display())))?;
    let specs = read_manifest(&text);
    if specs.is_empty() {
        return Err(Failure::usage(format!(
            "{} lists no densities",
            a.dist_list.display()
        )));
    }
    fs::create_dir_all(&a.out)
        .map_err(|e| Failure::runtime(format!("{}: {e}", a.out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(|e| Failure::runtime(e.to_string()))?;
    let entries: Vec<SweepEntry> =
        pool.install(|| specs.par_iter().map(|s| sweep_one(a, s)).collect());
    for e in &entries {
        if let Some(msg) = &e.error {
            eprintln!("{}: {msg}", e.dist);
        }
    }
    let code = entries.iter().map(|e| e.exit_code).max().unwrap_or(EXIT_OK);
    let summary = json!({
        "schema": SCHEMA,
        "kind": "sweep-summary",
        "k_max": a.k_max,
        "entries": entries,
        "exit_code": code,
    });
    emit(Some(&a.out.join("sweep-summary.json")), &to_json(&summary))?;
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_parse() {
        assert_eq!(parse_window("20:60").unwrap(), (20, 60));
        assert!(parse_window("60:20").is_err());
        assert!(parse_window("20-60").is_err());
    }

    #[test]
    fn manifest_comments() {
        let m = "# header\nexponential:1\n\n  lomax:3 # tail\n#triangular\nuniform";
        assert_eq!(
            read_manifest(m),
            vec!["exponential:1", "lomax:3", "uniform"]
        );
    }

    #[test]
    fn stems_are_file_safe() {
        assert_eq!(file_stem("stretchedexp:1,1"), "stretchedexp_1_1");
    }
}
