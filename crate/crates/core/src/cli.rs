//! Command-line front end: argument parsing, verdicts, and canonical
//! JSON/CSV reports.
//!
//! Exit codes: 0 when every verdict passes, 1 when at least one fails,
//! 2 for usage errors and 3 for internal failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bell::{bell_operator, bell_value, spectral_quantum_value};
use crate::clifford::{canonical_strategy, check_generators, clifford_generators, scramble, Strategy};
use crate::error::{BellError, Result};
use crate::extract::{extract_with, ExtractOptions};
use crate::game::{bound_report, build_game, local_bound_bruteforce, quantum_bound, MAX_BRUTEFORCE_N};
use crate::opalg::{hermitian_defect, involution_defect, real};
use crate::robustness::{log_grid, scaling_sweep, Frame, NoiseModel, ScalingReport, SweepConfig};
use crate::sos::{optimality_diagnostics, verify_sos_identity};

pub const SCHEMA_VERSION: &str = "1";

/// Largest joint dimension for the spectral cross-check in `bounds`.
const CLI_SPECTRAL_DIM: usize = 256;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Documented tolerance names and their defaults.
pub fn default_tolerances() -> BTreeMap<String, f64> {
    [
        ("bound_slack", 1.05),
        ("degeneracy", 1e-8),
        ("exponent_hi", 0.60),
        ("exponent_lo", 0.40),
        ("generator_defect", 1e-8),
        ("infidelity", 1e-6),
        ("kernel_residual", 1e-9),
        ("optimality", 1e-8),
        ("precondition", 1e-8),
        ("regime_max", 1e-3),
        ("residual_slack", 1.01),
        ("sos_identity", 1e-8),
        ("spectral", 1e-9),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

const TOL_HELP: &str = "Tolerances (--tol.NAME=VALUE):
  sos_identity=1e-8      SOS identity defect, relative to Σω_x
  kernel_residual=1e-9   largest ‖M_x|ψ⟩‖
  optimality=1e-8        optimality-relation defects
  infidelity=1e-6        extraction succeeds when fidelity ≥ 1 − infidelity
  generator_defect=1e-8  largest extracted generator defect
  precondition=1e-8      involution/anticommutation precondition for extraction
  spectral=1e-9          spectral cross-check of the quantum bound
  degeneracy=1e-8        Schmidt-weight degeneracy
  regime_max=1e-3        largest δ for which robustness bounds are enforced
  bound_slack=1.05       allowed ratio state_distance / (C_n√δ)
  residual_slack=1.01    allowed ratio ‖M_x|ψ̃⟩‖ / (√(2/√n)·√δ)
  exponent_lo=0.40, exponent_hi=0.60   accepted range of the fitted exponent";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelArg {
    #[value(name = "state_mix")]
    StateMix,
    #[value(name = "bob_rotate")]
    BobRotate,
    #[value(name = "alice_rotate")]
    AliceRotate,
    #[value(name = "combined")]
    Combined,
}

impl From<ModelArg> for NoiseModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::StateMix => NoiseModel::StateMix,
            ModelArg::BobRotate => NoiseModel::BobRotate,
            ModelArg::AliceRotate => NoiseModel::AliceRotate,
            ModelArg::Combined => NoiseModel::Combined,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

/// Test hook: corrupts the canonical strategy before certification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Replaces `A_0` by `0.9·A_0`, which no longer squares to the identity.
    #[value(name = "non_involutive")]
    NonInvolutive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Classical and quantum bounds with cross-checks.
    Bounds,
    /// Canonical Clifford strategy and its Bell value.
    Strategy,
    /// Sum-of-squares certificate and optimality relations.
    SosCheck,
    /// Scramble the canonical strategy and extract it again.
    Extract,
    /// √δ robustness sweep.
    Robustness,
    /// Strategy, SOS check, extraction and a short robustness sweep.
    All,
}

#[derive(Debug, Parser)]
#[command(name = "bellcert", version, about = "Certification toolkit for the n-setting Clifford Bell functional", after_help = TOL_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Number of Bob settings.
    #[arg(long, global = true, default_value_t = 3, value_parser = clap::value_parser!(u64).range(2..=20))]
    pub n: u64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value = "state_mix")]
    pub model: ModelArg,
    /// Comma-separated noise strengths; defaults to 7 log-spaced points in [1e-4, 1e-2].
    #[arg(long = "eps-grid", global = true, value_delimiter = ',')]
    pub eps_grid: Option<Vec<f64>>,
    /// Seeds per grid point.
    #[arg(long, global = true, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long = "junk-a", global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=16))]
    pub junk_a: u64,
    #[arg(long = "junk-b", global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=16))]
    pub junk_b: u64,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<std::path::PathBuf>,
    #[arg(long, global = true, env = "BELLCERT_THREADS")]
    pub threads: Option<usize>,
    /// Tolerance override NAME=VALUE (also accepted as --tol.NAME=VALUE).
    #[arg(long = "tol", global = true, value_name = "NAME=VALUE")]
    pub tol: Vec<String>,
    #[arg(long = "inject-fault", global = true, value_enum, hide = true)]
    pub inject_fault: Option<Fault>,
}

/// Rewrites `--tol.NAME=VALUE` and `--tol.NAME VALUE` into `--tol NAME=VALUE`.
pub fn preprocess_args<I, T>(args: I) -> Vec<OsString>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let mut out = Vec::new();
    let mut iter = args.into_iter().map(Into::into).peekable();
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy().into_owned();
        match text.strip_prefix("--tol.") {
            Some(rest) if rest.contains('=') => {
                out.push("--tol".into());
                out.push(rest.into());
            }
            Some(name) => {
                out.push("--tol".into());
                let value = iter.next().map(|v| v.to_string_lossy().into_owned()).unwrap_or_default();
                out.push(format!("{name}={value}").into());
            }
            None => out.push(arg),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    /// `"<="` or `">="`: how `measured` is compared with `threshold`.
    pub comparison: &'static str,
}

impl Verdict {
    pub fn le(measured: f64, threshold: f64) -> Self {
        Self { passed: measured <= threshold, measured, threshold, comparison: "<=" }
    }

    pub fn ge(measured: f64, threshold: f64) -> Self {
        Self { passed: measured >= threshold, measured, threshold, comparison: ">=" }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub n: usize,
    pub seed: u64,
    pub model: ModelArg,
    pub eps_grid: Vec<f64>,
    pub seeds: usize,
    pub junk_a: usize,
    pub junk_b: usize,
    pub format: Format,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject_fault: Option<Fault>,
}

impl RunConfig {
    fn tol(&self, name: &str) -> f64 {
        self.tolerances[name]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: &'static str,
    pub config: RunConfig,
    pub payload: Value,
    pub verdicts: BTreeMap<String, Verdict>,
    pub passed: bool,
    /// Robustness rows for CSV output; not part of the JSON document.
    #[serde(skip)]
    pub sweep: Option<ScalingReport>,
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut tolerances = default_tolerances();
    for item in &cli.tol {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| BellError::InvalidParameter(format!("tolerance {item:?} is not NAME=VALUE")))?;
        if !tolerances.contains_key(name) {
            return Err(BellError::InvalidParameter(format!("unknown tolerance name {name:?}")));
        }
        let v: f64 = value
            .parse()
            .map_err(|_| BellError::InvalidParameter(format!("tolerance {name} has non-numeric value {value:?}")))?;
        if !v.is_finite() || v < 0.0 {
            return Err(BellError::InvalidParameter(format!("tolerance {name} must be finite and non-negative")));
        }
        tolerances.insert(name.to_string(), v);
    }
    Ok(RunConfig {
        command: cli.command,
        n: cli.n as usize,
        seed: cli.seed,
        model: cli.model,
        eps_grid: cli.eps_grid.clone().unwrap_or_else(|| log_grid(1e-4, 1e-2, 7)),
        seeds: cli.seeds,
        junk_a: cli.junk_a as usize,
        junk_b: cli.junk_b as usize,
        format: cli.format,
        tolerances,
        inject_fault: cli.inject_fault,
    })
}

type Verdicts = BTreeMap<String, Verdict>;

fn cmd_bounds(cfg: &RunConfig, v: &mut Verdicts) -> Result<Value> {
    let n = cfg.n;
    let report = bound_report(n)?;
    let game = build_game(n)?;
    let brute = if n <= MAX_BRUTEFORCE_N {
        let b = local_bound_bruteforce(&game)?;
        v.insert("local_bound_bruteforce".into(), Verdict::le((b as f64 - report.local_bound as f64).abs(), 0.0));
        json!(b)
    } else {
        json!(format!("skipped: n>{MAX_BRUTEFORCE_N}"))
    };
    let m = crate::clifford::m_star(n);
    let spectral = if m * m <= CLI_SPECTRAL_DIM {
        let s = canonical_strategy(n)?;
        let value = spectral_quantum_value(&bell_operator(&s.game, &s.alice_obs, &s.bob_obs)?)?;
        v.insert("spectral_quantum_value".into(), Verdict::le((value - report.quantum_bound).abs(), cfg.tol("spectral")));
        json!(value)
    } else {
        json!(format!("skipped: joint dimension {} > {CLI_SPECTRAL_DIM}", m * m))
    };
    Ok(json!({
        "n": n,
        "local": report.local_bound,
        "local_bruteforce": brute,
        "quantum": report.quantum_bound,
        "spectral": spectral,
        "ratio": report.ratio,
    }))
}

fn reference_strategy(cfg: &RunConfig) -> Result<Strategy> {
    let mut s = canonical_strategy(cfg.n)?;
    if let Some(Fault::NonInvolutive) = cfg.inject_fault {
        s.alice_obs[0] *= real(0.9);
    }
    Ok(s)
}

fn involution_verdict(s: &Strategy, v: &mut Verdicts, prefix: &str) {
    let worst = s
        .alice_obs
        .iter()
        .chain(&s.bob_obs)
        .map(|o| involution_defect(o).max(hermitian_defect(o)))
        .fold(0.0, f64::max);
    v.insert(format!("{prefix}observables_involutive"), Verdict::le(worst, crate::clifford::OBSERVABLE_TOL));
}

fn cmd_strategy(cfg: &RunConfig, v: &mut Verdicts, prefix: &str) -> Result<Value> {
    let s = reference_strategy(cfg)?;
    let basis = clifford_generators(cfg.n)?;
    let chk = check_generators(&basis.bob_gens);
    let value = bell_value(&s)?;
    let bound = quantum_bound(cfg.n);
    v.insert(format!("{prefix}bell_value"), Verdict::le((value - bound).abs(), cfg.tol("spectral")));
    v.insert(format!("{prefix}clifford_relations"), Verdict::le(chk.max_anticommutator.max(chk.max_involution_defect), 1e-12));
    involution_verdict(&s, v, prefix);
    Ok(json!({
        "n": cfg.n,
        "m_star": basis.m_star,
        "dims": [s.dims().0, s.dims().1],
        "bell_value": value,
        "quantum_bound": bound,
        "generator_check": chk,
    }))
}

fn cmd_sos(cfg: &RunConfig, v: &mut Verdicts, prefix: &str) -> Result<Value> {
    let s = reference_strategy(cfg)?;
    let cert = verify_sos_identity(&s)?;
    let diag = optimality_diagnostics(&s, cfg.tol("degeneracy"))?;
    let max_kernel = cert.kernel_residuals.iter().fold(0.0f64, |m, r| m.max(*r));
    v.insert(format!("{prefix}sos_identity"), Verdict::le(cert.identity_defect, cfg.tol("sos_identity") * cert.claimed_value));
    v.insert(format!("{prefix}kernel_residual"), Verdict::le(max_kernel, cfg.tol("kernel_residual")));
    v.insert(format!("{prefix}claimed_value"), Verdict::le((cert.claimed_value - quantum_bound(cfg.n)).abs(), cfg.tol("spectral")));
    v.insert(format!("{prefix}optimality_relations"), Verdict::le(diag.worst(), cfg.tol("optimality")));
    involution_verdict(&s, v, prefix);
    Ok(json!({ "certificate": cert, "diagnostics": diag }))
}

fn cmd_extract(cfg: &RunConfig, v: &mut Verdicts, prefix: &str) -> Result<Value> {
    let s = reference_strategy(cfg)?;
    let (scrambled, _) = scramble(&s, cfg.junk_a, cfg.junk_b, cfg.seed)?;
    let opts = ExtractOptions {
        tol: cfg.tol("precondition"),
        defect_tol: cfg.tol("generator_defect"),
        fidelity_threshold: 1.0 - cfg.tol("infidelity"),
    };
    let r = extract_with(&scrambled, &opts)?;
    v.insert(format!("{prefix}extraction_fidelity"), Verdict::ge(r.state_fidelity, opts.fidelity_threshold));
    v.insert(format!("{prefix}generator_defect"), Verdict::le(r.generator_defects.max(), opts.defect_tol));
    Ok(json!({
        "n": cfg.n,
        "bell_pairs": r.bell_pairs,
        "state_fidelity": r.state_fidelity,
        "junk_dims": [r.junk_dims.0, r.junk_dims.1],
        "junk_purity": r.junk_purity,
        "generator_defects": r.generator_defects,
        "unitarity_defects": [r.unitarity_defects.0, r.unitarity_defects.1],
        "conjugate": [r.conjugate.0, r.conjugate.1],
        "permutation": r.permutation,
        "stabilizer_defects": r.stabilizer_defects,
        "parity_leakage": r.parity_leakage,
        "success": r.success,
    }))
}

fn cmd_robustness(cfg: &RunConfig, seeds: usize, v: &mut Verdicts, prefix: &str) -> Result<(Value, ScalingReport)> {
    let mut sweep = SweepConfig::new(cfg.n, cfg.model.into(), cfg.eps_grid.clone(), seeds);
    sweep.base_seed = cfg.seed;
    sweep.frame = Frame::Extracted;
    sweep.regime_max = cfg.tol("regime_max");
    sweep.state_slack = cfg.tol("bound_slack");
    sweep.residual_slack = cfg.tol("residual_slack");
    let r = scaling_sweep(&sweep)?;
    let slope = r.state_fit.as_ref().map(|f| f.slope).unwrap_or(f64::NAN);
    v.insert(format!("{prefix}state_exponent_min"), Verdict::ge(slope, cfg.tol("exponent_lo")));
    v.insert(format!("{prefix}state_exponent_max"), Verdict::le(slope, cfg.tol("exponent_hi")));
    v.insert(format!("{prefix}state_bound_ratio"), Verdict::le(r.max_state_ratio, cfg.tol("bound_slack")));
    // Single-term residual bound √(2δ/√n); the even-split constant F_n is
    // reported in the payload only.
    let single = r
        .rows
        .iter()
        .filter(|row| row.in_regime)
        .map(|row| row.sample.max_residual / row.sample.bound_values.single_term_residual)
        .fold(0.0f64, f64::max);
    v.insert(format!("{prefix}residual_bound_ratio"), Verdict::le(single, cfg.tol("residual_slack")));
    let payload = json!({
        "n": cfg.n,
        "model": cfg.model,
        "frame": sweep.frame,
        "constants": r.constants,
        "state_fit": r.state_fit,
        "residual_fit": r.residual_fit,
        "alice_obs_fit": r.alice_obs_fit,
        "bob_obs_fit": r.bob_obs_fit,
        "samples": r.rows.len(),
        "in_regime": r.in_regime,
        "max_state_ratio": r.max_state_ratio,
        "max_single_term_residual_ratio": single,
        "max_f_n_residual_ratio": r.max_residual_ratio,
        "f_n_residual_violations": r.residual_violations,
        "max_anticomm_ratio": r.max_anticomm_ratio,
        "rows": r.rows.iter().map(|row| json!({
            "eps": row.eps,
            "seed": row.seed,
            "in_regime": row.in_regime,
            "delta": row.sample.delta,
            "state_distance": row.sample.state_distance,
            "max_residual": row.sample.max_residual,
            "max_anticomm": row.sample.max_anticomm,
            "alice_obs_deviation": row.sample.alice_obs_deviation,
            "bob_obs_deviation": row.sample.bob_obs_deviation,
            "bound_values": row.sample.bound_values,
        })).collect::<Vec<_>>(),
    });
    Ok((payload, r))
}

/// Runs one command and collects its verdicts.
pub fn execute(cfg: &RunConfig) -> Result<Report> {
    let mut verdicts = Verdicts::new();
    let mut sweep = None;
    let payload = match cfg.command {
        Command::Bounds => cmd_bounds(cfg, &mut verdicts)?,
        Command::Strategy => cmd_strategy(cfg, &mut verdicts, "")?,
        Command::SosCheck => cmd_sos(cfg, &mut verdicts, "")?,
        Command::Extract => cmd_extract(cfg, &mut verdicts, "")?,
        Command::Robustness => {
            let (p, r) = cmd_robustness(cfg, cfg.seeds, &mut verdicts, "")?;
            sweep = Some(r);
            p
        }
        Command::All => {
            let strategy = cmd_strategy(cfg, &mut verdicts, "strategy.")?;
            let sos = cmd_sos(cfg, &mut verdicts, "sos.")?;
            // An invalid strategy cannot be extracted; the failed verdicts
            // above already carry the diagnosis.
            let extract = if cfg.inject_fault.is_some() {
                json!("skipped: fault injected")
            } else {
                cmd_extract(cfg, &mut verdicts, "extract.")?
            };
            let (robust, r) = cmd_robustness(cfg, cfg.seeds.min(3), &mut verdicts, "robustness.")?;
            sweep = Some(r);
            json!({ "strategy": strategy, "sos": sos, "extract": extract, "robustness": robust })
        }
    };
    let passed = verdicts.values().all(|v| v.passed);
    Ok(Report { schema_version: SCHEMA_VERSION, config: cfg.clone(), payload, verdicts, passed, sweep })
}

/// Formats a float with 17 significant digits.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent + 1);
    let close = "  ".repeat(indent);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(num) => {
            if num.is_f64() {
                out.push_str(&format_float(num.as_f64().unwrap_or(f64::NAN)));
            } else {
                out.push_str(&num.to_string());
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap_or_default()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad);
                write_value(item, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&close);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            // serde_json's default map is a BTreeMap, so keys iterate sorted.
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                let _ = write!(out, "{pad}{}: ", serde_json::to_string(k).unwrap_or_default());
                write_value(item, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&close);
            out.push('}');
        }
    }
}

/// Canonical JSON text: sorted keys, two-space indentation, floats with 17
/// significant digits, trailing newline.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, 0, &mut out);
    out.push('\n');
    out
}

fn csv_text(report: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| BellError::Io(e.to_string());
    match &report.sweep {
        Some(sweep) => {
            w.write_record([
                "eps",
                "seed",
                "in_regime",
                "delta",
                "state_distance",
                "max_residual",
                "max_anticomm",
                "alice_obs_deviation",
                "bob_obs_deviation",
                "bound_state_distance",
                "bound_residual",
                "bound_anticomm",
                "bound_alice_obs",
                "bound_bob_obs",
                "bound_single_term_residual",
            ])
            .map_err(io)?;
            for row in &sweep.rows {
                let s = &row.sample;
                let b = &s.bound_values;
                let mut rec = vec![format_float(row.eps), row.seed.to_string(), row.in_regime.to_string()];
                rec.extend(
                    [
                        s.delta,
                        s.state_distance,
                        s.max_residual,
                        s.max_anticomm,
                        s.alice_obs_deviation,
                        s.bob_obs_deviation,
                        b.state_distance,
                        b.residual,
                        b.anticomm,
                        b.alice_obs,
                        b.bob_obs,
                        b.single_term_residual,
                    ]
                    .map(format_float),
                );
                w.write_record(&rec).map_err(io)?;
            }
        }
        None => {
            w.write_record(["check", "passed", "measured", "comparison", "threshold"]).map_err(io)?;
            for (name, v) in &report.verdicts {
                w.write_record([
                    name.clone(),
                    v.passed.to_string(),
                    format_float(v.measured),
                    v.comparison.to_string(),
                    format_float(v.threshold),
                ])
                .map_err(io)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| BellError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| BellError::Internal(e.to_string()))
}

/// Serialises a report in the requested format.
pub fn serialize(report: &Report, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let v = serde_json::to_value(report).map_err(|e| BellError::Internal(e.to_string()))?;
            Ok(canonical_json(&v))
        }
        Format::Csv => csv_text(report),
    }
}

fn error_kind(e: &BellError) -> &'static str {
    match e {
        BellError::InvalidParameter(_) => "invalid_parameter",
        BellError::DimensionMismatch(_) => "dimension_mismatch",
        BellError::ResourceLimit(_) => "resource_limit",
        BellError::NotHermitian { .. } => "not_hermitian",
        BellError::NotNormalized { .. } => "not_normalized",
        BellError::DegenerateStrategy { .. } => "degenerate_strategy",
        BellError::Precondition(_) => "precondition",
        BellError::NotExtractable(_) => "not_extractable",
        BellError::BlockStructure(_) => "block_structure",
        BellError::DegenerateGrid(_) => "degenerate_grid",
        BellError::BoundExceeded { .. } => "bound_exceeded",
        BellError::Internal(_) => "internal",
        BellError::Io(_) => "io",
    }
}

fn exit_code_for(e: &BellError) -> i32 {
    match e {
        BellError::InvalidParameter(_) | BellError::ResourceLimit(_) | BellError::DegenerateGrid(_) => EXIT_USAGE,
        _ => EXIT_INTERNAL,
    }
}

fn error_document(e: &BellError) -> String {
    canonical_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "error": { "kind": error_kind(e), "message": e.to_string() },
    }))
}

fn configure_threads(threads: Option<usize>) {
    if let Some(t) = threads.filter(|&t| t > 0) {
        // A second configuration attempt in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
}

/// Outcome of a CLI invocation: exit code, text for stdout and text for
/// stderr.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Parses `args` (including the program name) and runs the command. The
/// report is written to `--out` when given, and returned as `stdout`
/// otherwise.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let cli = match Cli::try_parse_from(preprocess_args(args)) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let text = e.render().to_string();
            return if code == EXIT_PASS {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    configure_threads(cli.threads);
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => return Outcome { code: EXIT_USAGE, stdout: String::new(), stderr: format!("error: {e}\n") },
    };
    let (code, text) = match execute(&cfg) {
        Ok(report) => match serialize(&report, cfg.format) {
            Ok(t) => (if report.passed { EXIT_PASS } else { EXIT_VERDICT }, t),
            Err(e) => (EXIT_INTERNAL, error_document(&e)),
        },
        Err(e) => (exit_code_for(&e), error_document(&e)),
    };
    match &cli.out {
        Some(path) => match std::fs::write(path, &text) {
            Ok(()) => Outcome { code, stdout: String::new(), stderr: String::new() },
            Err(e) => Outcome {
                code: EXIT_INTERNAL,
                stdout: String::new(),
                stderr: format!("error: cannot write {}: {e}\n", path.display()),
            },
        },
        None => Outcome { code, stdout: text, stderr: String::new() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> Outcome {
        run(std::iter::once("bellcert").chain(args.iter().copied()))
    }

    #[test]
    fn tol_flags_are_rewritten() {
        let out = preprocess_args(["bellcert", "--tol.sos_identity=1e-6", "--tol.infidelity", "1e-3", "bounds"]);
        let text: Vec<String> = out.iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert_eq!(text, ["bellcert", "--tol", "sos_identity=1e-6", "--tol", "infidelity=1e-3", "bounds"]);
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(format_float(2f64.sqrt()), "1.4142135623730951e0");
        assert_eq!(format_float(16.0), "1.6000000000000000e1");
        assert_eq!(format_float(f64::NAN), "null");
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let v = json!({"b": 1, "a": [1.5, true, null], "c": {"z": "s", "y": 2}});
        let text = canonical_json(&v);
        let a = text.find("\"a\"").unwrap();
        let b = text.find("\"b\"").unwrap();
        assert!(a < b);
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(canonical_json(&back), text);
    }

    #[test]
    fn unknown_tolerance_is_usage_error() {
        let o = run_args(&["bounds", "--n", "2", "--tol.bogus=1"]);
        assert_eq!(o.code, EXIT_USAGE);
    }

    #[test]
    fn bad_n_is_usage_error() {
        assert_eq!(run_args(&["bounds", "--n", "1"]).code, EXIT_USAGE);
        assert_eq!(run_args(&["frobnicate"]).code, EXIT_USAGE);
    }

    #[test]
    fn bounds_n2() {
        let o = run_args(&["bounds", "--n", "2"]);
        assert_eq!(o.code, EXIT_PASS, "{}", o.stdout);
        let v: Value = serde_json::from_str(&o.stdout).unwrap();
        assert_eq!(v["payload"]["local"], json!(2));
        assert!((v["payload"]["quantum"].as_f64().unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-15);
    }
}
