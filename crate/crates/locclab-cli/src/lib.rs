//! Argument handling and subcommands for the `locclab` binary.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use locclab::linalg::Tolerance;
use locclab::protocol::LoccProtocol;
use locclab::reducer::reduce_to_three_turns;
use locclab::reference::{build_eisert, entangling_power, known_input_feasible, ConvertibilityQuery};
use locclab::search::{entropy_frontier_with, optimize, write_frontier_csv};
use locclab::states::{
    canonical_resource, canonicalize_controlled_unitary, entanglement_entropy, schmidt_decompose, ControlledUnitary,
    GateFile, PureState, ResourceState,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Environment variable overriding both tolerances.
pub const EPS_ENV: &str = "LOCCLAB_EPS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] locclab::Error),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(locclab::Error::NotVerified(_) | locclab::Error::Reduction { .. }) => EXIT_FAIL,
            _ => EXIT_ERROR,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "locclab", version, about = "LOCC implementations of two-qubit controlled-unitary gates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Canonical form of a controlled gate or a Schmidt-2 resource state.
    Canon(CanonArgs),
    /// Check that a protocol implements the target gate on every branch.
    Verify(VerifyArgs),
    /// Reduce a verified protocol to three turns.
    Reduce(ReduceArgs),
    /// Emit the three-turn reference protocol with one ebit.
    Eisert(EisertArgs),
    /// Entangling power of the target gate.
    Epower(EpowerArgs),
    /// Known-input convertibility of a resource.
    Convert(ConvertArgs),
    /// Simplex search for three-turn implementations.
    Search(SearchArgs),
    /// Best infidelity against a grid of resource entropy caps.
    Frontier(FrontierArgs),
}

#[derive(Debug, Args)]
struct Output {
    /// Write the result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Target {
    /// Gate angle in radians; accepts "pi", "pi/4", "3pi/4", "-pi/2" or a decimal.
    #[arg(long, value_parser = parse_theta, allow_hyphen_values = true)]
    theta: Option<f64>,
    /// Gate file ({form, matrix}) instead of an angle.
    #[arg(long, conflicts_with = "theta")]
    gate: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CanonArgs {
    #[arg(long, required_unless_present = "state", conflicts_with = "state")]
    gate: Option<PathBuf>,
    /// State file ({dims, amplitudes}).
    #[arg(long)]
    state: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    protocol: PathBuf,
    #[command(flatten)]
    target: Target,
    /// Also test |±⟩|±⟩ inputs.
    #[arg(long)]
    superpositions: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct ReduceArgs {
    #[arg(long)]
    protocol: PathBuf,
    #[command(flatten)]
    target: Target,
    /// Write the per-step trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct EisertArgs {
    #[command(flatten)]
    target: Target,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct EpowerArgs {
    #[command(flatten)]
    target: Target,
    /// Objective evaluations.
    #[arg(long, default_value_t = 20_000)]
    budget: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// Query file ({input, theta | gate, resource}).
    #[arg(long)]
    query_file: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long, value_parser = parse_theta, allow_hyphen_values = true)]
    theta: f64,
    /// Resource Schmidt rank (2 or 3).
    #[arg(long, default_value_t = 2)]
    rank: usize,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    /// Objective evaluations per restart.
    #[arg(long, default_value_t = 20_000)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the best protocol here.
    #[arg(long)]
    protocol_out: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct FrontierArgs {
    #[arg(long, value_parser = parse_theta, allow_hyphen_values = true)]
    theta: f64,
    #[arg(long, default_value_t = 2)]
    rank: usize,
    /// Comma-separated entropy caps in ebits.
    #[arg(long, value_delimiter = ',', required = true)]
    caps: Vec<f64>,
    #[arg(long, default_value_t = 5_000)]
    budget: usize,
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    output: Output,
}

/// Query file for `convert`.
#[derive(Debug, Deserialize)]
struct QueryFile {
    input: PureState,
    #[serde(default)]
    theta: Option<f64>,
    #[serde(default)]
    gate: Option<GateFile>,
    resource: PureState,
}

#[derive(Debug, Serialize)]
struct StateCanon {
    schmidt_coefficients: Vec<f64>,
    entropy: f64,
    resource: Option<ResourceState>,
}

/// Angle in radians from a decimal or a multiple/fraction of pi.
pub fn parse_theta(text: &str) -> std::result::Result<f64, String> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    let bad = || format!("cannot parse angle {text:?}");
    let Some(at) = s.find("pi") else {
        return s.parse::<f64>().map_err(|_| bad());
    };
    let (head, tail) = (&s[..at], &s[at + 2..]);
    let head = head.strip_suffix('*').unwrap_or(head);
    let factor = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| bad())?,
    };
    let divisor = match tail {
        "" => 1.0,
        t => {
            let d = t.strip_prefix('/').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?;
            if d == 0.0 {
                return Err(bad());
            }
            d
        }
    };
    let value = factor * std::f64::consts::PI / divisor;
    value.is_finite().then_some(value).ok_or_else(bad)
}

/// Default tolerances, or both set from [`EPS_ENV`].
pub fn tolerance_from_env() -> CliResult<Tolerance> {
    match std::env::var(EPS_ENV) {
        Ok(v) => {
            let eps: f64 = v.trim().parse().map_err(|_| CliError::Usage(format!("{EPS_ENV}={v:?} is not a number")))?;
            Ok(Tolerance::new(eps, eps)?)
        }
        Err(_) => Ok(Tolerance::default()),
    }
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::File { path: path.to_owned(), source })
}

fn write(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::File { path: path.clone(), source }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn load_gate(path: &Path) -> CliResult<ControlledUnitary> {
    let file: GateFile = serde_json::from_str(&read(path)?)?;
    Ok(canonicalize_controlled_unitary(&file.matrix, file.form)?)
}

fn target(t: &Target) -> CliResult<ControlledUnitary> {
    match (&t.gate, t.theta) {
        (Some(path), _) => load_gate(path),
        (None, Some(theta)) => Ok(ControlledUnitary::canonical(theta)),
        (None, None) => Err(CliError::Usage("one of --theta or --gate is required".into())),
    }
}

fn load_protocol(path: &Path) -> CliResult<LoccProtocol> {
    Ok(LoccProtocol::from_json(&read(path)?)?)
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> CliResult<i32> {
    let tol = tolerance_from_env()?;
    match command {
        Command::Canon(a) => canon(a, tol),
        Command::Verify(a) => {
            let p = load_protocol(&a.protocol)?;
            let opts = locclab::verifier::VerifyOptions { superposition_inputs: a.superpositions };
            let report = locclab::verifier::verify_with(&p, &target(&a.target)?, tol, opts)?;
            write(&a.output.out, &to_json(&report)?)?;
            Ok(if report.pass { EXIT_OK } else { EXIT_FAIL })
        }
        Command::Reduce(a) => {
            let p = load_protocol(&a.protocol)?;
            let r = reduce_to_three_turns(&p, &target(&a.target)?, tol)?;
            if let Some(path) = &a.trace {
                write(&Some(path.clone()), &to_json(&r.steps)?)?;
            }
            write(&a.output.out, &r.protocol.to_json()?)?;
            Ok(EXIT_OK)
        }
        Command::Eisert(a) => {
            let p = build_eisert(&target(&a.target)?);
            write(&a.output.out, &p.to_json()?)?;
            Ok(EXIT_OK)
        }
        Command::Epower(a) => {
            let e = entangling_power(&target(&a.target)?, a.budget);
            write(&a.output.out, &to_json(&e)?)?;
            Ok(EXIT_OK)
        }
        Command::Convert(a) => {
            let q: QueryFile = serde_json::from_str(&read(&a.query_file)?)?;
            let target_gate = match (q.gate, q.theta) {
                (Some(g), _) => canonicalize_controlled_unitary(&g.matrix, g.form)?,
                (None, Some(theta)) => ControlledUnitary::canonical(theta),
                (None, None) => return Err(CliError::Usage("query needs theta or gate".into())),
            };
            let query = ConvertibilityQuery { input: q.input, target_gate, resource: canonical_resource(&q.resource)? };
            let c = known_input_feasible(&query, tol)?;
            write(&a.output.out, &to_json(&c)?)?;
            Ok(EXIT_OK)
        }
        Command::Search(a) => {
            let r = optimize(a.theta, a.rank, a.restarts, a.budget, a.seed)?;
            if let Some(path) = &a.protocol_out {
                write(&Some(path.clone()), &r.protocol()?.to_json()?)?;
            }
            write(&a.output.out, &to_json(&r)?)?;
            Ok(if r.verified { EXIT_OK } else { EXIT_FAIL })
        }
        Command::Frontier(a) => {
            let pts = entropy_frontier_with(a.theta, a.rank, &a.caps, a.budget, a.restarts, a.seed)?;
            let text = match a.format {
                Format::Json => to_json(&pts)?,
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_frontier_csv(&pts, &mut buf)?;
                    String::from_utf8(buf).expect("csv output is ascii").trim_end().to_owned()
                }
            };
            write(&a.output.out, &text)?;
            Ok(EXIT_OK)
        }
    }
}

fn canon(a: CanonArgs, tol: Tolerance) -> CliResult<i32> {
    if let Some(path) = &a.gate {
        write(&a.output.out, &to_json(&load_gate(path)?)?)?;
        return Ok(EXIT_OK);
    }
    let path = a.state.as_ref().expect("clap requires --gate or --state");
    let state: PureState = serde_json::from_str(&read(path)?)?;
    let d = schmidt_decompose(&state)?;
    let rank = locclab::states::schmidt_number(&state, tol)?;
    let out = StateCanon {
        schmidt_coefficients: d.coeffs.clone(),
        entropy: entanglement_entropy(&state)?,
        resource: if rank == 2 && state.dims() == (2, 2) { Some(canonical_resource(&state)?) } else { None },
    };
    write(&a.output.out, &to_json(&out)?)?;
    Ok(EXIT_OK)
}
