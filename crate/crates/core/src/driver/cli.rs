//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::concrete::{oracle_check, OracleVerdict};
use crate::frontend;
use crate::solver::{SolverConfig, KNOWN_SOLVERS};

use super::report::{Report, StateReport};
use super::{bench, generalize, search, Algorithm, SearchOptions};

/// Exit status for usage, input and environment errors.
pub const EXIT_USAGE: i32 = 3;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AlgorithmArg {
    Lazy,
    Naive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Text,
}

/// Finds violations of forall-exists safety hyperproperties by symbolic
/// execution.
#[derive(Debug, Parser)]
#[command(name = "hyperfind", version)]
struct Args {
    /// Input file with program definitions and a specification.
    #[arg(required_unless_present = "bench")]
    file: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "lazy")]
    algorithm: AlgorithmArg,

    /// Largest number of observations to explore.
    #[arg(long, default_value_t = 10)]
    max_observations: usize,

    /// Per-trace transition budget (default: 10 * k * number of locations).
    #[arg(long)]
    step_budget: Option<usize>,

    /// SMT solver binary (default: first of yices-smt2, z3, cvc5 on PATH).
    #[arg(long)]
    solver: Option<PathBuf>,

    /// Timeout for each final query, in milliseconds.
    #[arg(long, default_value_t = 60_000)]
    timeout_ms: u64,

    /// Timeout for each path feasibility check, in milliseconds.
    #[arg(long, default_value_t = 5_000)]
    feasibility_timeout_ms: u64,

    /// Write every final query to this directory as an SMT-LIB script.
    #[arg(long)]
    emit_smt: Option<PathBuf>,

    /// Run the finite-domain brute-force checker instead of the solver.
    #[arg(long)]
    oracle: bool,

    /// Havoc domain for --oracle, as `lo..hi` (inclusive).
    #[arg(long, default_value = "0..1", value_parser = parse_domain)]
    domain: (i64, i64),

    #[arg(long, value_enum, default_value = "json")]
    report: ReportFormat,

    /// Print the lowered program graphs to stderr.
    #[arg(long)]
    dump_graphs: bool,

    /// Run a benchmark manifest instead of a single file.
    #[arg(long)]
    bench: Option<PathBuf>,
}

fn parse_domain(s: &str) -> Result<(i64, i64), String> {
    let (lo, hi) = s.split_once("..").ok_or("expected `lo..hi`")?;
    let lo: i64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: i64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if lo > hi {
        return Err("empty domain".into());
    }
    if hi - lo > 1000 {
        return Err("domain too large".into());
    }
    Ok((lo, hi))
}

#[derive(Serialize)]
struct OracleReport {
    verdict: &'static str,
    k: Option<usize>,
    witness: Vec<Vec<StateReport>>,
}

/// Runs the tool and returns its exit status. Reports go to `out`,
/// diagnostics to `err`.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(&args, out, err) {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_USAGE
        }
    }
}

fn solver_config(args: &Args) -> Result<SolverConfig, String> {
    match &args.solver {
        Some(path) => Ok(SolverConfig::new(path)),
        None => SolverConfig::detect().ok_or_else(|| {
            format!("no SMT solver found on PATH (tried {}); use --solver", KNOWN_SOLVERS.join(", "))
        }),
    }
}

fn run(args: &Args, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, String> {
    let algorithm = match args.algorithm {
        AlgorithmArg::Lazy => Algorithm::Lazy,
        AlgorithmArg::Naive => Algorithm::Naive,
    };
    let io = |e: std::io::Error| e.to_string();

    if let Some(manifest) = &args.bench {
        let mut opts = SearchOptions::new(solver_config(args)?);
        configure(&mut opts, args);
        let results = bench::run_manifest(manifest, algorithm, &opts)?;
        match args.report {
            ReportFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&results).map_err(|e| e.to_string())?),
            ReportFormat::Text => write!(out, "{}", bench::table(&results)),
        }
        .map_err(io)?;
        return Ok(0);
    }

    let file = args.file.as_ref().expect("clap enforces a file");
    let source = fs::read_to_string(file).map_err(|e| format!("cannot read {}: {e}", file.display()))?;
    let inst = frontend::load(&source).map_err(|e| format!("{}:{e}", file.display()))?;

    if args.dump_graphs {
        for q in &inst.quantifiers {
            writeln!(err, "// {} in {}", q.trace, q.program).map_err(io)?;
            write!(err, "{}", q.graph.dump()).map_err(io)?;
        }
    }

    if args.oracle {
        let domain: Vec<i64> = (args.domain.0..=args.domain.1).collect();
        let verdict = oracle_check(&inst, args.max_observations, &domain, args.step_budget);
        let (name, k, witness, code) = match &verdict {
            OracleVerdict::Holds => ("no_bug", Some(args.max_observations), vec![], 0),
            OracleVerdict::Violated { k, witness } => ("bug_found", Some(*k), witness.clone(), 1),
            OracleVerdict::Inconclusive => ("inconclusive", None, vec![], 2),
        };
        let universals: Vec<_> = inst.universals().collect();
        let report = OracleReport {
            verdict: name,
            k,
            witness: witness
                .iter()
                .zip(&universals)
                .map(|(t, q)| t.iter().map(|s| StateReport::new(&q.graph, s)).collect())
                .collect(),
        };
        match args.report {
            ReportFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?),
            ReportFormat::Text => writeln!(out, "oracle: {name}{}", k.map(|k| format!(" (k = {k})")).unwrap_or_default()),
        }
        .map_err(io)?;
        return Ok(code);
    }

    let gen = generalize(&inst).map_err(|e| e.to_string())?;
    if args.dump_graphs && (inst.quantifiers.len() > 2 || gen.existential.is_none()) {
        writeln!(err, "// universal product").map_err(io)?;
        write!(err, "{}", gen.universal.graph.dump()).map_err(io)?;
    }
    let mut opts = SearchOptions::new(solver_config(args)?);
    configure(&mut opts, args);
    let outcome = search(&gen, algorithm, &opts).map_err(|e| e.to_string())?;
    let report = Report::new(&gen.universal.graph, &outcome);
    match args.report {
        ReportFormat::Json => writeln!(out, "{}", report.to_json()),
        ReportFormat::Text => write!(out, "{}", report.to_text()),
    }
    .map_err(io)?;
    Ok(outcome.verdict.exit_code())
}

fn configure(opts: &mut SearchOptions, args: &Args) {
    opts.max_observations = args.max_observations;
    opts.step_budget = args.step_budget;
    opts.query_timeout = Duration::from_millis(args.timeout_ms);
    opts.feasibility_timeout = Duration::from_millis(args.feasibility_timeout_ms);
    opts.emit_smt = args.emit_smt.clone();
}
