//! Command line front end: run procedures over RDF datasets or a SPARQL
//! endpoint, validate procedure files, render library templates and run the
//! benchmark suite.
//!
//! Exit codes: 0 success, 2 usage, 3 procedure syntax error, 4 validation
//! failure, 5 dataset load error, 6 query/backend error, 7 loop guard or
//! timeout, 1 anything else.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sparqal::backend::{Dataset, QueryBackend, RdfFormat, SparqlEndpoint};
use sparqal::bench::{load_manifest, run_bench};
use sparqal::export;
use sparqal::interpreter::{run_procedure, RunConfig, RunError, RunTrace, Strategy};
use sparqal::parser::{parse_procedure, pretty_print, validate_procedure};
use sparqal::stdlib;

const EXIT_SYNTAX: u8 = 3;
const EXIT_VALIDATION: u8 = 4;
const EXIT_LOAD: u8 = 5;
const EXIT_QUERY: u8 = 6;
const EXIT_GUARD: u8 = 7;

#[derive(Parser)]
#[command(name = "sparqal", version, about = "Procedural SPARQL with solution variables and loops")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a procedure against a dataset and export the result.
    Run(RunArgs),
    /// Parse and validate a procedure without executing it.
    Validate(SourceArgs),
    /// List library templates, or print one rendered with parameters.
    Templates(TemplatesArgs),
    /// Run a benchmark manifest and report per-task results.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SourceArgs {
    /// Procedure file (UTF-8 `.sparqal`).
    #[arg(long, conflicts_with = "stdlib")]
    proc: Option<PathBuf>,
    /// Library template name (see `sparqal templates`).
    #[arg(long)]
    stdlib: Option<String>,
    /// Template parameter, repeatable: `--param edge=http://...`
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// RDF file to load (repeatable; format from extension: .nt, .ttl).
    #[arg(long = "data", value_name = "FILE")]
    data: Vec<PathBuf>,
    /// Remote SPARQL protocol endpoint to query instead of local data.
    #[arg(long, conflicts_with = "data")]
    endpoint: Option<String>,
    #[arg(long, value_enum, default_value_t = StrategyArg::InMemory)]
    strategy: StrategyArg,
    /// QDom keys per batched query.
    #[arg(long, default_value_t = 64)]
    batch_width: usize,
    /// Concurrent batch evaluations.
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Loop iteration guard (0 disables).
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: u64,
    /// Whole-run deadline, e.g. 500ms, 30s, 5m (checked between queries).
    #[arg(long, value_parser = parse_duration)]
    timeout: Option<Duration>,
    /// Instantiated-query size (bytes) above which a statement falls back to
    /// batched evaluation.
    #[arg(long)]
    values_byte_limit: Option<usize>,
    /// Rows per sequence kept in memory before spilling to disk.
    #[arg(long)]
    spill_threshold: Option<usize>,
    #[arg(long, value_enum, default_value_t = OutFormat::Tsv)]
    out: OutFormat,
    /// Write results to a file instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print the execution trace to standard error.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct TemplatesArgs {
    /// Print this template's source (rendered when parameters are given).
    #[arg(long)]
    name: Option<String>,
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = StrategyArg::InMemory)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 64)]
    batch_width: usize,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Override the manifest's per-task timeout.
    #[arg(long, value_parser = parse_duration)]
    timeout: Option<Duration>,
    /// Write the machine-readable report (JSON) to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    #[value(name = "in-memory")]
    InMemory,
    Batched,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Tsv,
    Json,
}

fn parse_duration(text: &str) -> Result<Duration, String> {
    let text = text.trim();
    let (number, unit) = text
        .find(|c: char| !c.is_ascii_digit())
        .map(|at| text.split_at(at))
        .unwrap_or((text, "s"));
    let value: u64 = number.parse().map_err(|_| format!("bad duration: {text}"))?;
    match unit {
        "ms" => Ok(Duration::from_millis(value)),
        "s" | "" => Ok(Duration::from_secs(value)),
        "m" => Ok(Duration::from_secs(value * 60)),
        "h" => Ok(Duration::from_secs(value * 3600)),
        other => Err(format!("unknown duration unit '{other}'")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Templates(args) => cmd_templates(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match code {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn parse_params(pairs: &[String]) -> Result<BTreeMap<String, String>, Failure> {
    let mut params = BTreeMap::new();
    for pair in pairs {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| fail(2, format!("--param expects KEY=VALUE, got '{pair}'")))?;
        params.insert(key.to_string(), value.to_string());
    }
    Ok(params)
}

fn load_source(args: &SourceArgs) -> Result<String, Failure> {
    match (&args.proc, &args.stdlib) {
        (Some(path), None) => std::fs::read_to_string(path)
            .map_err(|e| fail(EXIT_LOAD, format!("cannot read {}: {e}", path.display()))),
        (None, Some(name)) => {
            let params = parse_params(&args.params)?;
            stdlib::get_procedure(name, &params).map_err(|e| fail(2, e.to_string()))
        }
        _ => Err(fail(2, "exactly one of --proc or --stdlib is required")),
    }
}

fn load_backend(data: &[PathBuf], endpoint: &Option<String>) -> Result<Box<dyn QueryBackend>, Failure> {
    if let Some(url) = endpoint {
        return Ok(Box::new(SparqlEndpoint::new(url.clone())));
    }
    if data.is_empty() {
        return Err(fail(2, "at least one --data file (or --endpoint) is required"));
    }
    let mut dataset = Dataset::empty().map_err(|e| fail(EXIT_LOAD, e.to_string()))?;
    for path in data {
        let format = RdfFormat::from_extension(path).ok_or_else(|| {
            fail(
                EXIT_LOAD,
                format!("cannot infer RDF format from extension: {}", path.display()),
            )
        })?;
        dataset
            .load_into(path, format)
            .map_err(|e| fail(EXIT_LOAD, e.to_string()))?;
    }
    eprintln!("loaded {} triple(s)", dataset.triple_count());
    Ok(Box::new(dataset))
}

fn run_config(args: &RunArgs) -> RunConfig {
    RunConfig {
        strategy: match args.strategy {
            StrategyArg::InMemory => Strategy::InMemory,
            StrategyArg::Batched => Strategy::Batched,
        },
        max_loop_iterations: (args.max_iters > 0).then_some(args.max_iters),
        per_query_timeout: None,
        run_deadline: args.timeout,
        values_byte_limit: args.values_byte_limit,
        batch_width: args.batch_width,
        parallelism: args.parallelism,
        spill_threshold: args
            .spill_threshold
            .unwrap_or(sparqal::solutions::DEFAULT_SPILL_THRESHOLD),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let source = load_source(&args.source)?;
    let ast = parse_procedure(&source).map_err(|e| fail(EXIT_SYNTAX, e.to_string()))?;
    let report = validate_procedure(&ast);
    if !report.is_empty() {
        let mut message = String::from("procedure is not well-formed:\n");
        for violation in &report.violations {
            let (line, column) = violation.span.to_line_col(&source);
            message.push_str(&format!("  line {line}, column {column}: {}\n", violation.message));
        }
        return Err(fail(EXIT_VALIDATION, message.trim_end().to_string()));
    }
    let backend = load_backend(&args.data, &args.endpoint)?;
    let cfg = run_config(&args);
    let (seq, trace) = run_procedure(&ast, backend.as_ref(), &cfg).map_err(|e| match e {
        RunError::LoopGuardExceeded { .. }
        | RunError::DeadlineExceeded { .. }
        | RunError::QueryTimeout { .. } => fail(EXIT_GUARD, e.to_string()),
        RunError::Invalid(_) => fail(EXIT_VALIDATION, e.to_string()),
        other => fail(EXIT_QUERY, other.to_string()),
    })?;
    if args.trace {
        print_trace(&trace);
    }
    let mut buffer: Vec<u8> = Vec::new();
    match args.out {
        OutFormat::Tsv => export::write_tsv(&seq, &mut buffer),
        OutFormat::Json => export::write_json(&seq, &mut buffer),
    }
    .map_err(|e| fail(1, e.to_string()))?;
    match &args.output {
        Some(path) => std::fs::write(path, buffer).map_err(|e| fail(1, e.to_string()))?,
        None => std::io::stdout()
            .write_all(&buffer)
            .map_err(|e| fail(1, e.to_string()))?,
    }
    Ok(())
}

fn print_trace(trace: &RunTrace) {
    eprintln!(
        "trace: {} statement record(s), peak rows {}",
        trace.statements.len(),
        trace.peak_rows()
    );
    for record in &trace.statements {
        eprintln!(
            "  {}{}rows={} bytes={} wall={:?} [{}]",
            record
                .target
                .as_deref()
                .map(|t| format!("LET {t} "))
                .unwrap_or_default(),
            record
                .loop_iteration
                .map(|i| format!("(iteration {i}) "))
                .unwrap_or_default(),
            record.result_rows,
            record.query_bytes,
            record.wall,
            match record.strategy {
                sparqal::interpreter::ExecStrategy::InMemory => "in-memory".to_string(),
                sparqal::interpreter::ExecStrategy::Batched { width, batches } =>
                    format!("batched width={width} batches={batches}"),
                sparqal::interpreter::ExecStrategy::FallbackBatched { width, batches } =>
                    format!("fallback-batched width={width} batches={batches}"),
            }
        );
    }
    for lp in &trace.loops {
        eprintln!("  loop at byte {}: {} iteration(s)", lp.span.start, lp.iterations);
    }
}

fn cmd_validate(args: SourceArgs) -> Result<(), Failure> {
    let source = load_source(&args)?;
    let ast = parse_procedure(&source).map_err(|e| fail(EXIT_SYNTAX, e.to_string()))?;
    let report = validate_procedure(&ast);
    if report.is_empty() {
        println!("ok: {} top-level statement(s)", ast.statements.len());
        Ok(())
    } else {
        let mut message = String::new();
        for violation in &report.violations {
            let (line, column) = violation.span.to_line_col(&source);
            message.push_str(&format!("line {line}, column {column}: {}\n", violation.message));
        }
        Err(fail(EXIT_VALIDATION, message.trim_end().to_string()))
    }
}

fn cmd_templates(args: TemplatesArgs) -> Result<(), Failure> {
    match args.name {
        None => {
            for template in stdlib::templates() {
                println!("{:<20} {}", template.name, template.description);
                for param in template.params {
                    println!(
                        "    {:<14} {}{}",
                        param.key,
                        param.description,
                        param
                            .default
                            .map(|d| format!(" (default: {d})"))
                            .unwrap_or_else(|| " (required)".to_string())
                    );
                }
            }
            Ok(())
        }
        Some(name) => {
            let params = parse_params(&args.params)?;
            match stdlib::get_procedure(&name, &params) {
                Ok(source) => {
                    let ast = parse_procedure(&source).map_err(|e| fail(EXIT_SYNTAX, e.to_string()))?;
                    println!("{}", pretty_print(&ast));
                    Ok(())
                }
                Err(stdlib::StdlibError::MissingParameter(key)) => Err(fail(
                    2,
                    format!("template requires --param {key}=...; see `sparqal templates`"),
                )),
                Err(e) => Err(fail(2, e.to_string())),
            }
        }
    }
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let (mut manifest, base) =
        load_manifest(&args.manifest).map_err(|e| fail(EXIT_LOAD, e.to_string()))?;
    if let Some(timeout) = args.timeout {
        manifest.timeout_ms = Some(timeout.as_millis() as u64);
    }
    let cfg = RunConfig {
        strategy: match args.strategy {
            StrategyArg::InMemory => Strategy::InMemory,
            StrategyArg::Batched => Strategy::Batched,
        },
        batch_width: args.batch_width,
        parallelism: args.parallelism,
        ..RunConfig::default()
    };
    let report = run_bench(&manifest, &base, &cfg).map_err(|e| fail(EXIT_LOAD, e.to_string()))?;
    print!("{}", report.render_table());
    println!(
        "{} task(s), {} ok, total {:?}",
        report.rows.len(),
        report.ok_count(),
        report.total_wall()
    );
    if let Some(path) = args.out {
        let json = serde_json::to_string_pretty(&report).map_err(|e| fail(1, e.to_string()))?;
        std::fs::write(&path, json).map_err(|e| fail(1, e.to_string()))?;
    }
    Ok(())
}
