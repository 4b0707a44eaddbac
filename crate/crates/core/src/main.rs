//! Command-line front end.
//!
//! Exit codes: 0 clean, 2 anomalies found (`detect`), 1 runtime error,
//! 64 usage error, 65 recipe schema error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wrangle::anomaly::CustomRule;
use wrangle::codegen::generate_script;
use wrangle::recipe::{apply_recipe, parse_recipe};
use wrangle::report::{build_report, render_markdown};
use wrangle::server::{serve, ServerConfig};
use wrangle::session::Extensions;
use wrangle::{enumerate_all_specs, serialize_csv, CsvOptions, DetectorConfig, Error, Session};

const EXIT_ANOMALIES: u8 = 2;
const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 64;
const EXIT_SCHEMA: u8 = 65;

#[derive(Parser)]
#[command(name = "wrangle", version, about = "Subgroup anomaly detection and repair for CSV data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Md,
}

#[derive(Subcommand)]
enum Command {
    /// Detect anomalies and write a ranked report. Exits 2 when any are found.
    Detect {
        input: PathBuf,
        /// Numeric target column; repeat for several. Defaults to all numeric columns.
        #[arg(long = "target")]
        targets: Vec<String>,
        #[arg(long, default_value_t = 1)]
        min_support: usize,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
        /// Custom rule as `id=expression`, e.g. `neg=value < 0`.
        #[arg(long = "rule")]
        rules: Vec<String>,
        #[arg(long, default_value_t = 2.0)]
        sigma: f64,
        /// Report path; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
    },
    /// Apply a recipe of repair actions and write the result.
    Apply {
        input: PathBuf,
        #[arg(long)]
        recipe: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write a Python script replaying the recipe.
        #[arg(long)]
        emit_script: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        /// Maximum upload size in bytes.
        #[arg(long)]
        max_upload: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Detect {
            input,
            targets,
            min_support,
            top_k,
            rules,
            sigma,
            report,
            format,
            delimiter,
        } => detect(DetectArgs {
            input,
            targets,
            min_support,
            top_k,
            rules,
            sigma,
            report,
            format,
            delimiter,
        }),
        Command::Apply {
            input,
            recipe,
            out,
            emit_script,
        } => apply(&input, &recipe, &out, emit_script.as_deref()),
        Command::Serve { port, max_upload } => run_server(port, max_upload),
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("wrangle: {msg}");
    ExitCode::from(code)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input.csv".into())
}

/// Writes via a sibling temp file so a failure never leaves partial output.
fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

struct DetectArgs {
    input: PathBuf,
    targets: Vec<String>,
    min_support: usize,
    top_k: usize,
    rules: Vec<String>,
    sigma: f64,
    report: Option<PathBuf>,
    format: Format,
    delimiter: char,
}

fn detect(args: DetectArgs) -> ExitCode {
    let mut config = DetectorConfig {
        outlier_sigma: args.sigma,
        top_k: args.top_k,
        ..DetectorConfig::default()
    };
    for r in &args.rules {
        let Some((id, rule)) = r.split_once('=') else {
            return fail(EXIT_USAGE, format!("--rule expects id=expression, got {r:?}"));
        };
        config.custom_rules.push(CustomRule {
            id: id.trim().to_string(),
            rule: rule.trim().to_string(),
        });
    }
    if let Err(e) = config.validate().and_then(|()| config.compile_rules().map(drop)) {
        return fail(EXIT_USAGE, e);
    }
    let bytes = match std::fs::read(&args.input) {
        Ok(b) => b,
        Err(e) => return fail(EXIT_ERROR, format!("{}: {e}", args.input.display())),
    };
    let csv_options = CsvOptions {
        delimiter: args.delimiter,
        ..CsvOptions::default()
    };
    let table = match wrangle::session::load_typed(&bytes, &csv_options, &config) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_ERROR, e),
    };
    let targets = (!args.targets.is_empty()).then_some(args.targets.as_slice());
    let specs = match enumerate_all_specs(&table, targets, args.min_support) {
        Ok(s) => s,
        Err(e @ (Error::ColumnNotFound(_) | Error::KindMismatch { .. })) => return fail(EXIT_USAGE, e),
        Err(e) => return fail(EXIT_ERROR, e),
    };
    let session = match Session::from_csv(
        &bytes,
        &file_name(&args.input),
        csv_options,
        config,
        Some(specs),
        Extensions::default(),
    ) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_ERROR, e),
    };
    let report = build_report(&session, args.top_k);
    let body = match args.format {
        Format::Json if report.total == 0 => String::new(),
        Format::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        Format::Md => render_markdown(&report),
    };
    let written = match &args.report {
        Some(path) => write_atomic(path, body.as_bytes()),
        None => {
            print!("{body}");
            Ok(())
        }
    };
    if let Err(e) = written {
        return fail(EXIT_ERROR, e);
    }
    if report.total == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_ANOMALIES)
    }
}

fn apply(input: &Path, recipe_path: &Path, out: &Path, emit_script: Option<&Path>) -> ExitCode {
    let recipe_bytes = match std::fs::read(recipe_path) {
        Ok(b) => b,
        Err(e) => return fail(EXIT_ERROR, format!("{}: {e}", recipe_path.display())),
    };
    let recipe = match parse_recipe(&recipe_bytes) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_SCHEMA, format!("recipe schema: {e}")),
    };
    let bytes = match std::fs::read(input) {
        Ok(b) => b,
        Err(e) => return fail(EXIT_ERROR, format!("{}: {e}", input.display())),
    };
    let session = match apply_recipe(&bytes, &file_name(input), &recipe, Extensions::default()) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_ERROR, e),
    };
    let script = match emit_script.map(|_| generate_script(&session)).transpose() {
        Ok(s) => s,
        Err(e) => return fail(EXIT_ERROR, e),
    };
    // an empty recipe leaves the file untouched, formatting included
    let output = if recipe.actions.is_empty() {
        bytes
    } else {
        serialize_csv(session.table(), session.csv_options()).into_bytes()
    };
    if let Err(e) = write_atomic(out, &output) {
        return fail(EXIT_ERROR, format!("{}: {e}", out.display()));
    }
    if let (Some(path), Some(script)) = (emit_script, script) {
        if let Err(e) = write_atomic(path, script.source_text.as_bytes()) {
            return fail(EXIT_ERROR, format!("{}: {e}", path.display()));
        }
        if !script.verifiable {
            eprintln!("wrangle: script contains TODO blocks for custom wranglers");
        }
    }
    ExitCode::SUCCESS
}

fn run_server(port: Option<u16>, max_upload: Option<usize>) -> ExitCode {
    let mut config = match ServerConfig::from_env() {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    if let Some(p) = port {
        config.port = p;
    }
    if let Some(m) = max_upload {
        config.max_upload_bytes = m;
    }
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => return fail(EXIT_ERROR, e),
    };
    let port = config.port;
    match runtime.block_on(serve(config, Extensions::default())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => {
            fail(EXIT_ERROR, format!("port {port} is already in use"))
        }
        Err(e) => fail(EXIT_ERROR, e),
    }
}
