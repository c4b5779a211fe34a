use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use oplab::report::{emit_report, Format};
use oplab_cli::{run, CliError, RunOptions, Scenario, REPORT_SCHEMA, SCENARIO_SCHEMA};

#[derive(Parser)]
#[command(name = "oplab", version, about = "Run operator-algebra verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run suites and emit a report. Exits 1 if any check fails.
    Run(RunArgs),
    /// Print the JSON schema of scenarios or reports.
    Schema {
        #[arg(value_enum)]
        which: SchemaKind,
    },
    /// List the available suites.
    List,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Suites to run (or `all`); replaces the scenario's list.
    suites: Vec<String>,
    /// Additional suite, may be repeated.
    #[arg(long = "suite", value_name = "NAME")]
    suite: Vec<String>,
    /// Scenario file; the bundled default is used otherwise.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Multiplies every tolerance.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
    /// Run suites on a thread pool. Record order is unchanged.
    #[arg(long)]
    parallel: bool,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemaKind {
    Scenario,
    Report,
}

fn execute(args: RunArgs) -> Result<bool, CliError> {
    let scenario = match &args.scenario {
        Some(path) => Scenario::load(path)?,
        None => Scenario::default_bundled(),
    };
    let mut suites = args.suites;
    suites.extend(args.suite);
    let opts = RunOptions { suites, seed: args.seed, tol_scale: args.tol_scale, parallel: args.parallel };
    let report = run(&scenario, &opts)?;
    let format = match args.format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };
    let mut out: Box<dyn Write> = match &args.output {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(CliError::Write)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    emit_report(&report, format, &mut out).map_err(CliError::Write)?;
    out.flush().map_err(CliError::Write)?;
    for r in report.failures() {
        eprintln!("FAIL {}/{}: residual {:e} > tolerance {:e}", r.suite, r.check, r.residual, r.tolerance);
    }
    Ok(report.overall)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Schema { which } => {
            print!("{}", match which {
                SchemaKind::Scenario => SCENARIO_SCHEMA,
                SchemaKind::Report => REPORT_SCHEMA,
            });
            ExitCode::SUCCESS
        }
        Command::List => {
            for s in oplab::suites::SUITES {
                println!("{s}");
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => match execute(args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
