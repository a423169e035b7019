use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand};
use qmorse::io::archive::{self, ARCHIVE_FILE};
use qmorse::io::config;
use qmorse::io::export::{export_csv, ExportKind};
use qmorse::io::runner;
use qmorse::io::IoError;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "qmorse", version, about = "Morse theory experiments for quiver moment maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate flow traces, level maps and window probes.
    Flow(RunArgs),
    /// Refine critical points and report weights, slices, index and fits.
    Critical(RunArgs),
    /// Negative slices and unstable-set boundedness.
    Slice(RunArgs),
    /// Stratum labels and unstable-set sampling.
    Strata(RunArgs),
    /// Flow lines through anchors on a level.
    Lines(RunArgs),
    /// Broken flow-line experiment on a seed family.
    Broken(RunArgs),
    /// Model scenes: connectivity census, neighbourhood probe, retract suite.
    Retract(RunArgs),
    /// Subvariety membership, projection and slice probe.
    Variety(RunArgs),
    /// Invariant suite; exits 3 on any violation.
    Check(RunArgs),
    /// Export an archive artifact as CSV.
    Export(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the archive.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for batch items.
    #[arg(long)]
    threads: Option<usize>,
    /// Replace the configured RNG seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Treat warnings as errors.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ExportArgs {
    /// Archive file, or a run directory containing one.
    #[arg(long)]
    archive: PathBuf,
    /// Artifact to export: trace, checkpoints, census or slice.
    #[arg(long)]
    what: String,
    /// Output directory for the CSV files.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Export(a) => return export(&a),
        Command::Flow(a) => ("flow", a),
        Command::Critical(a) => ("critical", a),
        Command::Slice(a) => ("slice", a),
        Command::Strata(a) => ("strata", a),
        Command::Lines(a) => ("lines", a),
        Command::Broken(a) => ("broken", a),
        Command::Retract(a) => ("retract", a),
        Command::Variety(a) => ("variety", a),
        Command::Check(a) => ("check", a),
    };
    run(kind, &args)
}

fn config_error(e: &config::ConfigError) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn run(kind: &str, args: &RunArgs) -> ExitCode {
    let started = SystemTime::now();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut cfg = match config::parse_config(&text) {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    if let Some(s) = args.seed_override {
        cfg.seed = s;
    }
    if cfg.experiment.kind() != kind {
        return config_error(&config::ConfigError::new(
            "experiment.kind",
            format!("config describes a {} experiment, not {kind}", cfg.experiment.kind()),
        ));
    }
    let problem = match config::validate(cfg) {
        Ok(p) => p,
        Err(e) => return config_error(&e),
    };
    for w in &problem.warnings {
        eprintln!("warning: {w}");
    }
    if args.strict && !problem.warnings.is_empty() {
        eprintln!("error: configuration warnings are errors under --strict");
        return ExitCode::from(EXIT_CONFIG);
    }

    let outcome = runner::run(&problem);
    let built = archive::build_archive(&problem, &outcome);
    let written = archive::write_archive(&args.out, &built).and_then(|path| {
        archive::write_meta(&args.out, started, SystemTime::now(), rayon::current_num_threads())?;
        Ok(path)
    });
    let path = match written {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for v in &outcome.violations {
        eprintln!("violation: {v}");
    }
    println!("{}: {}", archive::status(&outcome), path.display());
    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_RUNTIME);
    }
    if !outcome.violations.is_empty() {
        return ExitCode::from(EXIT_VIOLATION);
    }
    if args.strict && !outcome.warnings.is_empty() {
        eprintln!("error: runtime warnings are errors under --strict");
        return ExitCode::from(EXIT_RUNTIME);
    }
    ExitCode::SUCCESS
}

fn export(args: &ExportArgs) -> ExitCode {
    let result = (|| -> Result<Vec<PathBuf>, IoError> {
        let what: ExportKind = args.what.parse()?;
        let path = if args.archive.is_dir() { args.archive.join(ARCHIVE_FILE) } else { args.archive.clone() };
        let a = archive::read_archive(Path::new(&path))?;
        export_csv(&a, what, &args.out)
    })();
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
