use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use super::config::{MlfExperiment, RunConfig, Section, Selection};
use super::suite::{run_config, run_selected, ExperimentManifest, Status, SuiteOptions};
use super::{emit_plotdata, CliError, ENV_OUT, ENV_THREADS, EXIT_OK, EXIT_SCHEMA};
use crate::mlf::{ml_eval, MlQuery};

#[derive(Debug, Parser)]
#[command(name = "fracspec", version, about = "Spectral experiments for time-space fractional Schrödinger evolution")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mittag-Leffler evaluation and checks.
    #[command(subcommand)]
    Mlf(MlfCommand),
    /// Bernstein-function checks from the `phi` section.
    #[command(subcommand)]
    Bernstein(BernsteinCommand),
    /// Embedding and Gagliardo-Nirenberg sweeps from the `spaces` section.
    #[command(subcommand)]
    Spaces(SpacesCommand),
    /// Solution-operator experiments from the `operator` section.
    #[command(subcommand)]
    Op(OpCommand),
    /// Mild-solution runs from the `solver` section.
    Solve(SuiteArgs),
    /// Every experiment in a config, or a rerun from a manifest.
    Run(SuiteArgs),
    /// Plotting tables for a results directory.
    Report {
        /// Results directory; defaults to $FRACSPEC_OUT.
        results: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum MlfCommand {
    /// Prints the real and imaginary parts of E_{alpha,beta}(re + i im).
    Eval {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        re: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        im: f64,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Laplace-transform identity sweep; the default grid unless a config is given.
    LaplaceCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum BernsteinCommand {
    Check(SuiteArgs),
}

#[derive(Debug, Subcommand)]
enum SpacesCommand {
    Verify(SuiteArgs),
}

#[derive(Debug, Subcommand)]
enum OpCommand {
    Decay(SuiteArgs),
    BoundProbe(SuiteArgs),
}

#[derive(Debug, Args)]
struct SuiteArgs {
    /// Run configuration or run manifest (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; beats $FRACSPEC_OUT and the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_SCHEMA } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Some(raw) = std::env::var_os(ENV_THREADS) else {
        return Ok(());
    };
    let text = raw.to_string_lossy();
    let n: usize = text.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Schema {
        origin: ENV_THREADS.into(),
        message: format!("expected a positive integer, got {text:?}"),
    })?;
    // A pool built earlier in the process keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Mlf(MlfCommand::Eval { alpha, beta, re, im, tol }) => {
            let z = Complex64::new(re, im);
            let q = match tol {
                Some(t) => MlQuery::with_tol(alpha, beta, z, t),
                None => MlQuery::new(alpha, beta, z),
            }
            .map_err(|e| CliError::Schema { origin: "arguments".into(), message: e.to_string() })?;
            let v = ml_eval(&q).map_err(|e| CliError::Numeric(e.to_string()))?;
            println!("{:.17e} {:.17e}", v.re, v.im);
            Ok(EXIT_OK)
        }
        Command::Mlf(MlfCommand::LaplaceCheck { config: Some(config), out }) => suite(config, out, Selection::Only(Section::Mlf)),
        Command::Mlf(MlfCommand::LaplaceCheck { config: None, out }) => {
            let cfg = RunConfig::mlf_only("laplace-check", vec![MlfExperiment::default_laplace()]);
            let manifest = run_config(&cfg, Selection::All, &SuiteOptions { out })?;
            Ok(summarize(&manifest))
        }
        Command::Bernstein(BernsteinCommand::Check(a)) => suite(a.config, a.out, Selection::Only(Section::Bernstein)),
        Command::Spaces(SpacesCommand::Verify(a)) => suite(a.config, a.out, Selection::Only(Section::Spaces)),
        Command::Op(OpCommand::Decay(a)) => suite(a.config, a.out, Selection::Only(Section::Decay)),
        Command::Op(OpCommand::BoundProbe(a)) => suite(a.config, a.out, Selection::Only(Section::BoundProbe)),
        Command::Solve(a) => suite(a.config, a.out, Selection::Only(Section::Solver)),
        Command::Run(a) => suite(a.config, a.out, Selection::All),
        Command::Report { results } => {
            let dir = results
                .or_else(|| std::env::var_os(ENV_OUT).filter(|v| !v.is_empty()).map(PathBuf::from))
                .ok_or_else(|| CliError::Schema { origin: "arguments".into(), message: format!("give a results directory or set {ENV_OUT}") })?;
            for path in emit_plotdata(&dir)? {
                println!("{}", path.display());
            }
            Ok(EXIT_OK)
        }
    }
}

fn suite(config: PathBuf, out: Option<PathBuf>, selection: Selection) -> Result<i32, CliError> {
    let manifest = run_selected(&config, selection, &SuiteOptions { out })?;
    Ok(summarize(&manifest))
}

fn summarize(m: &ExperimentManifest) -> i32 {
    for r in &m.results {
        let note = match r.status {
            Status::Error => format!(" ({})", r.detail["error"].as_str().unwrap_or("")),
            _ => String::new(),
        };
        println!("{:<40} {:?}{note}", r.name, r.status);
    }
    if m.diverged {
        println!("note: at least one run diverged (flagged in the manifest)");
    }
    println!("results in {}", m.output_dir.display());
    m.exit_code()
}
