//! Command-line front end for the repair pipeline: corpus validation,
//! single repair sessions, full campaigns with resume, standalone spec
//! verification, and report rendering. Every failure class maps to a
//! distinct exit code so scripts can branch on outcomes without parsing
//! output.

mod campaign;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spec_anvil_core::metrics::ReportFormat;
use spec_anvil_core::pipeline::SessionMode;

/// Exit codes are part of the interface and never change meaning.
pub(crate) mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const PLAUSIBLE_ONLY: u8 = 20;
    pub const NO_FIX: u8 = 21;
    pub const SESSION_ERROR: u8 = 22;
    pub const SPEC_TOO_WEAK: u8 = 30;
    pub const SPEC_MISALIGNED: u8 = 31;
    pub const HARNESS_ERROR: u8 = 32;
    pub const FEATURE_PARSE: u8 = 40;
    pub const BINDINGS: u8 = 41;
    pub const CORPUS_FINDINGS: u8 = 50;
    pub const CAMPAIGN_INFRA: u8 = 60;
    pub const REPORT_SCHEMA: u8 = 70;
}

pub(crate) struct Failure {
    pub code: u8,
    pub message: String,
}

pub(crate) fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

pub(crate) type CmdResult = Result<u8, Failure>;

const EXIT_CODE_HELP: &str = "\
Exit codes:
  0   success: corpus valid, correct fix, spec validated, report written
  1   usage, configuration, or input error
  20  run: patch passes the tests but diverges from reference behavior
  21  run: no applicable fix was produced
  22  run: the session broke before an outcome
  30  verify-spec: spec passed on the buggy tree (too weak)
  31  verify-spec: spec failed on the fixed tree (misaligned)
  32  verify-spec: harness error before a behavioral signal
  40  verify-spec: feature file does not parse
  41  verify-spec: bindings rejected or steps left unbound
  50  corpus validate: findings, or an unloadable manifest
  60  campaign: infrastructure failure
  70  report: malformed outcome or cost records";

#[derive(Parser)]
#[command(
    name = "spec-anvil",
    version,
    about = "Specification-first automated program repair over a defect corpus",
    after_long_help = EXIT_CODE_HELP
)]
struct Cli {
    /// TOML configuration file.
    #[arg(short, long, global = true, default_value = "spec-anvil.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus inspection.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Run one repair session against a defect.
    Run {
        /// Defect id from the corpus manifest.
        defect_id: String,
        /// Session mode.
        #[arg(long, value_enum)]
        mode: ModeArg,
    },
    /// Run repair sessions across the whole corpus, resumable by id.
    Campaign {
        /// After the blind phase, rerun its failures with spec guidance.
        #[arg(long)]
        composite: bool,
        /// Parallel session workers (defaults to the config value).
        #[arg(long)]
        workers: Option<usize>,
        /// Campaign name under run_dir; rerunning the same id resumes it.
        #[arg(long, default_value = "default")]
        id: String,
    },
    /// Verify a feature spec against a defect's buggy and fixed trees.
    VerifySpec {
        /// Defect id from the corpus manifest.
        defect_id: String,
        /// Gherkin feature file.
        feature: PathBuf,
        /// Step bindings manifest (JSON).
        bindings: PathBuf,
        /// Check only that the spec fails on the buggy tree.
        #[arg(long)]
        negative_only: bool,
    },
    /// Render a report from recorded campaign outcomes.
    Report {
        /// Outcome records to replay (JSON lines).
        #[arg(long, value_name = "OUTCOMES", conflicts_with = "run")]
        replay: Option<PathBuf>,
        /// Campaign directory holding outcomes.jsonl.
        #[arg(long, value_name = "DIR")]
        run: Option<PathBuf>,
        /// Per-role cost averages (JSON) to append as a cost table.
        #[arg(long)]
        costs: Option<PathBuf>,
        /// Output format.
        #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
        format: FormatArg,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CorpusAction {
    /// Check every defect: paths, repair scope, baseline test behavior.
    Validate {
        /// Corpus manifest; defaults to the configured corpus_path.
        corpus: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Repair from the failing tests alone.
    Blind,
    /// Repair guided by a validated behavioral spec.
    Enlightened,
}

impl From<ModeArg> for SessionMode {
    fn from(arg: ModeArg) -> SessionMode {
        match arg {
            ModeArg::Blind => SessionMode::Blind,
            ModeArg::Enlightened => SessionMode::Enlightened,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(arg: FormatArg) -> ReportFormat {
        match arg {
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

fn load_config(path: &std::path::Path) -> Result<config::Config, Failure> {
    config::Config::load(path).map_err(|e| fail(exit::USAGE, e))
}

fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Corpus {
            action: CorpusAction::Validate { corpus },
        } => {
            let manifest = match corpus {
                Some(path) => path,
                None => load_config(&cli.config)?.corpus_path,
            };
            commands::cmd_corpus_validate(&manifest)
        }
        Command::Run { defect_id, mode } => {
            let config = load_config(&cli.config)?;
            commands::cmd_run(&config, &defect_id, mode.into())
        }
        Command::Campaign {
            composite,
            workers,
            id,
        } => {
            let config = load_config(&cli.config)?;
            campaign::cmd_campaign(&config, composite, workers, &id)
        }
        Command::VerifySpec {
            defect_id,
            feature,
            bindings,
            negative_only,
        } => {
            let config = load_config(&cli.config)?;
            commands::cmd_verify_spec(&config, &defect_id, &feature, &bindings, negative_only)
        }
        Command::Report {
            replay,
            run,
            costs,
            format,
            out,
        } => commands::cmd_report(
            replay.as_deref(),
            run.as_deref(),
            costs.as_deref(),
            format.into(),
            out.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
