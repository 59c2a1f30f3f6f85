//! Single-shot subcommands: corpus validation, one repair session with
//! its artifacts, standalone spec verification, report rendering.

use std::fs;
use std::path::{Path, PathBuf};

use spec_anvil_core::gherkin;
use spec_anvil_core::harness::{validate_corpus, Corpus};
use spec_anvil_core::metrics::{self, ReportFormat};
use spec_anvil_core::pipeline::{self, RepairSession, SessionMode, SessionOutcome};
use spec_anvil_core::rqa::{self, VerdictKind};
use spec_anvil_core::runtime::{self, FeatureRunReport, StepBindingSet, StepStatus};

use crate::config::Config;
use crate::{exit, fail, CmdResult, Failure};

pub(crate) fn load_corpus(config: &Config) -> Result<Corpus, Failure> {
    Corpus::load(&config.corpus_path).map_err(|e| fail(exit::USAGE, e.to_string()))
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| fail(exit::USAGE, format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn cmd_corpus_validate(manifest: &Path) -> CmdResult {
    let corpus = match Corpus::load(manifest) {
        Ok(corpus) => corpus,
        Err(e) => return Err(fail(exit::CORPUS_FINDINGS, e.to_string())),
    };
    let findings = validate_corpus(&corpus);
    if findings.is_empty() {
        println!("corpus ok: {} defect(s) checked", corpus.defects().len());
        return Ok(exit::OK);
    }
    for finding in &findings {
        println!(
            "{}: [{}] {}",
            finding.defect_id, finding.check, finding.detail
        );
    }
    println!("{} finding(s)", findings.len());
    Ok(exit::CORPUS_FINDINGS)
}

fn outcome_exit(outcome: SessionOutcome) -> u8 {
    match outcome {
        SessionOutcome::CorrectFix => exit::OK,
        SessionOutcome::PlausibleOnly => exit::PLAUSIBLE_ONLY,
        SessionOutcome::NoFix => exit::NO_FIX,
        SessionOutcome::Error => exit::SESSION_ERROR,
    }
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, content)
        .map_err(|e| fail(exit::USAGE, format!("cannot write {}: {e}", path.display())))
}

/// Everything a session produced, written next to each other: the full
/// session record plus the spec, bindings, and patch as standalone files
/// when they exist.
pub(crate) fn write_session_artifacts(session: &RepairSession, dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| fail(exit::USAGE, format!("cannot create {}: {e}", dir.display())))?;
    let json = serde_json::to_string_pretty(session).expect("sessions serialize");
    write_artifact(dir, "session.json", &json)?;
    if let Some(spec) = &session.spec {
        write_artifact(dir, "feature.feature", &gherkin::render(spec))?;
    }
    if let Some(manifest) = &session.bindings_manifest {
        write_artifact(dir, "bindings.json", manifest)?;
    }
    if let Some(patch) = &session.patch {
        let json = serde_json::to_string_pretty(patch).expect("patches serialize");
        write_artifact(dir, "patch.json", &json)?;
    }
    Ok(())
}

pub(crate) fn cmd_run(config: &Config, defect_id: &str, mode: SessionMode) -> CmdResult {
    let corpus = load_corpus(config)?;
    let defect = corpus
        .get(defect_id)
        .map_err(|e| fail(exit::USAGE, e.to_string()))?;
    let backends = config.backends.build();
    let session = pipeline::run_session(
        defect,
        mode,
        backends.role_backends(),
        &config.session_config(),
    );

    let artifact_dir: PathBuf =
        config
            .run_dir
            .join(format!("{}-{}", session.defect_id, mode.dir_name()));
    write_session_artifacts(&session, &artifact_dir)?;

    println!("defect {} ({})", session.defect_id, mode.dir_name());
    println!("outcome: {:?}: {}", session.outcome, session.outcome_detail);
    if session.degraded {
        println!("degraded: spec guidance was never validated");
    }
    for event in &session.fallback_events {
        println!("fallback: {:?}: {}", event.kind, event.detail);
    }
    println!("artifacts: {}", artifact_dir.display());
    Ok(outcome_exit(session.outcome))
}

fn verdict_exit(kind: VerdictKind) -> u8 {
    match kind {
        VerdictKind::Validated => exit::OK,
        VerdictKind::SpecTooWeak => exit::SPEC_TOO_WEAK,
        VerdictKind::SpecMisaligned => exit::SPEC_MISALIGNED,
        VerdictKind::HarnessError => exit::HARNESS_ERROR,
    }
}

fn print_report(side: &str, report: &FeatureRunReport) {
    println!("{side} tree:");
    for scenario in &report.scenario_results {
        let status = match scenario.status {
            StepStatus::Pass => "pass".to_string(),
            StepStatus::AssertionFail => format!(
                "assertion failed at step {}",
                scenario.failed_step_index.unwrap_or(0) + 1
            ),
            StepStatus::SetupError => {
                format!(
                    "broke at step {}",
                    scenario.failed_step_index.unwrap_or(0) + 1
                )
            }
        };
        println!("  {}: {status}", scenario.scenario_title);
    }
}

pub(crate) fn cmd_verify_spec(
    config: &Config,
    defect_id: &str,
    feature_path: &Path,
    bindings_path: &Path,
    negative_only: bool,
) -> CmdResult {
    let corpus = load_corpus(config)?;
    let defect = corpus
        .get(defect_id)
        .map_err(|e| fail(exit::USAGE, e.to_string()))?;

    let feature_text = read_input(feature_path)?;
    let spec = gherkin::parse(&feature_text).map_err(|e| {
        fail(
            exit::FEATURE_PARSE,
            format!("{}: {e}", feature_path.display()),
        )
    })?;

    let bindings_text = read_input(bindings_path)?;
    let bindings = StepBindingSet::from_json(&bindings_text)
        .map_err(|e| fail(exit::BINDINGS, format!("{}: {e}", bindings_path.display())))?;
    runtime::bind(&spec, &bindings)
        .map_err(|e| fail(exit::BINDINGS, format!("{}: {e}", bindings_path.display())))?;

    let result = if negative_only {
        rqa::negative_only_verify(defect, &spec, &bindings)
    } else {
        rqa::sandwich_verify(defect, &spec, &bindings)
    };

    println!(
        "verdict: {:?}: {}",
        result.verdict.kind, result.verdict.detail
    );
    if let Some(report) = &result.buggy_report {
        print_report("buggy", report);
    }
    if let Some(report) = &result.fixed_report {
        print_report("fixed", report);
    }
    Ok(verdict_exit(result.verdict.kind))
}

pub(crate) fn cmd_report(
    replay: Option<&Path>,
    run: Option<&Path>,
    costs: Option<&Path>,
    format: ReportFormat,
    out: Option<&Path>,
) -> CmdResult {
    let outcomes_path = match (replay, run) {
        (Some(path), None) => path.to_path_buf(),
        (None, Some(dir)) => dir.join("outcomes.jsonl"),
        _ => return Err(fail(exit::USAGE, "pass exactly one of --replay or --run")),
    };
    let text = read_input(&outcomes_path)?;
    let records = metrics::load_outcomes_jsonl(&text).map_err(|e| {
        fail(
            exit::REPORT_SCHEMA,
            format!("{}: {e}", outcomes_path.display()),
        )
    })?;

    let breakdown = match costs {
        Some(path) => {
            let text = read_input(path)?;
            let (breakdown, _sessions) = metrics::load_costs_json(&text)
                .map_err(|e| fail(exit::REPORT_SCHEMA, format!("{}: {e}", path.display())))?;
            Some(breakdown)
        }
        None => None,
    };

    let report = metrics::render_report(&records, breakdown.as_ref(), format);
    match out {
        Some(path) => fs::write(path, &report)
            .map_err(|e| fail(exit::USAGE, format!("cannot write {}: {e}", path.display())))?,
        None => print!("{report}"),
    }
    Ok(exit::OK)
}
