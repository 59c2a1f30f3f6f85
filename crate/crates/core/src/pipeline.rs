//! Whole repair sessions and campaigns: baseline reproduction, spec
//! generation and verification, fixing, and adjudication, stitched into
//! one state machine per defect.
//!
//! A blind session goes straight from the failure report to the fixer. An
//! enlightened session first drives the spec loop; what it does next
//! depends on how that loop ended:
//!
//! * validated: the fixer is conditioned on the spec, and adjudication
//!   additionally requires the spec to pass on the patched tree;
//! * exhausted with a harness breakage: the generated artifacts are
//!   pruned from the workspace and verification reverts to the baseline
//!   test command, but the spec text stays in the fixer prompt — losing
//!   the executable harness does not erase the inferred intent;
//! * exhausted on spec quality alone: the fixer runs blind, since text
//!   that failed verification on substance would steer it wrong.
//!
//! Both exhausted paths mark the session degraded so reporting can keep
//! unverified successes out of headline numbers.
//!
//! Sessions never raise: every infrastructure failure lands in the
//! session record as outcome Error with a detail string.

use std::cell::RefCell;
use std::fs;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::agents::{
    account, architect_infer, engineer_build, fixer_repair, AgentError, AgentRole, Backend,
    ContextBlock, CostRecord, FixerMode, Transcript,
};
use crate::gherkin::FeatureSpec;
use crate::harness::{
    self, audit, Corpus, DefectRecord, Patch, TestStatus, Variant, Workspace, WorkspacePurpose,
};
use crate::metrics::OutcomeRecord;
use crate::rqa::{self, RQAResult, RqaConfig, RqaOutcome, VerdictKind};
use crate::runtime::{self, SpecOutcome, StepBindingSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionMode {
    Blind,
    Enlightened,
}

impl SessionMode {
    pub fn dir_name(self) -> &'static str {
        match self {
            SessionMode::Blind => "blind",
            SessionMode::Enlightened => "enlightened",
        }
    }
}

/// Declared worst to best; the derived order backs the monotonicity
/// property that more evidence never lowers an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SessionOutcome {
    Error,
    NoFix,
    PlausibleOnly,
    CorrectFix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FallbackKind {
    EnvironmentPruning,
    StrategyFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackEvent {
    pub kind: FallbackKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairSession {
    pub defect_id: String,
    pub project: String,
    pub mode: SessionMode,
    /// Verification attempts, oldest first; empty for blind sessions.
    pub rqa_history: Vec<RQAResult>,
    /// Last generated spec, whether or not it validated.
    pub spec: Option<FeatureSpec>,
    /// Manifest text of the validated bindings, for artifact writing.
    #[serde(default)]
    pub bindings_manifest: Option<String>,
    pub patch: Option<Patch>,
    pub outcome: SessionOutcome,
    pub outcome_detail: String,
    /// Enlightened session that never obtained a validated spec.
    pub degraded: bool,
    pub fallback_events: Vec<FallbackEvent>,
    pub costs: Vec<CostRecord>,
    pub started_at: String,
    pub finished_at: String,
    /// Audit session serial; joins this session to its access log events.
    pub session_serial: u64,
}

impl RepairSession {
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.mode == SessionMode::Blind {
            if self.spec.is_some()
                || self.bindings_manifest.is_some()
                || !self.rqa_history.is_empty()
            {
                return Err(format!(
                    "{}: blind session carries spec material",
                    self.defect_id
                ));
            }
            if self.degraded || !self.fallback_events.is_empty() {
                return Err(format!(
                    "{}: blind session carries enlightened flags",
                    self.defect_id
                ));
            }
        }
        if self.outcome == SessionOutcome::CorrectFix && self.patch.is_none() {
            return Err(format!("{}: CorrectFix without a patch", self.defect_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SessionConfig {
    pub max_rqa_attempts: usize,
    /// When off, adjudication stops at PlausibleOnly even if probes exist.
    pub probes: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            max_rqa_attempts: 3,
            probes: true,
        }
    }
}

/// One backend per role; the same object may serve several roles.
#[derive(Clone, Copy)]
pub struct RoleBackends<'a> {
    pub architect: &'a dyn Backend,
    pub engineer: &'a dyn Backend,
    pub fixer: &'a dyn Backend,
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn collect_costs(transcript: &Transcript) -> Vec<CostRecord> {
    [AgentRole::Architect, AgentRole::Engineer, AgentRole::Fixer]
        .into_iter()
        .map(|role| account(transcript, role))
        .filter(|record| record.turns > 0)
        .collect()
}

/// Prompt material for the architect: each failing test's file and the
/// scoped production source, read from the session workspace.
fn architect_sources(defect: &DefectRecord, workspace: &Workspace) -> Vec<ContextBlock> {
    let mut blocks = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for test_id in &defect.failing_tests {
        let path = test_id.split("::").next().unwrap_or(test_id);
        if !seen.insert(path.to_string()) {
            continue;
        }
        let text = workspace
            .read_file(path)
            .unwrap_or_else(|e| format!("(unreadable: {e})"));
        blocks.push(ContextBlock::new(format!("failing_test {path}"), text));
    }
    let scope = defect.repair_scope();
    let text = workspace
        .read_file(scope)
        .unwrap_or_else(|e| format!("(unreadable: {e})"));
    blocks.push(ContextBlock::new(
        "scoped_source",
        format!("FILE: {scope}\n\n{text}"),
    ));
    blocks
}

const GENERATED_DIR: &str = ".rqa";

/// Drops a generated artifact into the workspace so the session tree
/// carries its harness files like a real working copy would.
fn materialize(workspace: &Workspace, name: &str, content: &str) {
    let dir = workspace.root().join(GENERATED_DIR);
    // best effort: the artifact is advisory, losing it breaks nothing
    let _ = fs::create_dir_all(&dir);
    let _ = fs::write(dir.join(name), content);
}

/// Deletes generated harness artifacts from the workspace, returning the
/// removed paths (workspace-relative).
fn prune_generated(workspace: &Workspace) -> Vec<String> {
    let dir = workspace.root().join(GENERATED_DIR);
    let mut removed = Vec::new();
    if dir.exists() {
        for entry in walkdir::WalkDir::new(&dir).sort_by_file_name() {
            let Ok(entry) = entry else { continue };
            if entry.file_type().is_file() {
                if let Ok(rel) = entry.path().strip_prefix(workspace.root()) {
                    removed.push(rel.to_string_lossy().into_owned());
                }
            }
        }
        let _ = fs::remove_dir_all(&dir);
    }
    removed
}

/// Judges a scope-checked patch on a fresh checkout: apply, require the
/// baseline tests to pass, require the validated spec (when present) to
/// pass, then consult the differential probes. Tests alone can only reach
/// PlausibleOnly; CorrectFix requires probe agreement with the reference
/// behavior, so a missing or disabled probe suite caps the outcome.
pub fn adjudicate(
    patch: &Patch,
    defect: &DefectRecord,
    verified: Option<(&FeatureSpec, &StepBindingSet)>,
    probes_enabled: bool,
) -> (SessionOutcome, String) {
    let workspace =
        match harness::checkout(defect, Variant::Buggy, WorkspacePurpose::AdjudicationProbe) {
            Ok(ws) => ws,
            Err(e) => {
                return (
                    SessionOutcome::Error,
                    format!("adjudication checkout failed: {e}"),
                )
            }
        };
    let patched = match harness::apply_patch(workspace, patch) {
        Ok(ws) => ws,
        Err(e @ harness::HarnessError::PatchConflict { .. }) => {
            return (
                SessionOutcome::NoFix,
                format!("patch could not be applied: {e}"),
            )
        }
        Err(e) => {
            return (
                SessionOutcome::Error,
                format!("patch application failed: {e}"),
            )
        }
    };
    let run = match harness::run_tests(&patched, &defect.test_command) {
        Ok(run) => run,
        Err(e) => return (SessionOutcome::Error, format!("test run failed: {e}")),
    };
    match run.status {
        TestStatus::Pass => {}
        TestStatus::Fail => {
            let names = run.failing_test_names.join(", ");
            return (
                SessionOutcome::NoFix,
                format!("baseline tests still fail: {names}"),
            );
        }
        TestStatus::Error => {
            return (
                SessionOutcome::Error,
                format!(
                    "test run broke on the patched tree: {}",
                    run.detail.unwrap_or_default()
                ),
            )
        }
    }

    if let Some((spec, bindings)) = verified {
        let bound = match runtime::bind(spec, bindings) {
            Ok(b) => b,
            Err(e) => {
                return (
                    SessionOutcome::Error,
                    format!("validated bindings no longer bind: {e}"),
                )
            }
        };
        let report = runtime::execute(&bound, &patched);
        match runtime::outcome(&report) {
            SpecOutcome::AllPass => {}
            SpecOutcome::AnyAssertionFail => {
                return (
                    SessionOutcome::NoFix,
                    "validated spec fails on the patched tree".to_string(),
                )
            }
            SpecOutcome::Error => {
                return (
                    SessionOutcome::Error,
                    "validated spec broke on the patched tree".to_string(),
                )
            }
        }
    }

    if !probes_enabled {
        return (
            SessionOutcome::PlausibleOnly,
            "tests pass; probe adjudication disabled".to_string(),
        );
    }
    if defect.probes.is_empty() {
        return (
            SessionOutcome::PlausibleOnly,
            "tests pass; no probe suite to adjudicate correctness".to_string(),
        );
    }
    match harness::differential_probe(defect, &patched) {
        Ok(comparison) if comparison.matches() => (
            SessionOutcome::CorrectFix,
            format!(
                "matches reference behavior on {} probe(s)",
                comparison.probes_run
            ),
        ),
        Ok(comparison) => {
            let first = &comparison.mismatches[0];
            (
                SessionOutcome::PlausibleOnly,
                format!(
                    "tests pass but behavior diverges from the reference on probe {:?} ({} of {} probes disagree)",
                    first.cmd,
                    comparison.mismatches.len(),
                    comparison.probes_run
                ),
            )
        }
        Err(e) => (
            SessionOutcome::Error,
            format!("probe adjudication broke: {e}"),
        ),
    }
}

/// Runs one full repair session. Infrastructure failures become outcome
/// Error in the returned record; this function does not fail.
pub fn run_session(
    defect: &DefectRecord,
    mode: SessionMode,
    backends: RoleBackends<'_>,
    config: &SessionConfig,
) -> RepairSession {
    let audit_guard = audit::begin_session();
    let mut transcript = Transcript::new(format!("{}/{}", defect.id, mode.dir_name()));
    let mut session = RepairSession {
        defect_id: defect.id.clone(),
        project: defect.project.clone(),
        mode,
        rqa_history: Vec::new(),
        spec: None,
        bindings_manifest: None,
        patch: None,
        outcome: SessionOutcome::Error,
        outcome_detail: String::new(),
        degraded: false,
        fallback_events: Vec::new(),
        costs: Vec::new(),
        started_at: now_rfc3339(),
        finished_at: String::new(),
        session_serial: audit_guard.serial(),
    };

    let (outcome, detail) = drive(
        defect,
        mode,
        backends,
        config,
        &mut transcript,
        &mut session,
    );
    session.outcome = outcome;
    session.outcome_detail = detail;
    session.costs = collect_costs(&transcript);
    session.finished_at = now_rfc3339();
    session.check_invariants().expect("session invariants");
    session
}

fn drive(
    defect: &DefectRecord,
    mode: SessionMode,
    backends: RoleBackends<'_>,
    config: &SessionConfig,
    transcript: &mut Transcript,
    session: &mut RepairSession,
) -> (SessionOutcome, String) {
    let workspace =
        match harness::checkout(defect, Variant::Buggy, WorkspacePurpose::BaselineRepair) {
            Ok(ws) => ws,
            Err(e) => {
                return (
                    SessionOutcome::Error,
                    format!("baseline checkout failed: {e}"),
                )
            }
        };
    let baseline = match harness::run_tests(&workspace, &defect.test_command) {
        Ok(run) => run,
        Err(e) => {
            return (
                SessionOutcome::Error,
                format!("baseline test run failed: {e}"),
            )
        }
    };
    match baseline.status {
        TestStatus::Fail => {}
        TestStatus::Pass => {
            return (
                SessionOutcome::Error,
                "baseline tests pass on the buggy tree; nothing to repair".to_string(),
            )
        }
        TestStatus::Error => {
            return (
                SessionOutcome::Error,
                format!(
                    "baseline test run broke: {}",
                    baseline.detail.unwrap_or_default()
                ),
            )
        }
    }
    let report = match harness::collect_failure_report(&baseline) {
        Ok(report) => report,
        Err(e) => return (SessionOutcome::Error, format!("failure report: {e}")),
    };

    let mut fixer_mode = FixerMode::Blind;
    let mut verified: Option<(FeatureSpec, StepBindingSet)> = None;

    if mode == SessionMode::Enlightened {
        let sources = architect_sources(defect, &workspace);
        let last_spec: RefCell<Option<FeatureSpec>> = RefCell::new(None);
        let transcript_cell = RefCell::new(&mut *transcript);
        let rqa_outcome = rqa::rqa_loop(
            defect,
            &RqaConfig {
                max_attempts: config.max_rqa_attempts,
            },
            |_, _| {
                let mut t = transcript_cell.borrow_mut();
                match architect_infer(&report, &sources, backends.architect, &mut t) {
                    Ok(output) => {
                        *last_spec.borrow_mut() = Some(output.spec.clone());
                        materialize(
                            &workspace,
                            "feature.feature",
                            &crate::gherkin::render(&output.spec),
                        );
                        Ok(output.spec)
                    }
                    Err(e) => Err(e.to_string()),
                }
            },
            |_, spec, _| {
                let mut t = transcript_cell.borrow_mut();
                let set = engineer_build(spec, &workspace, backends.engineer, &mut t)
                    .map_err(|e| e.to_string())?;
                if let Some(manifest) = &set.source {
                    materialize(&workspace, "bindings.json", manifest);
                }
                Ok(set)
            },
        );
        match rqa_outcome {
            RqaOutcome::Validated {
                spec,
                bindings,
                history,
            } => {
                session.rqa_history = history;
                session.spec = Some(spec.clone());
                session.bindings_manifest = bindings.source.clone();
                fixer_mode = FixerMode::Enlightened(spec.clone());
                verified = Some((spec, bindings));
            }
            RqaOutcome::Exhausted { history } => {
                let harness_broke = history
                    .iter()
                    .any(|r| r.verdict.kind == VerdictKind::HarnessError);
                session.rqa_history = history;
                session.degraded = true;
                session.spec = last_spec.into_inner();
                if harness_broke {
                    let removed = prune_generated(&workspace);
                    let detail = if removed.is_empty() {
                        "no generated artifacts to remove".to_string()
                    } else {
                        format!("removed generated artifacts: {}", removed.join(", "))
                    };
                    session.fallback_events.push(FallbackEvent {
                        kind: FallbackKind::EnvironmentPruning,
                        detail,
                    });
                    session.fallback_events.push(FallbackEvent {
                        kind: FallbackKind::StrategyFallback,
                        detail: "verification reverted to the baseline test command".to_string(),
                    });
                    // intent retention: the spec text keeps guiding the
                    // fixer even though its harness never worked
                    if let Some(spec) = session.spec.clone() {
                        fixer_mode = FixerMode::Enlightened(spec);
                    }
                }
            }
        }
    }

    match fixer_repair(
        defect,
        &workspace,
        &fixer_mode,
        &report,
        backends.fixer,
        transcript,
    ) {
        Ok(patch) => {
            session.patch = Some(patch.clone());
            adjudicate(
                &patch,
                defect,
                verified.as_ref().map(|(s, b)| (s, b)),
                config.probes,
            )
        }
        Err(AgentError::Scope(violation)) => (
            SessionOutcome::NoFix,
            format!(
                "patch rejected before application: edits {} outside repair scope {}",
                violation.0.join(", "),
                defect.repair_scope()
            ),
        ),
        Err(e @ AgentError::MalformedPatch { .. }) => (SessionOutcome::NoFix, e.to_string()),
        Err(e) => (SessionOutcome::Error, e.to_string()),
    }
}

// ---- campaign ----

#[derive(Debug, Clone, Copy)]
pub struct CampaignConfig {
    pub session: SessionConfig,
    /// Run enlightened sessions on blind failures (composite methodology).
    pub composite: bool,
    pub workers: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            session: SessionConfig::default(),
            composite: false,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectSessions {
    pub blind: RepairSession,
    /// Present only when the blind session did not reach CorrectFix.
    pub enlightened: Option<RepairSession>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    /// Corpus order.
    pub sessions: Vec<DefectSessions>,
}

impl CampaignResult {
    pub fn outcome_records(&self) -> Vec<OutcomeRecord> {
        self.sessions
            .iter()
            .map(|pair| {
                let blind_correct = pair.blind.outcome == SessionOutcome::CorrectFix;
                let rescue = pair
                    .enlightened
                    .as_ref()
                    .filter(|s| s.outcome == SessionOutcome::CorrectFix);
                OutcomeRecord {
                    defect_id: pair.blind.defect_id.clone(),
                    project: pair.blind.project.clone(),
                    blind_correct,
                    enlightened_attempted: pair.enlightened.is_some(),
                    enlightened_correct: rescue.is_some_and(|s| !s.degraded),
                    degraded_rescue: rescue.is_some_and(|s| s.degraded),
                }
            })
            .collect()
    }

    pub fn all_sessions(&self) -> impl Iterator<Item = &RepairSession> {
        self.sessions
            .iter()
            .flat_map(|pair| std::iter::once(&pair.blind).chain(pair.enlightened.as_ref()))
    }

    /// Composite identity and enlightened-only-on-failure, checked from
    /// the raw sessions rather than the derived records.
    pub fn verify_composite_identity(&self) -> Result<(), String> {
        let blind_correct = self
            .sessions
            .iter()
            .filter(|p| p.blind.outcome == SessionOutcome::CorrectFix)
            .count() as u64;
        let rescued = self
            .sessions
            .iter()
            .filter(|p| {
                p.blind.outcome != SessionOutcome::CorrectFix
                    && p.enlightened
                        .as_ref()
                        .is_some_and(|s| s.outcome == SessionOutcome::CorrectFix && !s.degraded)
            })
            .count() as u64;
        let records = self.outcome_records();
        let table = crate::metrics::project_table(&records);
        if table.total.total != blind_correct + rescued {
            return Err(format!(
                "composite identity violated: table total {} != blind {} + rescued {}",
                table.total.total, blind_correct, rescued
            ));
        }
        for pair in &self.sessions {
            if pair.blind.outcome == SessionOutcome::CorrectFix && pair.enlightened.is_some() {
                return Err(format!(
                    "{}: enlightened session despite blind CorrectFix",
                    pair.blind.defect_id
                ));
            }
            pair.blind.check_invariants()?;
            if let Some(s) = &pair.enlightened {
                s.check_invariants()?;
            }
        }
        Ok(())
    }
}

fn run_phase(
    defects: &[&DefectRecord],
    mode: SessionMode,
    backends: RoleBackends<'_>,
    config: &CampaignConfig,
    on_session: &(dyn Fn(&RepairSession) + Sync),
) -> Vec<RepairSession> {
    let slots: Vec<Mutex<Option<RepairSession>>> =
        defects.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = config.workers.max(1).min(defects.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= defects.len() {
                    break;
                }
                let session = run_session(defects[index], mode, backends, &config.session);
                on_session(&session);
                *slots[index].lock().expect("slot lock") = Some(session);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("slot lock")
                .expect("worker filled slot")
        })
        .collect()
}

/// Campaign with session reuse and completion notification. `cached`
/// supplies a previously recorded session for (defect id, mode); a hit is
/// adopted verbatim and never re-run. `on_session` fires once per
/// newly-run session, from worker threads, as each completes.
pub fn run_campaign_with(
    corpus: &Corpus,
    backends: RoleBackends<'_>,
    config: &CampaignConfig,
    cached: impl Fn(&str, SessionMode) -> Option<RepairSession>,
    on_session: &(dyn Fn(&RepairSession) + Sync),
) -> CampaignResult {
    let defects: Vec<&DefectRecord> = corpus.defects().iter().collect();

    let run_with_cache = |mode: SessionMode, targets: &[usize]| -> Vec<(usize, RepairSession)> {
        let mut done: Vec<(usize, RepairSession)> = Vec::new();
        let mut fresh: Vec<usize> = Vec::new();
        for &index in targets {
            match cached(&defects[index].id, mode) {
                Some(session) => done.push((index, session)),
                None => fresh.push(index),
            }
        }
        let fresh_defects: Vec<&DefectRecord> = fresh.iter().map(|&i| defects[i]).collect();
        let sessions = run_phase(&fresh_defects, mode, backends, config, on_session);
        done.extend(fresh.into_iter().zip(sessions));
        done
    };

    let all: Vec<usize> = (0..defects.len()).collect();
    let mut blind: Vec<Option<RepairSession>> = (0..defects.len()).map(|_| None).collect();
    for (index, session) in run_with_cache(SessionMode::Blind, &all) {
        blind[index] = Some(session);
    }
    let blind: Vec<RepairSession> = blind.into_iter().map(|s| s.expect("blind slot")).collect();

    let mut enlightened: Vec<Option<RepairSession>> = (0..defects.len()).map(|_| None).collect();
    if config.composite {
        let targets: Vec<usize> = blind
            .iter()
            .enumerate()
            .filter(|(_, s)| s.outcome != SessionOutcome::CorrectFix)
            .map(|(i, _)| i)
            .collect();
        for (index, session) in run_with_cache(SessionMode::Enlightened, &targets) {
            enlightened[index] = Some(session);
        }
    }

    let result = CampaignResult {
        sessions: blind
            .into_iter()
            .zip(enlightened)
            .map(|(blind, enlightened)| DefectSessions { blind, enlightened })
            .collect(),
    };
    result
        .verify_composite_identity()
        .expect("campaign invariants");
    result
}

/// Blind sessions over the whole corpus; with `composite`, enlightened
/// sessions over the blind failures. Per-defect errors are recorded in
/// their sessions, never propagated.
pub fn run_campaign(
    corpus: &Corpus,
    backends: RoleBackends<'_>,
    config: &CampaignConfig,
) -> CampaignResult {
    run_campaign_with(corpus, backends, config, |_, _| None, &|_| {})
}
