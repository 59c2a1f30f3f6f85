//! Defect corpus and workspace management: copy-based checkouts of buggy
//! and fixed trees, baseline test runs, failure-report extraction, layout
//! detection, whole-file patches, and the single-file repair scope rule.
//!
//! Every operation that touches a workspace records an access event (see
//! [`audit`]). Fixed trees are the experimental oracle; the only code that
//! may read them lives in this module and in `rqa`, and the audit log is
//! how tests prove that stays true.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec;

// ---- errors ----

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("corpus manifest {path}: {detail}")]
    Manifest { path: PathBuf, detail: String },
    #[error("unknown defect id {0:?}")]
    UnknownDefect(String),
    #[error("corpus path missing: {0}")]
    MissingPath(PathBuf),
    #[error("copy {path}: {source}")]
    Copy {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("io {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("patch conflict at {path:?}: {detail}")]
    PatchConflict { path: String, detail: String },
    #[error("apply_patch requires a Buggy workspace, got {0}")]
    WrongVariant(Variant),
    #[error("collect_failure_report requires a Fail result, got {0}")]
    NotAFailingRun(TestStatus),
    #[error("bad command template: {0}")]
    Template(#[from] exec::TemplateError),
    #[error("probe {cmd:?} broke: {detail}")]
    ProbeBroke { cmd: String, detail: String },
}

/// Scope rule violation: paths a patch touched beyond the designated file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScopeViolation(pub Vec<String>);

impl fmt::Display for ScopeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "patch outside repair scope: {}", self.0.join(", "))
    }
}

impl std::error::Error for ScopeViolation {}

// ---- access audit ----

pub mod audit {
    //! Process-global log of workspace accesses.
    //!
    //! Events carry the defect, tree variant, the purpose the workspace was
    //! checked out for, and an optional session serial. The serial is set
    //! by the pipeline for the duration of one repair session (thread
    //! scoped), so tests can isolate one session's accesses even while
    //! other tests run in parallel.

    use std::cell::Cell;
    use std::sync::atomic::{AtomicU64, Ordering};
    use std::sync::Mutex;

    use super::{Variant, WorkspacePurpose};

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum AuditOp {
        Checkout,
        TestRun,
        ProbeRun,
        PatchApply,
        FeatureRun,
        FileRead,
    }

    #[derive(Debug, Clone, PartialEq, Eq)]
    pub struct AccessEvent {
        pub defect_id: String,
        pub variant: Variant,
        pub purpose: WorkspacePurpose,
        pub op: AuditOp,
        pub session: Option<u64>,
    }

    static LOG: Mutex<Vec<AccessEvent>> = Mutex::new(Vec::new());
    static NEXT_SESSION: AtomicU64 = AtomicU64::new(1);

    thread_local! {
        static CURRENT_SESSION: Cell<Option<u64>> = const { Cell::new(None) };
    }

    /// Marks the current thread as running one repair session; events
    /// recorded until the guard drops carry the returned serial.
    pub fn begin_session() -> SessionGuard {
        let serial = NEXT_SESSION.fetch_add(1, Ordering::Relaxed);
        let previous = CURRENT_SESSION.with(|c| c.replace(Some(serial)));
        SessionGuard { serial, previous }
    }

    pub struct SessionGuard {
        serial: u64,
        previous: Option<u64>,
    }

    impl SessionGuard {
        pub fn serial(&self) -> u64 {
            self.serial
        }
    }

    impl Drop for SessionGuard {
        fn drop(&mut self) {
            let previous = self.previous;
            CURRENT_SESSION.with(|c| c.set(previous));
        }
    }

    pub(crate) fn record(
        defect_id: &str,
        variant: Variant,
        purpose: WorkspacePurpose,
        op: AuditOp,
    ) {
        let session = CURRENT_SESSION.with(|c| c.get());
        let event = AccessEvent {
            defect_id: defect_id.to_string(),
            variant,
            purpose,
            op,
            session,
        };
        LOG.lock().expect("audit log poisoned").push(event);
    }

    /// Events recorded under the given session serial, in order.
    pub fn events_for_session(serial: u64) -> Vec<AccessEvent> {
        LOG.lock()
            .expect("audit log poisoned")
            .iter()
            .filter(|e| e.session == Some(serial))
            .cloned()
            .collect()
    }

    pub fn snapshot() -> Vec<AccessEvent> {
        LOG.lock().expect("audit log poisoned").clone()
    }
}

// ---- corpus ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Buggy,
    Fixed,
    Patched,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Buggy => "Buggy",
            Variant::Fixed => "Fixed",
            Variant::Patched => "Patched",
        };
        f.write_str(s)
    }
}

/// Why a workspace was checked out. Only verification and the adjudication
/// oracle may ever hold a Fixed workspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkspacePurpose {
    BaselineRepair,
    NegativeVerification,
    PositiveVerification,
    AdjudicationProbe,
    AdjudicationOracle,
    CorpusValidation,
    Inspection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCommand {
    pub setup: Option<String>,
    pub test: String,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeCommand {
    pub cmd: String,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefectRecord {
    pub id: String,
    pub project: String,
    pub buggy_source: PathBuf,
    pub fixed_source: PathBuf,
    /// Test identifiers in `path::name` form; the path part is readable
    /// workspace-relative source for prompt assembly.
    pub failing_tests: Vec<String>,
    /// First entry is the designated repair scope.
    pub modified_files: Vec<String>,
    pub test_command: TestCommand,
    pub tags: BTreeMap<String, String>,
    /// Differential probe suite for the adjudication oracle. Hidden from
    /// agents: never rendered into prompts.
    pub probes: Vec<ProbeCommand>,
}

impl DefectRecord {
    pub fn repair_scope(&self) -> &str {
        &self.modified_files[0]
    }
}

#[derive(Debug)]
pub struct Corpus {
    pub root: PathBuf,
    defects: Vec<DefectRecord>,
}

#[derive(Deserialize)]
struct ManifestTest {
    setup: Option<String>,
    cmd: String,
    #[serde(default = "default_test_timeout")]
    timeout_s: u64,
}

fn default_test_timeout() -> u64 {
    60
}

#[derive(Deserialize)]
struct ManifestProbe {
    cmd: String,
    #[serde(default = "default_probe_timeout")]
    timeout_s: u64,
}

fn default_probe_timeout() -> u64 {
    30
}

#[derive(Deserialize)]
struct ManifestDefect {
    id: String,
    project: String,
    buggy_dir: String,
    fixed_dir: String,
    #[serde(default)]
    failing_tests: Vec<String>,
    modified_files: Vec<String>,
    test: ManifestTest,
    #[serde(default)]
    tags: BTreeMap<String, String>,
    #[serde(default)]
    probes: Vec<ManifestProbe>,
}

#[derive(Deserialize)]
struct Manifest {
    defects: Vec<ManifestDefect>,
}

impl Corpus {
    /// Loads and schema-validates `corpus.json`. Directory paths resolve
    /// relative to the manifest file; their existence is checked at
    /// checkout (and by corpus validation), not here.
    pub fn load(manifest_path: &Path) -> Result<Corpus, HarnessError> {
        let bad = |detail: String| HarnessError::Manifest {
            path: manifest_path.to_path_buf(),
            detail,
        };
        let text = fs::read_to_string(manifest_path).map_err(|e| HarnessError::Io {
            path: manifest_path.to_path_buf(),
            source: e,
        })?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| bad(format!("invalid JSON: {e}")))?;
        let root = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));

        let mut seen = BTreeSet::new();
        let mut defects = Vec::with_capacity(manifest.defects.len());
        for d in manifest.defects {
            if !seen.insert(d.id.clone()) {
                return Err(bad(format!("duplicate defect id {:?}", d.id)));
            }
            if d.modified_files.is_empty() {
                return Err(bad(format!("defect {:?}: modified_files is empty", d.id)));
            }
            if d.buggy_dir == d.fixed_dir {
                return Err(bad(format!(
                    "defect {:?}: buggy_dir equals fixed_dir",
                    d.id
                )));
            }
            if d.test.cmd.trim().is_empty() {
                return Err(bad(format!("defect {:?}: empty test command", d.id)));
            }
            defects.push(DefectRecord {
                buggy_source: root.join(&d.buggy_dir),
                fixed_source: root.join(&d.fixed_dir),
                id: d.id,
                project: d.project,
                failing_tests: d.failing_tests,
                modified_files: d.modified_files,
                test_command: TestCommand {
                    setup: d.test.setup,
                    test: d.test.cmd,
                    timeout: Duration::from_secs(d.test.timeout_s),
                },
                tags: d.tags,
                probes: d
                    .probes
                    .into_iter()
                    .map(|p| ProbeCommand {
                        cmd: p.cmd,
                        timeout: Duration::from_secs(p.timeout_s),
                    })
                    .collect(),
            });
        }
        Ok(Corpus { root, defects })
    }

    pub fn get(&self, id: &str) -> Result<&DefectRecord, HarnessError> {
        self.defects
            .iter()
            .find(|d| d.id == id)
            .ok_or_else(|| HarnessError::UnknownDefect(id.to_string()))
    }

    pub fn defects(&self) -> &[DefectRecord] {
        &self.defects
    }
}

// ---- workspaces ----

#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    pub variant: Variant,
    pub defect_id: String,
    pub purpose: WorkspacePurpose,
    /// Identity of the applied patch; set iff variant is Patched.
    pub patch_id: Option<String>,
    _dir: tempfile::TempDir,
}

impl Workspace {
    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Reads a workspace-relative file, recording the access.
    pub fn read_file(&self, rel: &str) -> Result<String, HarnessError> {
        audit::record(
            &self.defect_id,
            self.variant,
            self.purpose,
            audit::AuditOp::FileRead,
        );
        let path = self.root.join(rel);
        fs::read_to_string(&path).map_err(|e| HarnessError::Io { path, source: e })
    }

    pub(crate) fn record_feature_run(&self) {
        audit::record(
            &self.defect_id,
            self.variant,
            self.purpose,
            audit::AuditOp::FeatureRun,
        );
    }
}

fn copy_tree(from: &Path, to: &Path) -> Result<(), HarnessError> {
    for entry in walkdir::WalkDir::new(from)
        .follow_links(false)
        .sort_by_file_name()
    {
        let entry = entry.map_err(|e| HarnessError::Copy {
            path: from.to_path_buf(),
            source: e.into(),
        })?;
        let rel = entry
            .path()
            .strip_prefix(from)
            .expect("walkdir yields children of from");
        let target = to.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&target).map_err(|e| HarnessError::Copy {
                path: target.clone(),
                source: e,
            })?;
        } else {
            fs::copy(entry.path(), &target).map_err(|e| HarnessError::Copy {
                path: target.clone(),
                source: e,
            })?;
        }
    }
    Ok(())
}

/// Materializes an isolated copy of the requested tree. Repeated checkouts
/// are independent: mutating one never alters another.
pub fn checkout(
    defect: &DefectRecord,
    variant: Variant,
    purpose: WorkspacePurpose,
) -> Result<Workspace, HarnessError> {
    let source = match variant {
        Variant::Buggy => &defect.buggy_source,
        Variant::Fixed => &defect.fixed_source,
        Variant::Patched => {
            return Err(HarnessError::Manifest {
                path: defect.buggy_source.clone(),
                detail: "Patched workspaces come from apply_patch, not checkout".to_string(),
            })
        }
    };
    if !source.is_dir() {
        return Err(HarnessError::MissingPath(source.clone()));
    }
    let dir = tempfile::Builder::new()
        .prefix(&format!("spec-anvil-{}-", defect.id))
        .tempdir()
        .map_err(|e| HarnessError::Io {
            path: PathBuf::from("tempdir"),
            source: e,
        })?;
    copy_tree(source, dir.path())?;
    audit::record(&defect.id, variant, purpose, audit::AuditOp::Checkout);
    Ok(Workspace {
        root: dir.path().to_path_buf(),
        variant,
        defect_id: defect.id.clone(),
        purpose,
        patch_id: None,
        _dir: dir,
    })
}

/// Content digest of a tree: sha256 over sorted (relative path, content)
/// pairs. Two trees compare equal iff they hold the same files with the
/// same bytes.
pub fn tree_digest(root: &Path) -> Result<String, HarnessError> {
    let mut hasher = Sha256::new();
    for entry in walkdir::WalkDir::new(root)
        .follow_links(false)
        .sort_by_file_name()
    {
        let entry = entry.map_err(|e| HarnessError::Io {
            path: root.to_path_buf(),
            source: e.into(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("child of root");
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0u8]);
        let bytes = fs::read(entry.path()).map_err(|e| HarnessError::Io {
            path: entry.path().to_path_buf(),
            source: e,
        })?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

// ---- test runs ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestStatus {
    Pass,
    Fail,
    Error,
}

impl fmt::Display for TestStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TestStatus::Pass => "Pass",
            TestStatus::Fail => "Fail",
            TestStatus::Error => "Error",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct TestRunResult {
    pub status: TestStatus,
    pub failing_test_names: Vec<String>,
    pub raw_log: String,
    pub duration: Duration,
    /// Present when status is Error: what broke.
    pub detail: Option<String>,
}

fn substitute_workspace(tokens: &mut [String], root: &Path) {
    let root = root.to_string_lossy();
    for token in tokens {
        if token.contains("{workspace}") {
            *token = token.replace("{workspace}", &root);
        }
    }
}

fn run_template(
    template: &str,
    workspace: &Workspace,
    timeout: Duration,
) -> Result<exec::ExecResult, HarnessError> {
    let mut argv = exec::tokenize(template)?;
    substitute_workspace(&mut argv, workspace.root());
    Ok(exec::run(
        &argv,
        workspace.root(),
        &BTreeMap::new(),
        timeout,
    ))
}

/// Runs the defect's test command (setup first when present) in the
/// workspace. Exit 0 is Pass; a nonzero exit is Fail with whatever failing
/// test names the log yields (possibly none); timeouts, spawn failures and
/// setup failures are Error.
pub fn run_tests(workspace: &Workspace, cmd: &TestCommand) -> Result<TestRunResult, HarnessError> {
    audit::record(
        &workspace.defect_id,
        workspace.variant,
        workspace.purpose,
        audit::AuditOp::TestRun,
    );
    let started = std::time::Instant::now();
    let mut raw_log = String::new();

    if let Some(setup) = &cmd.setup {
        let r = run_template(setup, workspace, cmd.timeout)?;
        raw_log.push_str(&r.output);
        if !r.succeeded() {
            let detail = if r.timed_out {
                "setup timed out".to_string()
            } else if let Some(e) = &r.spawn_error {
                format!("setup spawn failure: {e}")
            } else {
                format!("setup exited with {:?}", r.exit_code)
            };
            return Ok(TestRunResult {
                status: TestStatus::Error,
                failing_test_names: Vec::new(),
                raw_log,
                duration: started.elapsed(),
                detail: Some(detail),
            });
        }
    }

    let r = run_template(&cmd.test, workspace, cmd.timeout)?;
    raw_log.push_str(&r.output);
    let (status, detail) = if r.timed_out {
        (
            TestStatus::Error,
            Some("test command timed out".to_string()),
        )
    } else if let Some(e) = &r.spawn_error {
        (TestStatus::Error, Some(format!("test spawn failure: {e}")))
    } else if r.exit_code == Some(0) {
        (TestStatus::Pass, None)
    } else {
        (TestStatus::Fail, None)
    };
    Ok(TestRunResult {
        status,
        failing_test_names: extract_failing_names(&raw_log),
        raw_log,
        duration: started.elapsed(),
        detail,
    })
}

// ---- failure reports ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureReport {
    pub raw_log: String,
    pub failing_test_names: Vec<String>,
    pub stack_excerpt: String,
    pub assertion_diffs: Vec<(String, String)>,
}

fn fail_line_re() -> &'static regex::Regex {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"^\s*FAIL(?:ED)?:\s+(\S+)\s*$").expect("static"))
}

/// Failing test names: one per `FAIL: <name>` / `FAILED: <name>` log line,
/// deduplicated, in first-appearance order. Unknown formats yield an empty
/// list, never an error.
pub fn extract_failing_names(log: &str) -> Vec<String> {
    let re = fail_line_re();
    let mut seen = BTreeSet::new();
    let mut names = Vec::new();
    for line in log.lines() {
        if let Some(c) = re.captures(line) {
            let name = c[1].to_string();
            if seen.insert(name.clone()) {
                names.push(name);
            }
        }
    }
    names
}

/// Extracts the failure picture from a failing run. The stack excerpt is
/// the first contiguous block of `  at ...` lines after each FAIL line;
/// assertion diffs match `expected:<X> but was:<Y>` or `expected X actual Y`.
pub fn collect_failure_report(result: &TestRunResult) -> Result<FailureReport, HarnessError> {
    if result.status != TestStatus::Fail {
        return Err(HarnessError::NotAFailingRun(result.status));
    }

    let fail_re = fail_line_re();
    let at_re = {
        static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
        RE.get_or_init(|| regex::Regex::new(r"^\s+at\s").expect("static"))
    };
    let mut excerpt_lines: Vec<String> = Vec::new();
    let lines: Vec<&str> = result.raw_log.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        if fail_re.is_match(lines[i]) {
            let mut j = i + 1;
            // skip ahead to the block start: the trace may not be adjacent
            while j < lines.len() && !at_re.is_match(lines[j]) && !fail_re.is_match(lines[j]) {
                j += 1;
            }
            let mut took_block = false;
            while j < lines.len() && at_re.is_match(lines[j]) {
                excerpt_lines.push(lines[j].to_string());
                took_block = true;
                j += 1;
            }
            i = if took_block { j } else { i + 1 };
        } else {
            i += 1;
        }
    }

    let diff_angle = {
        static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
        RE.get_or_init(|| regex::Regex::new(r"expected:<(.*?)> but was:<(.*?)>").expect("static"))
    };
    let diff_plain = {
        static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
        RE.get_or_init(|| regex::Regex::new(r"expected\s+(\S+)\s+actual\s+(\S+)").expect("static"))
    };
    let mut assertion_diffs = Vec::new();
    for line in &lines {
        if let Some(c) = diff_angle.captures(line) {
            assertion_diffs.push((c[1].to_string(), c[2].to_string()));
        } else if let Some(c) = diff_plain.captures(line) {
            assertion_diffs.push((c[1].to_string(), c[2].to_string()));
        }
    }

    Ok(FailureReport {
        raw_log: result.raw_log.clone(),
        failing_test_names: result.failing_test_names.clone(),
        stack_excerpt: excerpt_lines.join("\n"),
        assertion_diffs,
    })
}

// ---- source layout ----

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourceLayout {
    pub source_roots: Vec<PathBuf>,
    pub test_roots: Vec<PathBuf>,
}

/// Candidate roots probed in order; the first pattern with any match wins.
/// `*/…` tries each first-level subdirectory (nested module layouts).
const SOURCE_ROOT_CANDIDATES: &[&str] = &["src/main/java", "*/src/main/java", "src/java", "src"];
const TEST_ROOT_CANDIDATES: &[&str] = &["src/test/java", "*/src/test/java", "test/java", "test"];

fn probe_candidates(root: &Path, candidates: &[&str]) -> Vec<PathBuf> {
    for candidate in candidates {
        if let Some(rest) = candidate.strip_prefix("*/") {
            let mut matches: Vec<PathBuf> = Vec::new();
            if let Ok(entries) = fs::read_dir(root) {
                for entry in entries.flatten() {
                    let sub = entry.path();
                    if sub.is_dir() && sub.join(rest).is_dir() {
                        let name = entry.file_name();
                        matches.push(PathBuf::from(name).join(rest));
                    }
                }
            }
            if !matches.is_empty() {
                matches.sort();
                return matches;
            }
        } else if root.join(candidate).is_dir() {
            return vec![PathBuf::from(candidate)];
        }
    }
    Vec::new()
}

pub fn detect_layout(workspace: &Workspace) -> SourceLayout {
    SourceLayout {
        source_roots: probe_candidates(workspace.root(), SOURCE_ROOT_CANDIDATES),
        test_roots: probe_candidates(workspace.root(), TEST_ROOT_CANDIDATES),
    }
}

// ---- patches ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchEdit {
    /// Workspace-relative path.
    pub path: String,
    /// Full replacement content.
    pub content: String,
    /// Allow creating a file that does not exist yet.
    #[serde(default)]
    pub create: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub edits: Vec<PatchEdit>,
    pub rationale: String,
}

impl Patch {
    /// Stable content identity: sha256 over edit paths and contents.
    pub fn identity(&self) -> String {
        let mut hasher = Sha256::new();
        for edit in &self.edits {
            hasher.update(edit.path.as_bytes());
            hasher.update([0u8]);
            hasher.update((edit.content.len() as u64).to_le_bytes());
            hasher.update(edit.content.as_bytes());
        }
        format!("{:x}", hasher.finalize())
    }

    pub fn touched_paths(&self) -> Vec<&str> {
        self.edits.iter().map(|e| e.path.as_str()).collect()
    }
}

fn check_edit_path(path: &str) -> Result<(), HarnessError> {
    let conflict = |detail: &str| HarnessError::PatchConflict {
        path: path.to_string(),
        detail: detail.to_string(),
    };
    if path.is_empty() {
        return Err(conflict("empty path"));
    }
    let p = Path::new(path);
    if p.is_absolute() {
        return Err(conflict("absolute path"));
    }
    if p.components()
        .any(|c| matches!(c, std::path::Component::ParentDir))
    {
        return Err(conflict("path escapes workspace"));
    }
    Ok(())
}

/// Replaces each edited file's content in place, relabeling the workspace
/// as Patched and recording the patch identity. Untouched files are left
/// byte-identical.
pub fn apply_patch(mut workspace: Workspace, patch: &Patch) -> Result<Workspace, HarnessError> {
    if workspace.variant != Variant::Buggy {
        return Err(HarnessError::WrongVariant(workspace.variant));
    }
    let mut seen = BTreeSet::new();
    for edit in &patch.edits {
        check_edit_path(&edit.path)?;
        if !seen.insert(edit.path.as_str()) {
            return Err(HarnessError::PatchConflict {
                path: edit.path.clone(),
                detail: "duplicate edit path".to_string(),
            });
        }
    }
    for edit in &patch.edits {
        let target = workspace.root().join(&edit.path);
        if !target.is_file() {
            if !edit.create {
                return Err(HarnessError::PatchConflict {
                    path: edit.path.clone(),
                    detail: "file does not exist and creation not flagged".to_string(),
                });
            }
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent).map_err(|e| HarnessError::Io {
                    path: parent.to_path_buf(),
                    source: e,
                })?;
            }
        }
        fs::write(&target, &edit.content).map_err(|e| HarnessError::Io {
            path: target.clone(),
            source: e,
        })?;
    }
    audit::record(
        &workspace.defect_id,
        Variant::Patched,
        workspace.purpose,
        audit::AuditOp::PatchApply,
    );
    workspace.variant = Variant::Patched;
    workspace.patch_id = Some(patch.identity());
    Ok(workspace)
}

/// The controlled-scope rule: every edit must target modified_files[0].
/// An empty patch is vacuously in scope.
pub fn scope_check(patch: &Patch, defect: &DefectRecord) -> Result<(), ScopeViolation> {
    let scope = defect.repair_scope();
    let offending: Vec<String> = patch
        .edits
        .iter()
        .filter(|e| e.path != scope)
        .map(|e| e.path.clone())
        .collect();
    if offending.is_empty() {
        Ok(())
    } else {
        Err(ScopeViolation(offending))
    }
}

// ---- differential probes (adjudication oracle) ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeObservation {
    pub cmd: String,
    pub exit_code: Option<i32>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeMismatch {
    pub cmd: String,
    pub candidate: (Option<i32>, String),
    pub oracle: (Option<i32>, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeComparison {
    pub probes_run: usize,
    pub mismatches: Vec<ProbeMismatch>,
}

impl ProbeComparison {
    pub fn matches(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn run_probes(
    defect: &DefectRecord,
    workspace: &Workspace,
) -> Result<Vec<ProbeObservation>, HarnessError> {
    let mut observations = Vec::with_capacity(defect.probes.len());
    for probe in &defect.probes {
        audit::record(
            &workspace.defect_id,
            workspace.variant,
            workspace.purpose,
            audit::AuditOp::ProbeRun,
        );
        let r = run_template(&probe.cmd, workspace, probe.timeout)?;
        if r.broke() {
            let detail = if r.timed_out {
                "timed out".to_string()
            } else {
                r.spawn_error
                    .clone()
                    .unwrap_or_else(|| "unknown".to_string())
            };
            return Err(HarnessError::ProbeBroke {
                cmd: probe.cmd.clone(),
                detail,
            });
        }
        observations.push(ProbeObservation {
            cmd: probe.cmd.clone(),
            exit_code: r.exit_code,
            output: r.output,
        });
    }
    Ok(observations)
}

/// Runs the defect's probe suite on the candidate tree and on a fresh
/// Fixed checkout, comparing observable behavior probe by probe. The Fixed
/// tree never leaves this function; callers only see agreement or the
/// mismatch list.
pub fn differential_probe(
    defect: &DefectRecord,
    candidate: &Workspace,
) -> Result<ProbeComparison, HarnessError> {
    let candidate_obs = run_probes(defect, candidate)?;
    let oracle_ws = checkout(defect, Variant::Fixed, WorkspacePurpose::AdjudicationOracle)?;
    let oracle_obs = run_probes(defect, &oracle_ws)?;

    let mismatches = candidate_obs
        .iter()
        .zip(&oracle_obs)
        .filter(|(c, o)| c.exit_code != o.exit_code || c.output != o.output)
        .map(|(c, o)| ProbeMismatch {
            cmd: c.cmd.clone(),
            candidate: (c.exit_code, c.output.clone()),
            oracle: (o.exit_code, o.output.clone()),
        })
        .collect();
    Ok(ProbeComparison {
        probes_run: candidate_obs.len(),
        mismatches,
    })
}

// ---- corpus validation ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusFinding {
    pub defect_id: String,
    pub check: &'static str,
    pub detail: String,
}

/// Deep validation backing `corpus validate`: paths exist, the scoped file
/// actually differs between trees, the buggy tree fails its tests and the
/// fixed tree passes them.
pub fn validate_corpus(corpus: &Corpus) -> Vec<CorpusFinding> {
    let mut findings = Vec::new();
    let mut finding = |id: &str, check: &'static str, detail: String| {
        findings.push(CorpusFinding {
            defect_id: id.to_string(),
            check,
            detail,
        });
    };

    for defect in corpus.defects() {
        for (label, path) in [
            ("buggy_dir", &defect.buggy_source),
            ("fixed_dir", &defect.fixed_source),
        ] {
            if !path.is_dir() {
                finding(
                    &defect.id,
                    "paths",
                    format!("{label} missing: {}", path.display()),
                );
            }
        }
        if !defect.buggy_source.is_dir() || !defect.fixed_source.is_dir() {
            continue;
        }

        let scope = defect.repair_scope();
        let buggy_scoped = fs::read(defect.buggy_source.join(scope)).ok();
        let fixed_scoped = fs::read(defect.fixed_source.join(scope)).ok();
        match (&buggy_scoped, &fixed_scoped) {
            (None, _) | (_, None) => {
                finding(&defect.id, "scope", format!("{scope} missing from a tree"));
            }
            (Some(b), Some(f)) if b == f => {
                finding(
                    &defect.id,
                    "scope",
                    format!("{scope} identical in both trees"),
                );
            }
            _ => {}
        }

        for (variant, expected) in [
            (Variant::Buggy, TestStatus::Fail),
            (Variant::Fixed, TestStatus::Pass),
        ] {
            let run = checkout(defect, variant, WorkspacePurpose::CorpusValidation)
                .and_then(|ws| run_tests(&ws, &defect.test_command));
            match run {
                Ok(result) if result.status == expected => {
                    if variant == Variant::Buggy
                        && result.failing_test_names != defect.failing_tests
                    {
                        finding(
                            &defect.id,
                            "failing_tests",
                            format!(
                                "manifest lists {:?}, run produced {:?}",
                                defect.failing_tests, result.failing_test_names
                            ),
                        );
                    }
                }
                Ok(result) => finding(
                    &defect.id,
                    "discrimination",
                    format!("{variant} tree: expected {expected}, got {}", result.status),
                ),
                Err(e) => finding(&defect.id, "discrimination", format!("{variant} tree: {e}")),
            }
        }
    }
    findings
}
