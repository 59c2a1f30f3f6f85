//! The three model roles and the pluggable backend that answers for them.
//!
//! An architect turns a failure report into a root-cause analysis plus a
//! feature spec; an engineer turns a spec into step bindings; a fixer
//! turns a failure report into a whole-file patch. Each operation owns
//! its prompt assembly and its response grammar, re-asking up to
//! [`FORMAT_REPAIR_LIMIT`] times when a response does not parse.
//!
//! Backends are interchangeable: [`ScriptedBackend`] replays canned
//! responses (by position or by a digest of the context) and records
//! every request it saw, which makes whole pipelines deterministic and
//! lets tests assert on exact prompt content. [`RemoteChat`] adapts a
//! chat-completion HTTP endpoint; its API key comes only from the
//! `SPEC_ANVIL_API_KEY` environment variable and is never written to
//! logs or records.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gherkin::{self, FeatureSpec};
use crate::harness::{self, DefectRecord, FailureReport, ScopeViolation, Workspace};
use crate::runtime::{self, StepBindingSet};

/// Format-repair re-asks allowed per operation, beyond the first ask.
pub const FORMAT_REPAIR_LIMIT: usize = 2;

const REQUEST_EXCERPT_LIMIT: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentRole {
    Architect,
    Engineer,
    Fixer,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Architect => "Architect",
            AgentRole::Engineer => "Engineer",
            AgentRole::Fixer => "Fixer",
        }
    }

    /// Directory name used by scripted fixture layouts.
    pub fn dir_name(self) -> &'static str {
        match self {
            AgentRole::Architect => "architect",
            AgentRole::Engineer => "engineer",
            AgentRole::Fixer => "fixer",
        }
    }
}

impl std::fmt::Display for AgentRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub role: AgentRole,
    /// Rendered request, truncated to a bounded excerpt.
    pub request_excerpt: String,
    pub response: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub session_id: String,
    pub turns: Vec<AgentTurn>,
}

impl Transcript {
    pub fn new(session_id: impl Into<String>) -> Transcript {
        Transcript {
            session_id: session_id.into(),
            turns: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub role: AgentRole,
    pub duration_s: f64,
    pub turns: u64,
    pub tokens: u64,
}

/// Per-role totals over a transcript: turn count, wall time, and
/// prompt+completion tokens.
pub fn account(transcript: &Transcript, role: AgentRole) -> CostRecord {
    let mut record = CostRecord {
        role,
        duration_s: 0.0,
        turns: 0,
        tokens: 0,
    };
    for turn in transcript.turns.iter().filter(|t| t.role == role) {
        record.turns += 1;
        record.duration_s += turn.duration_s;
        record.tokens += turn.prompt_tokens + turn.completion_tokens;
    }
    record
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectOutput {
    pub root_cause_analysis: String,
    pub spec: FeatureSpec,
}

// ---- backend contract ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub name: String,
    pub text: String,
}

impl ContextBlock {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> ContextBlock {
        ContextBlock {
            name: name.into(),
            text: text.into(),
        }
    }
}

/// Canonical prompt rendering: blocks in order, each under a `##` header.
pub fn render_context(blocks: &[ContextBlock]) -> String {
    blocks
        .iter()
        .map(|b| format!("## {}\n\n{}", b.name, b.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Stable key for digest-addressed scripted responses: sha256 over the
/// block names and texts, first 16 hex digits.
pub fn context_digest(role: AgentRole, blocks: &[ContextBlock]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(role.as_str().as_bytes());
    for block in blocks {
        hasher.update([0u8]);
        hasher.update(block.name.as_bytes());
        hasher.update([0u8]);
        hasher.update(block.text.as_bytes());
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(16);
    for byte in &digest[..8] {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("scripted responses exhausted for {key} after {consumed} turn(s)")]
    ScriptExhausted { key: String, consumed: usize },
    #[error("no scripted response for context digest {digest}")]
    NoScriptForDigest { digest: String },
    #[error("script fixture unreadable at {path}: {detail}")]
    BadFixture { path: String, detail: String },
    #[error("transport failed after {attempts} attempt(s): {detail}")]
    Transport { attempts: usize, detail: String },
}

pub trait Backend: Send + Sync {
    /// One request/response exchange. The transcript carries the session
    /// identity and any prior turns; the caller appends the returned turn.
    fn respond(
        &self,
        role: AgentRole,
        context: &[ContextBlock],
        transcript: &Transcript,
    ) -> Result<AgentTurn, BackendError>;
}

fn truncate_chars(text: &str, limit: usize) -> String {
    match text.char_indices().nth(limit) {
        Some((byte, _)) => text[..byte].to_string(),
        None => text.to_string(),
    }
}

fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

// ---- scripted backend ----

#[derive(Debug, Clone, Copy, Default, Deserialize)]
pub struct TurnMeta {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone)]
struct ScriptedResponse {
    text: String,
    meta: TurnMeta,
}

#[derive(Debug)]
enum ScriptSource {
    /// `<root>/<session_id>/<role>/NNN.txt`, 1-based, zero-padded to 3,
    /// with an optional `NNN.meta.json` sidecar for token/duration counts.
    Dir(PathBuf),
    Memory(HashMap<String, Vec<ScriptedResponse>>),
    DigestKeyed(HashMap<String, String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedRequest {
    pub session_id: String,
    pub role: AgentRole,
    pub blocks: Vec<ContextBlock>,
    pub rendered: String,
}

/// Deterministic backend. Sequential sources key on
/// `<session_id>/<role>` and hand out responses in file order; the
/// digest-keyed source answers by content address and never exhausts.
#[derive(Debug)]
pub struct ScriptedBackend {
    source: ScriptSource,
    cursors: Mutex<HashMap<String, usize>>,
    requests: Mutex<Vec<RecordedRequest>>,
}

impl ScriptedBackend {
    pub fn from_dir(root: impl Into<PathBuf>) -> ScriptedBackend {
        ScriptedBackend {
            source: ScriptSource::Dir(root.into()),
            cursors: Mutex::new(HashMap::new()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn in_memory() -> ScriptedBackend {
        ScriptedBackend {
            source: ScriptSource::Memory(HashMap::new()),
            cursors: Mutex::new(HashMap::new()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn digest_keyed(map: HashMap<String, String>) -> ScriptedBackend {
        ScriptedBackend {
            source: ScriptSource::DigestKeyed(map),
            cursors: Mutex::new(HashMap::new()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn push_response(&mut self, session_id: &str, role: AgentRole, text: &str) {
        self.push_response_with_meta(session_id, role, text, TurnMeta::default());
    }

    pub fn push_response_with_meta(
        &mut self,
        session_id: &str,
        role: AgentRole,
        text: &str,
        meta: TurnMeta,
    ) {
        let ScriptSource::Memory(map) = &mut self.source else {
            panic!("push_response requires an in-memory script source");
        };
        map.entry(format!("{session_id}/{}", role.dir_name()))
            .or_default()
            .push(ScriptedResponse {
                text: text.to_string(),
                meta,
            });
    }

    /// Every request answered so far, in order, with full context blocks.
    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().expect("requests lock").clone()
    }

    fn next_sequential(&self, key: &str) -> Result<ScriptedResponse, BackendError> {
        let mut cursors = self.cursors.lock().expect("cursor lock");
        let cursor = cursors.entry(key.to_string()).or_insert(0);
        let index = *cursor;
        let response = match &self.source {
            ScriptSource::Memory(map) => map.get(key).and_then(|v| v.get(index)).cloned().ok_or(
                BackendError::ScriptExhausted {
                    key: key.to_string(),
                    consumed: index,
                },
            )?,
            ScriptSource::Dir(root) => {
                let base = root.join(key).join(format!("{:03}", index + 1));
                let text_path = base.with_extension("txt");
                let text = std::fs::read_to_string(&text_path).map_err(|_| {
                    BackendError::ScriptExhausted {
                        key: key.to_string(),
                        consumed: index,
                    }
                })?;
                let meta_path = base.with_extension("meta.json");
                let meta = match std::fs::read_to_string(&meta_path) {
                    Ok(raw) => {
                        serde_json::from_str(&raw).map_err(|e| BackendError::BadFixture {
                            path: meta_path.display().to_string(),
                            detail: e.to_string(),
                        })?
                    }
                    Err(_) => TurnMeta::default(),
                };
                ScriptedResponse { text, meta }
            }
            ScriptSource::DigestKeyed(_) => unreachable!("digest source has no sequence"),
        };
        *cursor += 1;
        Ok(response)
    }
}

impl Backend for ScriptedBackend {
    fn respond(
        &self,
        role: AgentRole,
        context: &[ContextBlock],
        transcript: &Transcript,
    ) -> Result<AgentTurn, BackendError> {
        let rendered = render_context(context);
        self.requests
            .lock()
            .expect("requests lock")
            .push(RecordedRequest {
                session_id: transcript.session_id.clone(),
                role,
                blocks: context.to_vec(),
                rendered: rendered.clone(),
            });
        let response = match &self.source {
            ScriptSource::DigestKeyed(map) => {
                let digest = context_digest(role, context);
                let text = map
                    .get(&digest)
                    .cloned()
                    .ok_or(BackendError::NoScriptForDigest { digest })?;
                ScriptedResponse {
                    text,
                    meta: TurnMeta::default(),
                }
            }
            _ => {
                let key = format!("{}/{}", transcript.session_id, role.dir_name());
                self.next_sequential(&key)?
            }
        };
        Ok(AgentTurn {
            role,
            request_excerpt: truncate_chars(&rendered, REQUEST_EXCERPT_LIMIT),
            prompt_tokens: response
                .meta
                .prompt_tokens
                .unwrap_or_else(|| estimate_tokens(&rendered)),
            completion_tokens: response
                .meta
                .completion_tokens
                .unwrap_or_else(|| estimate_tokens(&response.text)),
            duration_s: response.meta.duration_s.unwrap_or(0.0),
            response: response.text,
        })
    }
}

// ---- remote backend ----

#[derive(Debug, Clone, Serialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, String>;
}

/// Chat-completion endpoint adapter. Prior turns are replayed as
/// user/assistant message pairs (the user side from the stored request
/// excerpt), the current context as the final user message.
pub struct RemoteChat {
    transport: Box<dyn ChatTransport>,
    model: String,
    retry_base: Duration,
}

impl RemoteChat {
    pub fn new(transport: Box<dyn ChatTransport>, model: impl Into<String>) -> RemoteChat {
        RemoteChat {
            transport,
            model: model.into(),
            retry_base: Duration::from_millis(500),
        }
    }

    pub fn with_retry_base(mut self, retry_base: Duration) -> RemoteChat {
        self.retry_base = retry_base;
        self
    }
}

impl Backend for RemoteChat {
    fn respond(
        &self,
        role: AgentRole,
        context: &[ContextBlock],
        transcript: &Transcript,
    ) -> Result<AgentTurn, BackendError> {
        let rendered = render_context(context);
        let mut messages = vec![ChatMessage {
            role: "system".to_string(),
            content: format!("You are the {role} in an automated program repair pipeline."),
        }];
        for turn in &transcript.turns {
            messages.push(ChatMessage {
                role: "user".to_string(),
                content: turn.request_excerpt.clone(),
            });
            messages.push(ChatMessage {
                role: "assistant".to_string(),
                content: turn.response.clone(),
            });
        }
        messages.push(ChatMessage {
            role: "user".to_string(),
            content: rendered.clone(),
        });
        let request = ChatRequest {
            model: self.model.clone(),
            messages,
        };

        let started = Instant::now();
        let mut last_error = String::new();
        for attempt in 0..=2usize {
            if attempt > 0 {
                std::thread::sleep(self.retry_base * (1 << (attempt - 1)));
            }
            match self.transport.complete(&request) {
                Ok(response) => {
                    return Ok(AgentTurn {
                        role,
                        request_excerpt: truncate_chars(&rendered, REQUEST_EXCERPT_LIMIT),
                        prompt_tokens: response
                            .prompt_tokens
                            .unwrap_or_else(|| estimate_tokens(&rendered)),
                        completion_tokens: response
                            .completion_tokens
                            .unwrap_or_else(|| estimate_tokens(&response.content)),
                        duration_s: started.elapsed().as_secs_f64(),
                        response: response.content,
                    })
                }
                Err(detail) => last_error = detail,
            }
        }
        Err(BackendError::Transport {
            attempts: 3,
            detail: last_error,
        })
    }
}

/// Blocking HTTP transport for OpenAI-style `/v1/chat/completions`
/// endpoints. The bearer token is read from `SPEC_ANVIL_API_KEY` at call
/// time and appears only in the Authorization header.
pub struct HttpTransport {
    endpoint: String,
    client: reqwest::blocking::Client,
}

pub const API_KEY_VAR: &str = "SPEC_ANVIL_API_KEY";

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>) -> HttpTransport {
        HttpTransport {
            endpoint: endpoint.into(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, String> {
        let key = std::env::var(API_KEY_VAR).map_err(|_| format!("{API_KEY_VAR} is not set"))?;
        let body = serde_json::json!({
            "model": request.model,
            "messages": request.messages,
        });
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| format!("request failed: {e}"))?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("endpoint returned {status}"));
        }
        let parsed: serde_json::Value = response
            .json()
            .map_err(|e| format!("unparseable response body: {e}"))?;
        let content = parsed["choices"][0]["message"]["content"]
            .as_str()
            .ok_or("response carries no message content")?
            .to_string();
        Ok(ChatResponse {
            content,
            prompt_tokens: parsed["usage"]["prompt_tokens"].as_u64(),
            completion_tokens: parsed["usage"]["completion_tokens"].as_u64(),
        })
    }
}

// ---- response grammars ----

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("malformed {role} output after {attempts} attempt(s): {detail}")]
    MalformedOutput {
        role: AgentRole,
        attempts: usize,
        detail: String,
    },
    #[error("spec could not be bound after {attempts} attempt(s): {detail}")]
    UnbindableSpec { attempts: usize, detail: String },
    #[error("malformed patch after {attempts} attempt(s): {detail}")]
    MalformedPatch { attempts: usize, detail: String },
    #[error("patch touches files outside the repair scope: {}", (.0).0.join(", "))]
    Scope(ScopeViolation),
}

#[derive(Debug)]
struct FencedBlock {
    lang: Option<String>,
    /// From a `FILE: <path>` line directly above the opening fence.
    header_path: Option<String>,
    content: String,
}

/// Splits a response into the prose before the first fence and the list
/// of fenced blocks. Fences are ``` lines; an unclosed fence swallows the
/// rest of the text.
fn parse_fenced(response: &str) -> (String, Vec<FencedBlock>) {
    let mut preamble = Vec::new();
    let mut blocks = Vec::new();
    let mut lines = response.lines().peekable();
    let mut pending_path: Option<String> = None;
    let mut saw_fence = false;

    while let Some(line) = lines.next() {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("```") {
            saw_fence = true;
            let lang = rest.trim();
            let mut content = Vec::new();
            for inner in lines.by_ref() {
                if inner.trim_start().starts_with("```") {
                    break;
                }
                content.push(inner);
            }
            let mut text = content.join("\n");
            if !text.is_empty() {
                text.push('\n');
            }
            blocks.push(FencedBlock {
                lang: (!lang.is_empty()).then(|| lang.to_string()),
                header_path: pending_path.take(),
                content: text,
            });
        } else if let Some(path) = trimmed.strip_prefix("FILE:") {
            pending_path = Some(path.trim().to_string());
        } else {
            if !trimmed.is_empty() {
                pending_path = None;
            }
            if !saw_fence {
                preamble.push(line);
            }
        }
    }
    (preamble.join("\n").trim().to_string(), blocks)
}

fn repair_block(detail: &str) -> ContextBlock {
    ContextBlock::new(
        "format_repair",
        format!(
            "Your previous reply could not be used: {detail}. Reply again in the required format."
        ),
    )
}

/// Failure evidence rendered for prompts: test ids, stack excerpt,
/// observed-vs-expected values, and the tail of the raw log.
pub fn render_failure_report(report: &FailureReport) -> String {
    let mut out = String::from("Failing tests:\n");
    if report.failing_test_names.is_empty() {
        out.push_str("- (none parsed from the log)\n");
    }
    for name in &report.failing_test_names {
        out.push_str(&format!("- {name}\n"));
    }
    if !report.stack_excerpt.is_empty() {
        out.push_str("\nStack excerpt:\n");
        out.push_str(&report.stack_excerpt);
        if !report.stack_excerpt.ends_with('\n') {
            out.push('\n');
        }
    }
    if !report.assertion_diffs.is_empty() {
        out.push_str("\nAssertion diffs:\n");
        for (expected, actual) in &report.assertion_diffs {
            out.push_str(&format!("- expected {expected}, got {actual}\n"));
        }
    }
    let mut tail_start = report.raw_log.len().saturating_sub(2000);
    while !report.raw_log.is_char_boundary(tail_start) {
        tail_start += 1;
    }
    let tail = &report.raw_log[tail_start..];
    if !tail.is_empty() {
        out.push_str("\nLog tail:\n");
        out.push_str(tail);
    }
    out
}

const ARCHITECT_INSTRUCTIONS: &str = "Analyze the failing run below and explain the root cause of the defect in plain prose. Then write exactly one fenced ```gherkin block containing a single Feature that captures the intended behavior: it must fail on the current code and pass once the defect is fixed. Prose first, then the block.";

const ENGINEER_INSTRUCTIONS: &str = "Make the feature below executable. Reply with one fenced ```json block containing a bindings document: {\"bindings\": [{\"pattern\", \"command\", \"timeout_s\"?, \"role\"?}], \"env\"?: {}}. Every step of the feature must match some pattern (patterns match the whole step text; regex captures are available to commands as {1}..{n}). Commands run with the workspace as working directory and must exit 0 on success.";

const FIXER_INSTRUCTIONS: &str = "Repair the defect described below. Reply with the complete replacement content of the file to change in one fenced code block. Put a line `FILE: <path>` directly above the fence naming the file; without it the block applies to the designated suspicious file. Only that file may be changed.";

/// Asks the backend for a root-cause analysis and a feature spec. A
/// response is well-formed iff non-empty prose precedes exactly one
/// fenced gherkin block that parses.
pub fn architect_infer(
    report: &FailureReport,
    sources: &[ContextBlock],
    backend: &dyn Backend,
    transcript: &mut Transcript,
) -> Result<ArchitectOutput, AgentError> {
    let mut blocks = vec![
        ContextBlock::new("instructions", ARCHITECT_INSTRUCTIONS),
        ContextBlock::new("failure_report", render_failure_report(report)),
    ];
    blocks.extend(sources.iter().cloned());

    let mut detail = String::new();
    for attempt in 0..=FORMAT_REPAIR_LIMIT {
        let mut context = blocks.clone();
        if attempt > 0 {
            context.push(repair_block(&detail));
        }
        let turn = backend.respond(AgentRole::Architect, &context, transcript)?;
        let response = turn.response.clone();
        transcript.turns.push(turn);

        let (analysis, fenced) = parse_fenced(&response);
        let gherkin_blocks: Vec<&FencedBlock> = fenced
            .iter()
            .filter(|b| b.lang.as_deref() == Some("gherkin"))
            .collect();
        detail = if analysis.is_empty() {
            "no analysis text before the spec block".to_string()
        } else if gherkin_blocks.len() != 1 {
            format!(
                "expected exactly one ```gherkin block, found {}",
                gherkin_blocks.len()
            )
        } else {
            match gherkin::parse(&gherkin_blocks[0].content) {
                Ok(spec) => {
                    return Ok(ArchitectOutput {
                        root_cause_analysis: analysis,
                        spec,
                    })
                }
                Err(e) => format!("the gherkin block does not parse: {e}"),
            }
        };
    }
    Err(AgentError::MalformedOutput {
        role: AgentRole::Architect,
        attempts: FORMAT_REPAIR_LIMIT + 1,
        detail,
    })
}

fn workspace_listing(workspace: &Workspace) -> String {
    let mut paths = Vec::new();
    for entry in walkdir::WalkDir::new(workspace.root()).sort_by_file_name() {
        let Ok(entry) = entry else { continue };
        if entry.file_type().is_file() {
            if let Ok(rel) = entry.path().strip_prefix(workspace.root()) {
                paths.push(rel.to_string_lossy().into_owned());
            }
        }
    }
    paths.join("\n")
}

/// Asks the backend for step bindings covering every step of the spec.
/// The response may be a fenced ```json block or raw JSON; it is rejected
/// (and re-asked) unless it parses and binds the whole spec.
pub fn engineer_build(
    spec: &FeatureSpec,
    workspace: &Workspace,
    backend: &dyn Backend,
    transcript: &mut Transcript,
) -> Result<StepBindingSet, AgentError> {
    let blocks = vec![
        ContextBlock::new("instructions", ENGINEER_INSTRUCTIONS),
        ContextBlock::new("feature_spec", gherkin::render(spec)),
        ContextBlock::new("workspace_files", workspace_listing(workspace)),
    ];

    let mut detail = String::new();
    for attempt in 0..=FORMAT_REPAIR_LIMIT {
        let mut context = blocks.clone();
        if attempt > 0 {
            context.push(repair_block(&detail));
        }
        let turn = backend.respond(AgentRole::Engineer, &context, transcript)?;
        let response = turn.response.clone();
        transcript.turns.push(turn);

        let (_, fenced) = parse_fenced(&response);
        let raw = fenced
            .iter()
            .find(|b| b.lang.as_deref() == Some("json"))
            .map(|b| b.content.clone())
            .unwrap_or_else(|| response.clone());
        detail = match StepBindingSet::from_json(&raw) {
            Err(e) => e.to_string(),
            Ok(set) => match runtime::bind(spec, &set) {
                Ok(_) => return Ok(set),
                Err(e) => e.to_string(),
            },
        };
    }
    Err(AgentError::UnbindableSpec {
        attempts: FORMAT_REPAIR_LIMIT + 1,
        detail,
    })
}

#[derive(Debug, Clone)]
pub enum FixerMode {
    Blind,
    Enlightened(FeatureSpec),
}

impl FixerMode {
    pub fn name(&self) -> &'static str {
        match self {
            FixerMode::Blind => "blind",
            FixerMode::Enlightened(_) => "enlightened",
        }
    }
}

/// Context assembly for the fixer, exposed so the superset property is
/// directly checkable: the blind block list is a prefix of the
/// enlightened one, which appends exactly one spec block.
pub fn fixer_context(
    defect: &DefectRecord,
    scoped_content: &str,
    report: &FailureReport,
    mode: &FixerMode,
) -> Vec<ContextBlock> {
    let scope = defect.repair_scope();
    let mut blocks = vec![
        ContextBlock::new("instructions", FIXER_INSTRUCTIONS),
        ContextBlock::new("failure_report", render_failure_report(report)),
        ContextBlock::new(
            "scoped_source",
            format!("FILE: {scope}\n\n{scoped_content}"),
        ),
    ];
    if let FixerMode::Enlightened(spec) = mode {
        blocks.push(ContextBlock::new(
            "validated_specification",
            format!(
                "The following behavior specification has been verified to fail on the current code and pass on a correct fix. Make it pass.\n\n{}",
                gherkin::render(spec)
            ),
        ));
    }
    blocks
}

/// Asks the backend for a whole-file patch. Responses with no fenced
/// block (or duplicate targets) are re-asked; a patch that reaches
/// outside the repair scope is rejected immediately with no re-ask,
/// since that is a policy violation rather than a format slip.
pub fn fixer_repair(
    defect: &DefectRecord,
    workspace: &Workspace,
    mode: &FixerMode,
    report: &FailureReport,
    backend: &dyn Backend,
    transcript: &mut Transcript,
) -> Result<harness::Patch, AgentError> {
    let scope = defect.repair_scope();
    let scoped_content = workspace
        .read_file(scope)
        .unwrap_or_else(|e| format!("(unreadable: {e})"));
    let blocks = fixer_context(defect, &scoped_content, report, mode);

    let mut detail = String::new();
    for attempt in 0..=FORMAT_REPAIR_LIMIT {
        let mut context = blocks.clone();
        if attempt > 0 {
            context.push(repair_block(&detail));
        }
        let turn = backend.respond(AgentRole::Fixer, &context, transcript)?;
        let response = turn.response.clone();
        transcript.turns.push(turn);

        let (rationale, fenced) = parse_fenced(&response);
        if fenced.is_empty() {
            detail = "no fenced code block with replacement file content".to_string();
            continue;
        }
        let mut edits = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        let mut duplicate = None;
        for block in &fenced {
            let path = block
                .header_path
                .clone()
                .unwrap_or_else(|| scope.to_string());
            if !seen.insert(path.clone()) {
                duplicate = Some(path);
                break;
            }
            edits.push(harness::PatchEdit {
                path,
                content: block.content.clone(),
                create: false,
            });
        }
        if let Some(path) = duplicate {
            detail = format!("two blocks target the same file {path}");
            continue;
        }
        let patch = harness::Patch { edits, rationale };
        return match harness::scope_check(&patch, defect) {
            Ok(()) => Ok(patch),
            Err(violation) => Err(AgentError::Scope(violation)),
        };
    }
    Err(AgentError::MalformedPatch {
        attempts: FORMAT_REPAIR_LIMIT + 1,
        detail,
    })
}
