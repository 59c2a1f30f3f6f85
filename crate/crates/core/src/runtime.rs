//! Executable semantics for feature specs: step text is matched against a
//! manifest of regex-to-command bindings, and bound scenarios run as
//! sequences of operating-system processes inside a workspace.
//!
//! Pass/fail is the exit code, nothing else: a step passes iff its command
//! exits 0. A nonzero exit on an Assertion-role step is an AssertionFail;
//! any other failure (nonzero on Context/Action steps, timeout, spawn
//! failure) is a SetupError, so broken plumbing is never mistaken for a
//! behavioral verdict.
//!
//! Binding manifest `bindings.json`:
//! `{"bindings": [{"pattern", "command", "timeout_s"?, "role"?}], "env": {...}}`.
//! Patterns match the whole step text. Command templates carry `{1}..{n}`
//! placeholders for captures and `{workspace}` for the workspace root;
//! they are tokenized first (see [`crate::exec::tokenize`]) and
//! placeholders are substituted per token, so a capture containing spaces
//! stays a single argv token. Steps are independent processes: no state
//! flows between them except through the workspace.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::gherkin::{FeatureSpec, StepRole};
use crate::harness::Workspace;

const DEFAULT_STEP_TIMEOUT: Duration = Duration::from_secs(60);

// ---- bindings ----

#[derive(Debug, Clone)]
pub struct StepBinding {
    pattern: regex::Regex,
    pattern_src: String,
    command_tokens: Vec<String>,
    pub timeout: Duration,
    pub role_constraint: Option<StepRole>,
}

#[derive(Debug, Error)]
pub enum BindingSpecError {
    #[error("pattern {pattern:?} does not compile: {source}")]
    BadPattern {
        pattern: String,
        #[source]
        source: regex::Error,
    },
    #[error("command {command:?}: {source}")]
    BadTemplate {
        command: String,
        #[source]
        source: exec::TemplateError,
    },
    #[error("command {command:?} uses placeholder {{{index}}} but pattern has {captures} capture group(s)")]
    BadPlaceholder {
        command: String,
        index: usize,
        captures: usize,
    },
    #[error("bindings manifest: {0}")]
    Manifest(String),
}

fn placeholder_re() -> &'static regex::Regex {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"\{(\d+)\}").expect("static"))
}

impl StepBinding {
    pub fn new(
        pattern: &str,
        command: &str,
        timeout: Duration,
        role_constraint: Option<StepRole>,
    ) -> Result<StepBinding, BindingSpecError> {
        // Full-match semantics regardless of explicit anchors.
        let compiled = regex::Regex::new(&format!("^(?:{pattern})$")).map_err(|source| {
            BindingSpecError::BadPattern {
                pattern: pattern.to_string(),
                source,
            }
        })?;
        let command_tokens =
            exec::tokenize(command).map_err(|source| BindingSpecError::BadTemplate {
                command: command.to_string(),
                source,
            })?;
        let captures = compiled.captures_len() - 1;
        for token in &command_tokens {
            for cap in placeholder_re().captures_iter(token) {
                let index: usize = cap[1].parse().unwrap_or(usize::MAX);
                if index == 0 || index > captures {
                    return Err(BindingSpecError::BadPlaceholder {
                        command: command.to_string(),
                        index,
                        captures,
                    });
                }
            }
        }
        Ok(StepBinding {
            pattern: compiled,
            pattern_src: pattern.to_string(),
            command_tokens,
            timeout,
            role_constraint,
        })
    }

    pub fn pattern_str(&self) -> &str {
        &self.pattern_src
    }
}

#[derive(Debug, Clone, Default)]
pub struct StepBindingSet {
    pub bindings: Vec<StepBinding>,
    pub environment: BTreeMap<String, String>,
    /// Manifest text this set was parsed from, kept for artifact writing;
    /// sets assembled in code have none.
    pub source: Option<String>,
}

#[derive(Deserialize)]
struct ManifestBinding {
    pattern: String,
    command: String,
    timeout_s: Option<u64>,
    role: Option<StepRole>,
}

#[derive(Deserialize)]
struct BindingManifest {
    bindings: Vec<ManifestBinding>,
    #[serde(default)]
    env: BTreeMap<String, String>,
}

impl StepBindingSet {
    pub fn from_json(text: &str) -> Result<StepBindingSet, BindingSpecError> {
        let manifest: BindingManifest = serde_json::from_str(text)
            .map_err(|e| BindingSpecError::Manifest(format!("invalid JSON: {e}")))?;
        let mut bindings = Vec::with_capacity(manifest.bindings.len());
        for b in manifest.bindings {
            let timeout = b
                .timeout_s
                .map(Duration::from_secs)
                .unwrap_or(DEFAULT_STEP_TIMEOUT);
            bindings.push(StepBinding::new(&b.pattern, &b.command, timeout, b.role)?);
        }
        Ok(StepBindingSet {
            bindings,
            environment: manifest.env,
            source: Some(text.to_string()),
        })
    }
}

// ---- binding specs to commands ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BindingError {
    pub step_text: String,
    pub scenario_index: usize,
    pub step_index: usize,
}

impl std::fmt::Display for BindingError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "no binding matches step {:?} (scenario {}, step {})",
            self.step_text, self.scenario_index, self.step_index
        )
    }
}

impl std::error::Error for BindingError {}

#[derive(Debug, Clone)]
pub struct BoundStep {
    pub text: String,
    pub role: StepRole,
    /// Command argv with captures substituted; `{workspace}` resolves at
    /// execution time.
    pub argv: Vec<String>,
    pub timeout: Duration,
}

#[derive(Debug, Clone)]
pub struct BoundScenario {
    pub title: String,
    pub steps: Vec<BoundStep>,
}

#[derive(Debug, Clone)]
pub struct BoundFeature {
    pub feature_title: String,
    pub scenarios: Vec<BoundScenario>,
    pub environment: BTreeMap<String, String>,
}

/// Matches every step to the FIRST binding whose pattern matches the whole
/// step text and whose role constraint (if any) equals the step's resolved
/// role. Fails on the first unmatched step.
pub fn bind(spec: &FeatureSpec, bindings: &StepBindingSet) -> Result<BoundFeature, BindingError> {
    let mut scenarios = Vec::with_capacity(spec.scenarios.len());
    for (scenario_index, scenario) in spec.scenarios.iter().enumerate() {
        let mut steps = Vec::with_capacity(scenario.steps.len());
        for (step_index, step) in scenario.steps.iter().enumerate() {
            let hit = bindings
                .bindings
                .iter()
                .find_map(|b| {
                    if b.role_constraint.is_some_and(|r| r != step.resolved_role) {
                        return None;
                    }
                    b.pattern.captures(&step.text).map(|captures| (b, captures))
                })
                .ok_or_else(|| BindingError {
                    step_text: step.text.clone(),
                    scenario_index,
                    step_index,
                })?;
            let (binding, captures) = hit;
            let argv = binding
                .command_tokens
                .iter()
                .map(|token| {
                    placeholder_re()
                        .replace_all(token, |c: &regex::Captures<'_>| {
                            let index: usize = c[1].parse().expect("digits");
                            captures
                                .get(index)
                                .map(|m| m.as_str())
                                .unwrap_or("")
                                .to_string()
                        })
                        .into_owned()
                })
                .collect();
            steps.push(BoundStep {
                text: step.text.clone(),
                role: step.resolved_role,
                argv,
                timeout: binding.timeout,
            });
        }
        scenarios.push(BoundScenario {
            title: scenario.title.clone(),
            steps,
        });
    }
    Ok(BoundFeature {
        feature_title: spec.title.clone(),
        scenarios,
        environment: bindings.environment.clone(),
    })
}

// ---- execution ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepStatus {
    Pass,
    AssertionFail,
    SetupError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLog {
    /// Display form of the argv that ran.
    pub command: String,
    pub exit_code: Option<i32>,
    pub output: String,
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario_title: String,
    pub status: StepStatus,
    pub failed_step_index: Option<usize>,
    pub step_logs: Vec<StepLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRunReport {
    pub feature_title: String,
    pub scenario_results: Vec<ScenarioResult>,
    /// Seconds; the only nondeterministic field.
    pub wall_time_s: f64,
}

fn display_argv(argv: &[String]) -> String {
    argv.iter()
        .map(|t| {
            if t.is_empty()
                || t.chars()
                    .any(|c| c.is_whitespace() || c == '"' || c == '\'')
            {
                format!("{t:?}")
            } else {
                t.clone()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Runs every scenario in order, each step as one process with the binding
/// set's environment overlay and the workspace root as working directory.
/// A scenario stops at its first failing step; later steps never run and
/// have no log entry.
pub fn execute(bound: &BoundFeature, workspace: &Workspace) -> FeatureRunReport {
    workspace.record_feature_run();
    let started = Instant::now();
    let mut scenario_results = Vec::with_capacity(bound.scenarios.len());

    for scenario in &bound.scenarios {
        let mut step_logs = Vec::new();
        let mut status = StepStatus::Pass;
        let mut failed_step_index = None;

        for (index, step) in scenario.steps.iter().enumerate() {
            let mut argv = step.argv.clone();
            for token in &mut argv {
                if token.contains("{workspace}") {
                    *token = token.replace("{workspace}", &workspace.root().to_string_lossy());
                }
            }
            let result = exec::run(&argv, workspace.root(), &bound.environment, step.timeout);
            let mut output = result.output.clone();
            if let Some(e) = &result.spawn_error {
                output = format!("{output}{e}");
            }
            step_logs.push(StepLog {
                command: display_argv(&argv),
                exit_code: result.exit_code,
                output,
                timed_out: result.timed_out,
            });
            if !result.succeeded() {
                status = if step.role == StepRole::Assertion && !result.broke() {
                    StepStatus::AssertionFail
                } else {
                    StepStatus::SetupError
                };
                failed_step_index = Some(index);
                break;
            }
        }

        scenario_results.push(ScenarioResult {
            scenario_title: scenario.title.clone(),
            status,
            failed_step_index,
            step_logs,
        });
    }

    FeatureRunReport {
        feature_title: bound.feature_title.clone(),
        scenario_results,
        wall_time_s: started.elapsed().as_secs_f64(),
    }
}

// ---- feature-level outcome ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpecOutcome {
    AllPass,
    AnyAssertionFail,
    Error,
}

impl std::fmt::Display for SpecOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SpecOutcome::AllPass => "AllPass",
            SpecOutcome::AnyAssertionFail => "AnyAssertionFail",
            SpecOutcome::Error => "Error",
        };
        f.write_str(s)
    }
}

/// Pure function of the scenario statuses. Error dominates
/// AnyAssertionFail dominates AllPass.
pub fn outcome(report: &FeatureRunReport) -> SpecOutcome {
    let mut saw_assertion_fail = false;
    for result in &report.scenario_results {
        match result.status {
            StepStatus::SetupError => return SpecOutcome::Error,
            StepStatus::AssertionFail => saw_assertion_fail = true,
            StepStatus::Pass => {}
        }
    }
    if saw_assertion_fail {
        SpecOutcome::AnyAssertionFail
    } else {
        SpecOutcome::AllPass
    }
}
