//! Feature-spec dialect: a small Gherkin subset with a canonical renderer
//! and a lint pass.
//!
//! The dialect is exactly: one `Feature:` header, an optional free-text
//! description, and one or more `Scenario:` blocks whose steps start with
//! `Given`, `When`, `Then`, `And` or `But`. `And`/`But` inherit the role of
//! the previous step. Comment lines (`#`) and blank lines are ignored.
//! CRLF input is accepted; the renderer always emits LF.
//!
//! Line-wrapping: a non-keyword line indented deeper than the previous
//! step's keyword line continues that step's text (joined with a single
//! space). A non-keyword line at the same or shallower indent inside a
//! scenario is an error. Everything between the feature header and the
//! first scenario is description text, one trimmed line per source line.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepKeyword {
    Given,
    When,
    Then,
    And,
    But,
}

impl StepKeyword {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKeyword::Given => "Given",
            StepKeyword::When => "When",
            StepKeyword::Then => "Then",
            StepKeyword::And => "And",
            StepKeyword::But => "But",
        }
    }

    fn from_word(word: &str) -> Option<Self> {
        match word {
            "Given" => Some(StepKeyword::Given),
            "When" => Some(StepKeyword::When),
            "Then" => Some(StepKeyword::Then),
            "And" => Some(StepKeyword::And),
            "But" => Some(StepKeyword::But),
            _ => None,
        }
    }
}

impl fmt::Display for StepKeyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Semantic role of a step once `And`/`But` inheritance is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepRole {
    Context,
    Action,
    Assertion,
}

impl fmt::Display for StepRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StepRole::Context => "Context",
            StepRole::Action => "Action",
            StepRole::Assertion => "Assertion",
        };
        f.write_str(s)
    }
}

/// Pure fold step for role resolution. `And`/`But` take the previous role;
/// the primary keywords ignore it. Returns `None` only for a leading
/// conjunction (no previous role to inherit).
pub fn resolve_role(keyword: StepKeyword, previous: Option<StepRole>) -> Option<StepRole> {
    match keyword {
        StepKeyword::Given => Some(StepRole::Context),
        StepKeyword::When => Some(StepRole::Action),
        StepKeyword::Then => Some(StepRole::Assertion),
        StepKeyword::And | StepKeyword::But => previous,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub keyword: StepKeyword,
    /// Step text after the keyword, trimmed, never empty.
    pub text: String,
    pub resolved_role: StepRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub title: String,
    pub steps: Vec<Step>,
}

/// Where a spec came from, for diagnostics only. Ignored by
/// [`FeatureSpec::structurally_equals`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub path: Option<String>,
    pub start_line: usize,
    pub end_line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub title: String,
    /// Trimmed non-blank lines between the header and the first scenario,
    /// joined with `\n`. Empty string when there is no description.
    pub description: String,
    pub scenarios: Vec<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_span: Option<SourceSpan>,
}

impl FeatureSpec {
    /// Equality over content, ignoring `source_span`. This is the relation
    /// under which `parse(render(s))` reproduces `s`: a rendered string has
    /// no file identity to recover.
    pub fn structurally_equals(&self, other: &FeatureSpec) -> bool {
        self.title == other.title
            && self.description == other.description
            && self.scenarios == other.scenarios
    }
}

// ---- parsing ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// Content before the feature header, or no header at all.
    MissingFeature,
    DuplicateFeature,
    /// Scenario block with zero steps.
    EmptyScenario,
    /// A feature with no scenarios is not a spec of anything.
    NoScenarios,
    /// `And`/`But` as the first step of a scenario.
    LeadingConjunction,
    DuplicateScenarioTitle(String),
    /// Non-keyword line at step position (not indented as a continuation).
    UnknownKeyword(String),
    /// Keyword with nothing after it.
    EmptyStepText,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::MissingFeature => write!(f, "expected 'Feature:' header"),
            ParseErrorKind::DuplicateFeature => write!(f, "only one Feature per file"),
            ParseErrorKind::EmptyScenario => write!(f, "scenario has no steps"),
            ParseErrorKind::NoScenarios => write!(f, "feature has no scenarios"),
            ParseErrorKind::LeadingConjunction => {
                write!(f, "And/But cannot start a scenario: no role to inherit")
            }
            ParseErrorKind::DuplicateScenarioTitle(t) => {
                write!(f, "duplicate scenario title {t:?}")
            }
            ParseErrorKind::UnknownKeyword(w) => {
                write!(f, "expected a step keyword, found {w:?}")
            }
            ParseErrorKind::EmptyStepText => write!(f, "step keyword with no text"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// 1-based line of the offending content.
    pub line: usize,
    /// 1-based column of the first non-whitespace character.
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}, column {}: {}",
            self.line, self.column, self.kind
        )
    }
}

impl std::error::Error for ParseError {}

fn err(line: usize, column: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, column, kind }
}

/// Leading-whitespace width in characters; tabs count as one column.
fn indent_of(line: &str) -> usize {
    line.chars().take_while(|c| c.is_whitespace()).count()
}

/// Splits a step line into keyword and trailing text. The keyword must be
/// the entire first word: `GivenX` is not a keyword.
fn split_step(trimmed: &str) -> Option<(StepKeyword, &str)> {
    let word = trimmed.split_whitespace().next()?;
    let keyword = StepKeyword::from_word(word)?;
    Some((keyword, trimmed[word.len()..].trim()))
}

pub fn parse(input: &str) -> Result<FeatureSpec, ParseError> {
    parse_named(input, None)
}

/// Like [`parse`], recording `path` in the spec's source span.
pub fn parse_named(input: &str, path: Option<&str>) -> Result<FeatureSpec, ParseError> {
    struct OpenScenario {
        title: String,
        steps: Vec<Step>,
        header_line: usize,
        header_column: usize,
        last_step_indent: usize,
    }

    let mut title: Option<String> = None;
    let mut description_lines: Vec<String> = Vec::new();
    let mut scenarios: Vec<Scenario> = Vec::new();
    let mut current: Option<OpenScenario> = None;
    let mut line_count = 0usize;

    let close = |sc: OpenScenario, scenarios: &mut Vec<Scenario>| -> Result<(), ParseError> {
        if sc.steps.is_empty() {
            return Err(err(
                sc.header_line,
                sc.header_column,
                ParseErrorKind::EmptyScenario,
            ));
        }
        if scenarios.iter().any(|s| s.title == sc.title) {
            return Err(err(
                sc.header_line,
                sc.header_column,
                ParseErrorKind::DuplicateScenarioTitle(sc.title.clone()),
            ));
        }
        scenarios.push(Scenario {
            title: sc.title,
            steps: sc.steps,
        });
        Ok(())
    };

    for (idx, raw) in input.lines().enumerate() {
        let lineno = idx + 1;
        line_count = lineno;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let indent = indent_of(line);
        let column = indent + 1;

        if let Some(rest) = trimmed.strip_prefix("Feature:") {
            if title.is_some() {
                return Err(err(lineno, column, ParseErrorKind::DuplicateFeature));
            }
            title = Some(rest.trim().to_string());
            continue;
        }
        if title.is_none() {
            return Err(err(lineno, column, ParseErrorKind::MissingFeature));
        }

        if let Some(rest) = trimmed.strip_prefix("Scenario:") {
            if let Some(sc) = current.take() {
                close(sc, &mut scenarios)?;
            }
            current = Some(OpenScenario {
                title: rest.trim().to_string(),
                steps: Vec::new(),
                header_line: lineno,
                header_column: column,
                last_step_indent: indent,
            });
            continue;
        }

        match current.as_mut() {
            None => {
                // Between the header and the first scenario: description.
                description_lines.push(trimmed.to_string());
            }
            Some(sc) => {
                if let Some((keyword, text)) = split_step(trimmed) {
                    if text.is_empty() {
                        return Err(err(lineno, column, ParseErrorKind::EmptyStepText));
                    }
                    let previous = sc.steps.last().map(|s| s.resolved_role);
                    let resolved_role = resolve_role(keyword, previous)
                        .ok_or_else(|| err(lineno, column, ParseErrorKind::LeadingConjunction))?;
                    sc.steps.push(Step {
                        keyword,
                        text: text.to_string(),
                        resolved_role,
                    });
                    sc.last_step_indent = indent;
                } else if !sc.steps.is_empty() && indent > sc.last_step_indent {
                    // Wrapped step text.
                    let step = sc.steps.last_mut().expect("non-empty");
                    step.text.push(' ');
                    step.text.push_str(trimmed);
                } else {
                    let word = trimmed.split_whitespace().next().unwrap_or("").to_string();
                    return Err(err(lineno, column, ParseErrorKind::UnknownKeyword(word)));
                }
            }
        }
    }

    if let Some(sc) = current.take() {
        close(sc, &mut scenarios)?;
    }
    let title = title.ok_or_else(|| err(line_count.max(1), 1, ParseErrorKind::MissingFeature))?;
    if scenarios.is_empty() {
        return Err(err(line_count.max(1), 1, ParseErrorKind::NoScenarios));
    }

    Ok(FeatureSpec {
        title,
        description: description_lines.join("\n"),
        scenarios,
        source_span: Some(SourceSpan {
            path: path.map(str::to_string),
            start_line: 1,
            end_line: line_count,
        }),
    })
}

// ---- rendering ----

/// Canonical text form: LF line endings, 2-space scenario indent, 4-space
/// step indent, one blank line before each scenario. `parse(render(s))`
/// reproduces `s` up to `structurally_equals`.
pub fn render(spec: &FeatureSpec) -> String {
    let mut out = String::new();
    out.push_str("Feature: ");
    out.push_str(&spec.title);
    out.push('\n');
    for line in spec.description.lines() {
        out.push_str("  ");
        out.push_str(line);
        out.push('\n');
    }
    for scenario in &spec.scenarios {
        out.push('\n');
        out.push_str("  Scenario: ");
        out.push_str(&scenario.title);
        out.push('\n');
        for step in &scenario.steps {
            out.push_str("    ");
            out.push_str(step.keyword.as_str());
            out.push(' ');
            out.push_str(&step.text);
            out.push('\n');
        }
    }
    out
}

// ---- lint ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LintSeverity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LintCode {
    BroadScenario,
    NoAssertion,
    VacuousAssertion,
}

impl LintCode {
    pub fn as_str(self) -> &'static str {
        match self {
            LintCode::BroadScenario => "BROAD_SCENARIO",
            LintCode::NoAssertion => "NO_ASSERTION",
            LintCode::VacuousAssertion => "VACUOUS_ASSERTION",
        }
    }
}

impl fmt::Display for LintCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub severity: LintSeverity,
    pub code: LintCode,
    /// Index into `spec.scenarios`.
    pub scenario: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy)]
pub struct LintConfig {
    /// A scenario with more steps than this is flagged BROAD_SCENARIO.
    pub broad_scenario_threshold: usize,
}

impl Default for LintConfig {
    fn default() -> Self {
        LintConfig {
            broad_scenario_threshold: 8,
        }
    }
}

/// Assertion texts that assert nothing in particular. Matched
/// case-insensitively against the whole step text.
const VACUOUS_ASSERTIONS: &[&str] = &[
    r"^it works$",
    r"^everything works$",
    r"^(?:the )?(?:system|program|code|test) works$",
    r"^(?:it )?(?:succeeds|passes)$",
    r"^success$",
    r"^no errors? (?:occurs?|happens?|is thrown|are thrown)$",
    r"^nothing (?:bad )?happens$",
    r"^(?:the result is )?(?:true|ok|fine|correct)$",
];

fn is_vacuous(text: &str) -> bool {
    use std::sync::OnceLock;
    static PATTERNS: OnceLock<Vec<regex::Regex>> = OnceLock::new();
    let patterns = PATTERNS.get_or_init(|| {
        VACUOUS_ASSERTIONS
            .iter()
            .map(|p| {
                regex::RegexBuilder::new(p)
                    .case_insensitive(true)
                    .build()
                    .expect("static")
            })
            .collect()
    });
    patterns.iter().any(|re| re.is_match(text.trim()))
}

/// Deterministic: findings ordered by scenario index, then by code in the
/// order BROAD_SCENARIO, NO_ASSERTION, VACUOUS_ASSERTION.
pub fn lint(spec: &FeatureSpec, config: &LintConfig) -> Vec<LintFinding> {
    let mut findings = Vec::new();
    for (idx, scenario) in spec.scenarios.iter().enumerate() {
        if scenario.steps.len() > config.broad_scenario_threshold {
            findings.push(LintFinding {
                severity: LintSeverity::Warning,
                code: LintCode::BroadScenario,
                scenario: idx,
                message: format!(
                    "scenario {:?} has {} steps (threshold {})",
                    scenario.title,
                    scenario.steps.len(),
                    config.broad_scenario_threshold
                ),
            });
        }
        let assertions: Vec<&Step> = scenario
            .steps
            .iter()
            .filter(|s| s.resolved_role == StepRole::Assertion)
            .collect();
        if assertions.is_empty() {
            findings.push(LintFinding {
                severity: LintSeverity::Error,
                code: LintCode::NoAssertion,
                scenario: idx,
                message: format!("scenario {:?} has no assertion step", scenario.title),
            });
        }
        for step in assertions {
            if is_vacuous(&step.text) {
                findings.push(LintFinding {
                    severity: LintSeverity::Warning,
                    code: LintCode::VacuousAssertion,
                    scenario: idx,
                    message: format!("assertion {:?} is trivially true", step.text),
                });
            }
        }
    }
    findings
}
