//! Quantitative results over campaign outcomes: fix rates, rescue rates,
//! per-project tables, per-role cost breakdowns, and report rendering.
//!
//! Rates keep their exact numerator/denominator and round only at
//! display time, half-up over integers, so a 93.75 prints as 93.8 and
//! no float drift can move a boundary case. Project rows display at one
//! decimal and the grand total at two. Empty denominators are
//! [`Rate::Undefined`], never zero and never a crash.
//!
//! A degraded rescue (a fix produced under unverified spec text) is
//! counted separately and excluded from the headline rescue numerator:
//! it is a success of intent retention, not of verified guidance.

use serde::{Deserialize, Serialize};

use crate::agents::{AgentRole, CostRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub defect_id: String,
    pub project: String,
    pub blind_correct: bool,
    pub enlightened_attempted: bool,
    pub enlightened_correct: bool,
    /// Correct fix from a degraded session (spec text carried into the
    /// prompt without ever validating).
    #[serde(default)]
    pub degraded_rescue: bool,
}

impl OutcomeRecord {
    pub fn check(&self) -> Result<(), String> {
        if self.defect_id.is_empty() {
            return Err("empty defect_id".to_string());
        }
        if self.project.is_empty() {
            return Err(format!("{}: empty project", self.defect_id));
        }
        if self.enlightened_correct && !self.enlightened_attempted {
            return Err(format!(
                "{}: enlightened_correct without enlightened_attempted",
                self.defect_id
            ));
        }
        if self.enlightened_attempted && self.blind_correct {
            return Err(format!(
                "{}: enlightened attempt on a defect the blind run already fixed",
                self.defect_id
            ));
        }
        if self.degraded_rescue && (!self.enlightened_attempted || self.enlightened_correct) {
            return Err(format!(
                "{}: degraded_rescue must ride an attempted, non-headline enlightened session",
                self.defect_id
            ));
        }
        Ok(())
    }
}

/// One record per line. Errors carry 1-based line numbers.
pub fn load_outcomes_jsonl(text: &str) -> Result<Vec<OutcomeRecord>, String> {
    let mut records = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: OutcomeRecord =
            serde_json::from_str(line).map_err(|e| format!("line {}: {e}", index + 1))?;
        record
            .check()
            .map_err(|e| format!("line {}: {e}", index + 1))?;
        if !seen.insert(record.defect_id.clone()) {
            return Err(format!(
                "line {}: duplicate defect_id {}",
                index + 1,
                record.defect_id
            ));
        }
        records.push(record);
    }
    Ok(records)
}

// ---- rates ----

/// Exact rational rate; rounding happens only in [`RateValue::display`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateValue {
    pub numerator: u64,
    pub denominator: u64,
}

impl RateValue {
    pub fn percent(&self) -> f64 {
        100.0 * self.numerator as f64 / self.denominator as f64
    }

    /// Percentage with `decimals` places, rounded half-up over integers.
    pub fn display(&self, decimals: u32) -> String {
        let scale = 10u128.pow(decimals);
        let scaled = self.numerator as u128 * 100 * scale;
        let denom = self.denominator as u128;
        let mut q = scaled / denom;
        if 2 * (scaled % denom) >= denom {
            q += 1;
        }
        if decimals == 0 {
            q.to_string()
        } else {
            format!(
                "{}.{:0width$}",
                q / scale,
                q % scale,
                width = decimals as usize
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Rate {
    Defined(RateValue),
    Undefined,
}

impl Rate {
    pub fn display(&self, decimals: u32) -> String {
        match self {
            Rate::Defined(v) => format!("{}%", v.display(decimals)),
            Rate::Undefined => "n/a".to_string(),
        }
    }

    pub fn value(&self) -> Option<RateValue> {
        match self {
            Rate::Defined(v) => Some(*v),
            Rate::Undefined => None,
        }
    }
}

pub fn fix_rate(correct: u64, total: u64) -> Rate {
    if total == 0 {
        Rate::Undefined
    } else {
        Rate::Defined(RateValue {
            numerator: correct,
            denominator: total,
        })
    }
}

/// Rescues over blind failures. The numerator counts only verified
/// enlightened fixes; degraded rescues stay out.
pub fn rescue_rate(records: &[OutcomeRecord]) -> Rate {
    let failures = records.iter().filter(|r| !r.blind_correct).count() as u64;
    let rescues = records
        .iter()
        .filter(|r| r.enlightened_correct && !r.blind_correct)
        .count() as u64;
    fix_rate(rescues, failures)
}

pub fn degraded_rescues(records: &[OutcomeRecord]) -> u64 {
    records.iter().filter(|r| r.degraded_rescue).count() as u64
}

// ---- project table ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectRow {
    pub project: String,
    pub bugs: u64,
    pub blind_success: u64,
    pub blind_fail: u64,
    pub rescued: u64,
    pub total: u64,
    pub rate: Rate,
}

impl ProjectRow {
    fn build(project: String, records: &[&OutcomeRecord]) -> ProjectRow {
        let bugs = records.len() as u64;
        let blind_success = records.iter().filter(|r| r.blind_correct).count() as u64;
        let rescued = records.iter().filter(|r| r.enlightened_correct).count() as u64;
        let total = blind_success + rescued;
        ProjectRow {
            project,
            bugs,
            blind_success,
            blind_fail: bugs - blind_success,
            rescued,
            total,
            rate: fix_rate(total, bugs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectTable {
    pub rows: Vec<ProjectRow>,
    pub total: ProjectRow,
}

/// Rows grouped by project in first-appearance order, plus a Total row
/// summing every column.
pub fn project_table(records: &[OutcomeRecord]) -> ProjectTable {
    let mut order: Vec<&str> = Vec::new();
    for record in records {
        if !order.contains(&record.project.as_str()) {
            order.push(&record.project);
        }
    }
    let rows: Vec<ProjectRow> = order
        .iter()
        .map(|project| {
            let members: Vec<&OutcomeRecord> =
                records.iter().filter(|r| r.project == *project).collect();
            ProjectRow::build(project.to_string(), &members)
        })
        .collect();
    let all: Vec<&OutcomeRecord> = records.iter().collect();
    let total = ProjectRow::build("Total".to_string(), &all);
    ProjectTable { rows, total }
}

// ---- cost breakdown ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleCost {
    pub role: AgentRole,
    pub avg_duration_s: f64,
    pub avg_turns: f64,
    pub avg_tokens: f64,
    /// Share of all tokens spent by this role, in [0, 1].
    pub cost_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Architect, Engineer, Fixer order; roles with no spend are omitted.
    pub roles: Vec<RoleCost>,
    /// Totals are sums of the per-role averages (cost of one average
    /// end-to-end session).
    pub total_avg_duration_s: f64,
    pub total_avg_turns: f64,
    pub total_avg_tokens: f64,
}

const ROLE_ORDER: [AgentRole; 3] = [AgentRole::Architect, AgentRole::Engineer, AgentRole::Fixer];

fn assemble_breakdown(averages: Vec<(AgentRole, f64, f64, f64)>) -> Option<CostBreakdown> {
    if averages.is_empty() {
        return None;
    }
    let grand_tokens: f64 = averages.iter().map(|(_, _, _, t)| t).sum();
    let roles = averages
        .iter()
        .map(|(role, duration, turns, tokens)| RoleCost {
            role: *role,
            avg_duration_s: *duration,
            avg_turns: *turns,
            avg_tokens: *tokens,
            cost_ratio: if grand_tokens > 0.0 {
                tokens / grand_tokens
            } else {
                0.0
            },
        })
        .collect();
    Some(CostBreakdown {
        roles,
        total_avg_duration_s: averages.iter().map(|(_, d, _, _)| d).sum(),
        total_avg_turns: averages.iter().map(|(_, _, t, _)| t).sum(),
        total_avg_tokens: grand_tokens,
    })
}

/// Per-role averages over `sessions` sessions. `records` holds one
/// CostRecord per (session, role); roles absent from every session are
/// omitted. None when there is nothing to aggregate.
pub fn cost_breakdown(records: &[CostRecord], sessions: u64) -> Option<CostBreakdown> {
    if records.is_empty() || sessions == 0 {
        return None;
    }
    let mut averages = Vec::new();
    for role in ROLE_ORDER {
        let mine: Vec<&CostRecord> = records.iter().filter(|r| r.role == role).collect();
        if mine.is_empty() {
            continue;
        }
        let n = sessions as f64;
        averages.push((
            role,
            mine.iter().map(|r| r.duration_s).sum::<f64>() / n,
            mine.iter().map(|r| r.turns as f64).sum::<f64>() / n,
            mine.iter().map(|r| r.tokens as f64).sum::<f64>() / n,
        ));
    }
    assemble_breakdown(averages)
}

#[derive(Deserialize)]
struct CostsFileRole {
    role: AgentRole,
    avg_duration_s: f64,
    avg_turns: f64,
    avg_tokens: f64,
}

#[derive(Deserialize)]
struct CostsFile {
    sessions: u64,
    roles: Vec<CostsFileRole>,
}

/// Loads a costs document of declared per-role averages:
/// `{"sessions": N, "roles": [{"role", "avg_duration_s", "avg_turns", "avg_tokens"}]}`.
pub fn load_costs_json(text: &str) -> Result<(CostBreakdown, u64), String> {
    let file: CostsFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if file.sessions == 0 {
        return Err("sessions must be positive".to_string());
    }
    let averages: Vec<(AgentRole, f64, f64, f64)> = file
        .roles
        .iter()
        .map(|r| {
            if r.avg_duration_s < 0.0 || r.avg_turns < 0.0 || r.avg_tokens < 0.0 {
                Err(format!("{}: negative average", r.role))
            } else {
                Ok((r.role, r.avg_duration_s, r.avg_turns, r.avg_tokens))
            }
        })
        .collect::<Result<_, _>>()?;
    assemble_breakdown(averages)
        .map(|b| (b, file.sessions))
        .ok_or_else(|| "no roles in costs document".to_string())
}

// ---- rendering ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

fn thousands(value: f64) -> String {
    let whole = value.round() as i64;
    let digits = whole.abs().to_string();
    let mut grouped = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            grouped.push(',');
        }
        grouped.push(c);
    }
    if whole < 0 {
        format!("-{grouped}")
    } else {
        grouped
    }
}

fn ratio_display(ratio: f64) -> String {
    format!("{:.1}%", ratio * 100.0)
}

fn row_cells(row: &ProjectRow, rate_decimals: u32) -> Vec<String> {
    vec![
        row.project.clone(),
        row.bugs.to_string(),
        row.blind_success.to_string(),
        row.blind_fail.to_string(),
        row.rescued.to_string(),
        row.total.to_string(),
        row.rate.display(rate_decimals),
    ]
}

/// Deterministic report over outcome records plus an optional cost
/// breakdown. Identical inputs render byte-identical documents; project
/// rows show rates at one decimal, the total row at two.
pub fn render_report(
    records: &[OutcomeRecord],
    costs: Option<&CostBreakdown>,
    format: ReportFormat,
) -> String {
    let table = project_table(records);
    let rescue = rescue_rate(records);
    let degraded = degraded_rescues(records);

    let project_header = [
        "Project",
        "Bugs",
        "Blind Succ.",
        "Blind Fail",
        "Rescued",
        "Total",
        "Rate",
    ];
    let cost_header = [
        "Role",
        "Avg Duration (s)",
        "Avg Turns",
        "Avg Tokens",
        "Cost Ratio",
    ];

    let mut project_lines: Vec<Vec<String>> = Vec::new();
    for row in &table.rows {
        project_lines.push(row_cells(row, 1));
    }
    project_lines.push(row_cells(&table.total, 2));

    let rescue_line = match rescue {
        Rate::Defined(v) => format!(
            "Rescue rate: {}/{} = {}",
            v.numerator,
            v.denominator,
            rescue.display(1)
        ),
        Rate::Undefined => "Rescue rate: n/a (no blind failures)".to_string(),
    };
    let degraded_line =
        format!("Degraded rescues (unverified spec text, excluded from totals): {degraded}");

    let mut cost_lines: Vec<Vec<String>> = Vec::new();
    if let Some(breakdown) = costs {
        for role in &breakdown.roles {
            cost_lines.push(vec![
                role.role.to_string(),
                format!("{:.2}", role.avg_duration_s),
                format!("{:.2}", role.avg_turns),
                thousands(role.avg_tokens),
                ratio_display(role.cost_ratio),
            ]);
        }
        cost_lines.push(vec![
            "Total".to_string(),
            format!("{:.2}", breakdown.total_avg_duration_s),
            format!("{:.2}", breakdown.total_avg_turns),
            thousands(breakdown.total_avg_tokens),
            "100.0%".to_string(),
        ]);
    }

    match format {
        ReportFormat::Markdown => {
            let mut out = String::from("# Repair campaign report\n\n");
            if records.is_empty() {
                out.push_str("No sessions.\n");
                return out;
            }
            out.push_str("## Project results\n\n");
            out.push_str(&markdown_table(&project_header, &project_lines));
            out.push('\n');
            out.push_str(&rescue_line);
            out.push('\n');
            out.push_str(&degraded_line);
            out.push('\n');
            if !cost_lines.is_empty() {
                out.push_str("\n## Cost breakdown\n\n");
                out.push_str(&markdown_table(&cost_header, &cost_lines));
            }
            out
        }
        ReportFormat::Csv => {
            let mut out = String::new();
            if records.is_empty() {
                out.push_str("no sessions\n");
                return out;
            }
            out.push_str(&csv_table(&project_header, &project_lines));
            out.push_str(&format!("\n{rescue_line}\n{degraded_line}\n"));
            if !cost_lines.is_empty() {
                out.push('\n');
                out.push_str(&csv_table(&cost_header, &cost_lines));
            }
            out
        }
    }
}

fn markdown_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for row in rows {
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    out
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let quote = |cell: &str| {
        if cell.contains(',') || cell.contains('"') {
            format!("\"{}\"", cell.replace('"', "\"\""))
        } else {
            cell.to_string()
        }
    };
    let mut out = String::new();
    out.push_str(&format!(
        "{}\n",
        header
            .iter()
            .map(|c| quote(c))
            .collect::<Vec<_>>()
            .join(",")
    ));
    for row in rows {
        out.push_str(&format!(
            "{}\n",
            row.iter().map(|c| quote(c)).collect::<Vec<_>>().join(",")
        ));
    }
    out
}
