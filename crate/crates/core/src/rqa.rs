//! Spec quality assurance: a candidate feature spec earns trust only by
//! discriminating the buggy tree from the fixed tree. The sandwich runs
//! the spec against both variants, negative side first.
//!
//! The contract is strict. A spec that passes on the buggy tree is too
//! weak to capture the defect; one that fails on the fixed tree asserts
//! the wrong behavior. Infrastructure breakage (setup errors, unbindable
//! steps, checkout failures) is kept apart from both so a flaky command
//! is never promoted into a judgment about the spec.
//!
//! [`rqa_loop`] drives regeneration: any rejection discards BOTH the spec
//! and its bindings and asks for fresh ones. A harness error is tolerated
//! once per side without consuming an attempt; a second one on the same
//! side aborts, because repeating it would burn the attempt budget on a
//! broken environment.

use serde::{Deserialize, Serialize};

use crate::gherkin::FeatureSpec;
use crate::harness::{self, DefectRecord, Variant, WorkspacePurpose};
use crate::runtime::{self, FeatureRunReport, SpecOutcome, StepBindingSet, StepStatus};

/// Which half of the sandwich a verdict refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerificationSide {
    Buggy,
    Fixed,
}

impl std::fmt::Display for VerificationSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VerificationSide::Buggy => "buggy",
            VerificationSide::Fixed => "fixed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    /// Fails on buggy, passes on fixed: the spec captures the defect.
    Validated,
    /// Passed on the buggy tree, so it cannot be trusted to detect the bug.
    SpecTooWeak,
    /// Failed on the fixed tree, so it asserts something the real fix
    /// does not satisfy.
    SpecMisaligned,
    /// The run broke before producing a behavioral signal.
    HarnessError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationVerdict {
    pub kind: VerdictKind,
    /// Side the verdict was decided on. `None` only for [`VerdictKind::Validated`],
    /// which needs both sides.
    pub side: Option<VerificationSide>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RQAResult {
    pub verdict: VerificationVerdict,
    /// Missing when the spec never ran there (bind failure, checkout failure).
    pub buggy_report: Option<FeatureRunReport>,
    /// Missing whenever the negative side already decided the verdict.
    pub fixed_report: Option<FeatureRunReport>,
    /// Generation cycle this result belongs to, 1-based; 0 for a
    /// standalone verification outside [`rqa_loop`].
    pub attempt_index: usize,
}

impl RQAResult {
    fn standalone(verdict: VerificationVerdict) -> RQAResult {
        RQAResult {
            verdict,
            buggy_report: None,
            fixed_report: None,
            attempt_index: 0,
        }
    }
}

fn validated_verdict() -> VerificationVerdict {
    VerificationVerdict {
        kind: VerdictKind::Validated,
        side: None,
        detail: "fails on buggy, passes on fixed".to_string(),
    }
}

fn too_weak_verdict() -> VerificationVerdict {
    VerificationVerdict {
        kind: VerdictKind::SpecTooWeak,
        side: Some(VerificationSide::Buggy),
        detail: "spec passed on the buggy tree".to_string(),
    }
}

fn misaligned_verdict() -> VerificationVerdict {
    VerificationVerdict {
        kind: VerdictKind::SpecMisaligned,
        side: Some(VerificationSide::Fixed),
        detail: "spec failed on the fixed tree".to_string(),
    }
}

fn harness_verdict(side: VerificationSide, detail: String) -> VerificationVerdict {
    VerificationVerdict {
        kind: VerdictKind::HarnessError,
        side: Some(side),
        detail,
    }
}

/// Pure verdict table over both run outcomes. Total: every combination of
/// the three outcomes on each side maps to exactly one verdict. The buggy
/// side dominates, mirroring the execution order of [`sandwich_verify`];
/// a fixed-side value passed alongside a decisive buggy-side value is
/// ignored rather than inspected.
pub fn classify(buggy: SpecOutcome, fixed: SpecOutcome) -> VerificationVerdict {
    match buggy {
        SpecOutcome::Error => harness_verdict(
            VerificationSide::Buggy,
            "run broke on the buggy tree".to_string(),
        ),
        SpecOutcome::AllPass => too_weak_verdict(),
        SpecOutcome::AnyAssertionFail => match fixed {
            SpecOutcome::Error => harness_verdict(
                VerificationSide::Fixed,
                "run broke on the fixed tree".to_string(),
            ),
            SpecOutcome::AnyAssertionFail => misaligned_verdict(),
            SpecOutcome::AllPass => validated_verdict(),
        },
    }
}

/// First broken scenario in a report, summarized for a harness verdict.
fn breakage_detail(report: &FeatureRunReport) -> String {
    for scenario in &report.scenario_results {
        if scenario.status == StepStatus::SetupError {
            let log = scenario.step_logs.last();
            let step = scenario.failed_step_index.unwrap_or(0);
            let what = match log {
                Some(l) if l.timed_out => format!("{} timed out", l.command),
                Some(l) => format!("{} exited {:?}", l.command, l.exit_code),
                None => "no step ran".to_string(),
            };
            return format!("scenario {:?} step {step}: {what}", scenario.scenario_title);
        }
    }
    "setup breakage".to_string()
}

fn run_side(
    defect: &DefectRecord,
    spec: &FeatureSpec,
    bindings: &StepBindingSet,
    side: VerificationSide,
) -> Result<FeatureRunReport, VerificationVerdict> {
    let bound = runtime::bind(spec, bindings)
        .map_err(|e| harness_verdict(VerificationSide::Buggy, e.to_string()))?;
    let (variant, purpose) = match side {
        VerificationSide::Buggy => (Variant::Buggy, WorkspacePurpose::NegativeVerification),
        VerificationSide::Fixed => (Variant::Fixed, WorkspacePurpose::PositiveVerification),
    };
    let workspace = harness::checkout(defect, variant, purpose)
        .map_err(|e| harness_verdict(side, format!("checkout failed: {e}")))?;
    Ok(runtime::execute(&bound, &workspace))
}

/// Runs the spec against the buggy tree and, only if it failed there,
/// against the fixed tree. The fixed tree is never touched when the
/// negative side already decides the verdict.
pub fn sandwich_verify(
    defect: &DefectRecord,
    spec: &FeatureSpec,
    bindings: &StepBindingSet,
) -> RQAResult {
    let buggy_report = match run_side(defect, spec, bindings, VerificationSide::Buggy) {
        Ok(report) => report,
        Err(verdict) => return RQAResult::standalone(verdict),
    };
    let verdict = match runtime::outcome(&buggy_report) {
        SpecOutcome::Error => {
            harness_verdict(VerificationSide::Buggy, breakage_detail(&buggy_report))
        }
        SpecOutcome::AllPass => too_weak_verdict(),
        SpecOutcome::AnyAssertionFail => {
            let fixed_report = match run_side(defect, spec, bindings, VerificationSide::Fixed) {
                Ok(report) => report,
                Err(verdict) => {
                    return RQAResult {
                        verdict,
                        buggy_report: Some(buggy_report),
                        fixed_report: None,
                        attempt_index: 0,
                    }
                }
            };
            let verdict = match runtime::outcome(&fixed_report) {
                SpecOutcome::Error => {
                    harness_verdict(VerificationSide::Fixed, breakage_detail(&fixed_report))
                }
                SpecOutcome::AnyAssertionFail => misaligned_verdict(),
                SpecOutcome::AllPass => validated_verdict(),
            };
            return RQAResult {
                verdict,
                buggy_report: Some(buggy_report),
                fixed_report: Some(fixed_report),
                attempt_index: 0,
            };
        }
    };
    RQAResult {
        verdict,
        buggy_report: Some(buggy_report),
        fixed_report: None,
        attempt_index: 0,
    }
}

/// Negative side alone, for settings where no fixed tree exists. Validated
/// here means only "the spec detects the defect"; it says nothing about
/// agreement with the real fix.
pub fn negative_only_verify(
    defect: &DefectRecord,
    spec: &FeatureSpec,
    bindings: &StepBindingSet,
) -> RQAResult {
    let buggy_report = match run_side(defect, spec, bindings, VerificationSide::Buggy) {
        Ok(report) => report,
        Err(verdict) => return RQAResult::standalone(verdict),
    };
    let verdict = match runtime::outcome(&buggy_report) {
        SpecOutcome::Error => {
            harness_verdict(VerificationSide::Buggy, breakage_detail(&buggy_report))
        }
        SpecOutcome::AllPass => too_weak_verdict(),
        SpecOutcome::AnyAssertionFail => VerificationVerdict {
            kind: VerdictKind::Validated,
            side: Some(VerificationSide::Buggy),
            detail: "fails on buggy (negative side only)".to_string(),
        },
    };
    RQAResult {
        verdict,
        buggy_report: Some(buggy_report),
        fixed_report: None,
        attempt_index: 0,
    }
}

// ---- regeneration loop ----

#[derive(Debug, Clone, Copy)]
pub struct RqaConfig {
    /// Rejections (too weak / misaligned) allowed before giving up.
    pub max_attempts: usize,
}

impl Default for RqaConfig {
    fn default() -> Self {
        RqaConfig { max_attempts: 3 }
    }
}

#[derive(Debug)]
pub enum RqaOutcome {
    Validated {
        spec: FeatureSpec,
        bindings: StepBindingSet,
        history: Vec<RQAResult>,
    },
    Exhausted {
        history: Vec<RQAResult>,
    },
}

impl RqaOutcome {
    pub fn history(&self) -> &[RQAResult] {
        match self {
            RqaOutcome::Validated { history, .. } => history,
            RqaOutcome::Exhausted { history } => history,
        }
    }
}

/// Generates (spec, bindings) pairs until one validates or the budget
/// runs out. Both generators see the cycle number and the rejection
/// history so they can steer away from what already failed. A generator
/// error counts as a buggy-side harness error.
///
/// Budget rules: SpecTooWeak and SpecMisaligned each consume one of
/// `max_attempts`; the first HarnessError on each side consumes nothing;
/// the second on the same side ends the loop immediately.
pub fn rqa_loop<S, B>(
    defect: &DefectRecord,
    config: &RqaConfig,
    mut make_spec: S,
    mut make_bindings: B,
) -> RqaOutcome
where
    S: FnMut(usize, &[RQAResult]) -> Result<FeatureSpec, String>,
    B: FnMut(usize, &FeatureSpec, &[RQAResult]) -> Result<StepBindingSet, String>,
{
    let mut history: Vec<RQAResult> = Vec::new();
    let mut rejections = 0usize;
    let mut harness_errors_buggy = 0usize;
    let mut harness_errors_fixed = 0usize;

    for cycle in 1.. {
        let generated = make_spec(cycle, &history).and_then(|spec| {
            let bindings = make_bindings(cycle, &spec, &history)?;
            Ok((spec, bindings))
        });
        let (result, validated) = match generated {
            Err(detail) => (
                RQAResult::standalone(harness_verdict(VerificationSide::Buggy, detail)),
                None,
            ),
            Ok((spec, bindings)) => {
                let result = sandwich_verify(defect, &spec, &bindings);
                let validated =
                    (result.verdict.kind == VerdictKind::Validated).then_some((spec, bindings));
                (result, validated)
            }
        };
        let mut result = result;
        result.attempt_index = cycle;
        let kind = result.verdict.kind;
        let side = result.verdict.side;
        history.push(result);

        if let Some((spec, bindings)) = validated {
            return RqaOutcome::Validated {
                spec,
                bindings,
                history,
            };
        }
        match kind {
            VerdictKind::HarnessError => {
                let count = match side {
                    Some(VerificationSide::Fixed) => &mut harness_errors_fixed,
                    _ => &mut harness_errors_buggy,
                };
                *count += 1;
                if *count >= 2 {
                    return RqaOutcome::Exhausted { history };
                }
            }
            VerdictKind::SpecTooWeak | VerdictKind::SpecMisaligned => {
                rejections += 1;
                if rejections >= config.max_attempts {
                    return RqaOutcome::Exhausted { history };
                }
            }
            VerdictKind::Validated => unreachable!("handled above"),
        }
    }
    unreachable!("loop exits via return")
}
