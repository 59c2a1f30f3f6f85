//! Parser/renderer agreement: generated specs survive a render/parse
//! round trip, parsing is total over arbitrary input, and a hand-written
//! feature with wrapped lines parses to its known shape.

use proptest::prelude::*;
use spec_anvil_core::gherkin::{
    self, lint, parse, render, resolve_role, FeatureSpec, LintConfig, LintSeverity, Scenario, Step,
    StepKeyword, StepRole,
};

const WRAPPED_FEATURE: &str = include_str!("fixtures/verification_retry.feature");

#[test]
fn wrapped_feature_parses_to_known_shape() {
    let spec = parse(WRAPPED_FEATURE).expect("fixture parses");
    assert_eq!(spec.title, "VerificationOverTimeImpl should");
    assert!(spec.description.starts_with("not strictly depend on JUnit"));
    assert!(spec.description.contains("loading when JUnit is absent."));
    assert_eq!(spec.scenarios.len(), 2);

    let first = &spec.scenarios[0];
    assert_eq!(first.title, "Loading without JUnit");
    assert_eq!(first.steps.len(), 4);
    assert_eq!(
        first.steps[0].text,
        "a class loader that explicitly excludes \"junit\" packages"
    );
    assert_eq!(
        first.steps[3].text,
        "no \"NoClassDefFoundError\" should be thrown"
    );
    assert_eq!(first.steps[3].resolved_role, StepRole::Assertion);

    let second = &spec.scenarios[1];
    assert_eq!(second.title, "Retrying on assertion errors");
    assert_eq!(second.steps.len(), 5);
    let roles: Vec<StepRole> = second.steps.iter().map(|s| s.resolved_role).collect();
    use StepRole::*;
    assert_eq!(roles, vec![Context, Context, Action, Assertion, Assertion]);
    assert_eq!(
        second.steps[1].text,
        "the delegate throws an \"ArgumentsAreDifferent\" exception"
    );
    assert_eq!(
        second.steps[4].text,
        "verification should be retried until timeout expires"
    );
}

#[test]
fn wrapped_feature_has_no_error_findings() {
    let spec = parse(WRAPPED_FEATURE).unwrap();
    let findings = lint(&spec, &LintConfig::default());
    assert!(
        findings.iter().all(|f| f.severity != LintSeverity::Error),
        "unexpected error findings: {findings:?}"
    );
}

#[test]
fn wrapped_feature_round_trips_through_canonical_form() {
    let spec = parse(WRAPPED_FEATURE).unwrap();
    let reparsed = parse(&render(&spec)).unwrap();
    assert!(reparsed.structurally_equals(&spec));
}

#[test]
fn malformed_inputs_are_errors_not_crashes() {
    let malformed = [
        "",
        "   \n\n",
        "# only a comment",
        "Scenario: before any feature\n  Then x",
        "stray text\nFeature: f\n  Scenario: s\n    Then x",
        "Feature: f",
        "Feature: f\n  only description",
        "Feature: f\n  Scenario: empty",
        "Feature: f\n  Scenario: s\n    And leads\n    Then x",
        "Feature: f\n  Scenario: s\n    But leads\n    Then x",
        "Feature: f\n  Scenario: s\n    Then x\n  Scenario: s\n    Then y",
        "Feature: f\n  Scenario: s\n    Then x\nFeature: again",
        "Feature: f\n  Scenario: s\n    Granted nothing",
        "Feature: f\n  Scenario: s\n    Given\n    Then x",
        "Feature: f\n  Scenario: s\n    Given a\n    stray at step indent",
    ];
    for input in malformed {
        assert!(
            gherkin::parse(input).is_err(),
            "expected ParseError for {input:?}"
        );
    }
}

// ---- generators ----

fn word() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9]{0,7}"
}

fn phrase(max_words: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..=max_words).prop_map(|ws| ws.join(" "))
}

fn keyword_any() -> impl Strategy<Value = StepKeyword> {
    prop_oneof![
        Just(StepKeyword::Given),
        Just(StepKeyword::When),
        Just(StepKeyword::Then),
        Just(StepKeyword::And),
        Just(StepKeyword::But),
    ]
}

fn keyword_leading() -> impl Strategy<Value = StepKeyword> {
    prop_oneof![
        Just(StepKeyword::Given),
        Just(StepKeyword::When),
        Just(StepKeyword::Then)
    ]
}

fn scenario(index: usize) -> impl Strategy<Value = Scenario> {
    let steps = (
        keyword_leading(),
        phrase(6),
        prop::collection::vec((keyword_any(), phrase(6)), 0..6),
    );
    (phrase(4), steps).prop_map(move |(title, (kw0, text0, rest))| {
        let mut steps = Vec::new();
        let mut role = resolve_role(kw0, None);
        steps.push(Step {
            keyword: kw0,
            text: text0,
            resolved_role: role.unwrap(),
        });
        for (kw, text) in rest {
            role = resolve_role(kw, role);
            steps.push(Step {
                keyword: kw,
                text,
                resolved_role: role.unwrap(),
            });
        }
        Scenario {
            title: format!("{title} {index}"),
            steps,
        }
    })
}

fn feature_spec() -> impl Strategy<Value = FeatureSpec> {
    let scenarios = (1usize..5).prop_flat_map(|n| {
        let mut all = Vec::with_capacity(n);
        for i in 0..n {
            all.push(scenario(i));
        }
        all
    });
    (phrase(5), prop::collection::vec(phrase(8), 0..4), scenarios).prop_map(
        |(title, description, scenarios)| FeatureSpec {
            title,
            description: description.join("\n"),
            scenarios,
            source_span: None,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn generated_specs_round_trip(spec in feature_spec()) {
        let rendered = render(&spec);
        let reparsed = parse(&rendered).expect("canonical form parses");
        prop_assert!(reparsed.structurally_equals(&spec), "render:\n{rendered}");
        // Rendering is canonical: a second round trip is byte-stable.
        prop_assert_eq!(render(&reparsed), rendered);
    }

    #[test]
    fn parse_is_total_over_arbitrary_input(input in ".{0,400}") {
        let _ = parse(&input);
    }

    #[test]
    fn parse_is_total_over_keyword_soup(
        lines in prop::collection::vec(
            prop_oneof![
                Just("Feature: f".to_string()),
                Just("  Scenario: s".to_string()),
                Just("    Given x".to_string()),
                Just("    And y".to_string()),
                Just("      wrapped".to_string()),
                Just("    # comment".to_string()),
                Just("".to_string()),
                Just("    Whence z".to_string()),
            ],
            0..12
        )
    ) {
        let _ = parse(&lines.join("\n"));
    }
}
