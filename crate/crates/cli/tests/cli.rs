//! End-to-end tests of the spec-anvil binary: every subcommand driven
//! through a real process, checking stdout, artifacts on disk, and the
//! exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
        .canonicalize()
        .unwrap()
}

fn spec_anvil(config: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spec-anvil"));
    if let Some(config) = config {
        cmd.arg("--config").arg(config);
    }
    cmd.args(args);
    cmd.output().expect("binary runs")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Isolated working set: a config pointing at the bundled fixtures with a
/// private run directory, so parallel tests never share state.
struct Setup {
    _dir: TempDir,
    config: PathBuf,
    run_dir: PathBuf,
}

fn setup() -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("runs");
    let config = dir.path().join("config.toml");
    let corpus = repo_path("fixtures/toy-corpus/corpus.json");
    let fixtures = repo_path("fixtures/agent-fixtures");
    fs::write(
        &config,
        format!(
            "corpus_path = \"{}\"\nrun_dir = \"{}\"\n\n\
             [backends.architect]\nkind = \"scripted\"\nfixtures_dir = \"{}\"\n\n\
             [backends.engineer]\nkind = \"scripted\"\nfixtures_dir = \"{}\"\n\n\
             [backends.fixer]\nkind = \"scripted\"\nfixtures_dir = \"{}\"\n",
            corpus.display(),
            run_dir.display(),
            fixtures.display(),
            fixtures.display(),
            fixtures.display()
        ),
    )
    .unwrap();
    Setup {
        _dir: dir,
        config,
        run_dir,
    }
}

// ---- corpus ----

#[test]
fn corpus_validate_accepts_the_bundled_corpus() {
    let corpus = repo_path("fixtures/toy-corpus/corpus.json");
    let out = spec_anvil(None, &["corpus", "validate", corpus.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(
        stdout(&out).contains("corpus ok: 10 defect(s)"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn corpus_validate_rejects_an_unparseable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("corpus.json");
    fs::write(&manifest, "{\"defects\": [").unwrap();
    let out = spec_anvil(None, &["corpus", "validate", manifest.to_str().unwrap()]);
    assert_eq!(code(&out), 50, "{}", stderr(&out));
}

#[test]
fn corpus_validate_reports_findings_for_missing_trees() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("corpus.json");
    fs::write(
        &manifest,
        r#"{"defects": [{
            "id": "ghost-1",
            "project": "ghost",
            "buggy_dir": "ghost-1/buggy",
            "fixed_dir": "ghost-1/fixed",
            "failing_tests": ["tests/run_tests.py::test_x"],
            "modified_files": ["ghost.py"],
            "test": {"cmd": "python3 tests/run_tests.py", "timeout_s": 10}
        }]}"#,
    )
    .unwrap();
    let out = spec_anvil(None, &["corpus", "validate", manifest.to_str().unwrap()]);
    assert_eq!(code(&out), 50, "{}", stderr(&out));
    assert!(stdout(&out).contains("ghost-1"), "{}", stdout(&out));
}

// ---- run ----

#[test]
fn run_blind_correct_fix_exits_zero_and_writes_artifacts() {
    let setup = setup();
    let out = spec_anvil(Some(&setup.config), &["run", "calc-1", "--mode", "blind"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("CorrectFix"), "{}", stdout(&out));
    let dir = setup.run_dir.join("calc-1-blind");
    assert!(dir.join("session.json").is_file());
    assert!(dir.join("patch.json").is_file());
    assert!(
        !dir.join("feature.feature").exists(),
        "blind sessions carry no spec"
    );
}

#[test]
fn run_blind_overfit_patch_exits_plausible_only() {
    let setup = setup();
    let out = spec_anvil(Some(&setup.config), &["run", "calc-5", "--mode", "blind"]);
    assert_eq!(code(&out), 20, "{}", stderr(&out));
    assert!(stdout(&out).contains("PlausibleOnly"), "{}", stdout(&out));
}

#[test]
fn run_blind_wrong_patch_exits_no_fix() {
    let setup = setup();
    let out = spec_anvil(Some(&setup.config), &["run", "calc-4", "--mode", "blind"]);
    assert_eq!(code(&out), 21, "{}", stderr(&out));
    assert!(stdout(&out).contains("NoFix"), "{}", stdout(&out));
}

#[test]
fn run_unknown_defect_is_a_usage_error() {
    let setup = setup();
    let out = spec_anvil(Some(&setup.config), &["run", "nope", "--mode", "blind"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains("unknown defect"), "{}", stderr(&out));
}

#[test]
fn run_enlightened_writes_spec_and_bindings_artifacts() {
    let setup = setup();
    let out = spec_anvil(
        Some(&setup.config),
        &["run", "calc-4", "--mode", "enlightened"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let dir = setup.run_dir.join("calc-4-enlightened");
    assert!(dir.join("session.json").is_file());
    assert!(dir.join("feature.feature").is_file());
    assert!(dir.join("bindings.json").is_file());
    assert!(dir.join("patch.json").is_file());
    let feature = fs::read_to_string(dir.join("feature.feature")).unwrap();
    assert!(feature.starts_with("Feature:"), "{feature}");
}

// ---- campaign ----

#[test]
fn campaign_outcomes_are_identical_across_worker_counts() {
    let serial = setup();
    let parallel = setup();
    let a = spec_anvil(
        Some(&serial.config),
        &[
            "campaign",
            "--composite",
            "--workers",
            "1",
            "--id",
            "serial",
        ],
    );
    let b = spec_anvil(
        Some(&parallel.config),
        &[
            "campaign",
            "--composite",
            "--workers",
            "4",
            "--id",
            "parallel",
        ],
    );
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0, "{}", stderr(&b));
    let outcomes_a = fs::read(serial.run_dir.join("serial/outcomes.jsonl")).unwrap();
    let outcomes_b = fs::read(parallel.run_dir.join("parallel/outcomes.jsonl")).unwrap();
    assert_eq!(outcomes_a, outcomes_b);
    let report_a = fs::read(serial.run_dir.join("serial/report.md")).unwrap();
    let report_b = fs::read(parallel.run_dir.join("parallel/report.md")).unwrap();
    assert_eq!(report_a, report_b);
}

#[test]
fn campaign_report_shows_the_composite_totals() {
    let setup = setup();
    let out = spec_anvil(
        Some(&setup.config),
        &["campaign", "--composite", "--id", "totals"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("| Total | 10 | 6 | 4 | 3 | 9 | 90.00% |"),
        "{text}"
    );
    assert!(text.contains("Rescue rate: 3/4 = 75.0%"), "{text}");
}

#[test]
fn campaign_resume_reuses_logged_sessions() {
    let setup = setup();
    let first = spec_anvil(
        Some(&setup.config),
        &["campaign", "--composite", "--id", "resume"],
    );
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let dir = setup.run_dir.join("resume");
    let log_after_first = fs::read_to_string(dir.join("sessions.jsonl")).unwrap();
    assert_eq!(log_after_first.lines().count(), 14);
    let outcomes_first = fs::read(dir.join("outcomes.jsonl")).unwrap();

    let second = spec_anvil(
        Some(&setup.config),
        &["campaign", "--composite", "--id", "resume"],
    );
    assert_eq!(code(&second), 0, "{}", stderr(&second));
    assert!(
        stdout(&second).contains("0 run, 14 reused"),
        "{}",
        stdout(&second)
    );
    assert_eq!(
        fs::read_to_string(dir.join("sessions.jsonl")).unwrap(),
        log_after_first
    );

    // Cut the log short; only the lost sessions should run again.
    let kept: Vec<&str> = log_after_first.lines().take(3).collect();
    fs::write(dir.join("sessions.jsonl"), format!("{}\n", kept.join("\n"))).unwrap();
    let third = spec_anvil(
        Some(&setup.config),
        &["campaign", "--composite", "--id", "resume"],
    );
    assert_eq!(code(&third), 0, "{}", stderr(&third));
    assert!(
        stdout(&third).contains("11 run, 3 reused"),
        "{}",
        stdout(&third)
    );
    let log_after_third = fs::read_to_string(dir.join("sessions.jsonl")).unwrap();
    assert_eq!(log_after_third.lines().count(), 14);
    for line in &kept {
        assert!(
            log_after_third.contains(line),
            "kept lines survive verbatim"
        );
    }
    assert_eq!(
        fs::read(dir.join("outcomes.jsonl")).unwrap(),
        outcomes_first
    );
}

#[test]
fn campaign_without_composite_runs_blind_only() {
    let setup = setup();
    let out = spec_anvil(Some(&setup.config), &["campaign", "--id", "blind-only"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let log = fs::read_to_string(setup.run_dir.join("blind-only/sessions.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 10);
    assert!(!log.contains("\"mode\":\"Enlightened\""), "{log}");
}

// ---- verify-spec ----

#[test]
fn verify_spec_validated_exits_zero() {
    let setup = setup();
    let run = spec_anvil(
        Some(&setup.config),
        &["run", "calc-4", "--mode", "enlightened"],
    );
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let dir = setup.run_dir.join("calc-4-enlightened");
    let feature = dir.join("feature.feature");
    let bindings = dir.join("bindings.json");

    let out = spec_anvil(
        Some(&setup.config),
        &[
            "verify-spec",
            "calc-4",
            feature.to_str().unwrap(),
            bindings.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("Validated"), "{}", stdout(&out));
    assert!(stdout(&out).contains("fixed tree:"), "{}", stdout(&out));

    let negative = spec_anvil(
        Some(&setup.config),
        &[
            "verify-spec",
            "calc-4",
            feature.to_str().unwrap(),
            bindings.to_str().unwrap(),
            "--negative-only",
        ],
    );
    assert_eq!(code(&negative), 0, "{}", stderr(&negative));
    assert!(
        stdout(&negative).contains("negative side only"),
        "{}",
        stdout(&negative)
    );
    assert!(
        !stdout(&negative).contains("fixed tree:"),
        "{}",
        stdout(&negative)
    );
}

#[test]
fn verify_spec_weak_spec_exits_30() {
    let setup = setup();
    let dir = tempfile::tempdir().unwrap();
    let feature = dir.path().join("vacuous.feature");
    fs::write(
        &feature,
        "Feature: calc imports\n  Scenario: import only\n    Given the calc module imports\n",
    )
    .unwrap();
    let bindings = dir.path().join("bindings.json");
    fs::write(
        &bindings,
        r#"{"bindings": [{"pattern": "^the calc module imports$", "command": "python3 -B -c 'import calc'"}]}"#,
    )
    .unwrap();
    let out = spec_anvil(
        Some(&setup.config),
        &[
            "verify-spec",
            "calc-4",
            feature.to_str().unwrap(),
            bindings.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 30, "{}", stderr(&out));
    assert!(stdout(&out).contains("SpecTooWeak"), "{}", stdout(&out));
}

#[test]
fn verify_spec_unparseable_feature_exits_40() {
    let setup = setup();
    let dir = tempfile::tempdir().unwrap();
    let feature = dir.path().join("broken.feature");
    fs::write(
        &feature,
        "Feature: broken\n  Given a step outside any scenario\n",
    )
    .unwrap();
    let bindings = dir.path().join("bindings.json");
    fs::write(&bindings, r#"{"bindings": []}"#).unwrap();
    let out = spec_anvil(
        Some(&setup.config),
        &[
            "verify-spec",
            "calc-4",
            feature.to_str().unwrap(),
            bindings.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 40, "{}", stderr(&out));
}

#[test]
fn verify_spec_bad_bindings_exit_41() {
    let setup = setup();
    let dir = tempfile::tempdir().unwrap();
    let feature = dir.path().join("ok.feature");
    fs::write(
        &feature,
        "Feature: ok\n  Scenario: s\n    Given the calc module imports\n",
    )
    .unwrap();

    let garbage = dir.path().join("garbage.json");
    fs::write(&garbage, "not json").unwrap();
    let out = spec_anvil(
        Some(&setup.config),
        &[
            "verify-spec",
            "calc-4",
            feature.to_str().unwrap(),
            garbage.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 41, "{}", stderr(&out));

    let bad_pattern = dir.path().join("bad-pattern.json");
    fs::write(
        &bad_pattern,
        r#"{"bindings": [{"pattern": "[unclosed", "command": "true"}]}"#,
    )
    .unwrap();
    let out = spec_anvil(
        Some(&setup.config),
        &[
            "verify-spec",
            "calc-4",
            feature.to_str().unwrap(),
            bad_pattern.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 41, "{}", stderr(&out));

    // Parses fine but leaves the spec's step unbound.
    let unbound = dir.path().join("unbound.json");
    fs::write(
        &unbound,
        r#"{"bindings": [{"pattern": "^something else$", "command": "true"}]}"#,
    )
    .unwrap();
    let out = spec_anvil(
        Some(&setup.config),
        &[
            "verify-spec",
            "calc-4",
            feature.to_str().unwrap(),
            unbound.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 41, "{}", stderr(&out));
}

// ---- report ----

#[test]
fn report_replay_renders_the_recorded_outcomes() {
    let outcomes = repo_path("fixtures/recorded-outcomes/outcomes.jsonl");
    let costs = repo_path("fixtures/recorded-costs.json");
    let out = spec_anvil(
        None,
        &[
            "report",
            "--replay",
            outcomes.to_str().unwrap(),
            "--costs",
            costs.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("| Total | 680 | 520 | 160 | 119 | 639 | 93.97% |"),
        "{text}"
    );
    assert!(text.contains("Rescue rate: 119/160 = 74.4%"), "{text}");
    assert!(
        text.contains("| Architect | 136.77 | 24.26 | 372,107 | 6.4% |"),
        "{text}"
    );
    assert!(
        text.contains("| Engineer | 671.67 | 70.23 | 3,365,986 | 58.2% |"),
        "{text}"
    );
    assert!(
        text.contains("| Fixer | 452.64 | 44.91 | 2,044,348 | 35.4% |"),
        "{text}"
    );
}

#[test]
fn report_reads_a_campaign_directory() {
    let setup = setup();
    let campaign = spec_anvil(
        Some(&setup.config),
        &["campaign", "--composite", "--id", "rpt"],
    );
    assert_eq!(code(&campaign), 0, "{}", stderr(&campaign));
    let dir = setup.run_dir.join("rpt");
    let out = spec_anvil(
        None,
        &["report", "--run", dir.to_str().unwrap(), "--format", "csv"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(
        stdout(&out).contains("Total,10,6,4,3,9,90.00%"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn report_writes_to_a_file_with_out() {
    let outcomes = repo_path("fixtures/recorded-outcomes/outcomes.jsonl");
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("report.md");
    let out = spec_anvil(
        None,
        &[
            "report",
            "--replay",
            outcomes.to_str().unwrap(),
            "--out",
            target.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
    assert!(fs::read_to_string(&target).unwrap().contains("93.97%"));
}

#[test]
fn report_on_an_empty_log_prints_no_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let out = spec_anvil(None, &["report", "--replay", empty.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("No sessions."), "{}", stdout(&out));
}

#[test]
fn report_malformed_records_exit_70_with_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(
        &bad,
        "{\"defect_id\":\"a\",\"project\":\"p\",\"blind_correct\":true,\"enlightened_attempted\":false,\"enlightened_correct\":false}\nnot json\n",
    )
    .unwrap();
    let out = spec_anvil(None, &["report", "--replay", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 70, "{}", stderr(&out));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn report_requires_exactly_one_source() {
    let none = spec_anvil(None, &["report"]);
    assert_eq!(code(&none), 1);
    let both = spec_anvil(None, &["report", "--replay", "a.jsonl", "--run", "dir"]);
    assert_eq!(code(&both), 1);
}

// ---- top level ----

#[test]
fn missing_config_is_a_usage_error() {
    let out = spec_anvil(
        Some(Path::new("/nonexistent/config.toml")),
        &["run", "x", "--mode", "blind"],
    );
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(
        stderr(&out).contains("cannot read config"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn no_subcommand_is_a_usage_error() {
    let out = spec_anvil(None, &[]);
    assert_eq!(code(&out), 1);
}

#[test]
fn help_exits_zero() {
    let out = spec_anvil(None, &["--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("spec-anvil"), "{}", stdout(&out));
}
