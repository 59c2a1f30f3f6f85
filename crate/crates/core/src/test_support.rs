//! Shared builders for module tests: tiny on-disk corpora with known
//! buggy/fixed behavior.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use crate::harness::{
    checkout, Corpus, DefectRecord, ProbeCommand, TestCommand, Variant, Workspace, WorkspacePurpose,
};

pub(crate) struct DemoCorpus {
    // Owns the corpus trees on disk for the test's lifetime.
    pub dir: tempfile::TempDir,
    pub corpus: Corpus,
}

/// Two-defect corpus: `demo-1` is a python add() with a sign bug and a
/// discriminating test; `demo-2` is healthy in both trees (for negative
/// cases in validation tests).
pub(crate) fn demo_corpus() -> DemoCorpus {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for (tree, ret) in [("buggy", "a - b"), ("fixed", "a + b")] {
        let base = root.join("demo-1").join(tree);
        fs::create_dir_all(base.join("tests")).unwrap();
        fs::write(
            base.join("mod.py"),
            format!("def add(a, b):\n    return {ret}\n"),
        )
        .unwrap();
        fs::write(
            base.join("tests/run_tests.py"),
            r#"import sys
sys.path.insert(0, ".")
import mod
if mod.add(2, 3) != 5:
    print("FAIL: tests/run_tests.py::test_add")
    print("  at mod.add (mod.py:2)")
    print("  at tests/run_tests.py:8")
    print("  expected:<5> but was:<%s>" % mod.add(2, 3))
    sys.exit(1)
print("OK")
"#,
        )
        .unwrap();
    }
    for tree in ["buggy", "fixed"] {
        let base = root.join("demo-2").join(tree);
        fs::create_dir_all(&base).unwrap();
        fs::write(base.join("thing.py"), "VALUE = 1\n").unwrap();
    }
    let manifest = serde_json::json!({
        "defects": [
            {
                "id": "demo-1",
                "project": "demo",
                "buggy_dir": "demo-1/buggy",
                "fixed_dir": "demo-1/fixed",
                "failing_tests": ["tests/run_tests.py::test_add"],
                "modified_files": ["mod.py"],
                "test": {"cmd": "python3 tests/run_tests.py", "timeout_s": 30},
                "probes": [
                    {"cmd": "python3 -c 'import mod; print(mod.add(10, 7))'"},
                    {"cmd": "python3 -c 'import mod; print(mod.add(-1, 1))'"}
                ]
            },
            {
                "id": "demo-2",
                "project": "demo",
                "buggy_dir": "demo-2/buggy",
                "fixed_dir": "demo-2/fixed",
                "failing_tests": [],
                "modified_files": ["thing.py"],
                "test": {"cmd": "python3 -c 'import thing'", "timeout_s": 30}
            }
        ]
    });
    fs::write(
        root.join("corpus.json"),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .unwrap();
    let corpus = Corpus::load(&root.join("corpus.json")).unwrap();
    DemoCorpus { dir, corpus }
}

/// A throwaway workspace holding exactly the given files. The backing
/// corpus directory is dropped after checkout; the workspace owns its own
/// copy.
pub(crate) fn scratch_workspace(files: &[(&str, &str)]) -> Workspace {
    let source = tempfile::tempdir().unwrap();
    let buggy = source.path().join("buggy");
    let fixed = source.path().join("fixed");
    for base in [&buggy, &fixed] {
        fs::create_dir_all(base).unwrap();
    }
    fs::write(fixed.join(".keep"), "").unwrap();
    for (rel, content) in files {
        let path = buggy.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).unwrap();
        }
        fs::write(path, content).unwrap();
    }
    let defect = scratch_defect("scratch", &buggy, &fixed);
    checkout(&defect, Variant::Buggy, WorkspacePurpose::Inspection).unwrap()
}

pub(crate) fn scratch_defect(id: &str, buggy: &Path, fixed: &Path) -> DefectRecord {
    DefectRecord {
        id: id.to_string(),
        project: "scratch".to_string(),
        buggy_source: buggy.to_path_buf(),
        fixed_source: fixed.to_path_buf(),
        failing_tests: Vec::new(),
        modified_files: vec!["mod.py".to_string()],
        test_command: TestCommand {
            setup: None,
            test: "true".to_string(),
            timeout: Duration::from_secs(30),
        },
        tags: BTreeMap::new(),
        probes: Vec::<ProbeCommand>::new(),
    }
}
