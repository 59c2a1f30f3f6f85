//! Campaign driver with resume. Every finished session is appended to
//! `sessions.jsonl` through one serialized writer; rerunning the same
//! campaign id reloads that log and skips the sessions it already holds,
//! so an interrupted campaign picks up where it stopped instead of
//! repeating paid agent calls.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use spec_anvil_core::metrics::{self, ReportFormat};
use spec_anvil_core::pipeline::{self, CampaignConfig, RepairSession, SessionMode};

use crate::commands::load_corpus;
use crate::config::Config;
use crate::{exit, fail, CmdResult, Failure};

fn infra(message: String) -> Failure {
    fail(exit::CAMPAIGN_INFRA, message)
}

/// Reloads a session log, keyed by defect and mode. Unreadable or
/// inconsistent lines are skipped with a warning rather than poisoning
/// the resume: the sessions they described will simply run again.
fn load_session_log(path: &Path) -> Result<HashMap<(String, SessionMode), RepairSession>, Failure> {
    let mut cache = HashMap::new();
    let file = match File::open(path) {
        Ok(file) => file,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(cache),
        Err(e) => return Err(infra(format!("cannot read {}: {e}", path.display()))),
    };
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| infra(format!("cannot read {}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let session: RepairSession = match serde_json::from_str(&line) {
            Ok(session) => session,
            Err(e) => {
                eprintln!(
                    "warning: {} line {}: skipping unreadable session: {e}",
                    path.display(),
                    index + 1
                );
                continue;
            }
        };
        if let Err(e) = session.check_invariants() {
            eprintln!(
                "warning: {} line {}: skipping inconsistent session: {e}",
                path.display(),
                index + 1
            );
            continue;
        }
        cache.insert((session.defect_id.clone(), session.mode), session);
    }
    Ok(cache)
}

pub(crate) fn cmd_campaign(
    config: &Config,
    composite: bool,
    workers: Option<usize>,
    id: &str,
) -> CmdResult {
    let corpus = load_corpus(config)?;
    let backends = config.backends.build();

    let dir = config.run_dir.join(id);
    fs::create_dir_all(&dir).map_err(|e| infra(format!("cannot create {}: {e}", dir.display())))?;

    let log_path = dir.join("sessions.jsonl");
    let cache = load_session_log(&log_path)?;

    let log = Mutex::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| infra(format!("cannot open {}: {e}", log_path.display())))?,
    );
    let ran = AtomicUsize::new(0);

    let campaign_config = CampaignConfig {
        session: config.session_config(),
        composite,
        workers: workers.unwrap_or(config.workers),
    };

    let result = pipeline::run_campaign_with(
        &corpus,
        backends.role_backends(),
        &campaign_config,
        |defect_id, mode| cache.get(&(defect_id.to_string(), mode)).cloned(),
        &|session| {
            ran.fetch_add(1, Ordering::Relaxed);
            eprintln!(
                "{} {}: {:?}",
                session.defect_id,
                session.mode.dir_name(),
                session.outcome
            );
            let line = serde_json::to_string(session).expect("sessions serialize");
            let mut file = log.lock().expect("session log writer");
            if let Err(e) = file
                .write_all(line.as_bytes())
                .and_then(|()| file.write_all(b"\n"))
                .and_then(|()| file.flush())
            {
                eprintln!("warning: session log write failed: {e}");
            }
        },
    );

    let records = result.outcome_records();

    let outcomes_path = dir.join("outcomes.jsonl");
    let mut outcomes_text = String::new();
    for record in &records {
        outcomes_text.push_str(&serde_json::to_string(record).expect("records serialize"));
        outcomes_text.push('\n');
    }
    fs::write(&outcomes_path, outcomes_text)
        .map_err(|e| infra(format!("cannot write {}: {e}", outcomes_path.display())))?;

    let report = metrics::render_report(&records, None, ReportFormat::Markdown);
    let report_path = dir.join("report.md");
    fs::write(&report_path, &report)
        .map_err(|e| infra(format!("cannot write {}: {e}", report_path.display())))?;

    let total = result.all_sessions().count();
    let ran = ran.load(Ordering::Relaxed);
    print!("{report}");
    println!();
    println!("sessions: {ran} run, {} reused from the log", total - ran);
    println!("campaign dir: {}", dir.display());
    Ok(exit::OK)
}
