//! Command templates and child-process execution shared by the step
//! runtime and the defect harness.
//!
//! Commands are never run through a shell. A template string is split into
//! argv tokens by [`tokenize`], placeholders are substituted per token by
//! the callers, and the result is spawned directly.
//!
//! Tokenizer rules (bit-exact, frozen by tests):
//! - runs of spaces/tabs outside quotes separate tokens;
//! - `"` and `'` open a quoted span ended by the same character; the quote
//!   characters are dropped, the span's content (including whitespace) is
//!   kept verbatim;
//! - quoted and unquoted spans concatenate within one token (`a"b c"` is
//!   the single token `ab c`);
//! - there are no escape sequences; a quote of the other kind inside a
//!   quoted span is literal;
//! - an unterminated quote is an error, as is a template with no tokens.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unterminated {0} quote in command template")]
    UnterminatedQuote(char),
    #[error("command template is empty")]
    Empty,
}

pub fn tokenize(template: &str) -> Result<Vec<String>, TemplateError> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut started = false;
    let mut quote: Option<char> = None;

    for c in template.chars() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => current.push(c),
            None => match c {
                '"' | '\'' => {
                    quote = Some(c);
                    started = true;
                }
                ' ' | '\t' => {
                    if started {
                        tokens.push(std::mem::take(&mut current));
                        started = false;
                    }
                }
                _ => {
                    current.push(c);
                    started = true;
                }
            },
        }
    }
    if let Some(q) = quote {
        return Err(TemplateError::UnterminatedQuote(q));
    }
    if started {
        tokens.push(current);
    }
    if tokens.is_empty() {
        return Err(TemplateError::Empty);
    }
    Ok(tokens)
}

/// What happened when a command ran. `exit_code` is `None` on timeout or
/// spawn failure; `output` is stdout followed by stderr.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecResult {
    pub exit_code: Option<i32>,
    pub output: String,
    pub timed_out: bool,
    pub spawn_error: Option<String>,
    pub duration: Duration,
}

impl ExecResult {
    pub fn succeeded(&self) -> bool {
        self.exit_code == Some(0)
    }

    /// Infrastructure-level failure: the command never ran to completion.
    pub fn broke(&self) -> bool {
        self.timed_out || self.spawn_error.is_some()
    }
}

const POLL_INTERVAL: Duration = Duration::from_millis(10);

/// Runs `argv` with `cwd` as working directory and the parent environment
/// overlaid with `env`. Kills the child when `timeout` elapses. Never
/// panics on a missing binary; that is a spawn error in the result.
pub fn run(
    argv: &[String],
    cwd: &Path,
    env: &BTreeMap<String, String>,
    timeout: Duration,
) -> ExecResult {
    let start = Instant::now();
    let spawn_failure = |message: String| ExecResult {
        exit_code: None,
        output: String::new(),
        timed_out: false,
        spawn_error: Some(message),
        duration: start.elapsed(),
    };
    let Some(program) = argv.first() else {
        return spawn_failure("empty argv".to_string());
    };

    let mut command = Command::new(program);
    command
        .args(&argv[1..])
        .current_dir(cwd)
        .envs(env)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());

    let mut child = match command.spawn() {
        Ok(child) => child,
        Err(e) => return spawn_failure(format!("spawn {program:?}: {e}")),
    };

    // Drain pipes on threads so a chatty child cannot deadlock on a full
    // pipe buffer while we poll for exit.
    let mut stdout_pipe = child.stdout.take().expect("piped");
    let mut stderr_pipe = child.stderr.take().expect("piped");
    let stdout_thread = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout_pipe.read_to_end(&mut buf);
        buf
    });
    let stderr_thread = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr_pipe.read_to_end(&mut buf);
        buf
    });

    let deadline = start + timeout;
    let (exit_code, timed_out) = loop {
        match child.try_wait() {
            Ok(Some(status)) => break (status.code(), false),
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    break (None, true);
                }
                std::thread::sleep(POLL_INTERVAL);
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                return spawn_failure(format!("wait {program:?}: {e}"));
            }
        }
    };

    let mut bytes = stdout_thread.join().unwrap_or_default();
    bytes.extend(stderr_thread.join().unwrap_or_default());
    ExecResult {
        exit_code,
        output: String::from_utf8_lossy(&bytes).into_owned(),
        timed_out,
        spawn_error: None,
        duration: start.elapsed(),
    }
}
