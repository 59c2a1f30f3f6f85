//! TOML configuration: where the corpus lives, which agent backend fills
//! each role, and session knobs. Relative paths in the file resolve
//! against the file's own directory, so a config travels with its corpus
//! and fixtures.
//!
//! Remote backends read their API key from the `SPEC_ANVIL_API_KEY`
//! environment variable at request time; the key never appears in the
//! config file or in any output.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use spec_anvil_core::agents::{Backend, HttpTransport, RemoteChat, ScriptedBackend};
use spec_anvil_core::pipeline::{RoleBackends, SessionConfig};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Config {
    pub corpus_path: PathBuf,
    pub backends: Backends,
    #[serde(default = "default_max_rqa_attempts")]
    pub max_rqa_attempts: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_run_dir")]
    pub run_dir: PathBuf,
    #[serde(default)]
    pub adjudication: Adjudication,
}

fn default_max_rqa_attempts() -> usize {
    3
}

fn default_workers() -> usize {
    1
}

fn default_run_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Adjudication {
    /// When off, a plausible patch is never promoted to a correct fix.
    #[serde(default = "default_probes")]
    pub probes: bool,
}

fn default_probes() -> bool {
    true
}

impl Default for Adjudication {
    fn default() -> Self {
        Adjudication { probes: true }
    }
}

/// Every role must be configured; a pipeline with a missing role cannot
/// run any session, so the gap is rejected at load time.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Backends {
    pub architect: BackendConfig,
    pub engineer: BackendConfig,
    pub fixer: BackendConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub(crate) enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct BackendConfig {
    pub kind: BackendKind,
    /// Scripted only: directory of canned responses.
    pub fixtures_dir: Option<PathBuf>,
    /// Remote only: HTTP endpoint of the chat service.
    pub endpoint: Option<String>,
    /// Remote only: model name sent with each request.
    pub model: Option<String>,
}

impl BackendConfig {
    fn check(&self) -> Result<(), String> {
        match self.kind {
            BackendKind::Scripted => {
                if self.fixtures_dir.is_none() {
                    return Err("scripted backend needs fixtures_dir".to_string());
                }
                if self.endpoint.is_some() || self.model.is_some() {
                    return Err("endpoint and model apply only to remote backends".to_string());
                }
            }
            BackendKind::Remote => {
                if self.endpoint.is_none() || self.model.is_none() {
                    return Err("remote backend needs endpoint and model".to_string());
                }
                if self.fixtures_dir.is_some() {
                    return Err("fixtures_dir applies only to scripted backends".to_string());
                }
            }
        }
        Ok(())
    }

    fn build(&self) -> AnyBackend {
        match self.kind {
            BackendKind::Scripted => AnyBackend::Scripted(ScriptedBackend::from_dir(
                self.fixtures_dir.clone().expect("checked at load"),
            )),
            BackendKind::Remote => AnyBackend::Remote(RemoteChat::new(
                Box::new(HttpTransport::new(
                    self.endpoint.clone().expect("checked at load"),
                )),
                self.model.clone().expect("checked at load"),
            )),
        }
    }
}

pub(crate) enum AnyBackend {
    Scripted(ScriptedBackend),
    Remote(RemoteChat),
}

impl AnyBackend {
    fn as_dyn(&self) -> &dyn Backend {
        match self {
            AnyBackend::Scripted(backend) => backend,
            AnyBackend::Remote(backend) => backend,
        }
    }
}

/// Owns the three role backends so [`RoleBackends`] can borrow them for
/// the duration of a command.
pub(crate) struct BackendSet {
    architect: AnyBackend,
    engineer: AnyBackend,
    fixer: AnyBackend,
}

impl BackendSet {
    pub fn role_backends(&self) -> RoleBackends<'_> {
        RoleBackends {
            architect: self.architect.as_dyn(),
            engineer: self.engineer.as_dyn(),
            fixer: self.fixer.as_dyn(),
        }
    }
}

impl Backends {
    pub fn build(&self) -> BackendSet {
        BackendSet {
            architect: self.architect.build(),
            engineer: self.engineer.build(),
            fixer: self.fixer.build(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut config: Config =
            toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base);
        config
            .check()
            .map_err(|e| format!("config {}: {e}", path.display()))?;
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        resolve_path(&mut self.corpus_path, base);
        resolve_path(&mut self.run_dir, base);
        for backend in [
            &mut self.backends.architect,
            &mut self.backends.engineer,
            &mut self.backends.fixer,
        ] {
            if let Some(dir) = &mut backend.fixtures_dir {
                resolve_path(dir, base);
            }
        }
    }

    fn check(&self) -> Result<(), String> {
        let roles = [
            ("architect", &self.backends.architect),
            ("engineer", &self.backends.engineer),
            ("fixer", &self.backends.fixer),
        ];
        for (role, backend) in roles {
            backend
                .check()
                .map_err(|e| format!("backends.{role}: {e}"))?;
        }
        if self.workers == 0 {
            return Err("workers must be at least 1".to_string());
        }
        if self.max_rqa_attempts == 0 {
            return Err("max_rqa_attempts must be at least 1".to_string());
        }
        Ok(())
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            max_rqa_attempts: self.max_rqa_attempts,
            probes: self.adjudication.probes,
        }
    }
}

fn resolve_path(path: &mut PathBuf, base: &Path) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}
