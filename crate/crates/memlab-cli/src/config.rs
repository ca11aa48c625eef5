//! Declarative run configuration.
//!
//! One TOML document describes the providers (synthesis, answering, judge),
//! the embedder, synthesis parameters, and orchestrator defaults. CLI flags
//! override config fields; environment variables hold secrets only.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use memlab_core::domain::{Category, Seed, TargetLength};
use memlab_core::embedding::HashEmbedder;
use memlab_core::gateway::mock::MockScript;
use memlab_core::gateway::openai::OpenAiProvider;
use memlab_core::gateway::{Gateway, ProviderConfig, Temperatures, WireRecorder};
use memlab_core::orchestrator::AblationConfig;
use memlab_core::synthesis::{PlanMode, SynthesisConfig};

use crate::CliError;

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_workspace")]
    pub workspace: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// When set, every gateway request body is appended here as JSONL.
    #[serde(default)]
    pub record_wire: Option<PathBuf>,
    #[serde(default)]
    pub providers: Providers,
    #[serde(default)]
    pub embedder: EmbedderSettings,
    #[serde(default)]
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub orchestrator: OrchestratorSection,
}

fn default_workspace() -> PathBuf {
    PathBuf::from("workspace")
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Providers {
    pub synthesis: Option<ProviderSettings>,
    pub answering: Option<ProviderSettings>,
    pub judge: Option<ProviderSettings>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderRole {
    Synthesis,
    Answering,
    Judge,
}

impl std::fmt::Display for ProviderRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProviderRole::Synthesis => write!(f, "synthesis"),
            ProviderRole::Answering => write!(f, "answering"),
            ProviderRole::Judge => write!(f, "judge"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSettings {
    #[serde(default = "default_kind")]
    pub kind: String,
    pub model: String,
    /// Mock only: path to the script JSON, relative to the config file.
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default = "default_base_url")]
    pub base_url: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_kind() -> String {
    "openai".into()
}
fn default_base_url() -> String {
    "https://api.openai.com".into()
}
fn default_api_key_env() -> String {
    "MEMLAB_API_KEY".into()
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderSettings {
    #[serde(default = "default_embedder_kind")]
    pub kind: String,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
}

fn default_embedder_kind() -> String {
    "hash".into()
}
fn default_dimension() -> usize {
    384
}

impl Default for EmbedderSettings {
    fn default() -> Self {
        EmbedderSettings {
            kind: default_embedder_kind(),
            dimension: default_dimension(),
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    pub length: Option<String>,
    pub category: Option<String>,
    pub conversation_id: Option<String>,
    /// Domain used by the seed-candidate pass when no seed is given.
    pub domain: Option<String>,
    pub seed: Option<Seed>,
    pub seed_rng: Option<u64>,
    pub n_subplans: Option<usize>,
    pub m_bullets: Option<usize>,
    pub batches: Option<usize>,
    pub questions_per_batch: Option<usize>,
    pub summary_window: Option<usize>,
    pub max_questions: Option<usize>,
    pub plan_mode: Option<String>,
    pub probe_window_plans: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrchestratorSection {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_z")]
    pub z: usize,
    #[serde(default = "default_true")]
    pub use_retrieval: bool,
    #[serde(default = "default_true")]
    pub use_scratchpad: bool,
    #[serde(default = "default_true")]
    pub use_working: bool,
    #[serde(default = "default_true")]
    pub use_noise_filter: bool,
}

fn default_k() -> usize {
    5
}
fn default_z() -> usize {
    5
}
fn default_true() -> bool {
    true
}

impl Default for OrchestratorSection {
    fn default() -> Self {
        OrchestratorSection {
            k: default_k(),
            z: default_z(),
            use_retrieval: true,
            use_scratchpad: true,
            use_working: true,
            use_noise_filter: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for settings in [
            config.providers.synthesis.as_mut(),
            config.providers.answering.as_mut(),
            config.providers.judge.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            if let Some(script) = &settings.script {
                if script.is_relative() {
                    settings.script = Some(base.join(script));
                }
            }
        }
        if let Some(record) = &config.record_wire {
            if record.is_relative() {
                config.record_wire = Some(base.join(record));
            }
        }
        if config.embedder.kind != "hash" {
            return Err(CliError::Config(format!(
                "unknown embedder kind {:?} (only \"hash\" is bundled)",
                config.embedder.kind
            )));
        }
        Ok(config)
    }

    pub fn provider(&self, role: ProviderRole) -> Result<&ProviderSettings, CliError> {
        let settings = match role {
            ProviderRole::Synthesis => self.providers.synthesis.as_ref(),
            ProviderRole::Answering => self.providers.answering.as_ref(),
            ProviderRole::Judge => self.providers.judge.as_ref(),
        };
        settings.ok_or_else(|| {
            CliError::Config(format!("config is missing the [providers.{role}] section"))
        })
    }

    /// Builds the gateway for a role; validates env vars and scripts now so
    /// misconfiguration fails before any work starts.
    pub fn gateway(
        &self,
        role: ProviderRole,
        recorder: Option<WireRecorder>,
    ) -> Result<Arc<Gateway>, CliError> {
        let settings = self.provider(role)?;
        let provider: Box<dyn memlab_core::gateway::ChatProvider> = match settings.kind.as_str() {
            "mock" => {
                let script_path = settings.script.as_ref().ok_or_else(|| {
                    CliError::Config(format!("[providers.{role}] kind=mock needs a script path"))
                })?;
                let script = MockScript::from_file(script_path).map_err(|e| {
                    CliError::Config(format!("bad mock script {}: {e}", script_path.display()))
                })?;
                Box::new(script.into_provider())
            }
            "openai" => {
                let provider_config = ProviderConfig {
                    base_url: settings.base_url.clone(),
                    api_key_env: settings.api_key_env.clone(),
                    timeout: Duration::from_secs(settings.timeout_secs),
                    max_retries: settings.max_retries,
                    backoff_base: Duration::from_millis(settings.backoff_ms),
                };
                Box::new(
                    OpenAiProvider::new(provider_config)
                        .map_err(|e| CliError::Config(e.to_string()))?,
                )
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown provider kind {other:?} for [providers.{role}]"
                )))
            }
        };
        let mut gateway = Gateway::new(provider, settings.model.clone())
            .with_retries(
                settings.max_retries,
                Duration::from_millis(settings.backoff_ms),
            )
            .with_temperatures(Temperatures::default())
            .with_parallelism(self.parallelism);
        if let Some(recorder) = recorder {
            gateway = gateway.with_recorder(recorder);
        }
        Ok(Arc::new(gateway))
    }

    pub fn embedder(&self) -> Arc<HashEmbedder> {
        Arc::new(HashEmbedder::new(self.embedder.dimension))
    }

    pub fn ablation(&self) -> AblationConfig {
        AblationConfig {
            use_retrieval: self.orchestrator.use_retrieval,
            use_scratchpad: self.orchestrator.use_scratchpad,
            use_working: self.orchestrator.use_working,
            use_noise_filter: self.orchestrator.use_noise_filter,
        }
    }

    /// Resolves the synthesis config from presets plus config overrides.
    /// `length`/`category` flags take precedence over the config file.
    pub fn synthesis_config(
        &self,
        length_flag: Option<&str>,
        category_flag: Option<&str>,
    ) -> Result<SynthesisConfig, CliError> {
        let length = length_flag
            .map(str::to_string)
            .or_else(|| self.synthesis.length.clone())
            .unwrap_or_else(|| "mini".to_string());
        let category = parse_category(
            category_flag
                .map(str::to_string)
                .or_else(|| self.synthesis.category.clone())
                .as_deref(),
        )?;
        let mut config = match length.as_str() {
            "mini" => SynthesisConfig {
                category,
                ..SynthesisConfig::mini()
            },
            other => SynthesisConfig::preset(parse_length(other)?, category),
        };
        let section = &self.synthesis;
        if let Some(v) = section.seed_rng {
            config.seed_rng = v;
        }
        if let Some(v) = section.n_subplans {
            config.n_sub_plans = v;
        }
        if let Some(v) = section.m_bullets {
            config.m_bullets = v;
        }
        if let Some(v) = section.batches {
            config.batches_per_subplan = v;
        }
        if let Some(v) = section.questions_per_batch {
            config.questions_per_batch = v;
        }
        if let Some(v) = section.summary_window {
            config.summary_window = v;
        }
        if let Some(v) = section.max_questions {
            config.max_questions = Some(v);
        }
        if let Some(v) = section.probe_window_plans {
            config.probe_window_plans = v;
        }
        if let Some(mode) = &section.plan_mode {
            config.plan_mode = match mode.as_str() {
                "single" => PlanMode::Single,
                "sequential" => PlanMode::SequentialExpansion,
                "hierarchical" => PlanMode::HierarchicalDecomposition,
                other => return Err(CliError::Config(format!("unknown plan_mode {other:?}"))),
            };
        }
        config
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }
}

pub fn parse_length(s: &str) -> Result<TargetLength, CliError> {
    match s {
        "128k" => Ok(TargetLength::L128K),
        "500k" => Ok(TargetLength::L500K),
        "1m" => Ok(TargetLength::L1M),
        "10m" => Ok(TargetLength::L10M),
        other => Err(CliError::Config(format!(
            "unknown length {other:?} (expected 128k, 500k, 1m, 10m, or mini)"
        ))),
    }
}

pub fn parse_category(s: Option<&str>) -> Result<Category, CliError> {
    match s.unwrap_or("general") {
        "general" => Ok(Category::General),
        "coding" => Ok(Category::Coding),
        "math" => Ok(Category::Math),
        other => Err(CliError::Config(format!(
            "unknown category {other:?} (expected general, coding, or math)"
        ))),
    }
}
