//! `synthpipe.toml`: vocabulary, backend, policy, paths and split settings.
//!
//! ```toml
//! [template]
//! subject_clause = "two workers pouring concrete"
//!
//! [axes]                 # omit the table to use the built-in vocabulary
//! location = ["on a bridge", "in a tunnel"]
//! weather_lighting = ["at dawn"]
//! camera_film = ["35mm film"]
//! aspect_ratio = ["16:9"]
//!
//! [backend]
//! kind = "http"
//! endpoint = "https://imagegen.example.com/v1"
//! token = "${SYNTHPIPE_BACKEND_TOKEN}"
//!
//! [policy]
//! max_in_flight = 3
//!
//! [paths]
//! store = "store"
//!
//! [split]
//! train = 9592
//! val = 1200
//! test = 1200
//! seed = 42
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file. Credentials may only come from the environment.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use synthpipe_core::prompt::{AxesTable, PromptMatrix, TemplateOverrides, VocabularyConfig};
use synthpipe_gen::{BackendPolicy, MockConfig};

pub const TOKEN_ENV: &str = "SYNTHPIPE_BACKEND_TOKEN";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub template: TemplateOverrides,
    pub axes: Option<AxesTable>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub policy: BackendPolicy,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub split: SplitConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    Mock {
        #[serde(default = "default_polls")]
        polls_until_ready: u32,
        #[serde(default = "default_side")]
        width: u32,
        #[serde(default = "default_side")]
        height: u32,
        #[serde(default)]
        failing_attempts: u32,
    },
    Http {
        endpoint: String,
        token: Option<String>,
    },
}

fn default_polls() -> u32 {
    MockConfig::default().polls_until_ready
}

fn default_side() -> u32 {
    MockConfig::default().width
}

impl Default for BackendConfig {
    fn default() -> Self {
        let m = MockConfig::default();
        BackendConfig::Mock {
            polls_until_ready: m.polls_until_ready,
            width: m.width,
            height: m.height,
            failing_attempts: m.failing_attempts,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub store: PathBuf,
    pub prompts: PathBuf,
    pub manifest: PathBuf,
    pub annotations: Option<PathBuf>,
    pub detections: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            store: "store".into(),
            prompts: "prompts.jsonl".into(),
            manifest: "manifest.json".into(),
            annotations: None,
            detections: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: Option<usize>,
    pub val: Option<usize>,
    pub test: Option<usize>,
    pub seed: Option<u64>,
    pub group_by_prompt: bool,
}

/// Config validation failure; maps to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl PipelineConfig {
    /// Reads `path`, or returns the defaults rooted at the working directory.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = crate::output::read_input(path).context("reading config")?;
        let mut config: Self =
            toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.paths.resolve(base);
        config.policy.validate().map_err(|e| ConfigError(format!("[policy] {e}")))?;
        if let BackendConfig::Http { endpoint, token } = &config.backend {
            if endpoint.trim().is_empty() {
                return Err(ConfigError("[backend] endpoint must not be empty".into()).into());
            }
            if let Some(t) = token {
                interpolate_env(t)?;
            }
        }
        Ok(config)
    }

    pub fn matrix(&self) -> Result<PromptMatrix> {
        let vocabulary = VocabularyConfig {
            template: self.template.clone(),
            axes: match &self.axes {
                Some(axes) => axes.clone(),
                None => VocabularyConfig::from_toml_str(synthpipe_core::prompt::DEFAULT_VOCABULARY_TOML)?.axes,
            },
        };
        Ok(vocabulary.into_matrix()?)
    }

    pub fn mock_config(&self) -> Option<MockConfig> {
        match self.backend {
            BackendConfig::Mock {
                polls_until_ready,
                width,
                height,
                failing_attempts,
            } => Some(MockConfig {
                polls_until_ready,
                width,
                height,
                failing_attempts,
                ..MockConfig::default()
            }),
            BackendConfig::Http { .. } => None,
        }
    }

    /// The backend token: the interpolated `token` entry if present,
    /// otherwise the environment variable.
    pub fn backend_token(&self) -> Result<Option<String>> {
        match &self.backend {
            BackendConfig::Http { token: Some(t), .. } => interpolate_env(t).map(Some),
            _ => Ok(std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty())),
        }
    }
}

impl PathsConfig {
    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.store, &mut self.prompts, &mut self.manifest] {
            *p = base.join(&*p);
        }
        for p in [&mut self.annotations, &mut self.detections].into_iter().flatten() {
            *p = base.join(&*p);
        }
    }
}

/// Expands `${NAME}` references. Anything else is rejected so secrets never
/// sit in the file.
fn interpolate_env(value: &str) -> Result<String> {
    let mut out = String::new();
    let mut rest = value;
    let mut referenced = false;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let Some(end) = rest[start..].find('}') else {
            bail!(ConfigError(format!("[backend] token: unterminated `${{` in {value:?}")));
        };
        let name = &rest[start + 2..start + end];
        let resolved = std::env::var(name)
            .map_err(|_| ConfigError(format!("[backend] token references unset variable {name}")))?;
        out.push_str(&resolved);
        referenced = true;
        rest = &rest[start + end + 1..];
    }
    out.push_str(rest);
    if !referenced {
        bail!(ConfigError(
            "[backend] token must be an environment reference such as \"${SYNTHPIPE_BACKEND_TOKEN}\"".into()
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PipelineConfig> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synthpipe.toml");
        std::fs::write(&path, text).unwrap();
        PipelineConfig::load(Some(&path))
    }

    #[test]
    fn defaults_select_the_mock_and_builtin_vocabulary() {
        let c = PipelineConfig::load(None).unwrap();
        assert!(c.mock_config().is_some());
        assert_eq!(c.matrix().unwrap().cardinality(), 3000);
    }

    #[test]
    fn missing_axis_is_rejected() {
        let c = parse("[axes]\nlocation = [\"a\"]\n").unwrap();
        assert!(c.matrix().is_err());
    }

    #[test]
    fn literal_tokens_are_refused() {
        let err = parse("[backend]\nkind = \"http\"\nendpoint = \"http://x\"\ntoken = \"hunter2\"\n").unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some(), "{err}");
    }

    #[test]
    fn token_interpolation() {
        std::env::set_var("SYNTHPIPE_CONFIG_TEST_TOKEN", "abc");
        let c = parse(
            "[backend]\nkind = \"http\"\nendpoint = \"http://x\"\ntoken = \"Key ${SYNTHPIPE_CONFIG_TEST_TOKEN}\"\n",
        )
        .unwrap();
        assert_eq!(c.backend_token().unwrap().as_deref(), Some("Key abc"));
        assert!(parse("[backend]\nkind = \"http\"\nendpoint = \"http://x\"\ntoken = \"${SYNTHPIPE_NOPE_UNSET}\"\n").is_err());
    }

    #[test]
    fn unknown_keys_and_mixed_backends_are_rejected() {
        assert!(parse("[pathz]\n").is_err());
        assert!(parse("[backend]\nkind = \"mock\"\nendpoint = \"http://x\"\n").is_err());
        assert!(parse("[backend]\nkind = \"carrier-pigeon\"\n").is_err());
        assert!(parse("[policy]\nmax_in_flight = 0\n").is_err());
    }

    #[test]
    fn paths_are_relative_to_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synthpipe.toml");
        std::fs::write(&path, "[paths]\nstore = \"out\"\n").unwrap();
        let c = PipelineConfig::load(Some(&path)).unwrap();
        assert_eq!(c.paths.store, dir.path().join("out"));
        assert_eq!(c.paths.manifest, dir.path().join("manifest.json"));
    }
}
