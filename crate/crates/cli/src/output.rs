use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;
use synthpipe_core::dataset::DatasetError;
use synthpipe_core::eval::EvalError;
use synthpipe_core::prompt::PromptError;
use synthpipe_core::BoxError;
use synthpipe_gen::journal::JournalError;
use synthpipe_gen::CampaignError;

use crate::config::ConfigError;

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

/// Bad input that the user can fix (exit 1).
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// Reads an input file; a missing file is a validation error, other I/O
/// failures are runtime errors.
pub fn read_input(path: &std::path::Path) -> Result<String> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(Invalid(format!("{} does not exist", path.display())).into())
        }
        Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
    }
}

pub struct Output {
    pub path: Option<PathBuf>,
    compact: bool,
}

impl Output {
    pub fn new(path: Option<PathBuf>, compact: bool) -> Self {
        Self { path, compact }
    }

    fn render(&self, value: &impl Serialize) -> String {
        if self.compact {
            serde_json::to_string(value)
        } else {
            serde_json::to_string_pretty(value)
        }
        .expect("output serializes")
    }

    /// Prints the result to stdout, and also writes it to `--output` when
    /// given.
    pub fn emit(&self, value: &impl Serialize) -> Result<()> {
        let text = self.render(value);
        if let Some(path) = &self.path {
            std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
        }
        println!("{text}");
        Ok(())
    }

    /// Prints a summary only; the command already wrote its artifact to
    /// `--output`.
    pub fn summary(&self, value: &impl Serialize) {
        println!("{}", self.render(value));
    }
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>()
            || cause.is::<ConfigError>()
            || cause.is::<PromptError>()
            || cause.is::<EvalError>()
            || cause.is::<BoxError>()
        {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<DatasetError>() {
            return match e {
                DatasetError::Io { .. } => EXIT_RUNTIME,
                _ => EXIT_VALIDATION,
            };
        }
        if let Some(e) = cause.downcast_ref::<CampaignError>() {
            return match e {
                CampaignError::JournalExists(_)
                | CampaignError::NoJournal(_)
                | CampaignError::InvalidPrompts(_)
                | CampaignError::Policy(_) => EXIT_VALIDATION,
                CampaignError::Journal(JournalError::Malformed { .. } | JournalError::IllegalTransition { .. }) => {
                    EXIT_VALIDATION
                }
                _ => EXIT_RUNTIME,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_RUNTIME;
        }
    }
    EXIT_RUNTIME
}

pub fn report_error(err: &anyhow::Error, code: u8, json: bool) {
    if json {
        let chain: Vec<String> = err.chain().map(ToString::to_string).collect();
        eprintln!("{}", serde_json::json!({ "error": err.to_string(), "causes": &chain[1..], "exit_code": code }));
    } else {
        eprintln!("error: {err:#}");
    }
}
