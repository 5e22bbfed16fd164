//! Experiment configuration: chain files, suite files, orchestration and
//! mode-comparison reporting.

pub mod chain_file;
pub mod run;
pub mod suite;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use chain_file::{load_chain, parse_chain, reference_chain, reference_home};
pub use run::{
    compare_modes, load_report, parse_report, report_to_string, run_suite, summary_table, Comparison, ComparisonRow,
    SuiteOutcome,
};
pub use suite::{load_suite, parse_suite, print_suite, scenario_hashes, ExperimentSuite, MAX_SEED, SUITE_SCHEMA_VERSION};

/// Configuration and orchestration failures.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}parse error: {message}", location(*line, *column))]
    Parse {
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },
    #[error("{}invalid `{field}`: {message}", location(*line, None))]
    Validation {
        field: String,
        line: Option<usize>,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("reports are not comparable: {0}")]
    Mismatch(String),
}

fn location(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!("line {l}, column {c}: "),
        (Some(l), None) => format!("line {l}: "),
        _ => String::new(),
    }
}

impl ConfigError {
    pub(crate) fn from_toml(text: &str, err: &toml::de::Error) -> Self {
        let (line, column) = match err.span() {
            Some(span) => {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                (Some(line), Some(column))
            }
            None => (None, None),
        };
        ConfigError::Parse {
            line,
            column,
            message: err.message().to_string(),
        }
    }

    pub(crate) fn validation(field: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> Self {
        ConfigError::Validation {
            field: field.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ConfigError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Line (1-based) of the first assignment to `key` inside the `nth` array
/// table entry that contains such a key, or anywhere if `nth` is 0 and the key
/// is top-level.
pub(crate) fn find_key_line(text: &str, key: &str, nth: usize) -> Option<usize> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim_start();
            t.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .nth(nth)
        .map(|(i, _)| i + 1)
}
