//! Shared plumbing: error-to-exit-code mapping, config file loading, and
//! small parsers for list-valued flags.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use serde::de::DeserializeOwned;

/// A command failure. Usage problems (bad flags, bad config keys, missing
/// required values) exit 2; everything that goes wrong while working
/// (I/O, domain errors from the library) exits 1.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Run(String),
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Failure {
        Failure::Usage(msg.into())
    }

    pub fn run(msg: impl Into<String>) -> Failure {
        Failure::Run(msg.into())
    }

    /// Prints the single-line diagnostic and returns the exit code.
    pub fn exit(self) -> ExitCode {
        match self {
            Failure::Usage(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
            Failure::Run(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
        }
    }
}

impl From<dnd_core::Error> for Failure {
    fn from(e: dnd_core::Error) -> Failure {
        Failure::Run(e.to_string())
    }
}

/// Loads a flat TOML config, or the all-`None` default when no path was
/// given. Unknown keys are rejected by the per-command config types.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| {
        let line = e.to_string().replace('\n', " ");
        Failure::usage(format!("config {}: {}", path.display(), line.trim()))
    })
}

/// Unwraps a merged flag-or-config value, naming the flag that supplies it.
pub fn need<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::usage(format!("missing --{flag} (flag or config key)")))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::run(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::run(format!("{}: {e}", path.display())))
}

/// Parses a comma separated list of FPR targets in scientific or plain
/// notation, e.g. "1e-2,1e-3".
pub fn parse_fprs(text: &str) -> Result<Vec<f64>, Failure> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        let value: f64 = part
            .parse()
            .map_err(|_| Failure::usage(format!("bad FPR value {part:?}")))?;
        if !value.is_finite() || value <= 0.0 || value > 1.0 {
            return Err(Failure::usage(format!(
                "FPR target {part} outside (0, 1]"
            )));
        }
        out.push(value);
    }
    if out.is_empty() {
        return Err(Failure::usage("empty FPR list"));
    }
    Ok(out)
}

/// Parses comma separated hidden layer widths; an empty string means no
/// hidden layers.
pub fn parse_hidden(text: &str) -> Result<Vec<usize>, Failure> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|part| {
            let part = part.trim();
            part.parse::<usize>()
                .ok()
                .filter(|&w| w > 0)
                .ok_or_else(|| Failure::usage(format!("bad hidden width {part:?}")))
        })
        .collect()
}

/// Evaluation thread cap: DND_THREADS when set, otherwise the machine's
/// available parallelism.
pub fn thread_cap() -> Result<usize, Failure> {
    match std::env::var("DND_THREADS") {
        Ok(text) => text
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::usage(format!("DND_THREADS must be a positive integer, got {text:?}"))),
        Err(std::env::VarError::NotPresent) => {
            Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
        }
        Err(e) => Err(Failure::usage(format!("DND_THREADS: {e}"))),
    }
}

/// One stderr progress line; artifacts and reports never share a stream
/// with chatter.
pub fn note(msg: impl Display) {
    eprintln!("{msg}");
}
