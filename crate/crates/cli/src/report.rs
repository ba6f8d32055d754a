use crate::CliError;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

/// How a run ended; maps onto the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Finding,
    Inconclusive,
    RuntimeError,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Pass => 0,
            Outcome::Finding => 2,
            Outcome::Inconclusive => 3,
            Outcome::RuntimeError => 4,
        }
    }
}

/// Provenance shared by every report written in one run.
#[derive(Clone, Debug, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub tolerances: BTreeMap<&'static str, f64>,
}

impl Header {
    pub fn new(command: &'static str, config_sha256: String, seed: u64, tolerances: &[(&'static str, f64)]) -> Self {
        Header {
            tool: "mclab",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_sha256,
            seed,
            tolerances: tolerances.iter().copied().collect(),
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    #[serde(flatten)]
    header: &'a Header,
    outcome: Outcome,
    result: &'a T,
}

/// Writes `{header…, outcome, result}` as pretty JSON. No timestamps or
/// host data, so identical inputs give identical bytes.
pub fn write<T: Serialize>(path: &Path, header: &Header, outcome: Outcome, result: &T) -> Result<(), CliError> {
    let env = Envelope { header, outcome, result };
    let mut text = serde_json::to_string_pretty(&env).map_err(|e| CliError::Io { path: path.into(), msg: e.to_string() })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
