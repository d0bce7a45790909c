use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

/// Provenance embedded in every JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub version: &'static str,
    /// Wall-clock time; the only field that differs between identical runs.
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, argv: Vec<String>) -> Self {
        RunManifest {
            command: command.to_string(),
            args: argv.into_iter().skip(1).collect(),
            seeds: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION"),
            duration_seconds: 0.0,
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn finish(mut self, started: Instant) -> Self {
        self.duration_seconds = started.elapsed().as_secs_f64();
        self
    }
}

/// `{"manifest": …, "result": …}`.
#[derive(Debug, Serialize)]
pub struct Output<'a, T: Serialize> {
    pub manifest: &'a RunManifest,
    pub result: &'a T,
}
