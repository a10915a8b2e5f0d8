//! Run manifest: what was run, with which inputs, and what it produced.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use crate::config::ScenarioConfig;
use crate::error::CliError;
use crate::output::{sha256_hex, FileRecord, OutputDir};
use crate::scenarios::{calibrate_reference, CalibrationRecord, Products, Runner};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

/// Fields serialize in declaration order; maps are sorted.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub scenario: String,
    pub seed: u64,
    pub config_sha256: String,
    pub slope_table_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationRecord>,
    pub results: BTreeMap<String, Value>,
    pub files: Vec<FileRecord>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Input slope table: parsed form plus the bytes it was read from.
pub struct TableSource {
    pub table: qmagsim_core::SlopeTable,
    pub sha256: String,
}

impl TableSource {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let table =
            qmagsim_core::SlopeTable::from_csv(bytes).map_err(|e| CliError::Config(format!("slope table: {e}")))?;
        Ok(Self { table, sha256: sha256_hex(bytes) })
    }
}

pub fn run_scenario(
    cfg: &ScenarioConfig,
    source: &TableSource,
    out: &OutputDir,
    jobs: usize,
) -> Result<RunManifest, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    let canonical = cfg.to_canonical_toml();
    let runner = Runner { cfg, table: &source.table, out, pool: &pool };
    let Products { mut files, results, calibration } = runner.run()?;
    files.push(out.write(RESOLVED_CONFIG_FILE, canonical.as_bytes())?);
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        scenario: cfg.scenario().id().to_string(),
        seed: cfg.seed,
        config_sha256: sha256_hex(canonical.as_bytes()),
        slope_table_sha256: source.sha256.clone(),
        calibration,
        results,
        files,
    };
    out.write(MANIFEST_FILE, manifest.to_json().as_bytes())?;
    Ok(manifest)
}

/// Calibration record at the reference point, as pretty JSON.
pub fn calibration_json(cfg: &ScenarioConfig, source: &TableSource) -> Result<String, CliError> {
    let record = calibrate_reference(cfg, &source.table)?;
    Ok(serde_json::to_string_pretty(&record).expect("record serializes"))
}
