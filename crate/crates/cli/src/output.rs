use std::fs;
use std::path::{Path, PathBuf};

use liquidity_core::market::Economy;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const MANIFEST_SCHEMA: &str = "liquidity-manifest/v1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Short digest of an economy's integer data: wealth, prices, counts and
/// quantum. Simulation and solver outputs carry it so `compare` can refuse
/// mismatched inputs.
pub fn economy_id(economy: &Economy) -> String {
    let mut h = Sha256::new();
    h.update(economy.goods.quantum.to_bits().to_le_bytes());
    for p in &economy.goods.prices {
        h.update(p.to_le_bytes());
    }
    for m in &economy.goods.counts {
        h.update((*m as u64).to_le_bytes());
    }
    for c in &economy.wealth {
        h.update(c.to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: &'a str,
    tool: &'a str,
    version: &'a str,
    core_version: &'a str,
    command: &'a str,
    config_sha256: String,
    config: &'a ExperimentConfig,
    seed: u64,
    realizations: Vec<u64>,
    outputs: Vec<(String, String)>,
    status: String,
}

/// Output directory that remembers what was written, for the manifest.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<(String, String)>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.written.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(CliError::runtime)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// Writes `rows` under `header`; every row must match its length.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(CliError::runtime)?;
        for r in rows {
            w.write_record(r).map_err(CliError::runtime)?;
        }
        let bytes = w.into_inner().map_err(CliError::runtime)?;
        self.write_bytes(name, &bytes)
    }

    /// `manifest.json` plus `config.json`, the resolved configuration, from
    /// which every listed output can be regenerated.
    pub fn finish(
        mut self,
        command: &str,
        config: &ExperimentConfig,
        realizations: Vec<u64>,
        status: &Result<(), CliError>,
    ) -> Result<(), CliError> {
        self.write_json("config.json", config)?;
        let status = match status {
            Ok(()) => "ok".to_string(),
            Err(CliError::Config(m) | CliError::Runtime(m) | CliError::Failed(m)) => format!("failed: {m}"),
        };
        let manifest = Manifest {
            schema: MANIFEST_SCHEMA,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: liquidity_core::VERSION,
            command,
            config_sha256: sha256_hex(&serde_json::to_vec(config).map_err(CliError::runtime)?),
            config,
            seed: config.seed,
            realizations,
            outputs: std::mem::take(&mut self.written),
            status,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(CliError::runtime)?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}

/// Shortest decimal that round-trips.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}
