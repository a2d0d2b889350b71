use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliResult;

/// Provenance stamped on every output.
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub program: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config_sha256: String,
}

impl Header {
    pub fn new(seed: u64, config: &serde_json::Value) -> Self {
        let bytes = serde_json::to_vec(config).expect("json values always serialise");
        Header {
            program: "survsel",
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config_sha256: hex::encode(Sha256::digest(&bytes)),
        }
    }

    /// Comment line that opens every CSV file.
    pub fn csv_line(&self) -> String {
        format!(
            "# {} {} seed={} config_sha256={}\n",
            self.program, self.version, self.seed, self.config_sha256
        )
    }
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes to `out`, or stdout when `None`.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, bytes)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialise");
    bytes.push(b'\n');
    bytes
}

/// CSV document: header comment, column names, then rows.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &Header, columns: &[&str]) -> CliResult<Self> {
        let mut buf = Vec::new();
        buf.extend_from_slice(header.csv_line().as_bytes());
        let mut writer = csv::Writer::from_writer(buf);
        writer.write_record(columns)?;
        Ok(Table { writer })
    }

    /// An extra comment line before the column names.
    pub fn with_note(header: &Header, note: &str, columns: &[&str]) -> CliResult<Self> {
        let mut buf = Vec::new();
        buf.extend_from_slice(header.csv_line().as_bytes());
        buf.extend_from_slice(format!("# {note}\n").as_bytes());
        let mut writer = csv::Writer::from_writer(buf);
        writer.write_record(columns)?;
        Ok(Table { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> CliResult<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn into_bytes(self) -> CliResult<Vec<u8>> {
        self.writer
            .into_inner()
            .map_err(|e| crate::CliError::validation(e.to_string()))
    }
}

/// Shortest round-trip formatting; empty for missing values.
pub fn num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}
