//! Artifact files: CSV tables and JSON documents, written atomically and
//! recorded in the run manifest.

use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::config::Resolved;
use crate::error::{CliError, Context};

/// One CSV field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

/// Fifteen significant digits in scientific notation.
pub fn format_cell(out: &mut String, cell: Cell) {
    match cell {
        Cell::Int(i) => write!(out, "{i}").unwrap(),
        Cell::Num(v) if v.is_finite() => write!(out, "{v:.14e}").unwrap(),
        Cell::Num(v) => write!(out, "{v}").unwrap(),
        Cell::Empty => {}
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A file under construction in the output directory; it appears under its
/// final name only on [`AtomicFile::commit`].
pub struct AtomicFile {
    target: PathBuf,
    out: BufWriter<NamedTempFile>,
    hasher: Sha256,
}

impl AtomicFile {
    pub fn create(target: PathBuf) -> Result<Self, CliError> {
        let dir = target.parent().unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).context(&format!("creating {}", dir.display()))?;
        let tmp = NamedTempFile::new_in(dir).context(&format!("temporary file in {}", dir.display()))?;
        Ok(AtomicFile { target, out: BufWriter::new(tmp), hasher: Sha256::new() })
    }

    pub fn write(&mut self, bytes: &[u8]) -> Result<(), CliError> {
        self.hasher.update(bytes);
        self.out.write_all(bytes).context(&format!("writing {}", self.target.display()))
    }

    /// Flushes, renames into place and returns the content hash.
    pub fn commit(self) -> Result<String, CliError> {
        let what = format!("writing {}", self.target.display());
        let tmp = self.out.into_inner().map_err(|e| e.into_error()).context(&what)?;
        tmp.as_file().sync_all().context(&what)?;
        tmp.persist(&self.target).map_err(|e| e.error).context(&what)?;
        Ok(hex(&self.hasher.finalize()))
    }
}

/// Streaming CSV writer on top of [`AtomicFile`].
pub struct CsvWriter {
    file: AtomicFile,
    columns: usize,
    line: String,
}

impl CsvWriter {
    pub fn create(target: PathBuf, header: &[&str]) -> Result<Self, CliError> {
        let mut file = AtomicFile::create(target)?;
        file.write(format!("{}\n", header.join(",")).as_bytes())?;
        Ok(CsvWriter { file, columns: header.len(), line: String::new() })
    }

    pub fn row(&mut self, cells: &[Cell]) -> Result<(), CliError> {
        debug_assert_eq!(cells.len(), self.columns);
        self.line.clear();
        for (i, &c) in cells.iter().enumerate() {
            if i > 0 {
                self.line.push(',');
            }
            format_cell(&mut self.line, c);
        }
        self.line.push('\n');
        let bytes = std::mem::take(&mut self.line);
        let r = self.file.write(bytes.as_bytes());
        self.line = bytes;
        r
    }

    pub fn commit(self) -> Result<String, CliError> {
        self.file.commit()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
}

/// Output directory of one run and the artifacts written into it.
pub struct Artifacts {
    dir: PathBuf,
    entries: Mutex<Vec<ArtifactEntry>>,
}

impl Artifacts {
    pub fn new(dir: PathBuf) -> Self {
        Artifacts { dir, entries: Mutex::new(Vec::new()) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn record(&self, name: &str, sha256: String) {
        self.entries.lock().unwrap().push(ArtifactEntry { file: name.to_string(), sha256 });
    }

    pub fn csv(&self, name: &str, header: &[&str]) -> Result<CsvWriter, CliError> {
        CsvWriter::create(self.path(name), header)
    }

    pub fn finish_csv(&self, name: &str, w: CsvWriter) -> Result<(), CliError> {
        let hash = w.commit()?;
        self.record(name, hash);
        Ok(())
    }

    /// Whole table in one call.
    pub fn write_csv<I>(&self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<Cell>>,
    {
        let mut w = self.csv(name, header)?;
        for r in rows {
            w.row(&r)?;
        }
        self.finish_csv(name, w)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        let mut f = AtomicFile::create(self.path(name))?;
        f.write(text.as_bytes())?;
        let hash = f.commit()?;
        self.record(name, hash);
        Ok(())
    }

    /// `manifest.json`: config hash, versions, wall time and every artifact.
    pub fn write_manifest(&self, run: &Resolved, command: &str, started: Instant) -> Result<(), CliError> {
        let mut artifacts = self.entries.lock().unwrap().clone();
        artifacts.sort_by(|a, b| a.file.cmp(&b.file));
        let manifest = serde_json::json!({
            "experiment": run.config.experiment,
            "command": command,
            "config_sha256": run.hash,
            "config": run.config,
            "versions": {
                "metastable-cli": env!("CARGO_PKG_VERSION"),
                "metastable": metastable_version(),
            },
            "wall_time_s": started.elapsed().as_secs_f64(),
            "artifacts": artifacts,
        });
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let mut f = AtomicFile::create(self.path("manifest.json"))?;
        f.write(text.as_bytes())?;
        f.commit()?;
        Ok(())
    }
}

fn metastable_version() -> &'static str {
    // both crates share the workspace version
    env!("CARGO_PKG_VERSION")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_keep_fifteen_digits() {
        let mut s = String::new();
        format_cell(&mut s, Cell::Num(std::f64::consts::PI));
        assert_eq!(s, "3.14159265358979e0");
        let back: f64 = s.parse().unwrap();
        assert!((back - std::f64::consts::PI).abs() < 1e-14);
        s.clear();
        format_cell(&mut s, Cell::Int(-4));
        format_cell(&mut s, Cell::Empty);
        assert_eq!(s, "-4");
    }

    #[test]
    fn csv_appears_only_on_commit() {
        let dir = tempfile::tempdir().unwrap();
        let arts = Artifacts::new(dir.path().join("run"));
        let mut w = arts.csv("a.csv", &["n", "x"]).unwrap();
        w.row(&[Cell::Int(0), Cell::Num(0.5)]).unwrap();
        assert!(!arts.path("a.csv").exists());
        arts.finish_csv("a.csv", w).unwrap();
        let text = std::fs::read_to_string(arts.path("a.csv")).unwrap();
        assert_eq!(text, "n,x\n0,5.00000000000000e-1\n");
        let entries = arts.entries.lock().unwrap();
        assert_eq!(entries[0].sha256, hex(&Sha256::digest(text.as_bytes())));
    }
}
