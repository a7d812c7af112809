//! Artifact writing: CSV tables, JSON sidecars and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Formats a float with 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

/// An output directory that remembers every file written into it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Mutex<Vec<PathBuf>>,
}

impl OutputDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Mutex::new(Vec::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn target(&self, rel: &str) -> anyhow::Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(path)
    }

    fn register(&self, rel: &str) {
        let mut files = self.files.lock().expect("output registry poisoned");
        let rel = PathBuf::from(rel);
        if !files.contains(&rel) {
            files.push(rel);
        }
    }

    /// Writes a numeric table.
    pub fn write_csv(&self, rel: &str, header: &[String], rows: &[Vec<f64>]) -> anyhow::Result<()> {
        let text: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|&x| fmt_f64(x)).collect()).collect();
        self.write_csv_text(rel, header, &text)
    }

    /// Writes a table of preformatted fields.
    pub fn write_csv_text(&self, rel: &str, header: &[String], rows: &[Vec<String>]) -> anyhow::Result<()> {
        let path = self.target(rel)?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_path(&path)
            .with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.register(rel);
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, rel: &str, value: &T) -> anyhow::Result<()> {
        let path = self.target(rel)?;
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.register(rel);
        Ok(())
    }

    /// Relative paths written so far, sorted.
    pub fn files(&self) -> Vec<PathBuf> {
        let mut f = self.files.lock().expect("output registry poisoned").clone();
        f.sort();
        f
    }

    /// Checksums of every registered file.
    pub fn checksums(&self) -> anyhow::Result<Vec<OutputFile>> {
        self.files()
            .into_iter()
            .map(|rel| {
                let bytes = fs::read(self.root.join(&rel)).with_context(|| format!("reading {}", rel.display()))?;
                Ok(OutputFile {
                    path: rel.to_string_lossy().replace('\\', "/"),
                    bytes: bytes.len() as u64,
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// A named pass/fail check embedded in an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Provenance record written next to the outputs as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit: String,
    pub version: String,
    pub kind: String,
    /// The effective configuration, after overrides.
    pub config: serde_json::Value,
    pub threads: usize,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputFile>,
    pub assertions: Vec<Assertion>,
    pub pass: bool,
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn failed(&self) -> Vec<&Assertion> {
        self.assertions.iter().filter(|a| !a.pass).collect()
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join(Self::FILE), text).context("writing manifest")
    }
}
