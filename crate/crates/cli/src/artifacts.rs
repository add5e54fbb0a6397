//! Output directory handling. Every artifact except `manifest.json` is a pure
//! function of the resolved configuration.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub struct Output {
    dir: PathBuf,
    written: Vec<String>,
}

/// Shortest round-trip decimal form; `inf`/`-inf`/`NaN` are spelled out.
pub fn num(x: f64) -> String {
    format!("{x}")
}

impl Output {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Names of the artifacts written so far, in order.
    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn record(&mut self, name: &str) -> PathBuf {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let path = self.record(name);
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(path, text)
    }

    pub fn text(&mut self, name: &str, text: &str) -> io::Result<()> {
        let path = self.record(name);
        fs::write(path, text)
    }

    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> io::Result<()> {
        let path = self.record(name);
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()
    }
}

/// `prefix0, prefix1, ...`.
pub fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}
