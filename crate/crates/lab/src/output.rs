//! CSV and JSON outputs and the run manifest.
//!
//! Every CSV file starts with a version line `# hyperwalk-csv KIND vN`
//! followed by the column header. Column contracts:
//!
//! | kind          | columns                                   |
//! |---------------|-------------------------------------------|
//! | potential     | prefix, value, depth, r                   |
//! | pressure      | r, theta, k, pressure, gap, depth_delta   |
//! | spheres       | m, count, min, max, sum_sq                |
//! | sphere-sums   | m, sum                                    |
//! | level-sets    | eps, count, eps2_count                    |
//! | spectral      | M, lambda                                 |
//! | martin        | n, ratio, difference                      |
//! | ancona        | length, max_ratio                         |
//! | pair-sum      | n, partial_sum                            |
//! | report        | id, name, pass, measured, tolerance, seconds |

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::hex;

pub const CSV_VERSIONS: &[(&str, u32)] = &[
    ("potential", 1),
    ("pressure", 1),
    ("spheres", 1),
    ("sphere-sums", 1),
    ("level-sets", 1),
    ("spectral", 1),
    ("martin", 1),
    ("ancona", 1),
    ("pair-sum", 1),
    ("report", 1),
];

pub struct Csv {
    kind: &'static str,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(kind: &'static str, columns: &[&'static str]) -> Self {
        assert!(CSV_VERSIONS.iter().any(|(k, _)| *k == kind), "undeclared csv kind {kind}");
        Csv { kind, columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn row(&mut self, values: Vec<String>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(values);
    }

    pub fn render(&self) -> String {
        let version = CSV_VERSIONS.iter().find(|(k, _)| *k == self.kind).unwrap().1;
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields");
        format!("# hyperwalk-csv {} v{version}\n{body}", self.kind)
    }
}

/// Shortest round-trip representation; deterministic across runs.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Serialize, Debug, Clone)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Serialize, Debug, Clone)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config_hash: String,
    pub formats: BTreeMap<String, u32>,
    pub outputs: Vec<OutputFile>,
    pub cache_hits: Vec<String>,
    pub wall_clock_seconds: f64,
    /// Peak resident set size, when the platform reports it.
    pub peak_rss_kib: Option<u64>,
}

/// Collects the files written by one subcommand.
pub struct OutputDir {
    dir: PathBuf,
    subcommand: String,
    config_hash: String,
    outputs: Vec<OutputFile>,
    pub cache_hits: Vec<String>,
    started: Instant,
}

impl OutputDir {
    pub fn create(dir: &Path, subcommand: &str, config_hash: String) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            subcommand: subcommand.to_string(),
            config_hash,
            outputs: Vec::new(),
            cache_hits: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> io::Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.outputs.retain(|o| o.file != name);
        self.outputs.push(OutputFile {
            file: name.to_string(),
            sha256: hex(&Sha256::digest(contents)),
            bytes: contents.len() as u64,
        });
        Ok(())
    }

    pub fn csv(&mut self, name: &str, csv: &Csv) -> io::Result<()> {
        self.write(name, csv.render().as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn finish(self) -> io::Result<RunManifest> {
        let mut formats: BTreeMap<String, u32> =
            CSV_VERSIONS.iter().map(|(k, v)| (format!("csv:{k}"), *v)).collect();
        formats.insert("cache:ball".into(), crate::cache::BALL_VERSION);
        formats.insert("cache:green".into(), crate::cache::GREEN_VERSION);
        let m = RunManifest {
            tool: "hyperwalk",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            config_hash: self.config_hash,
            formats,
            outputs: self.outputs,
            cache_hits: self.cache_hits,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            peak_rss_kib: peak_rss_kib(),
        };
        let mut s = serde_json::to_string_pretty(&m).map_err(io::Error::other)?;
        s.push('\n');
        fs::write(self.dir.join("manifest.json"), s)?;
        Ok(m)
    }
}

fn peak_rss_kib() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_quoting() {
        let mut c = Csv::new("potential", &["prefix", "value", "depth", "r"]);
        c.row(vec!["a1 b1".into(), num(-0.5), "2".into(), num(1.1)]);
        c.row(vec!["x,y".into(), num(0.1), "2".into(), num(1.1)]);
        let s = c.render();
        assert!(s.starts_with("# hyperwalk-csv potential v1\nprefix,value,depth,r\n"));
        assert!(s.contains("a1 b1,-0.5,2,1.1\n"));
        assert!(s.contains("\"x,y\""));
    }

    #[test]
    fn manifest_lists_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), "test", "abc".into()).unwrap();
        out.write("a.txt", b"hello").unwrap();
        let m = out.finish().unwrap();
        assert_eq!(m.outputs[0].sha256, "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
        assert!(dir.path().join("manifest.json").exists());
    }
}
