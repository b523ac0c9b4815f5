//! Output artifacts: reports, per-replication records, plot data, manifests
//! and the optional binary path dump.
//!
//! Machine files carry 17 significant decimal digits; console tables carry 6.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use maxdisc_core::extremes::MaxSample;
use serde::Serialize;
use serde_json::Value;

use crate::verify::{ExperimentReport, PointResult, SweepReport};

/// Significant digits in machine-readable files.
pub const MACHINE_DIGITS: usize = 17;
/// Significant digits in console tables.
pub const CONSOLE_DIGITS: usize = 6;

/// Magic bytes opening a path dump.
pub const DUMP_MAGIC: &[u8; 8] = b"MXDPATH1";

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct OutputError {
    pub path: String,
    #[source]
    pub source: std::io::Error,
}

/// Decimal rendering of `v` with `digits` significant digits. Positional for
/// moderate magnitudes, scientific otherwise.
pub fn fmt_sig(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-5..digits as i32).contains(&exp) {
        format!("{:.*}", (digits as i32 - 1 - exp) as usize, v)
    } else {
        sci
    }
}

pub fn fmt17(v: f64) -> String {
    fmt_sig(v, MACHINE_DIGITS)
}

pub fn fmt6(v: f64) -> String {
    fmt_sig(v, CONSOLE_DIGITS)
}

/// Pretty JSON with object keys sorted and every float at 17 significant
/// digits. Non-finite floats become `null`.
pub fn to_json(value: &impl Serialize) -> String {
    let v = serde_json::to_value(value).expect("report types serialise");
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| out.extend(std::iter::repeat_n("  ", d));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => write!(out, "{u}").unwrap(),
            (None, Some(i), _) => write!(out, "{i}").unwrap(),
            (None, None, Some(f)) if f.is_finite() => out.push_str(&fmt17(f)),
            _ => out.push_str("null"),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(items) => {
            if items.iter().all(|i| !i.is_object() && !i.is_array()) {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, item, depth);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, depth + 1);
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                pad(out, depth + 1);
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push_str(": ");
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push('}');
        }
    }
}

/// Collects written files so the manifest can list them.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, OutputError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|source| OutputError { path: root.display().to_string(), source })?;
        Ok(Self { root, written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, OutputError> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|source| OutputError { path: path.display().to_string(), source })?;
        self.record(name);
        Ok(path)
    }

    /// Lists a file written by other means.
    pub fn write_listed(&mut self, name: &str) {
        self.record(name);
    }

    fn record(&mut self, name: &str) {
        if !self.written.iter().any(|n| n == name) {
            self.written.push(name.to_string());
        }
    }
}

fn coordinate_columns(prefix: &str, p: usize) -> Vec<String> {
    if p == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=p).map(|k| format!("{prefix}_{k}")).collect()
    }
}

fn coords(values: &[f64]) -> impl Iterator<Item = String> + '_ {
    values.iter().map(|&v| if v.is_infinite() { "inf".into() } else { fmt17(v) })
}

/// Per-lattice-point table.
pub fn report_csv(report: &ExperimentReport, p: usize) -> String {
    let mut header = coordinate_columns("x", p);
    header.extend(coordinate_columns("y", p));
    header.extend(["empirical", "stderr", "theoretical", "theoretical_error", "z", "within_tolerance"].map(String::from));
    let mut out = header.join(",");
    out.push('\n');
    for pt in &report.points {
        let mut row: Vec<String> = coords(&pt.x).chain(coords(&pt.y)).collect();
        row.extend([pt.empirical, pt.stderr, pt.theoretical, pt.theoretical_error, pt.z].map(fmt17));
        row.push(pt.within_tolerance.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Overlay of empirical and theoretical distribution functions, one row per
/// lattice point. The header comment line documents the columns.
pub fn overlay_csv(points: &[PointResult], p: usize) -> String {
    let mut header = coordinate_columns("x", p);
    header.extend(coordinate_columns("y", p));
    header.extend(["empirical", "stderr", "theoretical"].map(String::from));
    let mut out = format!(
        "# columns: {} (lattice point; empirical joint CDF with its binomial stderr; limit CDF)\n{}\n",
        header.join(" "),
        header.join(",")
    );
    for pt in points {
        let mut row: Vec<String> = coords(&pt.x).chain(coords(&pt.y)).collect();
        row.extend([pt.empirical, pt.stderr, pt.theoretical].map(fmt17));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Sup-distance against `ln T`, one row per horizon.
pub fn sweep_csv(sweep: &SweepReport) -> String {
    let mut out = String::from(
        "# columns: log_horizon sup_distance sup_stderr verdict (largest |empirical - limit| over the lattice per horizon)\n\
         log_horizon,sup_distance,sup_stderr,verdict\n",
    );
    for r in &sweep.rows {
        writeln!(out, "{},{},{},{}", fmt17(r.log_horizon), fmt17(r.sup_distance), fmt17(r.sup_stderr), r.verdict).unwrap();
    }
    out
}

/// Per-replication records: `rep, k, m_cont, m_grid, x_hat, y_hat`.
pub fn write_samples(w: &mut impl std::io::Write, samples: &[Vec<MaxSample>]) -> std::io::Result<()> {
    writeln!(w, "rep,k,m_cont,m_grid,x_hat,y_hat")?;
    for (rep, row) in samples.iter().enumerate() {
        for (k, s) in row.iter().enumerate() {
            writeln!(w, "{rep},{k},{},{},{},{}", fmt17(s.m_cont), fmt17(s.m_grid), fmt17(s.x_hat), fmt17(s.y_hat))?;
        }
    }
    Ok(())
}

pub fn samples_csv(samples: &[Vec<MaxSample>]) -> String {
    let mut buf = Vec::new();
    write_samples(&mut buf, samples).expect("in-memory write");
    String::from_utf8(buf).expect("ascii")
}

/// Binary path dump: magic, then `p`, `n` as little-endian u64, `h` as f64,
/// `seed` as u64, then for every replication `p` columns of `n` f64 values.
pub struct PathDump {
    file: std::io::BufWriter<std::fs::File>,
    path: PathBuf,
}

impl PathDump {
    pub fn create(path: &Path, p: usize, n: usize, h: f64, seed: u64) -> Result<Self, OutputError> {
        let err = |source| OutputError { path: path.display().to_string(), source };
        let file = std::fs::File::create(path).map_err(err)?;
        let mut file = std::io::BufWriter::new(file);
        let mut header = Vec::with_capacity(40);
        header.extend_from_slice(DUMP_MAGIC);
        header.extend_from_slice(&(p as u64).to_le_bytes());
        header.extend_from_slice(&(n as u64).to_le_bytes());
        header.extend_from_slice(&h.to_le_bytes());
        header.extend_from_slice(&seed.to_le_bytes());
        file.write_all(&header).map_err(err)?;
        Ok(Self { file, path: path.to_path_buf() })
    }

    pub fn push(&mut self, column: &[f64]) -> Result<(), OutputError> {
        for v in column {
            self.file
                .write_all(&v.to_le_bytes())
                .map_err(|source| OutputError { path: self.path.display().to_string(), source })?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), OutputError> {
        self.file.flush().map_err(|source| OutputError { path: self.path.display().to_string(), source })
    }
}

/// Header of a path dump: `(p, n, h, seed)`.
pub fn read_dump_header(bytes: &[u8]) -> Option<(usize, usize, f64, u64)> {
    if bytes.len() < 40 || &bytes[..8] != DUMP_MAGIC {
        return None;
    }
    let word = |i: usize| <[u8; 8]>::try_from(&bytes[8 + 8 * i..16 + 8 * i]).unwrap();
    Some((
        u64::from_le_bytes(word(0)) as usize,
        u64::from_le_bytes(word(1)) as usize,
        f64::from_le_bytes(word(2)),
        u64::from_le_bytes(word(3)),
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub version: &'static str,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    pub runtime_seconds: f64,
    pub workers: usize,
    pub files: Vec<String>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl RunManifest {
    pub fn start(command: impl Into<String>, config_hash: Option<String>, seed: Option<u64>, workers: usize) -> Self {
        Self {
            command: command.into(),
            config_hash,
            seed,
            version: env!("CARGO_PKG_VERSION"),
            started: unix_now(),
            finished: 0.0,
            runtime_seconds: 0.0,
            workers,
            files: Vec::new(),
        }
    }

    /// Stamps the end time, lists the files in `out` and writes
    /// `manifest.json` there.
    pub fn finish(mut self, out: &mut OutputDir) -> Result<Self, OutputError> {
        self.finished = unix_now();
        self.runtime_seconds = self.finished - self.started;
        self.files = out.files().to_vec();
        self.files.push("manifest.json".into());
        out.write("manifest.json", to_json(&self).as_bytes())?;
        Ok(self)
    }
}
