//! Persistence: binary snapshots, CSV emitters and readers, and the run
//! manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::fnv1a;
use crate::diagnostics::{DiagnosticsRecord, WindowStats};
use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::lp::BlockNorms;
use crate::spectral::{PhysicalField, Spectral, SpectralVelocity};
use crate::sync::SyncRecord;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"NSE3DSNP";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_BYTES: usize = 8 + 4 + 4 + 8 + 8 + 8;

/// A velocity field in physical space, as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub grid: TorusGrid,
    pub nu: f64,
    pub t: f64,
    pub field: PhysicalField,
}

impl Snapshot {
    pub fn from_velocity(spectral: &Spectral, u: &SpectralVelocity, nu: f64) -> Self {
        Self {
            grid: spectral.grid(),
            nu,
            t: u.time(),
            field: spectral.to_physical(u.field()),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let n = self.grid.n();
        let mut out = Vec::with_capacity(HEADER_BYTES + 24 * self.grid.len());
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&self.grid.length().to_le_bytes());
        out.extend_from_slice(&self.nu.to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        for c in self.field.components() {
            for v in c {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Snapshot {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < HEADER_BYTES {
            return Err(bad(format!(
                "{} bytes is shorter than the header",
                bytes.len()
            )));
        }
        if &bytes[..8] != SNAPSHOT_MAGIC {
            return Err(bad("wrong magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != SNAPSHOT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = u32_at(12) as usize;
        let grid = TorusGrid::new(n, f64_at(16)).map_err(|e| bad(e.to_string()))?;
        let (nu, t) = (f64_at(24), f64_at(32));
        let want = HEADER_BYTES + 24 * grid.len();
        if bytes.len() != want {
            return Err(bad(format!(
                "expected {want} bytes for N = {n}, found {}",
                bytes.len()
            )));
        }
        let mut comps: [Vec<f64>; 3] = Default::default();
        for (c, comp) in comps.iter_mut().enumerate() {
            let base = HEADER_BYTES + 8 * c * grid.len();
            *comp = (0..grid.len()).map(|i| f64_at(base + 8 * i)).collect();
        }
        Ok(Self {
            grid,
            nu,
            t,
            field: PhysicalField::new(grid, comps),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }

    /// Back to a dealiased, divergence-free spectral velocity.
    pub fn velocity(&self, spectral: &Spectral) -> Result<SpectralVelocity> {
        self.grid.same_as(&spectral.grid())?;
        Ok(spectral
            .leray_project(spectral.to_spectral(&self.field))
            .with_time(self.t))
    }
}

pub fn snapshot_name(step: u64) -> String {
    format!("snap_{step:08}.bin")
}

/// Snapshot files in `dir`, sorted by name.
pub fn list_snapshots(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e == "bin") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// A comment line with the configuration hash, a header row, then records.
pub fn csv_bytes<I>(config_hash: &str, header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut buf = format!("# config_hash={config_hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).expect("writing to memory");
        for r in rows {
            w.write_record(&r).expect("writing to memory");
        }
        w.flush().expect("writing to memory");
    }
    buf
}

pub const DIAGNOSTICS_HEADER: [&str; 9] = [
    "t",
    "energy",
    "enstrophy",
    "Lambda",
    "Q",
    "d_window",
    "eps_window",
    "kappa_d_window",
    "G",
];

/// Per-record diagnostics; window columns are filled from the first window
/// covering the record and left empty elsewhere.
pub fn diagnostics_csv(
    config_hash: &str,
    grid: TorusGrid,
    records: &[DiagnosticsRecord],
    windows: &[WindowStats],
    g: f64,
) -> Vec<u8> {
    let rows = records.iter().map(|r| {
        let tol = 1e-9 * windows.first().map_or(1.0, |w| w.window);
        let w = windows
            .iter()
            .find(|w| r.t >= w.t_start - tol && r.t <= w.t_start + w.window + tol);
        vec![
            num(r.t),
            num(r.energy),
            num(r.enstrophy),
            opt(r.lambda(grid)),
            r.determining.map(|d| d.q.to_string()).unwrap_or_default(),
            opt(w.map(|w| w.d)),
            opt(w.map(|w| w.eps)),
            opt(w.map(|w| w.kappa_d)),
            num(g),
        ]
    });
    csv_bytes(config_hash, &DIAGNOSTICS_HEADER, rows)
}

pub const SHELLS_HEADER: [&str; 4] = ["q", "lambda_q", "block_l2", "block_linf"];

pub fn shells_csv(config_hash: &str, shells: &[BlockNorms]) -> Vec<u8> {
    let rows = shells
        .iter()
        .map(|b| vec![b.q.to_string(), num(b.lambda), num(b.l2), num(b.linf)]);
    csv_bytes(config_hash, &SHELLS_HEADER, rows)
}

pub const WINDOWS_HEADER: [&str; 15] = [
    "t_start",
    "T",
    "avg_enstrophy",
    "d",
    "eps",
    "kappa_d",
    "avg_Lambda",
    "avg_Lambda_log",
    "avg_Lambda_log_literal",
    "G",
    "C_emp",
    "margin_enstrophy",
    "margin_enstrophy_verbatim",
    "margin_kappa",
    "margin_kappa_verbatim",
];

pub fn windows_csv(config_hash: &str, windows: &[WindowStats]) -> Vec<u8> {
    let rows = windows.iter().map(|w| {
        vec![
            num(w.t_start),
            num(w.window),
            num(w.avg_enstrophy),
            num(w.d),
            num(w.eps),
            num(w.kappa_d),
            num(w.avg_lambda),
            num(w.avg_lambda_log),
            num(w.avg_lambda_log_literal),
            num(w.g),
            num(w.c_emp),
            num(w.enstrophy_bound.consistent.margin),
            num(w.enstrophy_bound.verbatim.margin),
            num(w.kappa_bound.consistent.margin),
            num(w.kappa_bound.verbatim.margin),
        ]
    });
    csv_bytes(config_hash, &WINDOWS_HEADER, rows)
}

pub const SYNC_HEADER: [&str; 9] = [
    "t",
    "Q",
    "Lambda",
    "w_Hs",
    "w_L2",
    "enforced",
    "u_Hs",
    "low_residual",
    "injection",
];

pub fn sync_csv(config_hash: &str, records: &[SyncRecord]) -> Vec<u8> {
    let rows = records.iter().map(|r| {
        vec![
            num(r.t),
            r.q.to_string(),
            num(r.lambda),
            num(r.w_hs),
            num(r.w_l2),
            (r.enforced as u8).to_string(),
            num(r.u_hs),
            num(r.low_residual),
            num(r.injection),
        ]
    });
    csv_bytes(config_hash, &SYNC_HEADER, rows)
}

/// A CSV file read back: hash comment, header and raw rows.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub config_hash: Option<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config_hash = text
            .lines()
            .next()
            .and_then(|l| l.strip_prefix("# config_hash="))
            .map(str::to_owned);
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let parse_err = |e: csv::Error| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        };
        let header = r
            .headers()
            .map_err(parse_err)?
            .iter()
            .map(str::to_owned)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_owned).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(parse_err)?;
        Ok(Self {
            config_hash,
            header,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Column `name` as numbers; empty cells become `None`.
    pub fn floats(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let c = self
            .column(name)
            .ok_or_else(|| Error::InsufficientData(format!("no column {name:?}")))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| match r[c].as_str() {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| Error::Parse {
                    line: i + 3,
                    message: format!("{name}: not a number: {s:?}"),
                }),
            })
            .collect()
    }
}

/// One emitted file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    /// FNV-1a 64 of the file contents, hex.
    pub fnv1a: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub start_wall: f64,
    pub end_wall: f64,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Paths whose size or checksum no longer match.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.files {
            let path = dir.join(&f.path);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if bytes.len() as u64 != f.bytes || format!("{:016x}", fnv1a(&bytes)) != f.fnv1a {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &FileEntry> {
        self.files.iter().filter(|f| f.path.ends_with(".bin"))
    }
}

fn wall_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// An output directory that records everything written into it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    start_wall: f64,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            start_wall: wall_now(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        let entry = FileEntry {
            path: rel.to_owned(),
            bytes: bytes.len() as u64,
            fnv1a: format!("{:016x}", fnv1a(bytes)),
        };
        match self.files.iter_mut().find(|f| f.path == rel) {
            Some(f) => *f = entry,
            None => self.files.push(entry),
        }
        Ok(path)
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(self, config_hash: &str) -> Result<RunManifest> {
        let manifest = RunManifest {
            config_hash: config_hash.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            start_wall: self.start_wall,
            end_wall: wall_now(),
            files: self.files,
        };
        let path = self.root.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}
