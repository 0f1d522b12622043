//! KPCF snapshot files, centre-line CSVs, run manifests and crest finding.
//!
//! KPCF layout, all little-endian:
//!
//! | bytes  | content              |
//! |--------|----------------------|
//! | 0..4   | `b"KPCF"`            |
//! | 4..8   | version, `u32`       |
//! | 8..12  | `n_x`, `u32`         |
//! | 12..16 | `n_y`, `u32`         |
//! | 16..24 | time, `f64`          |
//! | 24..32 | reserved, zero       |
//! | 32..   | `n_x n_y` `f64`, `ξ`-major |

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ScenarioConfig, ScenarioError};
use crate::conformal::{StripMap, SMALL_AMPLITUDE_LIMIT};
use crate::spectral::{PeriodicGrid, SpectralField};

pub const KPCF_MAGIC: [u8; 4] = *b"KPCF";
pub const KPCF_VERSION: u32 = 1;
pub const KPCF_HEADER_LEN: usize = 32;

/// Hex SHA-256 of the little-endian value bytes.
pub fn payload_checksum(field: &SpectralField) -> String {
    let mut h = Sha256::new();
    for v in field.values() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRecord {
    pub time: f64,
    pub field: SpectralField,
    pub variable: String,
    pub checksum: String,
}

impl SnapshotRecord {
    pub fn new(time: f64, field: SpectralField, variable: &str) -> Self {
        let checksum = payload_checksum(&field);
        Self {
            time,
            field,
            variable: variable.to_string(),
            checksum,
        }
    }

    pub fn file_stem(&self) -> String {
        format!("{}_t{:.6}", self.variable, self.time)
    }
}

pub fn encode_kpcf(time: f64, field: &SpectralField) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(KPCF_HEADER_LEN + 8 * g.len());
    out.extend_from_slice(&KPCF_MAGIC);
    out.extend_from_slice(&KPCF_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.n_x() as u32).to_le_bytes());
    out.extend_from_slice(&(g.n_y() as u32).to_le_bytes());
    out.extend_from_slice(&time.to_le_bytes());
    out.extend_from_slice(&[0u8; 8]);
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decoded KPCF contents: time, `n_x`, `n_y` and the raw values.
pub fn decode_kpcf(bytes: &[u8]) -> Result<(f64, usize, usize, Vec<f64>), String> {
    if bytes.len() < KPCF_HEADER_LEN {
        return Err(format!("{} bytes is shorter than the header", bytes.len()));
    }
    if bytes[0..4] != KPCF_MAGIC {
        return Err(format!("bad magic {:?}", &bytes[0..4]));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = word(4);
    if version != KPCF_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let (n_x, n_y) = (word(8) as usize, word(12) as usize);
    let time = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = KPCF_HEADER_LEN + 8 * n_x * n_y;
    if bytes.len() != expected {
        return Err(format!(
            "expected {expected} bytes for {n_x}x{n_y}, found {}",
            bytes.len()
        ));
    }
    let values = bytes[KPCF_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((time, n_x, n_y, values))
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ScenarioError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        ScenarioError::io(path, e)
    })
}

/// Writes `<stem>.kpcf` and `<stem>_centerline.csv` into `dir` and returns
/// both paths.
pub fn write_snapshot(
    rec: &SnapshotRecord,
    dir: &Path,
) -> Result<(PathBuf, PathBuf), ScenarioError> {
    fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))?;
    let stem = rec.file_stem();
    let bin = dir.join(format!("{stem}.kpcf"));
    write_atomic(&bin, &encode_kpcf(rec.time, &rec.field))?;

    let g = rec.field.grid();
    let line = rec.field.x_line(g.center_line());
    let mut csv = String::from("coordinate,eta\n");
    for (i, v) in line.iter().enumerate() {
        csv.push_str(&format!("{:.17e},{:.17e}\n", g.x_node(i), v));
    }
    let centre = dir.join(format!("{stem}_centerline.csv"));
    write_atomic(&centre, csv.as_bytes())?;
    Ok((bin, centre))
}

/// Reads a KPCF file. The grid supplies the box lengths, which the file
/// does not store; its sizes must match the header.
pub fn read_snapshot(
    path: &Path,
    grid: &PeriodicGrid,
    variable: &str,
) -> Result<SnapshotRecord, ScenarioError> {
    let bytes = fs::read(path).map_err(|e| ScenarioError::io(path, e))?;
    let format = |reason: String| ScenarioError::Format {
        path: path.to_path_buf(),
        reason,
    };
    let (time, n_x, n_y, values) = decode_kpcf(&bytes).map_err(format)?;
    if (n_x, n_y) != (grid.n_x(), grid.n_y()) {
        return Err(format(format!(
            "file holds {n_x}x{n_y}, expected {}x{}",
            grid.n_x(),
            grid.n_y()
        )));
    }
    let field = SpectralField::new(*grid, values).map_err(|e| format(e.to_string()))?;
    Ok(SnapshotRecord::new(time, field, variable))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub variable: String,
    pub time: f64,
    pub file: String,
    pub centerline: String,
    pub checksum: String,
}

/// Convergence summary of the strip-map solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub iterations: usize,
    pub residual: f64,
    pub min_m: f64,
    pub max_m: f64,
    pub max_abs_eps_m: f64,
    pub small_amplitude_warning: bool,
}

impl MapReport {
    pub fn new(map: &StripMap, eps: f64) -> Self {
        let m = map.m();
        let (min_m, max_m) = m
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        let max_abs_eps_m = m.iter().fold(0.0f64, |a, v| a.max((v - 1.0).abs()));
        Self {
            iterations: map.iterations(),
            residual: map.residual(),
            min_m,
            max_m,
            max_abs_eps_m,
            small_amplitude_warning: eps > 0.0 && max_abs_eps_m > SMALL_AMPLITUDE_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ScenarioConfig,
    pub solver_version: String,
    pub files: Vec<ManifestEntry>,
    pub strip_map_csv: String,
    pub timings: BTreeMap<String, f64>,
    pub strip_map: MapReport,
    pub eps_over_mu2: f64,
    pub gamma_over_mu: f64,
    pub regime_consistent: bool,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
}

impl RunManifest {
    pub fn entries<'a>(
        &'a self,
        variable: &'a str,
    ) -> impl Iterator<Item = &'a ManifestEntry> + 'a {
        self.files.iter().filter(move |e| e.variable == variable)
    }
}

pub fn write_manifest(m: &RunManifest, dir: &Path) -> Result<PathBuf, ScenarioError> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(m).expect("manifest is always serializable");
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, ScenarioError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| ScenarioError::io(&path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crest {
    pub x_peak: f64,
    pub amplitude: f64,
}

/// Global maximum along the `y = 0` line, refined by a parabola through
/// the peak node and its two periodic neighbours. Ties go to the smaller
/// coordinate.
pub fn crest_position(field: &SpectralField) -> Result<Crest, ScenarioError> {
    let g = field.grid();
    let line = field.x_line(g.center_line());
    if line.iter().all(|v| *v == 0.0) {
        return Err(ScenarioError::NoCrest);
    }
    let mut best = 0;
    for (i, &v) in line.iter().enumerate() {
        if v > line[best] {
            best = i;
        }
    }
    let n = line.len();
    let (ym, y0, yp) = (line[(best + n - 1) % n], line[best], line[(best + 1) % n]);
    let curvature = ym - 2.0 * y0 + yp;
    let (offset, amplitude) = if curvature < 0.0 {
        let s = 0.5 * (ym - yp) / curvature;
        (s, y0 - 0.25 * (ym - yp) * s)
    } else {
        (0.0, y0)
    };
    Ok(Crest {
        x_peak: g.x_node(best) + offset * g.dx(),
        amplitude,
    })
}
