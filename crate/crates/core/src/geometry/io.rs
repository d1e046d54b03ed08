//! Point-cloud and dataset file formats.
//!
//! * `.xyz`: ASCII, one point per line, `x y z` separated by single spaces.
//! * dataset directory: `manifest.csv` (`file,label`), `classes.txt` (one
//!   class name per line, optional) and the referenced cloud files.
//! * `.rfpc`: binary cache, `RFPC`, version byte 1, `u32` point count, then
//!   `3N` little-endian `f32` values.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledCloud, PointCloud, Split};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const CLASSES_FILE: &str = "classes.txt";

const RFPC_MAGIC: &[u8; 4] = b"RFPC";
const RFPC_VERSION: u8 = 1;

pub fn save_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in cloud.points() {
        writeln!(w, "{} {} {}", p[0], p[1], p[2]).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_xyz(path: &Path) -> Result<PointCloud> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 3 space-separated values, found {}", fields.len()),
            ));
        }
        let mut p = [0f32; 3];
        for (slot, field) in p.iter_mut().zip(&fields) {
            *slot = field
                .parse::<f32>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, lineno, format!("bad coordinate `{field}`")))?;
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::parse(path, 0, "file contains no points"));
    }
    PointCloud::new(points)
}

pub fn save_rfpc(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut buf = Vec::with_capacity(9 + 12 * cloud.len());
    buf.extend_from_slice(RFPC_MAGIC);
    buf.push(RFPC_VERSION);
    buf.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    for p in cloud.points() {
        for c in p {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_rfpc(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::parse(path, 0, msg);
    if bytes.len() < 9 || &bytes[..4] != RFPC_MAGIC {
        return Err(bad("missing RFPC header"));
    }
    if bytes[4] != RFPC_VERSION {
        return Err(bad("unsupported RFPC version"));
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let body = &bytes[9..];
    if body.len() != 12 * n {
        return Err(bad("payload length does not match point count"));
    }
    let points = body
        .chunks_exact(12)
        .map(|c| [0, 1, 2].map(|d| f32::from_le_bytes(c[4 * d..4 * d + 4].try_into().unwrap())))
        .collect();
    PointCloud::new(points).map_err(|e| bad(&e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    file: String,
    label: usize,
}

/// Write every sample as `<name>.xyz` plus the manifest and class list.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join(MANIFEST_FILE);
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| csv_err(&manifest, e))?;
    for s in &dataset.samples {
        let file = format!("{}.xyz", s.name);
        save_xyz(&dir.join(&file), &s.cloud)?;
        w.serialize(ManifestRow {
            file,
            label: s.label,
        })
        .map_err(|e| csv_err(&manifest, e))?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    let classes = dir.join(CLASSES_FILE);
    let mut text = dataset.class_names.join("\n");
    text.push('\n');
    fs::write(&classes, text).map_err(|e| Error::io(&classes, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::parse(path, line, format!("{kind:?}")),
    }
}

/// Load a dataset directory.
///
/// Without `classes.txt` the class count is one more than the largest label.
pub fn load_dataset(dir: &Path, split: Split) -> Result<Dataset> {
    let classes_path = dir.join(CLASSES_FILE);
    let declared: Option<Vec<String>> = if classes_path.exists() {
        let text = fs::read_to_string(&classes_path).map_err(|e| Error::io(&classes_path, e))?;
        Some(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    } else {
        None
    };

    let manifest = dir.join(MANIFEST_FILE);
    let mut rdr = csv::Reader::from_path(&manifest).map_err(|e| csv_err(&manifest, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(&manifest, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["file", "label"] {
        return Err(Error::parse(&manifest, 1, "expected header `file,label`"));
    }
    let mut samples = Vec::new();
    for (i, row) in rdr.deserialize::<ManifestRow>().enumerate() {
        let lineno = i + 2;
        let row = row.map_err(|e| {
            let msg = format!("{e}");
            Error::parse(&manifest, lineno, msg)
        })?;
        if let Some(names) = &declared {
            if row.label >= names.len() {
                return Err(Error::parse(
                    &manifest,
                    lineno,
                    format!(
                        "label {} out of range for {} classes",
                        row.label,
                        names.len()
                    ),
                ));
            }
        }
        let cloud_path = dir.join(&row.file);
        let cloud = if row.file.ends_with(".rfpc") {
            load_rfpc(&cloud_path)?
        } else {
            load_xyz(&cloud_path)?
        };
        let name = Path::new(&row.file)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| row.file.clone());
        samples.push(LabeledCloud {
            name,
            cloud,
            label: row.label,
        });
    }
    let class_names = declared.unwrap_or_else(|| {
        let c = samples.iter().map(|s| s.label + 1).max().unwrap_or(0);
        (0..c).map(|i| format!("class_{i}")).collect()
    });
    Dataset::new(samples, class_names, split).map_err(|e| Error::parse(&manifest, 0, e.to_string()))
}
