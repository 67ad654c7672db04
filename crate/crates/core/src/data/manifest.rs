//! Dataset manifest: a CSV with the exact header
//! `patient_id,left_path,right_path,left_label,right_label,gender,age_group`.
//! Image paths are relative to the manifest's directory unless absolute.

use std::path::{Path, PathBuf};

use super::{load_pgm, resize_bilinear, AgeGroup, Gender, LobeSample};
use crate::error::{Error, Result};
use crate::labelfuse::LobeClass;

pub const MANIFEST_HEADER: [&str; 7] = [
    "patient_id",
    "left_path",
    "right_path",
    "left_label",
    "right_label",
    "gender",
    "age_group",
];

/// One manifest line as written to disk.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub patient_id: String,
    pub left_path: PathBuf,
    pub right_path: PathBuf,
    pub left_label: LobeClass,
    pub right_label: LobeClass,
    pub gender: Gender,
    pub age_group: AgeGroup,
}

/// Reads the manifest at `path` and loads every image pair, resizing both
/// lobes to `image_size × image_size`.
pub fn load_manifest(path: impl AsRef<Path>, image_size: usize) -> Result<Vec<LobeSample>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != MANIFEST_HEADER {
        return Err(Error::Manifest(format!(
            "header {:?}, expected {}",
            header,
            MANIFEST_HEADER.join(",")
        )));
    }
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let field = |k: usize| record.get(k).unwrap_or("").trim();
        let label = |k: usize, name: &'static str| -> Result<LobeClass> {
            field(k).parse().map_err(|_| Error::UnknownLabel {
                row,
                field: name,
                value: field(k).to_string(),
            })
        };
        let left_label = label(3, "left_label")?;
        let right_label = label(4, "right_label")?;
        let gender = field(5).parse().map_err(|_| Error::UnknownLabel {
            row,
            field: "gender",
            value: field(5).to_string(),
        })?;
        let age_group = field(6).parse().map_err(|_| Error::UnknownLabel {
            row,
            field: "age_group",
            value: field(6).to_string(),
        })?;
        let load = |k: usize| -> Result<_> {
            let p = Path::new(field(k));
            let full = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            Ok(resize_bilinear(&load_pgm(full)?, image_size))
        };
        samples.push(LobeSample {
            patient_id: field(0).to_string(),
            left_image: load(1)?,
            right_image: load(2)?,
            left_label,
            right_label,
            gender,
            age_group,
        });
    }
    Ok(samples)
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(MANIFEST_HEADER)?;
    for r in rows {
        w.write_record([
            r.patient_id.as_str(),
            &r.left_path.to_string_lossy(),
            &r.right_path.to_string_lossy(),
            r.left_label.name(),
            r.right_label.name(),
            r.gender.name(),
            r.age_group.name(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
