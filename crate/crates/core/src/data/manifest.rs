//! Line-oriented dataset manifests.
//!
//! ```text
//! image,age,gender,subject,x1,y1,...,x68,y68
//! images/s0001_0.ppm,34.5,1,s0001,12.25,30.5,...
//! ```
//!
//! `image` is relative to the manifest's directory, `gender` is 0 (male) or
//! 1 (female), and every float is written in shortest round-trip decimal form
//! so values reload bit-exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{Gender, Image, SampleRecord};
use crate::error::{MgaError, Result, RowError};
use crate::geometry::{LandmarkSet, NUM_LANDMARKS};

const FIXED_COLUMNS: [&str; 4] = ["image", "age", "gender", "subject"];

pub fn manifest_header() -> String {
    let mut h = FIXED_COLUMNS.join(",");
    for i in 1..=NUM_LANDMARKS {
        write!(h, ",x{i},y{i}").unwrap();
    }
    h
}

pub fn format_manifest_row(r: &SampleRecord) -> String {
    let g = r.gender.index();
    let mut row = format!("{},{},{g},{}", r.image_ref, r.age, r.subject);
    for v in r.landmarks.to_flat() {
        write!(row, ",{v}").unwrap();
    }
    row
}

fn parse_row(fields: &csv::StringRecord, base: &Path) -> std::result::Result<SampleRecord, String> {
    let expected = FIXED_COLUMNS.len() + 2 * NUM_LANDMARKS;
    let field = |i: usize, name: &str| -> std::result::Result<&str, String> {
        match fields.get(i).map(str::trim) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(format!("missing field `{name}`")),
        }
    };
    let image_ref = field(0, "image")?.to_owned();
    let age: f64 = field(1, "age")?
        .parse()
        .map_err(|_| format!("age {:?} is not a number", fields.get(1).unwrap_or("")))?;
    let gender = match field(2, "gender")? {
        "0" => Gender::Male,
        "1" => Gender::Female,
        other => return Err(format!("gender must be 0 or 1, got {other:?}")),
    };
    let subject = field(3, "subject")?.to_owned();
    if fields.len() != expected {
        return Err(format!(
            "expected {} landmark values ({NUM_LANDMARKS} points), got {}",
            2 * NUM_LANDMARKS,
            fields.len().saturating_sub(FIXED_COLUMNS.len())
        ));
    }
    let coords = (FIXED_COLUMNS.len()..expected)
        .map(|i| {
            let v = fields[i].trim();
            v.parse::<f64>().map_err(|_| format!("landmark value {v:?} is not a number"))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let landmarks = LandmarkSet::from_flat(&coords).map_err(|e| e.to_string())?;
    let image = Image::load(&base.join(&image_ref)).map_err(|e| format!("unreadable image: {e}"))?;
    let record = SampleRecord {
        image_ref,
        image,
        landmarks,
        age,
        gender,
        subject,
    };
    record.validate().map_err(|e| e.to_string())?;
    Ok(record)
}

/// Reads and validates a manifest, loading each referenced image. Every bad
/// row is reported with its line number.
pub fn load_manifest(path: &Path) -> Result<Vec<SampleRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| MgaError::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(i + 1, |p| p.line() as usize);
                errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(i + 1, |p| p.line() as usize);
        if row.iter().all(|f| f.trim().is_empty()) || (i == 0 && row.get(0).map(str::trim) == Some("image")) {
            continue;
        }
        match parse_row(&row, &base) {
            Ok(r) => records.push(r),
            Err(message) => errors.push(RowError { line, message }),
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(MgaError::Load {
            path: path.to_path_buf(),
            errors,
        })
    }
}

/// Writes the manifest and every image next to it under its `image_ref`.
pub fn save_manifest(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = manifest_header();
    out.push('\n');
    for r in records {
        let image_path = base.join(&r.image_ref);
        if let Some(dir) = image_path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| MgaError::io(dir, e))?;
        }
        r.image.save(&image_path)?;
        out.push_str(&format_manifest_row(r));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| MgaError::io(path, e))
}
