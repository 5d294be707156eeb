//! Face box lists: one `path x y w h` record per line, whitespace-separated.
//!
//! An image may appear on several lines, one per face; record order is
//! preserved. Bad records are errors, not skips — a truncated or zero-area
//! box in the list means the upstream detector output is broken and the run
//! should say so.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::FaceBox;

/// One detected face in one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceRecord {
    pub image: PathBuf,
    pub face: FaceBox,
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses a face box list. `path` is only used to label errors.
pub fn parse_face_boxes(text: &str, path: &Path) -> Result<Vec<FaceRecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(parse_error(
                path,
                ln,
                format!("expected 'path x y w h', found {} fields", fields.len()),
            ));
        }
        let mut nums = [0.0f64; 4];
        for (slot, raw) in nums.iter_mut().zip(&fields[1..]) {
            *slot = raw
                .parse()
                .map_err(|_| parse_error(path, ln, format!("unreadable number '{raw}'")))?;
            if !slot.is_finite() {
                return Err(parse_error(path, ln, "non-finite box coordinate"));
            }
        }
        let [x, y, w, h] = nums;
        if w <= 0.0 || h <= 0.0 {
            return Err(parse_error(
                path,
                ln,
                format!("box must have positive area, got {w}x{h}"),
            ));
        }
        records.push(FaceRecord {
            image: PathBuf::from(fields[0]),
            face: FaceBox {
                x,
                y,
                width: w,
                height: h,
            },
        });
    }
    Ok(records)
}

pub fn load_face_boxes<P: AsRef<Path>>(path: P) -> Result<Vec<FaceRecord>> {
    let path = path.as_ref();
    parse_face_boxes(&fs::read_to_string(path)?, path)
}

/// Renders records in the format [`parse_face_boxes`] reads.
pub fn format_face_boxes(records: &[FaceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!(
            "{} {:?} {:?} {:?} {:?}\n",
            r.image.display(),
            r.face.x,
            r.face.y,
            r.face.width,
            r.face.height
        ));
    }
    out
}

pub fn write_face_boxes<P: AsRef<Path>>(path: P, records: &[FaceRecord]) -> Result<()> {
    fs::write(path, format_face_boxes(records))?;
    Ok(())
}
