//! Landmark annotation files in the ubiquitous `.pts` interchange format:
//!
//! ```text
//! version: 1
//! n_points: 68
//! {
//! 211.5 268.9
//! ...
//! }
//! ```
//!
//! Parsing is strict — a wrong count, a malformed coordinate, or a missing
//! brace is an error carrying the file and line it came from, never a
//! silently shortened shape.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::shape::{ModeId, Shape};

/// One annotated training or evaluation image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image: PathBuf,
    pub points: Shape,
    /// Ground-truth occlusion per landmark, for corpora that provide it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occluded: Option<Vec<bool>>,
    /// Pose/expression cluster the sample belongs to, for partitioned
    /// training sets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeId>,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::EmptyInput("annotation with no points"));
        }
        if let Some(occ) = &self.occluded {
            if occ.len() != self.points.len() {
                return Err(Error::dim(
                    self.points.len(),
                    occ.len(),
                    "occlusion bits vs points",
                ));
            }
        }
        Ok(())
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses `.pts` text. `path` is only used to label errors.
pub fn parse_pts(text: &str, path: &Path) -> Result<Shape> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next_content = || lines.find(|(_, l)| !l.is_empty());

    let (ln, version) = next_content().ok_or_else(|| parse_error(path, 1, "empty file"))?;
    if !version.starts_with("version:") {
        return Err(parse_error(path, ln, "expected 'version:' header"));
    }
    let (ln, count_line) =
        next_content().ok_or_else(|| parse_error(path, ln, "missing 'n_points:' header"))?;
    let declared: usize = count_line
        .strip_prefix("n_points:")
        .map(str::trim)
        .ok_or_else(|| parse_error(path, ln, "expected 'n_points:' header"))?
        .parse()
        .map_err(|_| parse_error(path, ln, "unreadable point count"))?;
    if declared == 0 {
        return Err(parse_error(path, ln, "point count must be positive"));
    }
    let (ln, brace) =
        next_content().ok_or_else(|| parse_error(path, ln, "missing opening brace"))?;
    if brace != "{" {
        return Err(parse_error(path, ln, "expected '{'"));
    }

    let mut points = Vec::with_capacity(declared);
    let close_ln;
    loop {
        let (ln, line) =
            next_content().ok_or_else(|| parse_error(path, ln, "missing closing brace"))?;
        if line == "}" {
            close_ln = ln;
            break;
        }
        let mut fields = line.split_whitespace();
        let (Some(x), Some(y), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_error(path, ln, "expected 'x y'"));
        };
        let x: f64 = x
            .parse()
            .map_err(|_| parse_error(path, ln, format!("unreadable x coordinate '{x}'")))?;
        let y: f64 = y
            .parse()
            .map_err(|_| parse_error(path, ln, format!("unreadable y coordinate '{y}'")))?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(parse_error(path, ln, "non-finite coordinate"));
        }
        if points.len() == declared {
            return Err(parse_error(
                path,
                ln,
                format!("more than the declared {declared} points"),
            ));
        }
        points.push(Vec2::new(x, y));
    }
    if points.len() != declared {
        return Err(parse_error(
            path,
            close_ln,
            format!("declared {declared} points, found {}", points.len()),
        ));
    }
    Shape::new(points)
}

pub fn read_pts_file<P: AsRef<Path>>(path: P) -> Result<Shape> {
    let path = path.as_ref();
    parse_pts(&fs::read_to_string(path)?, path)
}

/// Renders a shape in the same format [`parse_pts`] reads. Coordinates are
/// written with enough digits to round-trip exactly.
pub fn format_pts(shape: &Shape) -> String {
    let mut out = String::new();
    out.push_str("version: 1\n");
    out.push_str(&format!("n_points: {}\n{{\n", shape.len()));
    for i in 0..shape.len() {
        let p = shape.point(i);
        out.push_str(&format!("{:?} {:?}\n", p.x, p.y));
    }
    out.push_str("}\n");
    out
}

pub fn write_pts_file<P: AsRef<Path>>(path: P, shape: &Shape) -> Result<()> {
    fs::write(path, format_pts(shape))?;
    Ok(())
}

/// Reads an annotation manifest: one JSON record per line.
pub fn read_annotations<P: AsRef<Path>>(path: P) -> Result<Vec<AnnotationRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord = serde_json::from_str(line)
            .map_err(|e| parse_error(path, i + 1, e.to_string()))?;
        record
            .validate()
            .map_err(|e| parse_error(path, i + 1, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_annotations<P: AsRef<Path>>(path: P, records: &[AnnotationRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        r.validate()?;
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> PathBuf {
        PathBuf::from("test.pts")
    }

    #[test]
    fn well_formed_file_parses() {
        let text = "version: 1\nn_points: 3\n{\n1.5 2.25\n-3 4e2\n0.1 0.2\n}\n";
        let shape = parse_pts(text, &path()).unwrap();
        assert_eq!(shape.len(), 3);
        assert_eq!(shape.point(0), Vec2::new(1.5, 2.25));
        assert_eq!(shape.point(1), Vec2::new(-3.0, 400.0));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let text = "version: 1\nn_points: 3\n{\n1 2\n3 4\n}\n";
        let err = parse_pts(text, &path()).unwrap_err();
        assert!(err.to_string().contains("declared 3"), "{err}");
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let text = "version: 1\nn_points: 2\n{\n1 2\nbad line here\n}\n";
        match parse_pts(text, &path()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn fractional_coordinates_round_trip_exactly() {
        let original = Shape::new(vec![
            Vec2::new(0.1 + 0.2, std::f64::consts::PI),
            Vec2::new(-1.0 / 3.0, 1e-17),
        ])
        .unwrap();
        let back = parse_pts(&format_pts(&original), &path()).unwrap();
        assert_eq!(back, original);
    }

    #[test]
    fn annotation_manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("ann.jsonl");
        let records = vec![
            AnnotationRecord {
                image: PathBuf::from("a.png"),
                points: Shape::new(vec![Vec2::new(1.0, 2.0), Vec2::new(3.0, 4.0)]).unwrap(),
                occluded: Some(vec![false, true]),
                mode: Some(ModeId {
                    pose: 1,
                    expression: 0,
                }),
            },
            AnnotationRecord {
                image: PathBuf::from("b.png"),
                points: Shape::new(vec![Vec2::new(5.0, 6.0)]).unwrap(),
                occluded: None,
                mode: None,
            },
        ];
        write_annotations(&manifest, &records).unwrap();
        assert_eq!(read_annotations(&manifest).unwrap(), records);
    }

    #[test]
    fn occlusion_bits_must_match_the_point_count() {
        let record = AnnotationRecord {
            image: PathBuf::from("a.png"),
            points: Shape::new(vec![Vec2::new(1.0, 2.0)]).unwrap(),
            occluded: Some(vec![false, true]),
            mode: None,
        };
        assert!(record.validate().is_err());
    }
}
