//! Persistence and ingestion: the model container, landmark annotations,
//! face box lists, images, and alignment result records.

pub mod boxes;
pub mod container;
pub mod model;
pub mod pts;
pub mod results;

pub use boxes::{load_face_boxes, parse_face_boxes, write_face_boxes, FaceRecord};
pub use container::{crc32, read_container, write_container, Chunk};
pub use model::{load_model, load_model_file, save_model, save_model_file, ConfigSnapshot};
pub use pts::{
    format_pts, parse_pts, read_annotations, read_pts_file, write_annotations, write_pts_file,
    AnnotationRecord,
};
pub use results::{
    read_results, read_results_file, write_results, write_results_file, AlternateSummary,
    ResultRecord,
};

use std::path::Path;

use crate::error::Result;
use crate::img::GrayImageF;

/// Loads an image as grayscale. Color inputs are reduced by the standard
/// CIE luma weights; the alignment pipeline never sees color.
pub fn load_gray<P: AsRef<Path>>(path: P) -> Result<GrayImageF> {
    Ok(GrayImageF::from_luma8(&image::open(path)?.to_luma8()))
}

/// Writes a grayscale image; the format follows the file extension (tests
/// and fixtures use PNG for losslessness).
pub fn save_gray<P: AsRef<Path>>(path: P, img: &GrayImageF) -> Result<()> {
    img.to_luma8().save(path)?;
    Ok(())
}
