//! Face-window normalization.
//!
//! Detectors are trained and evaluated in a reference frame where the face
//! box has a fixed width, so every image is first resampled into a square
//! window around the box. The same mapping carries fitted shapes back to
//! image coordinates.

use crate::config::DescriptorConfig;
use crate::error::Result;
use crate::geometry::{FaceBox, Similarity, Vec2};
use crate::img::{GrayImageF, GridRect};

/// Window side length as a multiple of the normalized face width; leaves
/// room for jaw overshoot, search regions, and patch margins.
pub const WINDOW_SPAN: f64 = 2.0;

/// A face crop resampled to the canonical detector scale.
#[derive(Debug)]
pub struct ReferenceWindow {
    pub image: GrayImageF,
    /// Maps image coordinates into window pixel coordinates.
    pub to_reference: Similarity,
    /// Window area actually backed by source pixels; outside it the crop is
    /// border replication.
    pub valid: GridRect,
    /// The face box expressed in window coordinates (its width equals the
    /// configured face width).
    pub face: FaceBox,
}

pub fn extract_reference_window(
    image: &GrayImageF,
    face: &FaceBox,
    cfg: &DescriptorConfig,
) -> Result<ReferenceWindow> {
    let side = (cfg.face_width * WINDOW_SPAN).ceil() as usize;
    let scale = cfg.face_width / face.width;
    let center = Vec2::new(side as f64 / 2.0, side as f64 / 2.0);
    let to_reference = Similarity::new(scale, 0.0, center - scale * face.center())?;
    let window = image.warp(&to_reference.inverse(), side, side);

    // No rotation is involved, so the source extent maps to an axis-aligned
    // rectangle in window coordinates.
    let lo = to_reference.apply(Vec2::zeros());
    let hi = to_reference.apply(Vec2::new(image.width as f64, image.height as f64));
    let valid = GridRect::new(
        (lo.x.ceil() as i64).clamp(0, side as i64),
        (lo.y.ceil() as i64).clamp(0, side as i64),
        (hi.x.floor() as i64).clamp(0, side as i64),
        (hi.y.floor() as i64).clamp(0, side as i64),
    );
    let face_ref = FaceBox::new(
        scale * face.x + to_reference.translation.x,
        scale * face.y + to_reference.translation.y,
        cfg.face_width,
        scale * face.height,
    )?;
    Ok(ReferenceWindow {
        image: window,
        to_reference,
        valid,
        face: face_ref,
    })
}
