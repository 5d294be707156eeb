//! Detector response maps over search regions, across a small scale sweep.
//!
//! The face window is resampled once per relative scale; scanning a region
//! then scores the detector at integer positions of the resampled buffer
//! through its integral image, so each weak classifier costs nine box sums
//! per pixel regardless of patch size. Scale results either reduce into one
//! reference-frame map (per-pixel max) or stay separate for per-scale
//! candidate extraction.

use crate::appearance::boost::BoostedDetector;
use crate::appearance::census::DescriptorGeometry;
use crate::config::{CrossScale, SearchConfig};
use crate::error::{Error, Result};
use crate::geometry::{Similarity, Vec2};
use crate::img::{GrayImageF, GridRect, IntegralImage};

/// Scores of one detector over a pixel grid.
#[derive(Debug, Clone)]
pub struct ResponseGrid {
    /// Reference-frame coordinates of cell `(0, 0)`.
    pub origin: Vec2,
    /// Reference-frame spacing between neighboring cells.
    pub step: f64,
    pub width: usize,
    pub height: usize,
    pub scores: Vec<f64>,
    /// Cells whose patch ran off the valid image data (border replication
    /// filled in); detections there are less trustworthy.
    pub clipped: Vec<bool>,
    /// Highest score the detector could emit; thresholds are relative to it.
    pub max_possible: f64,
}

impl ResponseGrid {
    #[inline]
    pub fn score(&self, x: usize, y: usize) -> f64 {
        self.scores[y * self.width + x]
    }

    /// Reference-frame position of a cell.
    #[inline]
    pub fn cell_position(&self, x: usize, y: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + x as f64 * self.step,
            self.origin.y + y as f64 * self.step,
        )
    }
}

/// One resampled copy of the face window.
#[derive(Debug)]
pub struct ScaleLevel {
    pub sigma: f64,
    pub image: GrayImageF,
    pub integral: IntegralImage,
    /// Valid-data rectangle mapped into this level's pixel grid.
    valid: GridRect,
}

/// Face window with its scale pyramid, shared by every landmark region.
#[derive(Debug)]
pub struct SearchSpace {
    pub levels: Vec<ScaleLevel>,
    window_width: usize,
    window_height: usize,
}

impl SearchSpace {
    /// `window` is the reference-frame crop around the face; `valid` marks
    /// the part backed by actual source pixels (the rest is border fill).
    pub fn new(window: GrayImageF, valid: GridRect, scales: &[f64]) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::EmptyInput("no search scales"));
        }
        let (w, h) = (window.width, window.height);
        let mut levels = Vec::with_capacity(scales.len());
        for &sigma in scales {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "search scale must be positive, got {sigma}"
                )));
            }
            // Pixel u of the level reads the window at u * sigma, so the
            // level sees the face enlarged by 1/sigma.
            let lw = (w as f64 / sigma).ceil() as usize;
            let lh = (h as f64 / sigma).ceil() as usize;
            let map = Similarity::new(sigma, 0.0, Vec2::zeros())?;
            let image = window.warp(&map, lw, lh);
            let integral = IntegralImage::build(&image);
            let valid_level = GridRect::new(
                (valid.x0 as f64 / sigma).ceil() as i64,
                (valid.y0 as f64 / sigma).ceil() as i64,
                (valid.x1 as f64 / sigma).floor() as i64,
                (valid.y1 as f64 / sigma).floor() as i64,
            );
            levels.push(ScaleLevel {
                sigma,
                image,
                integral,
                valid: valid_level,
            });
        }
        Ok(SearchSpace {
            levels,
            window_width: w,
            window_height: h,
        })
    }

    pub fn window_size(&self) -> (usize, usize) {
        (self.window_width, self.window_height)
    }
}

/// Scores `det` at every level pixel whose patch center falls in `region`
/// (given in that level's pixel grid).
fn scan_level(
    level: &ScaleLevel,
    region: GridRect,
    det: &BoostedDetector,
    geom: &DescriptorGeometry,
) -> ResponseGrid {
    let half = (geom.patch_size() / 2) as i64;
    let (lw, lh) = (level.image.width as i64, level.image.height as i64);
    // Patch origins must stay inside the resampled buffer.
    let cx0 = region.x0.clamp(half, (lw - half - 1).max(half));
    let cy0 = region.y0.clamp(half, (lh - half - 1).max(half));
    let cx1 = region.x1.clamp(cx0, (lw - half).max(cx0));
    let cy1 = region.y1.clamp(cy0, (lh - half).max(cy0));
    let width = (cx1 - cx0).max(1) as usize;
    let height = (cy1 - cy0).max(1) as usize;

    let mut scores = vec![0.0; width * height];
    let mut clipped = vec![false; width * height];
    for gy in 0..height {
        for gx in 0..width {
            let cx = cx0 + gx as i64;
            let cy = cy0 + gy as i64;
            let origin = ((cx - half) as usize, (cy - half) as usize);
            scores[gy * width + gx] = det.score_at(geom, &level.integral, origin);
            let patch = GridRect::new(cx - half, cy - half, cx + half + 1, cy + half + 1);
            clipped[gy * width + gx] = !level.valid.contains_rect(&patch);
        }
    }
    ResponseGrid {
        origin: Vec2::new(cx0 as f64 * level.sigma, cy0 as f64 * level.sigma),
        step: level.sigma,
        width,
        height,
        scores,
        clipped,
        max_possible: det.max_score(),
    }
}

/// Response of one detector over a reference-frame region, across the scale
/// sweep of `space`.
///
/// With [`CrossScale::MaxReduce`] the result is a single unit-step grid in
/// reference coordinates holding the per-pixel maximum over scales; with
/// [`CrossScale::UnionMerge`] one grid per scale is returned (each with its
/// own step) for separate candidate extraction.
pub fn response_map(
    space: &SearchSpace,
    region: GridRect,
    det: &BoostedDetector,
    geom: &DescriptorGeometry,
    cfg: &SearchConfig,
) -> Result<Vec<ResponseGrid>> {
    if space.levels.is_empty() {
        return Err(Error::EmptyInput("search space has no scale levels"));
    }
    let per_level: Vec<ResponseGrid> = space
        .levels
        .iter()
        .map(|level| {
            let scaled = GridRect::new(
                (region.x0 as f64 / level.sigma).floor() as i64,
                (region.y0 as f64 / level.sigma).floor() as i64,
                (region.x1 as f64 / level.sigma).ceil() as i64,
                (region.y1 as f64 / level.sigma).ceil() as i64,
            );
            scan_level(level, scaled, det, geom)
        })
        .collect();

    match cfg.cross_scale {
        CrossScale::UnionMerge => Ok(per_level),
        CrossScale::MaxReduce => {
            // Reference grid at unit step covering the region.
            let width = region.width().max(1) as usize;
            let height = region.height().max(1) as usize;
            let mut scores = vec![f64::NEG_INFINITY; width * height];
            let mut clipped = vec![false; width * height];
            for grid in &per_level {
                // Backward fill: every reference cell reads its nearest level
                // cell, so no cell is left behind at coarse scales.
                for ry in 0..height {
                    for rx in 0..width {
                        let px = region.x0 + rx as i64;
                        let py = region.y0 + ry as i64;
                        let lx = ((px as f64 - grid.origin.x) / grid.step).round() as i64;
                        let ly = ((py as f64 - grid.origin.y) / grid.step).round() as i64;
                        let lx = lx.clamp(0, grid.width as i64 - 1) as usize;
                        let ly = ly.clamp(0, grid.height as i64 - 1) as usize;
                        let idx = ry * width + rx;
                        let s = grid.score(lx, ly);
                        if s > scores[idx] {
                            scores[idx] = s;
                            clipped[idx] = grid.clipped[ly * grid.width + lx];
                        }
                    }
                }
                // Forward pass: fine scales may hit one reference cell with
                // several level cells; keep the max of all of them.
                for ly in 0..grid.height {
                    for lx in 0..grid.width {
                        let p = grid.cell_position(lx, ly);
                        let rx = (p.x - region.x0 as f64).round() as i64;
                        let ry = (p.y - region.y0 as f64).round() as i64;
                        if rx < 0 || ry < 0 || rx >= width as i64 || ry >= height as i64 {
                            continue;
                        }
                        let idx = ry as usize * width + rx as usize;
                        let s = grid.score(lx, ly);
                        if s > scores[idx] {
                            scores[idx] = s;
                            clipped[idx] = grid.clipped[ly * grid.width + lx];
                        }
                    }
                }
            }
            Ok(vec![ResponseGrid {
                origin: Vec2::new(region.x0 as f64, region.y0 as f64),
                step: 1.0,
                width,
                height,
                scores,
                clipped,
                max_possible: per_level[0].max_possible,
            }])
        }
    }
}
