//! Statistical shape models: alignment, the linear deformation model, its
//! dense-contour extension, and exemplar clustering.

mod dense;
mod ensemble;
mod exemplars;
mod pdm;
mod procrustes;

pub use dense::{densify, train_dense_pdm, DenseGroup, DensePdm};
pub use ensemble::{
    calibrate_box_placement, train_mode_model, BoxCalibration, ModeId, ModeModel, ModelEnsemble,
};
pub use exemplars::{cluster_exemplars, ExemplarSet};
pub use pdm::{train_pdm, PdmParameter, PointDistributionModel};
pub use procrustes::{align_shapes, normalize_anchor_frame, AlignedSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// An ordered list of 2D landmark positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    points: Vec<Vec2>,
}

impl Shape {
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("shape with no points"));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidParameter(
                "shape contains non-finite coordinates".into(),
            ));
        }
        Ok(Shape { points })
    }

    /// Interleaved `[x0, y0, x1, y1, ...]` layout, matching the rows of the
    /// deformation basis.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::InvalidParameter(
                "flat shape buffer must have even length".into(),
            ));
        }
        Shape::new(
            flat.chunks_exact(2)
                .map(|c| Vec2::new(c[0], c[1]))
                .collect(),
        )
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points.len() * 2);
        for p in &self.points {
            out.push(p.x);
            out.push(p.y);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vec2 {
        self.points[i]
    }

    pub fn centroid(&self) -> Vec2 {
        let mut c = Vec2::zeros();
        for p in &self.points {
            c += *p;
        }
        c / self.points.len() as f64
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    /// Axis-aligned box around the landmarks, inflated by `expand` about its
    /// center; `expand` of 1.3 leaves a 15% margin on every side. This is
    /// the box a detector would have reported, for corpora that ship only
    /// annotations.
    pub fn face_box(&self, expand: f64) -> Result<crate::geometry::FaceBox> {
        let (lo, hi) = self.bounds();
        let w = (hi.x - lo.x) * expand;
        let h = (hi.y - lo.y) * expand;
        let cx = (lo.x + hi.x) / 2.0;
        let cy = (lo.y + hi.y) / 2.0;
        crate::geometry::FaceBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn transformed(&self, t: &crate::geometry::Similarity) -> Shape {
        Shape {
            points: t.apply_all(&self.points),
        }
    }

    /// Subset of points at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Shape {
        Shape {
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }

    /// Root-mean-square point distance to another shape of the same size.
    pub fn rms_distance(&self, other: &Shape) -> f64 {
        assert_eq!(self.len(), other.len());
        let sum: f64 = self
            .points
            .iter()
            .zip(other.points.iter())
            .map(|(a, b)| (a - b).norm_squared())
            .sum();
        (sum / self.len() as f64).sqrt()
    }
}
