//! The trained model: one entry per pose/expression mode, each with its own
//! scheme, dense shape model, exemplars, and optionally detectors.

use serde::{Deserialize, Serialize};

use crate::appearance::ModeDetectors;
use crate::config::ShapeTrainConfig;
use crate::error::{Error, Result};
use crate::geometry::{FaceBox, Similarity, Vec2};
use crate::scheme::LandmarkScheme;
use crate::shape::{align_shapes, cluster_exemplars, train_dense_pdm, DensePdm, ExemplarSet, Shape};

/// Identifies one pose/expression model inside the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeId {
    pub pose: usize,
    pub expression: usize,
}

impl std::fmt::Display for ModeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "p{}e{}", self.pose, self.expression)
    }
}

/// How tightly a face detector's boxes hug the landmarks, learned from the
/// training corpus. Detectors differ wildly in their margin conventions, so
/// placing the mean shape straight into the reported box misjudges scale by
/// whatever padding the detector added; this records the observed relation
/// instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCalibration {
    /// Mean landmark-extent width as a fraction of the box width.
    pub width_frac: f64,
    /// Mean offset of the landmark centroid box from the box center, in
    /// units of (box width, box height).
    pub center_offset: Vec2,
}

impl BoxCalibration {
    /// Box and landmarks coincide: scale by box width, center on the box.
    pub fn identity() -> Self {
        BoxCalibration {
            width_frac: 1.0,
            center_offset: Vec2::zeros(),
        }
    }
}

/// Measures the box convention of a training corpus: for each face, how wide
/// the annotated landmarks sit inside the reported box and where their
/// bounding-box center falls, averaged over the corpus.
pub fn calibrate_box_placement(shapes: &[Shape], boxes: &[FaceBox]) -> Result<BoxCalibration> {
    if shapes.is_empty() {
        return Err(Error::EmptyInput("box calibration needs annotated faces"));
    }
    if shapes.len() != boxes.len() {
        return Err(Error::dim(shapes.len(), boxes.len(), "face boxes"));
    }
    let mut width_frac = 0.0;
    let mut offset = Vec2::zeros();
    for (shape, b) in shapes.iter().zip(boxes.iter()) {
        let (lo, hi) = shape.bounds();
        let center = Vec2::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0);
        width_frac += (hi.x - lo.x) / b.width;
        let d = center - b.center();
        offset += Vec2::new(d.x / b.width, d.y / b.height);
    }
    let n = shapes.len() as f64;
    let cal = BoxCalibration {
        width_frac: width_frac / n,
        center_offset: offset / n,
    };
    if !(cal.width_frac.is_finite() && cal.width_frac > 1e-9) {
        return Err(Error::SingularConfiguration(
            "training shapes have no horizontal extent",
        ));
    }
    Ok(cal)
}

/// Everything needed to fit one pose/expression mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeModel {
    pub id: ModeId,
    pub scheme: LandmarkScheme,
    pub dense: DensePdm,
    pub exemplars: ExemplarSet,
    /// Absent for shape-only models fit directly in detection space.
    pub detectors: Option<ModeDetectors>,
    /// Absent when the model was never trained against face boxes; placement
    /// then assumes boxes bound the landmarks exactly.
    pub box_calibration: Option<BoxCalibration>,
}

impl ModeModel {
    pub fn landmark_count(&self) -> usize {
        self.scheme.count()
    }

    /// Similarity placing the normalized mean shape into a face box:
    /// width-matched scale corrected by the learned box calibration, no
    /// rotation, centers aligned.
    pub fn placement_into_box(&self, face: &FaceBox) -> Result<Similarity> {
        let cal = self.box_calibration.unwrap_or_else(BoxCalibration::identity);
        let sparse_mean = self.dense.sparse_from_dense(&self.dense.model.mean);
        let (lo, hi) = sparse_mean.bounds();
        let w = hi.x - lo.x;
        if w <= 1e-9 {
            return Err(Error::SingularConfiguration(
                "mean shape has no horizontal extent",
            ));
        }
        let scale = face.width * cal.width_frac / w;
        let mean_center = Vec2::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0);
        let target = face.center()
            + Vec2::new(
                cal.center_offset.x * face.width,
                cal.center_offset.y * face.height,
            );
        Similarity::new(scale, 0.0, target - mean_center * scale)
    }
}

/// Trains the shape side of one mode from its annotated shapes: anchor-based
/// alignment, the dense deformation model, and the exemplar set. Detectors
/// are attached afterwards when the mode is meant to run on images.
pub fn train_mode_model(
    id: ModeId,
    scheme: &LandmarkScheme,
    shapes: &[Shape],
    cfg: &ShapeTrainConfig,
) -> Result<ModeModel> {
    scheme.validate()?;
    for s in shapes {
        if s.len() != scheme.count() {
            return Err(Error::dim(scheme.count(), s.len(), "training shape"));
        }
    }
    let aligned = align_shapes(shapes, &scheme.anchors, cfg.align_tolerance, cfg.align_max_iter)?;
    let dense = train_dense_pdm(
        &aligned.shapes,
        scheme,
        cfg.samples_per_contour,
        cfg.variance_fraction,
    )?;
    let exemplars = cluster_exemplars(
        &aligned.shapes,
        cfg.exemplar_count.min(aligned.shapes.len()),
        cfg.seed,
    )?;
    Ok(ModeModel {
        id,
        scheme: scheme.clone(),
        dense,
        exemplars,
        detectors: None,
        box_calibration: None,
    })
}

/// All pose/expression modes of one trained system.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEnsemble {
    pub pose_count: usize,
    /// Grouped by pose, expressions in index order within each pose.
    pub modes: Vec<ModeModel>,
    /// Optional landmark correspondence between two schemes of different
    /// sizes (for example frontal and profile markups), as pairs of
    /// `(index_in_larger, index_in_smaller)`.
    pub correspondence: Vec<(usize, usize)>,
}

impl ModelEnsemble {
    pub fn new(pose_count: usize, modes: Vec<ModeModel>) -> Result<Self> {
        let e = ModelEnsemble {
            pose_count,
            modes,
            correspondence: Vec::new(),
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::EmptyInput("ensemble has no modes"));
        }
        if self.pose_count == 0 {
            return Err(Error::InvalidParameter("pose count must be positive".into()));
        }
        for pose in 0..self.pose_count {
            if !self.modes.iter().any(|m| m.id.pose == pose) {
                return Err(Error::InvalidParameter(format!(
                    "pose {pose} has no expression models"
                )));
            }
        }
        for m in &self.modes {
            if m.id.pose >= self.pose_count {
                return Err(Error::InvalidParameter(format!(
                    "mode {} outside declared pose range",
                    m.id
                )));
            }
            m.scheme.validate()?;
            m.dense.validate()?;
            if m.scheme.count() != m.dense.sparse_count {
                return Err(Error::dim(
                    m.scheme.count(),
                    m.dense.sparse_count,
                    "scheme vs dense model",
                ));
            }
            for ex in &m.exemplars.shapes {
                if ex.len() != m.scheme.count() {
                    return Err(Error::dim(m.scheme.count(), ex.len(), "exemplar size"));
                }
            }
            if let Some(det) = &m.detectors {
                if det.per_landmark.len() != m.scheme.count() {
                    return Err(Error::dim(
                        m.scheme.count(),
                        det.per_landmark.len(),
                        "detector banks",
                    ));
                }
            }
        }
        // Modes must be unique and sorted pose-major for deterministic
        // iteration.
        for w in self.modes.windows(2) {
            if w[1].id <= w[0].id {
                return Err(Error::InvalidParameter(
                    "modes must be sorted by (pose, expression) without duplicates".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn modes_for_pose(&self, pose: usize) -> impl Iterator<Item = &ModeModel> {
        self.modes.iter().filter(move |m| m.id.pose == pose)
    }

    pub fn mode(&self, id: ModeId) -> Option<&ModeModel> {
        self.modes.iter().find(|m| m.id == id)
    }

    pub fn expressions_in_pose(&self, pose: usize) -> usize {
        self.modes_for_pose(pose).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::{densify, PointDistributionModel, Shape};
    use nalgebra::{DMatrix, DVector};

    fn tiny_mode(id: ModeId) -> ModeModel {
        let scheme = LandmarkScheme::synthetic(4, 0);
        let mean = Shape::from_flat(&[-1.0, -1.0, 1.0, -1.0, -1.0, 1.0, 1.0, 1.0]).unwrap();
        let mut basis = DMatrix::zeros(8, 1);
        basis[(0, 0)] = 1.0;
        let model = PointDistributionModel {
            mean: mean.clone(),
            basis,
            eigenvalues: DVector::from_element(1, 1.0),
            landmark_cov: vec![crate::geometry::Mat2::identity(); 4],
        };
        let dense = densify(&model, &scheme, 0).unwrap();
        ModeModel {
            id,
            scheme,
            dense,
            exemplars: ExemplarSet {
                shapes: vec![mean],
                radius: 1.0,
            },
            detectors: None,
            box_calibration: None,
        }
    }

    #[test]
    fn ensemble_validates_mode_ordering() {
        let modes = vec![
            tiny_mode(ModeId { pose: 0, expression: 0 }),
            tiny_mode(ModeId { pose: 0, expression: 1 }),
            tiny_mode(ModeId { pose: 1, expression: 0 }),
        ];
        let e = ModelEnsemble::new(2, modes).unwrap();
        assert_eq!(e.expressions_in_pose(0), 2);
        assert_eq!(e.expressions_in_pose(1), 1);

        let bad = vec![
            tiny_mode(ModeId { pose: 0, expression: 1 }),
            tiny_mode(ModeId { pose: 0, expression: 0 }),
        ];
        assert!(ModelEnsemble::new(1, bad).is_err());
    }

    #[test]
    fn missing_pose_is_rejected() {
        let modes = vec![tiny_mode(ModeId { pose: 1, expression: 0 })];
        assert!(ModelEnsemble::new(2, modes).is_err());
    }

    #[test]
    fn modes_train_from_posed_shapes() {
        use crate::geometry::Similarity;
        use crate::config::ShapeTrainConfig;

        let scheme = LandmarkScheme::synthetic(6, 0);
        let base = [
            Vec2::new(-1.5, -1.0),
            Vec2::new(1.5, -1.0),
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(-0.9, 1.1),
            Vec2::new(0.9, 1.1),
        ];
        // Two deformation patterns under arbitrary similarity poses.
        let mut shapes = Vec::new();
        for i in 0..40 {
            let a = ((i * 13) % 21) as f64 / 10.0 - 1.0;
            let b = ((i * 7) % 17) as f64 / 8.0 - 1.0;
            let points: Vec<Vec2> = base
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let mut q = *p;
                    if k >= 4 {
                        q.x += 0.2 * a * q.x.signum();
                    }
                    if k >= 3 {
                        q.y += 0.15 * b;
                    }
                    q
                })
                .collect();
            let pose = Similarity::new(
                1.0 + 0.3 * ((i % 5) as f64 / 4.0),
                0.4 * ((i % 7) as f64 / 6.0 - 0.5),
                Vec2::new(i as f64, 40.0 - i as f64),
            )
            .unwrap();
            shapes.push(Shape::new(points).unwrap().transformed(&pose));
        }
        let cfg = ShapeTrainConfig {
            exemplar_count: 4,
            ..ShapeTrainConfig::default()
        };
        let id = ModeId { pose: 0, expression: 0 };
        let m = train_mode_model(id, &scheme, &shapes, &cfg).unwrap();
        assert_eq!(m.id, id);
        assert!(m.dense.model.dims() >= 1, "no deformation recovered");
        assert!(m.exemplars.shapes.len() <= 4);
        ModelEnsemble::new(1, vec![m.clone()]).unwrap().validate().unwrap();
        // Retraining is bit-identical.
        assert_eq!(m, train_mode_model(id, &scheme, &shapes, &cfg).unwrap());
        // Mismatched landmark counts are rejected.
        let bad = vec![Shape::from_flat(&[0.0, 0.0, 1.0, 1.0]).unwrap()];
        assert!(train_mode_model(id, &scheme, &bad, &cfg).is_err());
    }

    #[test]
    fn placement_scales_mean_into_box() {
        let m = tiny_mode(ModeId { pose: 0, expression: 0 });
        let b = FaceBox::new(10.0, 20.0, 100.0, 100.0).unwrap();
        let t = m.placement_into_box(&b).unwrap();
        let placed = m
            .dense
            .sparse_from_dense(&m.dense.model.mean)
            .transformed(&t);
        let (lo, hi) = placed.bounds();
        assert!((hi.x - lo.x - 100.0).abs() < 1e-9);
        let c = placed.centroid();
        assert!((c - b.center()).norm() < 1e-9);
    }
}
