//! A self-contained miniature face domain: a 10-landmark scheme, planted
//! shape models for it, and rendered corpora the full train/align/eval
//! pipeline can run on without any external data.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

use crate::config::derive_seed;
use crate::error::Result;
use crate::eval::render::render_face;
use crate::geometry::{FaceBox, Mat2, Similarity, Vec2};
use crate::img::GrayImageF;
use crate::io::{save_gray, write_annotations, write_face_boxes, AnnotationRecord, FaceRecord};
use crate::scheme::LandmarkScheme;
use crate::shape::{
    densify, ExemplarSet, ModeId, ModeModel, ModelEnsemble, PointDistributionModel, Shape,
};

/// Rendered demo images are square with this side length.
pub const DEMO_CANVAS: usize = 280;

/// Demo face boxes inflate the landmark bounds by this factor, the same rule
/// training falls back to when a corpus ships without detector boxes.
pub const DEMO_BOX_EXPAND: f64 = 1.3;

/// The demo markup: six feature points (eyes, nose, mouth) and a four-point
/// chin contour that doubles as the outline.
pub fn demo_scheme() -> LandmarkScheme {
    LandmarkScheme::synthetic(6, 4)
}

/// Feature layout the demo modes deform, in model units.
fn base_points() -> Vec<Vec2> {
    vec![
        Vec2::new(-1.5, -1.0), // left outer eye
        Vec2::new(1.5, -1.0),  // right outer eye
        Vec2::new(0.0, -0.2),  // nose tip
        Vec2::new(0.0, 0.9),   // mouth center
        Vec2::new(-0.8, 0.9),  // left mouth corner
        Vec2::new(0.8, 0.9),   // right mouth corner
        Vec2::new(-1.8, 0.3),  // chin contour, left to right
        Vec2::new(-0.9, 1.6),
        Vec2::new(0.9, 1.6),
        Vec2::new(1.8, 0.3),
    ]
}

/// Removes the similarity component (translations, scaling, rotation about
/// the mean) from raw deformation directions and orthonormalizes the rest,
/// which is the structure principal components of aligned shapes have. A
/// basis overlapping the similarity span would make pose and deformation
/// interchangeable and completion ill-posed.
fn similarity_free_basis(points: &[Vec2], mut raw: DMatrix<f64>) -> DMatrix<f64> {
    let n = points.len();
    let mut sim = DMatrix::zeros(2 * n, 4);
    for i in 0..n {
        sim[(2 * i, 0)] = 1.0;
        sim[(2 * i + 1, 1)] = 1.0;
        sim[(2 * i, 2)] = points[i].x;
        sim[(2 * i + 1, 2)] = points[i].y;
        sim[(2 * i, 3)] = -points[i].y;
        sim[(2 * i + 1, 3)] = points[i].x;
    }
    let coeffs = (sim.transpose() * &sim)
        .try_inverse()
        .expect("similarity directions are independent")
        * (sim.transpose() * &raw);
    raw -= sim * coeffs;
    nalgebra::QR::new(raw).q()
}

fn demo_mode(id: ModeId) -> Result<ModeModel> {
    let scheme = demo_scheme();
    let mut points = base_points();
    // Pose families narrow: a crude stand-in for out-of-plane head turn.
    let squeeze = 1.0 - 0.15 * id.pose as f64;
    for p in &mut points {
        p.x *= squeeze;
    }
    // Expression families lower the mouth and jaw.
    let drop = 0.22 * id.expression as f64;
    for k in 3..6 {
        points[k].y += drop;
    }
    for k in 6..10 {
        points[k].y += 0.5 * drop;
    }
    let mean = Shape::new(points.clone())?;

    let mut raw = DMatrix::zeros(2 * points.len(), 2);
    // Mouth widening.
    raw[(2 * 4, 0)] = -0.7;
    raw[(2 * 5, 0)] = 0.7;
    raw[(2 * 7, 0)] = -0.3;
    raw[(2 * 8, 0)] = 0.3;
    // Jaw drop.
    raw[(2 * 3 + 1, 1)] = 0.5;
    raw[(2 * 4 + 1, 1)] = 0.45;
    raw[(2 * 5 + 1, 1)] = 0.45;
    raw[(2 * 6 + 1, 1)] = 0.25;
    raw[(2 * 7 + 1, 1)] = 0.8;
    raw[(2 * 8 + 1, 1)] = 0.8;
    raw[(2 * 9 + 1, 1)] = 0.25;
    let basis = similarity_free_basis(&points, raw);

    let model = PointDistributionModel {
        mean: mean.clone(),
        basis,
        eigenvalues: DVector::from_vec(vec![0.05, 0.02]),
        landmark_cov: vec![Mat2::identity() * 0.006; points.len()],
    };
    let dense = densify(&model, &scheme, 2)?;
    Ok(ModeModel {
        id,
        scheme,
        dense,
        exemplars: ExemplarSet {
            shapes: vec![mean],
            radius: 0.8,
        },
        detectors: None,
        box_calibration: None,
    })
}

/// A planted shape-only ensemble over the demo scheme with the given grid of
/// pose and expression families. Detectors are trained separately when the
/// ensemble is to run on images.
pub fn demo_ensemble(pose_count: usize, expressions_per_pose: usize) -> Result<ModelEnsemble> {
    let mut modes = Vec::with_capacity(pose_count * expressions_per_pose);
    for pose in 0..pose_count {
        for expression in 0..expressions_per_pose {
            modes.push(demo_mode(ModeId { pose, expression })?);
        }
    }
    ModelEnsemble::new(pose_count, modes)
}

/// One rendered demo face with full ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoFace {
    /// File name the face is written under, unique within the corpus.
    pub name: String,
    pub image: GrayImageF,
    pub face: FaceBox,
    pub truth: Shape,
    pub mode: ModeId,
}

/// A rendered corpus: images plus the boxes and annotations that describe
/// them, ready to be written out or consumed in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoCorpus {
    pub faces: Vec<DemoFace>,
}

impl DemoCorpus {
    /// Annotation records referencing the written image files.
    pub fn annotations(&self) -> Vec<AnnotationRecord> {
        self.faces
            .iter()
            .map(|f| AnnotationRecord {
                image: Path::new("images").join(&f.name),
                points: f.truth.clone(),
                occluded: None,
                mode: Some(f.mode),
            })
            .collect()
    }

    /// Face-box records referencing the written image files.
    pub fn boxes(&self) -> Vec<FaceRecord> {
        self.faces
            .iter()
            .map(|f| FaceRecord {
                image: Path::new("images").join(&f.name),
                face: f.face,
            })
            .collect()
    }

    /// Writes `images/*.png`, `boxes.txt`, and `annotations.jsonl` under
    /// `dir`, creating directories as needed.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        let images = dir.join("images");
        std::fs::create_dir_all(&images)?;
        for f in &self.faces {
            save_gray(images.join(&f.name), &f.image)?;
        }
        write_face_boxes(dir.join("boxes.txt"), &self.boxes())?;
        write_annotations(dir.join("annotations.jsonl"), &self.annotations())?;
        Ok(())
    }
}

/// Renders `per_mode` faces for every mode of the ensemble. Face `i` of the
/// corpus depends only on the ensemble, the corpus seed, and `i`.
pub fn demo_corpus(ensemble: &ModelEnsemble, per_mode: usize, seed: u64) -> Result<DemoCorpus> {
    let mut faces = Vec::with_capacity(ensemble.modes.len() * per_mode);
    let mut idx = 0usize;
    for mode in &ensemble.modes {
        for _ in 0..per_mode {
            let face_seed = derive_seed(seed, idx as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(face_seed);
            let model = &mode.dense.model;
            let deform = DVector::from_iterator(
                model.dims(),
                model
                    .eigenvalues
                    .iter()
                    .map(|&ev| rng.gen_range(-1.5..1.5) * ev.sqrt()),
            );
            let pose = Similarity::new(
                rng.gen_range(26.0..34.0),
                rng.gen_range(-6.0f64..6.0).to_radians(),
                Vec2::new(rng.gen_range(120.0..160.0), rng.gen_range(120.0..160.0)),
            )?;
            let truth = mode
                .dense
                .sparse_from_dense(&model.instantiate(&deform)?)
                .transformed(&pose);
            faces.push(DemoFace {
                name: format!("face_{idx:04}.png"),
                image: render_face(&truth, DEMO_CANVAS, DEMO_CANVAS, face_seed),
                face: truth.face_box(DEMO_BOX_EXPAND)?,
                truth,
                mode: mode.id,
            });
            idx += 1;
        }
    }
    Ok(DemoCorpus { faces })
}
