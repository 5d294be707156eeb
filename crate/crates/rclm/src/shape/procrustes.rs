//! Generalized Procrustes alignment over a configurable anchor subset.
//!
//! Conventional Procrustes normalizes with every landmark, so strong local
//! variation (an open mouth, a raised brow) leaks into the similarity
//! normalization of the whole shape and inflates the apparent deformation.
//! Aligning on a few stable anchor points (eye centers, nostril) keeps that
//! variation where it belongs. Anchors are centroids of landmark groups, so
//! derived points like an eye center work without a dedicated landmark.

use crate::error::{Error, Result};
use crate::geometry::{similarity_least_squares, Similarity, Vec2};
use crate::scheme::AnchorGroup;
use crate::shape::Shape;

/// Output of the group alignment: everything in the shared normalized frame.
#[derive(Debug, Clone)]
pub struct AlignedSet {
    /// Input shapes mapped into the normalized frame.
    pub shapes: Vec<Shape>,
    /// Mean of the aligned shapes, itself in canonical anchor form
    /// (anchor centroid at the origin, unit anchor RMS radius).
    pub mean: Shape,
    /// Per-shape similarity from the original frame into the normalized
    /// frame.
    pub transforms: Vec<Similarity>,
    pub iterations: usize,
}

fn anchor_points(shape: &Shape, anchors: &[AnchorGroup]) -> Vec<Vec2> {
    anchors
        .iter()
        .map(|group| {
            let mut c = Vec2::zeros();
            for &i in group {
                c += shape.point(i);
            }
            c / group.len() as f64
        })
        .collect()
}

/// Translation/scale normalization putting the anchor centroid at the origin
/// with unit RMS anchor radius. Rotation is left untouched.
pub fn normalize_anchor_frame(shape: &Shape, anchors: &[AnchorGroup]) -> Result<(Shape, Similarity)> {
    let pts = anchor_points(shape, anchors);
    let mut c = Vec2::zeros();
    for p in &pts {
        c += *p;
    }
    c /= pts.len() as f64;
    let ms: f64 = pts.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / pts.len() as f64;
    let rms = ms.sqrt();
    if rms <= 1e-12 {
        return Err(Error::SingularConfiguration(
            "anchor points are coincident; cannot normalize scale",
        ));
    }
    let t = Similarity::new(1.0 / rms, 0.0, Vec2::new(-c.x / rms, -c.y / rms))?;
    Ok((shape.transformed(&t), t))
}

/// Iterative alignment of `shapes` using only the anchor groups to estimate
/// each similarity. Terminates when the mean shape moves less than `tol`
/// (RMS over landmarks) or after `max_iter` rounds, whichever is first.
pub fn align_shapes(
    shapes: &[Shape],
    anchors: &[AnchorGroup],
    tol: f64,
    max_iter: usize,
) -> Result<AlignedSet> {
    if shapes.is_empty() {
        return Err(Error::EmptyInput("no shapes to align"));
    }
    let n = shapes[0].len();
    for s in shapes {
        if s.len() != n {
            return Err(Error::dim(n, s.len(), "shape sizes in alignment set"));
        }
    }
    if anchors.is_empty() {
        return Err(Error::EmptyInput("no anchor groups"));
    }
    for group in anchors {
        if group.is_empty() || group.iter().any(|&i| i >= n) {
            return Err(Error::InvalidParameter(
                "anchor group empty or index out of range".into(),
            ));
        }
    }
    if anchors.len() < 2 {
        return Err(Error::InsufficientData(
            "alignment needs at least two anchor points".into(),
        ));
    }

    // The first shape in canonical anchor form seeds the reference.
    let (seed, _) = normalize_anchor_frame(&shapes[0], anchors)?;
    let mut mean = seed;
    let mut iterations = 0;

    let align_one = |shape: &Shape, reference: &Shape| -> Result<Similarity> {
        let src = anchor_points(shape, anchors);
        let dst = anchor_points(reference, anchors);
        similarity_least_squares(&src, &dst, None)
    };

    for _ in 0..max_iter {
        iterations += 1;
        let aligned = shapes
            .iter()
            .map(|s| Ok(s.transformed(&align_one(s, &mean)?)))
            .collect::<Result<Vec<_>>>()?;

        let mut flat = vec![0.0; n * 2];
        for s in &aligned {
            for (acc, v) in flat.iter_mut().zip(s.to_flat()) {
                *acc += v;
            }
        }
        for v in &mut flat {
            *v /= shapes.len() as f64;
        }
        let raw_mean = Shape::from_flat(&flat)?;
        let (new_mean, _) = normalize_anchor_frame(&raw_mean, anchors)?;

        let shift = new_mean.rms_distance(&mean);
        mean = new_mean;
        if shift < tol {
            break;
        }
    }

    // One final pass against the settled mean so shapes and transforms are
    // mutually consistent.
    let transforms: Vec<Similarity> = shapes
        .iter()
        .map(|s| align_one(s, &mean))
        .collect::<Result<Vec<_>>>()?;
    let aligned: Vec<Shape> = shapes
        .iter()
        .zip(&transforms)
        .map(|(s, t)| s.transformed(t))
        .collect();

    Ok(AlignedSet {
        shapes: aligned,
        mean,
        transforms,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;

    fn square() -> Shape {
        Shape::from_flat(&[0.0, 0.0, 2.0, 0.0, 2.0, 2.0, 0.0, 2.0]).unwrap()
    }

    fn all_point_anchors(n: usize) -> Vec<AnchorGroup> {
        (0..n).map(|i| vec![i]).collect()
    }

    #[test]
    fn single_shape_comes_back_normalized() {
        let s = square();
        let anchors = all_point_anchors(4);
        let out = align_shapes(&[s.clone()], &anchors, 1e-8, 100).unwrap();
        assert_eq!(out.shapes.len(), 1);
        // Anchor centroid at origin, unit RMS radius.
        let c = out.mean.centroid();
        assert!(c.norm() < 1e-9);
        let rms: f64 = out
            .mean
            .points()
            .iter()
            .map(|p| p.norm_squared())
            .sum::<f64>()
            / 4.0;
        assert!((rms.sqrt() - 1.0).abs() < 1e-9);
        assert!(out.shapes[0].rms_distance(&out.mean) < 1e-9);
    }

    #[test]
    fn rotated_copies_align_onto_each_other() {
        let s = square();
        let rot = Similarity::new(3.0, 1.1, Vec2::new(40.0, -7.0)).unwrap();
        let s2 = s.transformed(&rot);
        let anchors = all_point_anchors(4);
        let out = align_shapes(&[s, s2], &anchors, 1e-10, 100).unwrap();
        assert!(out.shapes[0].rms_distance(&out.shapes[1]) < 1e-8);
    }

    #[test]
    fn anchor_only_alignment_ignores_other_landmark_jitter() {
        // Five shapes: anchors identical, the last landmark wobbles. The
        // recovered transforms must match the clean one exactly.
        let base = Shape::from_flat(&[0.0, 0.0, 4.0, 0.0, 2.0, 3.0, 1.0, 1.0]).unwrap();
        let anchors: Vec<AnchorGroup> = vec![vec![0], vec![1], vec![2]];
        let mut shapes = Vec::new();
        for k in 0..5 {
            let mut flat = base.to_flat();
            flat[6] += 0.3 * k as f64; // non-anchor landmark drifts
            flat[7] -= 0.2 * k as f64;
            shapes.push(Shape::from_flat(&flat).unwrap());
        }
        let out = align_shapes(&shapes, &anchors, 1e-10, 100).unwrap();
        for t in &out.transforms {
            assert!((t.scale - out.transforms[0].scale).abs() < 1e-9);
            assert!((t.angle - out.transforms[0].angle).abs() < 1e-9);
        }
        // Anchors coincide after alignment even though landmark 3 differs.
        for s in &out.shapes {
            assert!((s.point(0) - out.shapes[0].point(0)).norm() < 1e-9);
            assert!((s.point(2) - out.shapes[0].point(2)).norm() < 1e-9);
        }
    }

    #[test]
    fn coincident_anchors_are_singular() {
        let s = Shape::from_flat(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let anchors = all_point_anchors(3);
        assert!(matches!(
            align_shapes(&[s], &anchors, 1e-8, 10),
            Err(Error::SingularConfiguration(_))
        ));
    }

    #[test]
    fn derived_anchor_groups_use_centroids() {
        // Anchor 0 is the centroid of points 0 and 1; moving both points
        // symmetrically keeps the anchor fixed, so alignment is unaffected.
        let a = Shape::from_flat(&[0.0, 0.0, 2.0, 0.0, 1.0, 3.0, 3.0, 3.0]).unwrap();
        let b = Shape::from_flat(&[-0.5, 0.0, 2.5, 0.0, 1.0, 3.0, 3.0, 3.0]).unwrap();
        let anchors: Vec<AnchorGroup> = vec![vec![0, 1], vec![2], vec![3]];
        let out = align_shapes(&[a, b], &anchors, 1e-10, 100).unwrap();
        assert!((out.transforms[0].scale - out.transforms[1].scale).abs() < 1e-9);
        assert!((out.transforms[0].angle - out.transforms[1].angle).abs() < 1e-9);
    }
}
