//! Linear point distribution model learned from aligned shapes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat2, Similarity};
use crate::shape::{AlignedSet, Shape};

/// Relative ridge added to each per-landmark covariance, as a fraction of its
/// mean diagonal, so the Mahalanobis metric stays invertible.
const COV_RIDGE_FRACTION: f64 = 1e-3;
/// Absolute fallback variance for landmarks with no observed spread at all.
const COV_ABS_FLOOR: f64 = 1e-6;
/// Eigenvalue floor for degenerate training sets with no shape variance.
const EIGENVALUE_FLOOR: f64 = 1e-12;

/// Pose and deformation coefficients describing one shape instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdmParameter {
    /// Similarity from the normalized model frame into the image frame.
    pub pose: Similarity,
    /// Deformation coefficients, one per retained basis column.
    pub deform: DVector<f64>,
}

impl PdmParameter {
    pub fn neutral(dims: usize) -> Self {
        PdmParameter {
            pose: Similarity::identity(),
            deform: DVector::zeros(dims),
        }
    }
}

/// Mean shape plus an orthonormal deformation basis and per-landmark residual
/// covariances, all in the normalized frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDistributionModel {
    pub mean: Shape,
    /// `2N x d`, columns orthonormal, ordered by decreasing eigenvalue.
    pub basis: DMatrix<f64>,
    /// Variance captured by each basis column, decreasing and positive.
    pub eigenvalues: DVector<f64>,
    /// Per-landmark 2x2 residual covariance, symmetric positive definite.
    pub landmark_cov: Vec<Mat2>,
}

impl PointDistributionModel {
    pub fn point_count(&self) -> usize {
        self.mean.len()
    }

    pub fn dims(&self) -> usize {
        self.basis.ncols()
    }

    /// Shape in the normalized frame for deformation coefficients `q`.
    pub fn instantiate(&self, q: &DVector<f64>) -> Result<Shape> {
        if q.len() != self.dims() {
            return Err(Error::dim(self.dims(), q.len(), "deformation coefficients"));
        }
        let offset = &self.basis * q;
        let mut flat = self.mean.to_flat();
        for (v, o) in flat.iter_mut().zip(offset.iter()) {
            *v += o;
        }
        Shape::from_flat(&flat)
    }

    /// Shape in the image frame for a full parameter vector.
    pub fn instantiate_posed(&self, p: &PdmParameter) -> Result<Shape> {
        Ok(self.instantiate(&p.deform)?.transformed(&p.pose))
    }

    /// Least-squares deformation coefficients for a normalized-frame shape.
    pub fn project(&self, shape: &Shape) -> Result<DVector<f64>> {
        if shape.len() != self.point_count() {
            return Err(Error::dim(self.point_count(), shape.len(), "projected shape"));
        }
        let mean = DVector::from_vec(self.mean.to_flat());
        let x = DVector::from_vec(shape.to_flat());
        Ok(self.basis.transpose() * (x - mean))
    }

    /// Clamps each coefficient to `sigmas` standard deviations of its mode.
    /// Returns whether anything was clipped.
    pub fn clamp(&self, q: &mut DVector<f64>, sigmas: f64) -> bool {
        let mut clipped = false;
        for j in 0..q.len() {
            let limit = sigmas * self.eigenvalues[j].sqrt();
            if q[j] > limit {
                q[j] = limit;
                clipped = true;
            } else if q[j] < -limit {
                q[j] = -limit;
                clipped = true;
            }
        }
        clipped
    }

    pub fn validate(&self) -> Result<()> {
        let n2 = self.point_count() * 2;
        if self.basis.nrows() != n2 {
            return Err(Error::dim(n2, self.basis.nrows(), "basis rows"));
        }
        if self.eigenvalues.len() != self.dims() {
            return Err(Error::dim(self.dims(), self.eigenvalues.len(), "eigenvalues"));
        }
        if self.dims() == 0 {
            return Err(Error::EmptyInput("deformation basis has no columns"));
        }
        for j in 0..self.dims() {
            if !(self.eigenvalues[j].is_finite() && self.eigenvalues[j] > 0.0) {
                return Err(Error::InvalidParameter(
                    "eigenvalues must be positive".into(),
                ));
            }
            if j > 0 && self.eigenvalues[j] > self.eigenvalues[j - 1] + 1e-12 {
                return Err(Error::InvalidParameter(
                    "eigenvalues must be non-increasing".into(),
                ));
            }
        }
        let gram = self.basis.transpose() * &self.basis;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - expect).abs() > 1e-8 {
                    return Err(Error::InvalidParameter(
                        "basis columns are not orthonormal".into(),
                    ));
                }
            }
        }
        if self.landmark_cov.len() != self.point_count() {
            return Err(Error::dim(
                self.point_count(),
                self.landmark_cov.len(),
                "landmark covariances",
            ));
        }
        for c in &self.landmark_cov {
            let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
            if !(c[(0, 0)] > 0.0 && det > 0.0 && (c[(0, 1)] - c[(1, 0)]).abs() < 1e-9) {
                return Err(Error::InvalidParameter(
                    "landmark covariance must be symmetric positive definite".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Learns the model from an aligned shape set, retaining the smallest basis
/// that explains `variance_fraction` of the total variance (at least one
/// column).
pub fn train_pdm(aligned: &AlignedSet, variance_fraction: f64) -> Result<PointDistributionModel> {
    let model = fit_linear_model(&aligned.shapes, &aligned.mean, variance_fraction)?;
    model.validate()?;
    Ok(model)
}

/// Shared PCA core: basis, eigenvalues, and per-landmark covariances of
/// `shapes` around `mean`. Also serves the densified variant, whose basis is
/// built over derived points and is not orthonormal, so validation is left
/// to the caller.
pub(crate) fn fit_linear_model(
    shapes: &[Shape],
    mean: &Shape,
    variance_fraction: f64,
) -> Result<PointDistributionModel> {
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "variance fraction must be in (0, 1], got {variance_fraction}"
        )));
    }
    if shapes.is_empty() {
        return Err(Error::EmptyInput("no shapes to train on"));
    }
    let n = mean.len();
    let n2 = n * 2;
    let s_count = shapes.len();
    for s in shapes {
        if s.len() != n {
            return Err(Error::dim(n, s.len(), "training shape size"));
        }
    }

    let mean_flat = DVector::from_vec(mean.to_flat());
    let mut resid = DMatrix::zeros(s_count, n2);
    for (r, shape) in shapes.iter().enumerate() {
        let flat = shape.to_flat();
        for c in 0..n2 {
            resid[(r, c)] = flat[c] - mean_flat[c];
        }
    }

    let denom = (s_count.max(2) - 1) as f64;
    let svd = (resid.clone() / denom.sqrt()).svd(false, true);
    let v_t = svd
        .v_t
        .ok_or(Error::SingularConfiguration("shape covariance SVD failed"))?;

    let mut eigs: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    let total: f64 = eigs.iter().sum();

    let (basis, eigenvalues) = if total <= 1e-18 {
        // Degenerate corpus with no variation at all: keep a single dummy
        // direction with floor variance so downstream math stays defined.
        let mut b = DMatrix::zeros(n2, 1);
        b[(0, 0)] = 1.0;
        (b, DVector::from_element(1, EIGENVALUE_FLOOR))
    } else {
        let mut d = eigs.len();
        let mut acc = 0.0;
        for (k, &e) in eigs.iter().enumerate() {
            acc += e;
            if acc >= variance_fraction * total {
                d = k + 1;
                break;
            }
        }
        let d = d.max(1);
        let mut b = DMatrix::zeros(n2, d);
        for j in 0..d {
            for i in 0..n2 {
                b[(i, j)] = v_t[(j, i)];
            }
        }
        eigs.truncate(d);
        for e in &mut eigs {
            *e = e.max(EIGENVALUE_FLOOR);
        }
        (b, DVector::from_vec(eigs))
    };

    // Per-landmark residual spread, ridged so the Mahalanobis metric is
    // always defined even for landmarks that never move.
    let mut landmark_cov = Vec::with_capacity(n);
    for i in 0..n {
        let mut c = Mat2::zeros();
        for r in 0..s_count {
            let dx = resid[(r, i * 2)];
            let dy = resid[(r, i * 2 + 1)];
            c[(0, 0)] += dx * dx;
            c[(0, 1)] += dx * dy;
            c[(1, 0)] += dx * dy;
            c[(1, 1)] += dy * dy;
        }
        c /= denom;
        let trace = c[(0, 0)] + c[(1, 1)];
        let ridge = if trace > 1e-12 {
            COV_RIDGE_FRACTION * trace / 2.0
        } else {
            COV_ABS_FLOOR
        };
        c[(0, 0)] += ridge;
        c[(1, 1)] += ridge;
        landmark_cov.push(c);
    }

    Ok(PointDistributionModel {
        mean: mean.clone(),
        basis,
        eigenvalues,
        landmark_cov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::align_shapes;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Builds a training set from a known 2-mode generative model and checks
    /// the learned model reproduces it.
    fn planted_corpus(seed: u64, count: usize) -> Vec<Shape> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let base: Vec<f64> = (0..n)
            .flat_map(|i| {
                let a = i as f64 / n as f64 * std::f64::consts::TAU;
                [a.cos() * 10.0, a.sin() * 6.0]
            })
            .collect();
        // Two orthogonal deformation directions with distinct strengths.
        let mut dir1 = vec![0.0; n * 2];
        let mut dir2 = vec![0.0; n * 2];
        for i in 0..n {
            dir1[i * 2] = ((i * 7 + 1) as f64).sin();
            dir2[i * 2 + 1] = ((i * 3 + 2) as f64).cos();
        }
        (0..count)
            .map(|_| {
                let c1: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * 2.0;
                let c2: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.8;
                let flat: Vec<f64> = base
                    .iter()
                    .zip(dir1.iter().zip(dir2.iter()))
                    .map(|(b, (d1, d2))| b + c1 * d1 + c2 * d2)
                    .collect();
                Shape::from_flat(&flat).unwrap()
            })
            .collect()
    }

    fn anchors(n: usize) -> Vec<Vec<usize>> {
        (0..n).map(|i| vec![i]).collect()
    }

    #[test]
    fn planted_two_mode_corpus_yields_two_dims() {
        let shapes = planted_corpus(7, 200);
        let aligned = align_shapes(&shapes, &anchors(8), 1e-9, 100).unwrap();
        let model = train_pdm(&aligned, 0.98).unwrap();
        model.validate().unwrap();
        // Alignment itself absorbs part of the planted deformation, so allow
        // a little slack above the planted rank.
        assert!(model.dims() <= 4, "dims = {}", model.dims());
        assert!(model.eigenvalues[0] > model.eigenvalues[model.dims() - 1]);
    }

    #[test]
    fn zero_deformation_instantiates_the_mean() {
        let shapes = planted_corpus(3, 50);
        let aligned = align_shapes(&shapes, &anchors(8), 1e-9, 100).unwrap();
        let model = train_pdm(&aligned, 0.95).unwrap();
        let q = DVector::zeros(model.dims());
        let s = model.instantiate(&q).unwrap();
        assert!(s.rms_distance(&model.mean) < 1e-12);
    }

    #[test]
    fn project_then_instantiate_recovers_in_model_subspace() {
        let shapes = planted_corpus(11, 100);
        let aligned = align_shapes(&shapes, &anchors(8), 1e-9, 100).unwrap();
        let model = train_pdm(&aligned, 0.999).unwrap();
        let target = &aligned.shapes[0];
        let q = model.project(target).unwrap();
        let rebuilt = model.instantiate(&q).unwrap();
        // With ~all variance retained the reconstruction should be close.
        assert!(rebuilt.rms_distance(target) < 0.05);
    }

    #[test]
    fn clamp_limits_each_coefficient() {
        let shapes = planted_corpus(5, 80);
        let aligned = align_shapes(&shapes, &anchors(8), 1e-9, 100).unwrap();
        let model = train_pdm(&aligned, 0.95).unwrap();
        let mut q = DVector::from_element(model.dims(), 1e3);
        assert!(model.clamp(&mut q, 3.0));
        for j in 0..model.dims() {
            assert!((q[j] - 3.0 * model.eigenvalues[j].sqrt()).abs() < 1e-12);
        }
        let mut q2 = DVector::zeros(model.dims());
        assert!(!model.clamp(&mut q2, 3.0));
    }

    #[test]
    fn identical_shapes_fall_back_to_floor_variance() {
        let s = Shape::from_flat(&[0.0, 0.0, 3.0, 0.0, 0.0, 3.0, 3.0, 3.0]).unwrap();
        let shapes = vec![s.clone(), s.clone(), s];
        let aligned = align_shapes(&shapes, &anchors(4), 1e-9, 100).unwrap();
        let model = train_pdm(&aligned, 0.95).unwrap();
        assert_eq!(model.dims(), 1);
        model.validate().unwrap();
    }

    #[test]
    fn landmark_covariances_are_spd() {
        let shapes = planted_corpus(13, 60);
        let aligned = align_shapes(&shapes, &anchors(8), 1e-9, 100).unwrap();
        let model = train_pdm(&aligned, 0.95).unwrap();
        for c in &model.landmark_cov {
            assert!(c[(0, 0)] > 0.0);
            assert!(c.determinant() > 0.0);
        }
    }
}
