//! Closed-form shape completion from a partial set of landmark observations.
//!
//! With the pose pinned, the deformation coefficients that best explain the
//! observed landmarks follow from a single weighted least-squares solve:
//! each observation constrains two rows of the deformation basis through its
//! information matrix, unobserved landmarks contribute nothing, and the
//! model then fills them in. A small ridge keeps the normal equations
//! well-posed when only a few landmarks are pinned, and the coefficients are
//! clamped to the model's plausible range afterwards.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{Mat2, Vec2};
use crate::shape::{PointDistributionModel, Shape};

/// Ridge added to the normal equations; keeps the solve well-posed when the
/// observations alone underdetermine the coefficients.
pub const HALLUCINATION_RIDGE: f64 = 1e-6;

/// One pinned landmark in the model frame.
#[derive(Debug, Clone)]
pub struct Observation {
    /// Index of the constrained model point.
    pub point: usize,
    /// Observed position, model frame.
    pub target: Vec2,
    /// Information (inverse covariance) of the observation, model frame.
    pub info: Mat2,
}

/// Result of a completion solve.
#[derive(Debug, Clone)]
pub struct Hallucination {
    pub deform: DVector<f64>,
    /// Full shape instantiated from the clamped coefficients.
    pub shape: Shape,
    /// Whether any coefficient hit the plausibility clamp.
    pub clamped: bool,
}

/// Solves for the deformation coefficients explaining `obs` and instantiates
/// the completed shape.
///
/// Minimizes `sum_i (B_i q - d_i)^T W_i (B_i q - d_i) + ridge |q|^2` where
/// `B_i` are the two basis rows of the observed point, `d_i` its displacement
/// from the mean and `W_i` its information matrix. Coefficients are clamped
/// to `clamp_sigmas` standard deviations per component before instantiation.
pub fn hallucinate_shape(
    model: &PointDistributionModel,
    obs: &[Observation],
    clamp_sigmas: f64,
) -> Result<Hallucination> {
    if obs.is_empty() {
        return Err(Error::EmptyInput("shape completion needs observations"));
    }
    let d = model.dims();
    let mut normal = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for o in obs {
        if o.point >= model.point_count() {
            return Err(Error::InvalidParameter(format!(
                "observation pins point {} of a {}-point model",
                o.point,
                model.point_count()
            )));
        }
        let rows = model.basis.rows(2 * o.point, 2);
        let delta = o.target - model.mean.point(o.point);
        normal += rows.transpose() * o.info * rows;
        rhs += rows.transpose() * (o.info * delta);
    }
    for i in 0..d {
        normal[(i, i)] += HALLUCINATION_RIDGE;
    }

    let mut deform = match normal.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => normal
            .full_piv_lu()
            .solve(&rhs)
            .ok_or(Error::SingularConfiguration(
                "shape completion normal equations are singular",
            ))?,
    };
    let clamped = model.clamp(&mut deform, clamp_sigmas);
    let shape = model.instantiate(&deform)?;
    Ok(Hallucination { deform, shape, clamped })
}
