//! Planar similarity transforms and the small closed-form estimators the
//! fitter relies on.
//!
//! Transforms are kept in `scale`/`angle`/`translation` form so the
//! parameters stay interpretable, but estimation runs through the complex
//! representation `z = scale * exp(i * angle)` where both the two-point and
//! the least-squares solutions are single divisions.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Rigid scale/rotation/translation map `p -> s * R(angle) * p + t`.
///
/// Scale is strictly positive and the rotation is proper (no reflection),
/// which the complex-number estimators below guarantee by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub scale: f64,
    pub angle: f64,
    pub translation: Vec2,
}

impl Similarity {
    pub fn identity() -> Self {
        Similarity {
            scale: 1.0,
            angle: 0.0,
            translation: Vec2::zeros(),
        }
    }

    pub fn new(scale: f64, angle: f64, translation: Vec2) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "similarity scale must be finite and positive, got {scale}"
            )));
        }
        if !angle.is_finite() || !translation.x.is_finite() || !translation.y.is_finite() {
            return Err(Error::InvalidParameter(
                "similarity angle/translation must be finite".into(),
            ));
        }
        Ok(Similarity {
            scale,
            angle,
            translation,
        })
    }

    /// Builds from the complex linear part `z = a + i b` and a translation.
    fn from_complex(a: f64, b: f64, translation: Vec2) -> Result<Self> {
        let scale = a.hypot(b);
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::SingularConfiguration(
                "similarity estimate collapsed to zero scale",
            ));
        }
        Ok(Similarity {
            scale,
            angle: b.atan2(a),
            translation,
        })
    }

    /// Linear part as a 2x2 matrix (`s * R`).
    pub fn linear(&self) -> Mat2 {
        let (s, c) = self.angle.sin_cos();
        Mat2::new(c, -s, s, c) * self.scale
    }

    /// Rotation part alone (unit determinant).
    pub fn rotation(&self) -> Mat2 {
        let (s, c) = self.angle.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        self.linear() * p + self.translation
    }

    pub fn apply_all(&self, points: &[Vec2]) -> Vec<Vec2> {
        let m = self.linear();
        points.iter().map(|p| m * p + self.translation).collect()
    }

    pub fn inverse(&self) -> Similarity {
        let inv_scale = 1.0 / self.scale;
        let inv_angle = -self.angle;
        let (s, c) = inv_angle.sin_cos();
        let rot = Mat2::new(c, -s, s, c) * inv_scale;
        Similarity {
            scale: inv_scale,
            angle: inv_angle,
            translation: -(rot * self.translation),
        }
    }

    /// Composition: `self.then(&g)` maps `p` to `g(self(p))`.
    pub fn then(&self, g: &Similarity) -> Similarity {
        Similarity {
            scale: self.scale * g.scale,
            angle: normalize_angle(self.angle + g.angle),
            translation: g.linear() * self.translation + g.translation,
        }
    }

    /// Pulls a quadratic form expressed around an image-frame point back into
    /// the model frame of this transform. If `q(x) = (x - mu)^T A (x - mu)` in
    /// the image frame and `x = self(y)`, the same form around `self^-1(mu)`
    /// in the model frame has matrix `s^2 R^T A R`.
    pub fn pull_back_form(&self, a: Mat2) -> Mat2 {
        let r = self.rotation();
        r.transpose() * a * r * (self.scale * self.scale)
    }
}

/// Axis-aligned face detection box in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl FaceBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && width.is_finite() && height.is_finite()) {
            return Err(Error::InvalidParameter("face box must be finite".into()));
        }
        if width <= 0.0 || height <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "face box must have positive area, got {width}x{height}"
            )));
        }
        Ok(FaceBox {
            x,
            y,
            width,
            height,
        })
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.x + self.width / 2.0, self.y + self.height / 2.0)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x && p.x <= self.x + self.width && p.y >= self.y && p.y <= self.y + self.height
    }
}

fn normalize_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

/// Exact similarity mapping one point pair onto another.
///
/// In complex form the linear part is `z = (b2 - b1) / (a2 - a1)` and the
/// translation `b1 - z * a1`. Coincident source points leave the map
/// undetermined and are reported as a singular configuration.
pub fn similarity_from_two_points(
    a1: Vec2,
    a2: Vec2,
    b1: Vec2,
    b2: Vec2,
) -> Result<Similarity> {
    let (dx, dy) = (a2.x - a1.x, a2.y - a1.y);
    let denom = dx * dx + dy * dy;
    if denom <= f64::EPSILON * f64::EPSILON {
        return Err(Error::SingularConfiguration(
            "two-point similarity needs distinct source points",
        ));
    }
    let (ex, ey) = (b2.x - b1.x, b2.y - b1.y);
    // (e / d) in complex arithmetic.
    let za = (ex * dx + ey * dy) / denom;
    let zb = (ey * dx - ex * dy) / denom;
    let t = Vec2::new(b1.x - (za * a1.x - zb * a1.y), b1.y - (zb * a1.x + za * a1.y));
    Similarity::from_complex(za, zb, t)
}

/// Weighted least-squares similarity minimizing `sum_i w_i |z a_i + t - b_i|^2`.
///
/// Weights default to one; negative weights are rejected. At least two
/// effectively weighted, non-coincident source points are required.
pub fn similarity_least_squares(
    src: &[Vec2],
    dst: &[Vec2],
    weights: Option<&[f64]>,
) -> Result<Similarity> {
    if src.len() != dst.len() {
        return Err(Error::dim(src.len(), dst.len(), "similarity point lists"));
    }
    if src.len() < 2 {
        return Err(Error::InsufficientData(
            "least-squares similarity needs at least two points".into(),
        ));
    }
    if let Some(w) = weights {
        if w.len() != src.len() {
            return Err(Error::dim(src.len(), w.len(), "similarity weights"));
        }
        if w.iter().any(|&wi| !wi.is_finite() || wi < 0.0) {
            return Err(Error::InvalidParameter(
                "similarity weights must be finite and non-negative".into(),
            ));
        }
    }
    let w_at = |i: usize| weights.map_or(1.0, |w| w[i]);

    let mut w_sum = 0.0;
    let mut a_mean = Vec2::zeros();
    let mut b_mean = Vec2::zeros();
    for i in 0..src.len() {
        let w = w_at(i);
        w_sum += w;
        a_mean += src[i] * w;
        b_mean += dst[i] * w;
    }
    if w_sum <= 0.0 {
        return Err(Error::SingularConfiguration(
            "similarity weights sum to zero",
        ));
    }
    a_mean /= w_sum;
    b_mean /= w_sum;

    // z = sum w (b - b_mean)(a - a_mean)* / sum w |a - a_mean|^2
    let mut num_re = 0.0;
    let mut num_im = 0.0;
    let mut denom = 0.0;
    for i in 0..src.len() {
        let w = w_at(i);
        let a = src[i] - a_mean;
        let b = dst[i] - b_mean;
        num_re += w * (b.x * a.x + b.y * a.y);
        num_im += w * (b.y * a.x - b.x * a.y);
        denom += w * (a.x * a.x + a.y * a.y);
    }
    if denom <= 0.0 {
        return Err(Error::SingularConfiguration(
            "similarity source points are coincident",
        ));
    }
    let za = num_re / denom;
    let zb = num_im / denom;
    let t = Vec2::new(
        b_mean.x - (za * a_mean.x - zb * a_mean.y),
        b_mean.y - (zb * a_mean.x + za * a_mean.y),
    );
    Similarity::from_complex(za, zb, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_point_estimate_maps_pair_exactly() {
        let t = similarity_from_two_points(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(3.0, 4.0),
            Vec2::new(3.0, 6.0),
        )
        .unwrap();
        // Unit x-axis segment lands on a vertical segment of length 2:
        // scale 2, rotation +90 degrees.
        assert_relative_eq!(t.scale, 2.0, epsilon = 1e-12);
        assert_relative_eq!(t.angle, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        let p = t.apply(Vec2::new(1.0, 0.0));
        assert_relative_eq!(p.x, 3.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn two_point_estimate_rejects_coincident_sources() {
        let r = similarity_from_two_points(
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
        );
        assert!(matches!(r, Err(Error::SingularConfiguration(_))));
    }

    #[test]
    fn inverse_round_trips() {
        let t = Similarity::new(1.7, 0.6, Vec2::new(-3.0, 2.5)).unwrap();
        let inv = t.inverse();
        let p = Vec2::new(0.3, -1.2);
        let back = inv.apply(t.apply(p));
        assert_relative_eq!(back.x, p.x, epsilon = 1e-12);
        assert_relative_eq!(back.y, p.y, epsilon = 1e-12);
    }

    #[test]
    fn composition_matches_sequential_application() {
        let f = Similarity::new(2.0, 0.3, Vec2::new(1.0, -1.0)).unwrap();
        let g = Similarity::new(0.5, -1.1, Vec2::new(4.0, 0.5)).unwrap();
        let h = f.then(&g);
        let p = Vec2::new(-2.0, 3.0);
        let expect = g.apply(f.apply(p));
        let got = h.apply(p);
        assert_relative_eq!(got.x, expect.x, epsilon = 1e-10);
        assert_relative_eq!(got.y, expect.y, epsilon = 1e-10);
    }

    #[test]
    fn least_squares_recovers_exact_similarity() {
        let t = Similarity::new(1.3, -0.4, Vec2::new(5.0, -2.0)).unwrap();
        let src: Vec<Vec2> = (0..7)
            .map(|i| Vec2::new((i as f64 * 1.37).sin() * 3.0, (i as f64 * 0.91).cos() * 2.0))
            .collect();
        let dst = t.apply_all(&src);
        let est = similarity_least_squares(&src, &dst, None).unwrap();
        assert_relative_eq!(est.scale, t.scale, epsilon = 1e-10);
        assert_relative_eq!(est.angle, t.angle, epsilon = 1e-10);
        assert_relative_eq!(est.translation.x, t.translation.x, epsilon = 1e-9);
        assert_relative_eq!(est.translation.y, t.translation.y, epsilon = 1e-9);
    }

    #[test]
    fn least_squares_ignores_zero_weight_outlier() {
        let t = Similarity::new(0.8, 1.2, Vec2::new(-1.0, 3.0)).unwrap();
        let mut src: Vec<Vec2> = (0..5)
            .map(|i| Vec2::new(i as f64, (i as f64) * 0.5 - 1.0))
            .collect();
        let mut dst = t.apply_all(&src);
        src.push(Vec2::new(100.0, -50.0));
        dst.push(Vec2::new(-999.0, 999.0));
        let mut w = vec![1.0; 6];
        w[5] = 0.0;
        let est = similarity_least_squares(&src, &dst, Some(&w)).unwrap();
        assert_relative_eq!(est.scale, t.scale, epsilon = 1e-9);
        assert_relative_eq!(est.angle, t.angle, epsilon = 1e-9);
    }

    #[test]
    fn pull_back_form_transforms_quadratic_correctly() {
        // Check s^2 R^T A R against a direct evaluation of the quadratic.
        let t = Similarity::new(1.9, 0.7, Vec2::new(2.0, -4.0)).unwrap();
        let a = Mat2::new(2.0, 0.3, 0.3, 1.1);
        let a_model = t.pull_back_form(a);
        let mu_img = Vec2::new(3.0, 1.0);
        let mu_model = t.inverse().apply(mu_img);
        let y = Vec2::new(0.42, -0.17);
        let x = t.apply(y);
        let q_img = (x - mu_img).dot(&(a * (x - mu_img)));
        let q_model = (y - mu_model).dot(&(a_model * (y - mu_model)));
        assert_relative_eq!(q_img, q_model, epsilon = 1e-9);
    }
}
