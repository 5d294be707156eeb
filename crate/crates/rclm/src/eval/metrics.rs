//! Alignment accuracy metrics: normalized landmark error, failure rate, and
//! cumulative error distribution curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheme::LandmarkScheme;
use crate::shape::Shape;

/// A mean normalized error above this is a failed alignment; exactly at the
/// boundary still counts as a success.
pub const FAILURE_THRESHOLD: f64 = 0.1;

/// Which landmarks enter the error average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricSubset {
    /// Every landmark of the scheme.
    Full,
    /// The scheme minus its face outline, which is the least precisely
    /// annotated region of common markups.
    Inner,
}

impl MetricSubset {
    pub fn indices(self, scheme: &LandmarkScheme) -> Vec<usize> {
        match self {
            MetricSubset::Full => (0..scheme.count()).collect(),
            MetricSubset::Inner => (0..scheme.count())
                .filter(|i| !scheme.outline.contains(i))
                .collect(),
        }
    }
}

impl std::str::FromStr for MetricSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(MetricSubset::Full),
            "inner" => Ok(MetricSubset::Inner),
            other => Err(Error::InvalidParameter(format!(
                "unknown subset '{other}' (expected full or inner)"
            ))),
        }
    }
}

/// Distance between the outer eye corners of the ground truth, the scale
/// every landmark error is divided by.
pub fn interocular(truth: &Shape, scheme: &LandmarkScheme) -> Result<f64> {
    let (a, b) = scheme.outer_eyes;
    let d = (truth.point(a) - truth.point(b)).norm();
    if d <= f64::EPSILON {
        return Err(Error::SingularConfiguration(
            "outer eye corners coincide; cannot normalize errors",
        ));
    }
    Ok(d)
}

/// Mean Euclidean landmark error over the subset, divided by the ground
/// truth's outer-eye distance.
pub fn mnle(
    predicted: &Shape,
    truth: &Shape,
    scheme: &LandmarkScheme,
    subset: MetricSubset,
) -> Result<f64> {
    if predicted.len() != scheme.count() {
        return Err(Error::dim(scheme.count(), predicted.len(), "predicted shape"));
    }
    if truth.len() != scheme.count() {
        return Err(Error::dim(scheme.count(), truth.len(), "ground truth shape"));
    }
    let norm = interocular(truth, scheme)?;
    let indices = subset.indices(scheme);
    if indices.is_empty() {
        return Err(Error::EmptyInput("metric subset selects no landmarks"));
    }
    let sum: f64 = indices
        .iter()
        .map(|&i| (predicted.point(i) - truth.point(i)).norm())
        .sum();
    Ok(sum / indices.len() as f64 / norm)
}

/// Fraction of errors at or below each threshold. Failed alignments are
/// passed as infinity and therefore never counted.
pub fn ced_curve(errors: &[f64], thresholds: &[f64]) -> Vec<(f64, f64)> {
    if errors.is_empty() {
        return thresholds.iter().map(|&t| (t, 0.0)).collect();
    }
    thresholds
        .iter()
        .map(|&t| {
            let hits = errors.iter().filter(|&&e| e <= t).count();
            (t, hits as f64 / errors.len() as f64)
        })
        .collect()
}

/// Evenly spaced curve sample points covering the interesting error range,
/// placed so the failure threshold is one of them.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|i| i as f64 * 0.005).collect()
}

/// Aggregate accuracy over one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub subset: MetricSubset,
    /// Per-image normalized error, in input order; infinity marks an image
    /// with no usable alignment.
    pub per_image: Vec<f64>,
    /// Mean normalized error over the successful alignments.
    pub mnle: f64,
    /// Fraction of images with error above [`FAILURE_THRESHOLD`] (failures
    /// to align count).
    pub failure_rate: f64,
    /// `(threshold, fraction of images at or below it)` samples.
    pub ced: Vec<(f64, f64)>,
}

impl EvalReport {
    /// Builds the aggregate from per-image errors (infinity = no result).
    pub fn from_errors(errors: Vec<f64>, subset: MetricSubset, thresholds: &[f64]) -> EvalReport {
        let successes: Vec<f64> = errors
            .iter()
            .copied()
            .filter(|e| *e <= FAILURE_THRESHOLD)
            .collect();
        let failure_rate = if errors.is_empty() {
            0.0
        } else {
            1.0 - successes.len() as f64 / errors.len() as f64
        };
        let mnle = if successes.is_empty() {
            f64::NAN
        } else {
            successes.iter().sum::<f64>() / successes.len() as f64
        };
        EvalReport {
            subset,
            ced: ced_curve(&errors, thresholds),
            per_image: errors,
            mnle,
            failure_rate,
        }
    }

    /// Curve samples as tab-separated `threshold<TAB>fraction` lines, ready
    /// for any plotting tool.
    pub fn curve_tsv(&self) -> String {
        let mut out = String::from("threshold\tfraction\n");
        for &(t, f) in &self.ced {
            out.push_str(&format!("{t:?}\t{f:?}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Similarity, Vec2};

    fn scheme() -> LandmarkScheme {
        LandmarkScheme::synthetic(4, 2)
    }

    fn truth() -> Shape {
        Shape::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(10.0, 0.0),
            Vec2::new(5.0, 4.0),
            Vec2::new(5.0, 8.0),
            Vec2::new(2.0, 12.0),
            Vec2::new(8.0, 12.0),
        ])
        .unwrap()
    }

    #[test]
    fn exact_prediction_scores_zero() {
        assert_eq!(mnle(&truth(), &truth(), &scheme(), MetricSubset::Full).unwrap(), 0.0);
    }

    #[test]
    fn uniform_shift_scores_its_normalized_size() {
        let t = truth();
        let io = interocular(&t, &scheme()).unwrap();
        assert_eq!(io, 10.0);
        let shift = Vec2::new(0.05 * io, 0.0);
        let moved = Shape::new(t.points().iter().map(|p| p + shift).collect()).unwrap();
        let e = mnle(&moved, &t, &scheme(), MetricSubset::Full).unwrap();
        assert!((e - 0.05).abs() < 1e-12, "{e}");
    }

    #[test]
    fn mnle_is_invariant_under_a_common_similarity() {
        let t = truth();
        let mut pred_points = t.points().to_vec();
        pred_points[2] += Vec2::new(0.7, -0.4);
        pred_points[5] += Vec2::new(-0.2, 0.3);
        let pred = Shape::new(pred_points).unwrap();
        let base = mnle(&pred, &t, &scheme(), MetricSubset::Full).unwrap();

        let g = Similarity::new(3.7, 0.6, Vec2::new(-14.0, 9.0)).unwrap();
        let moved = mnle(
            &pred.transformed(&g),
            &t.transformed(&g),
            &scheme(),
            MetricSubset::Full,
        )
        .unwrap();
        assert!((moved - base).abs() < 1e-12, "{base} vs {moved}");
    }

    #[test]
    fn inner_subset_drops_the_outline() {
        let t = truth();
        // Corrupt only outline landmarks (4 and 5 in this scheme).
        let mut pred_points = t.points().to_vec();
        pred_points[4] += Vec2::new(50.0, 0.0);
        pred_points[5] += Vec2::new(0.0, 50.0);
        let pred = Shape::new(pred_points).unwrap();
        let full = mnle(&pred, &t, &scheme(), MetricSubset::Full).unwrap();
        let inner = mnle(&pred, &t, &scheme(), MetricSubset::Inner).unwrap();
        assert!(full > 1.0, "{full}");
        assert_eq!(inner, 0.0);
    }

    #[test]
    fn coincident_eye_corners_are_an_error() {
        let mut pts = truth().points().to_vec();
        pts[1] = pts[0];
        let degenerate = Shape::new(pts).unwrap();
        assert!(interocular(&degenerate, &scheme()).is_err());
    }

    #[test]
    fn failure_rate_counts_strictly_above_threshold() {
        let report =
            EvalReport::from_errors(vec![0.05, 0.15], MetricSubset::Full, &default_thresholds());
        assert_eq!(report.failure_rate, 0.5);
        // The boundary itself is a success.
        let boundary =
            EvalReport::from_errors(vec![0.1], MetricSubset::Full, &default_thresholds());
        assert_eq!(boundary.failure_rate, 0.0);
    }

    #[test]
    fn ced_is_nondecreasing_and_fr_is_one_minus_ced_at_threshold() {
        let errors = vec![0.02, 0.04, 0.04, 0.08, 0.12, f64::INFINITY, 0.3, 0.005];
        let report = EvalReport::from_errors(errors, MetricSubset::Full, &default_thresholds());
        for w in report.ced.windows(2) {
            assert!(w[1].1 >= w[0].1, "CED must not decrease: {w:?}");
        }
        assert!(report.ced.first().unwrap().1 >= 0.0);
        assert!(report.ced.last().unwrap().1 <= 1.0);
        let at_threshold = report
            .ced
            .iter()
            .find(|(t, _)| (*t - FAILURE_THRESHOLD).abs() < 1e-12)
            .expect("0.1 is a default sample point");
        assert!((report.failure_rate - (1.0 - at_threshold.1)).abs() < 1e-12);
    }

    #[test]
    fn single_error_steps_from_zero_to_one() {
        let curve = ced_curve(&[0.08], &[0.0, 0.05, 0.079, 0.08, 0.081, 0.2]);
        let values: Vec<f64> = curve.iter().map(|&(_, f)| f).collect();
        assert_eq!(values, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn all_zero_errors_make_the_curve_identically_one() {
        let curve = ced_curve(&[0.0; 5], &default_thresholds());
        assert!(curve.iter().all(|&(_, f)| f == 1.0));
    }
}
