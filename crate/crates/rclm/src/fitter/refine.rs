//! Post-selection refinement of the winning fit.
//!
//! Once a pose/expression model has been chosen, its detectors get a second
//! look at the image — this time rotation-compensated by the fitted pose and
//! restricted to a short segment along each contour's local tangent, where
//! contour landmarks are free to slide. Accepted peaks join the observation
//! set (recovering landmarks the hypothesis search had dropped), the shape
//! is re-completed, and the result is kept only when it explains at least as
//! much as before.

use crate::appearance::{patch_descriptor, Candidate, DescriptorGeometry};
use crate::config::{FitConfig, SearchConfig};
use crate::error::{Error, Result};
use crate::fitter::hallucinate::{hallucinate_shape, Observation};
use crate::fitter::ModeFit;
use crate::geometry::{Mat2, Vec2};
use crate::img::GrayImageF;
use crate::scheme::{LandmarkKind, LandmarkScheme};
use crate::shape::ModeModel;

/// Local tangent of the contour through landmark `k`, from the fitted
/// positions of its run neighbors. `None` for isolated or degenerate runs.
pub(crate) fn tangent_direction(
    shape: &crate::shape::Shape,
    scheme: &LandmarkScheme,
    k: usize,
) -> Option<Vec2> {
    let (run, pos) = scheme.contour_position(k)?;
    let n = run.indices.len();
    if n < 2 {
        return None;
    }
    let prev = if pos > 0 {
        run.indices[pos - 1]
    } else if run.closed {
        run.indices[n - 1]
    } else {
        run.indices[0]
    };
    let next = if pos + 1 < n {
        run.indices[pos + 1]
    } else if run.closed {
        run.indices[0]
    } else {
        run.indices[n - 1]
    };
    let d = shape.point(next) - shape.point(prev);
    let len = d.norm();
    if len < 1e-9 {
        return None;
    }
    Some(d / len)
}

/// Search offsets ordered center-out: 0, 1, -1, 2, -2, ... so score ties
/// prefer staying put.
fn centered_offsets(half_length: i64) -> Vec<i64> {
    let mut offsets = vec![0];
    for o in 1..=half_length {
        offsets.push(o);
        offsets.push(-o);
    }
    offsets
}

/// Refines a fitted mode against the image it came from.
///
/// Contour landmarks are re-detected along their local tangent with the
/// pose's rotation compensated; peaks above the detection threshold become
/// fresh observations and the shape is completed again. The original fit is
/// returned untouched when the mode has no detectors, no peak is accepted,
/// or the re-completed shape explains less than before.
pub fn refine_fit(
    fit: &ModeFit,
    mode: &ModeModel,
    window: &GrayImageF,
    candidates: &[Vec<Candidate>],
    fit_cfg: &FitConfig,
    search_cfg: &SearchConfig,
) -> Result<ModeFit> {
    let n = mode.scheme.count();
    if candidates.len() != n {
        return Err(Error::dim(n, candidates.len(), "candidate pools vs landmarks"));
    }
    let Some(detectors) = &mode.detectors else {
        return Ok(fit.clone());
    };
    let geom = DescriptorGeometry::new(&detectors.descriptor)?;
    let half_length = fit_cfg.refine_half_length.round().max(0.0) as i64;
    let offsets = centered_offsets(half_length);

    // Slide each contour landmark along its tangent and keep the best
    // above-threshold detector response.
    let mut peaks: Vec<Option<Vec2>> = vec![None; n];
    let mut any_peak = false;
    for k in 0..n {
        if mode.scheme.kind(k) != LandmarkKind::Contour {
            continue;
        }
        let bank = &detectors.per_landmark[k];
        if bank.is_empty() {
            continue;
        }
        let Some(tangent) = tangent_direction(&fit.sparse, &mode.scheme, k) else {
            continue;
        };
        let center = fit.sparse.point(k);
        let mut best_ratio = f64::NEG_INFINITY;
        let mut best_pos = None;
        for &o in &offsets {
            let pos = center + tangent * o as f64;
            let codes = patch_descriptor(window, pos, fit.pose.angle, &geom);
            let ratio = bank
                .iter()
                .map(|det| det.score(&codes) / det.max_score())
                .fold(f64::NEG_INFINITY, f64::max);
            if ratio > best_ratio {
                best_ratio = ratio;
                best_pos = Some(pos);
            }
        }
        if best_ratio > search_cfg.threshold_frac {
            peaks[k] = best_pos;
            any_peak = true;
        }
    }
    if !any_peak {
        return Ok(fit.clone());
    }

    // Rebuild the observation set: tangent peaks first, then the detections
    // that already supported the fit.
    let pose_inverse = fit.pose.inverse();
    // A tangent peak is trusted to about a pixel; expressed in the model
    // frame that is the pulled-back unit information.
    let peak_info = fit.pose.pull_back_form(Mat2::identity());
    let mut obs = Vec::new();
    for k in 0..n {
        if let Some(p) = peaks[k] {
            obs.push(Observation {
                point: mode.dense.groups[k].representative,
                target: pose_inverse.apply(p),
                info: peak_info,
            });
        } else if fit.visible[k] {
            if let Some(c_idx) = fit.chosen[k] {
                let c = &candidates[k][c_idx];
                obs.push(Observation {
                    point: mode.dense.groups[k].representative,
                    target: pose_inverse.apply(c.mean),
                    info: fit.pose.pull_back_form(c.info),
                });
            }
        }
    }
    if obs.is_empty() {
        return Ok(fit.clone());
    }
    let completion = match hallucinate_shape(&mode.dense.model, &obs, fit_cfg.clamp_sigmas) {
        Ok(h) => h,
        Err(Error::SingularConfiguration(_)) => return Ok(fit.clone()),
        Err(e) => return Err(e),
    };

    // Relabel against the re-completed shape; tangent peaks count as
    // detections for their landmark.
    let completed_sparse = mode.dense.sparse_from_dense(&completion.shape);
    let mut visible = vec![false; n];
    let mut chosen = vec![None; n];
    let mut visible_count = 0usize;
    let mut error_sum = 0.0;
    for k in 0..n {
        let metric = mode
            .dense
            .metric_cov(k)
            .try_inverse()
            .unwrap_or_else(Mat2::identity);
        let mut best = f64::INFINITY;
        for (idx, c) in candidates[k].iter().enumerate() {
            let delta = pose_inverse.apply(c.mean) - completed_sparse.point(k);
            let e = delta.dot(&(metric * delta)).max(0.0).sqrt();
            if e < best {
                best = e;
                chosen[k] = Some(idx);
            }
        }
        if let Some(p) = peaks[k] {
            let delta = pose_inverse.apply(p) - completed_sparse.point(k);
            let e = delta.dot(&(metric * delta)).max(0.0).sqrt();
            best = best.min(e);
        }
        if best <= fit_cfg.inlier_threshold {
            visible[k] = true;
            visible_count += 1;
            error_sum += best;
        }
    }
    if visible_count == 0 {
        return Ok(fit.clone());
    }
    let mean_error = (error_sum / visible_count as f64).max(super::MIN_MEAN_ERROR);

    // Keep the refinement only when it explains at least as much.
    let improves = visible_count > fit.visible_count
        || (visible_count == fit.visible_count && mean_error <= fit.mean_error);
    if !improves {
        return Ok(fit.clone());
    }

    let dense = completion.shape.transformed(&fit.pose);
    let sparse = mode.dense.sparse_from_dense(&dense);
    Ok(ModeFit {
        deform: completion.deform,
        dense,
        sparse,
        visible,
        chosen,
        visible_count,
        mean_error,
        clamped: completion.clamped,
        ..fit.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitter::test_support::{pools_for_instance, ring_mode};
    use crate::fitter::fit_mode;
    use crate::geometry::Similarity;
    use crate::shape::{ModeId, Shape};
    use nalgebra::DVector;

    #[test]
    fn tangent_follows_the_run_neighbors() {
        let scheme = LandmarkScheme::synthetic(4, 3);
        // Contour landmarks 4, 5, 6 laid out along x.
        let shape = Shape::new(vec![
            Vec2::new(0.0, 5.0),
            Vec2::new(1.0, 5.0),
            Vec2::new(2.0, 5.0),
            Vec2::new(3.0, 5.0),
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.5),
            Vec2::new(4.0, 1.0),
        ])
        .unwrap();
        let t = tangent_direction(&shape, &scheme, 5).unwrap();
        let expect = (shape.point(6) - shape.point(4)).normalize();
        assert!((t - expect).norm() < 1e-12);
        // Open run ends fall back to one-sided differences.
        let t0 = tangent_direction(&shape, &scheme, 4).unwrap();
        let expect0 = (shape.point(5) - shape.point(4)).normalize();
        assert!((t0 - expect0).norm() < 1e-12);
        // Feature landmarks have no tangent.
        assert!(tangent_direction(&shape, &scheme, 0).is_none());
    }

    #[test]
    fn fits_without_detectors_pass_through_unchanged() {
        let mode = ring_mode(ModeId { pose: 0, expression: 0 });
        let q = DVector::from_vec(vec![0.1, 0.0]);
        let pose = Similarity::new(40.0, 0.0, Vec2::new(100.0, 100.0)).unwrap();
        let pools = pools_for_instance(&mode, &q, &pose, &[], &[]);
        let fit = fit_mode(&mode, &pools, &FitConfig::default(), 3)
            .unwrap()
            .unwrap();
        let window = GrayImageF::new(64, 64);
        let refined = refine_fit(
            &fit,
            &mode,
            &window,
            &pools,
            &FitConfig::default(),
            &SearchConfig::default(),
        )
        .unwrap();
        assert_eq!(refined, fit);
    }
}
