//! Hypothesize-and-test shape fitting against candidate landmark pools.
//!
//! Each pose/expression model is fit independently: two detections pin a
//! similarity, the transformed mean is scored against the remaining pools by
//! a median mismatch degree, and the best hypothesis seeds inlier selection,
//! exemplar filtering, and closed-form shape completion. Occlusion falls out
//! of the procedure rather than being predicted up front — landmarks whose
//! detections never agree with the winning shape are left out of the solve
//! and reported as occluded.

mod align;
mod hallucinate;
mod refine;
mod sampling;
mod select;

pub use align::{align_candidates, align_face, AlignmentOutcome, ModeReport};
pub use hallucinate::{hallucinate_shape, Hallucination, Observation, HALLUCINATION_RIDGE};
pub use refine::refine_fit;
pub use sampling::{HypothesisPair, HypothesisSampler};
pub use select::{select_best, rank_by_support, ModeScore};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::appearance::Candidate;
use crate::config::FitConfig;
use crate::error::{Error, Result};
use crate::geometry::{
    similarity_from_two_points, similarity_least_squares, Mat2, Similarity, Vec2,
};
use crate::shape::{ModeId, ModeModel, Shape};

/// Floor applied to the mean inlier error so support ratios stay finite.
const MIN_MEAN_ERROR: f64 = 1e-6;

/// Caps for the alternating pose/deformation solve: iterate until the
/// coefficients stop moving or the round budget runs out.
const MAX_ALTERNATION_ROUNDS: usize = 64;
const ALTERNATION_TOL: f64 = 1e-12;

/// Pose scales outside this range mean the hypothesis pair was degenerate.
const MIN_POSE_SCALE: f64 = 1e-9;
const MAX_POSE_SCALE: f64 = 1e9;

/// The smaller middle order statistic: element `floor((n - 1) / 2)` of the
/// sorted values.
///
/// Taking the lower middle element keeps the statistic finite while up to
/// half of the values are corrupted (for even `n`, the conventional average
/// of the two middle elements already moves when exactly half are bad), and
/// infinities poison it only once they are in the majority. Values are
/// reordered in place.
///
/// Panics on an empty slice.
pub fn lower_median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let idx = (values.len() - 1) / 2;
    let (_, mid, _) = values.select_nth_unstable_by(idx, f64::total_cmp);
    *mid
}

/// Mahalanobis length of `delta` under the information matrix `info`.
#[inline]
fn mahalanobis(delta: Vec2, info: &Mat2) -> f64 {
    delta.dot(&(info * delta)).max(0.0).sqrt()
}

/// One model's best explanation of the candidate pools.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFit {
    pub id: ModeId,
    /// Maps the model frame into the frame the candidates live in.
    pub pose: Similarity,
    /// Deformation coefficients of the completed shape.
    pub deform: DVector<f64>,
    /// Completed dense shape in the candidate frame.
    pub dense: Shape,
    /// The named landmarks of [`ModeFit::dense`].
    pub sparse: Shape,
    /// Per-landmark visibility: whether some detection supports the fitted
    /// position. Non-visible landmarks are occluded or undetected.
    pub visible: Vec<bool>,
    /// Per-landmark candidate backing the label, where the pool is nonempty.
    pub chosen: Vec<Option<usize>>,
    pub visible_count: usize,
    /// Mean mismatch of the supported landmarks, floored away from zero.
    pub mean_error: f64,
    /// Mismatch degree of the winning hypothesis.
    pub mismatch: f64,
    /// How many hypotheses had been evaluated when the winner appeared.
    pub hypotheses_to_best: usize,
    pub hypotheses_evaluated: usize,
    /// Set when exemplar filtering would have left too few inliers and was
    /// skipped.
    pub exemplar_fallback: bool,
    /// Whether the deformation hit its plausibility clamp.
    pub clamped: bool,
}

impl ModeFit {
    /// Support per unit error; the cross-expression ranking statistic.
    pub fn support_ratio(&self) -> f64 {
        self.visible_count as f64 / self.mean_error
    }

    /// The same fit expressed in another frame.
    pub fn transformed(&self, g: &Similarity) -> ModeFit {
        ModeFit {
            pose: self.pose.then(g),
            dense: self.dense.transformed(g),
            sparse: self.sparse.transformed(g),
            ..self.clone()
        }
    }
}

struct BestHypothesis {
    degree: f64,
    pose: Similarity,
    errors: Vec<f64>,
    picks: Vec<Option<usize>>,
    found_at: usize,
}

/// Jointly recovers pose and deformation from the chosen candidates at the
/// given landmarks.
///
/// Estimating the pose from deformed landmarks biases it, and the
/// deformation solve cannot represent that bias (similarity directions are
/// not in the basis), so neither single-shot order is right. The two
/// closed-form solves alternate — deformation under the current pose, then
/// pose against the current completed positions — until the coefficients
/// stop moving.
///
/// Returns `Ok(None)` when not even the first completion is solvable.
fn complete_alternating(
    mode: &ModeModel,
    candidates: &[Vec<Candidate>],
    members: &[usize],
    picks: &[Option<usize>],
    mut pose: Similarity,
    clamp_sigmas: f64,
) -> Result<Option<(Similarity, Hallucination)>> {
    let dst: Vec<Vec2> = members
        .iter()
        .map(|&k| candidates[k][picks[k].unwrap()].mean)
        .collect();
    let mut completion: Option<Hallucination> = None;
    for _ in 0..MAX_ALTERNATION_ROUNDS {
        if let Some(done) = &completion {
            let src: Vec<Vec2> = members
                .iter()
                .map(|&k| done.shape.point(mode.dense.groups[k].representative))
                .collect();
            match similarity_least_squares(&src, &dst, None) {
                Ok(refit)
                    if refit.scale.is_finite()
                        && refit.scale > MIN_POSE_SCALE
                        && refit.scale < MAX_POSE_SCALE =>
                {
                    pose = refit;
                }
                _ => break,
            }
        }
        let pose_inverse = pose.inverse();
        let obs: Vec<Observation> = members
            .iter()
            .map(|&k| {
                let c = &candidates[k][picks[k].unwrap()];
                Observation {
                    point: mode.dense.groups[k].representative,
                    target: pose_inverse.apply(c.mean),
                    info: pose.pull_back_form(c.info),
                }
            })
            .collect();
        let h = match hallucinate_shape(&mode.dense.model, &obs, clamp_sigmas) {
            Ok(h) => h,
            Err(Error::SingularConfiguration(_)) if completion.is_some() => break,
            Err(Error::SingularConfiguration(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let moved = completion
            .as_ref()
            .map_or(f64::INFINITY, |prev| (&h.deform - &prev.deform).amax());
        completion = Some(h);
        if moved < ALTERNATION_TOL {
            break;
        }
    }
    Ok(completion.map(|h| (pose, h)))
}

/// Per-landmark agreement between the pools and the model mean under `pose`:
/// the smallest Mahalanobis distance achieved by any candidate, with the
/// achieving candidate, or infinity for empty pools.
fn pool_agreement(
    candidates: &[Vec<Candidate>],
    reference: &Shape,
    pose_inverse: &Similarity,
    metric_info: &[Mat2],
    errors: &mut [f64],
    picks: &mut [Option<usize>],
) {
    for k in 0..candidates.len() {
        let mut best = f64::INFINITY;
        let mut pick = None;
        for (idx, c) in candidates[k].iter().enumerate() {
            let delta = pose_inverse.apply(c.mean) - reference.point(k);
            let e = mahalanobis(delta, &metric_info[k]);
            if e < best {
                best = e;
                pick = Some(idx);
            }
        }
        errors[k] = best;
        picks[k] = pick;
    }
}

/// Fits one pose/expression model to the candidate pools.
///
/// Returns `Ok(None)` when the model cannot explain the pools — too few
/// landmarks detected, no hypothesis with a finite mismatch degree, or not
/// enough support surviving the filters. The seed fixes the hypothesis
/// stream, making the fit reproducible.
pub fn fit_mode(
    mode: &ModeModel,
    candidates: &[Vec<Candidate>],
    cfg: &FitConfig,
    seed: u64,
) -> Result<Option<ModeFit>> {
    let n = mode.scheme.count();
    if candidates.len() != n {
        return Err(Error::dim(n, candidates.len(), "candidate pools vs landmarks"));
    }
    if n < 2 {
        return Err(Error::InsufficientData(
            "fitting needs at least two landmarks".into(),
        ));
    }
    let min_inliers = cfg.min_inliers.max(2);

    let sparse_mean = mode.dense.sparse_from_dense(&mode.dense.model.mean);
    let metric_info: Vec<Mat2> = (0..n)
        .map(|k| {
            mode.dense
                .metric_cov(k)
                .try_inverse()
                .unwrap_or_else(Mat2::identity)
        })
        .collect();

    // Hypothesis search: every pair pins a pose, scored by the lower-median
    // agreement of all pools with the posed mean.
    let mut sampler =
        HypothesisSampler::new(candidates, cfg.strategy, ChaCha8Rng::seed_from_u64(seed));
    let mut best: Option<BestHypothesis> = None;
    let mut evaluated = 0usize;
    let mut errors = vec![f64::INFINITY; n];
    let mut picks: Vec<Option<usize>> = vec![None; n];
    let mut scratch = vec![0.0; n];
    while evaluated < cfg.max_iter {
        let Some(pair) = sampler.next() else { break };
        evaluated += 1;
        let (i, ci) = pair.a;
        let (j, cj) = pair.b;
        let Ok(pose) = similarity_from_two_points(
            sparse_mean.point(i),
            sparse_mean.point(j),
            candidates[i][ci].mean,
            candidates[j][cj].mean,
        ) else {
            continue;
        };
        if !pose.scale.is_finite() || pose.scale < MIN_POSE_SCALE || pose.scale > MAX_POSE_SCALE {
            continue;
        }
        let pose_inverse = pose.inverse();
        pool_agreement(
            candidates,
            &sparse_mean,
            &pose_inverse,
            &metric_info,
            &mut errors,
            &mut picks,
        );
        scratch.copy_from_slice(&errors);
        let degree = lower_median(&mut scratch);
        if best.as_ref().map_or(true, |b| degree < b.degree) {
            best = Some(BestHypothesis {
                degree,
                pose,
                errors: errors.clone(),
                picks: picks.clone(),
                found_at: evaluated,
            });
            if degree < cfg.early_exit {
                break;
            }
        }
    }
    let Some(best) = best else { return Ok(None) };
    if !best.degree.is_finite() {
        return Ok(None);
    }

    // The closest half of the landmarks become provisional inliers.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| best.errors[a].total_cmp(&best.errors[b]).then(a.cmp(&b)));
    let mut inliers: Vec<usize> = order
        .into_iter()
        .take(n / 2)
        .filter(|&k| best.errors[k].is_finite())
        .collect();
    inliers.sort_unstable();
    if inliers.len() < min_inliers {
        return Ok(None);
    }

    // Re-estimate the pose over all inliers; two points leave it noisy.
    let mut pose = best.pose;
    {
        let src: Vec<Vec2> = inliers.iter().map(|&k| sparse_mean.point(k)).collect();
        let dst: Vec<Vec2> = inliers
            .iter()
            .map(|&k| candidates[k][best.picks[k].unwrap()].mean)
            .collect();
        if let Ok(refit) = similarity_least_squares(&src, &dst, None) {
            if refit.scale.is_finite() && refit.scale > MIN_POSE_SCALE {
                pose = refit;
            }
        }
    }
    let mut pose_inverse = pose.inverse();

    // Keep only inliers consistent with the closest exemplar shape; landmark
    // sets that merely happen to fit the linear model but match no shape
    // seen in training are suspect. When the filter would starve the solve,
    // keep the unfiltered set and flag it.
    let mut exemplar_fallback = false;
    if !mode.exemplars.shapes.is_empty() {
        let pulled: Vec<(usize, Vec2)> = inliers
            .iter()
            .map(|&k| {
                (k, pose_inverse.apply(candidates[k][best.picks[k].unwrap()].mean))
            })
            .collect();
        let mut best_ex = 0;
        let mut best_err = f64::INFINITY;
        for (e_idx, ex) in mode.exemplars.shapes.iter().enumerate() {
            let err: f64 = pulled
                .iter()
                .map(|&(k, p)| (p - ex.point(k)).norm())
                .sum::<f64>()
                / pulled.len() as f64;
            if err < best_err {
                best_err = err;
                best_ex = e_idx;
            }
        }
        let ex = &mode.exemplars.shapes[best_ex];
        let kept: Vec<usize> = pulled
            .iter()
            .filter(|&&(k, p)| (p - ex.point(k)).norm() <= mode.exemplars.radius)
            .map(|&(k, _)| k)
            .collect();
        if kept.len() >= min_inliers {
            inliers = kept;
        } else {
            exemplar_fallback = true;
        }
    }

    // Complete the shape from the surviving observations.
    let Some((p, c)) =
        complete_alternating(mode, candidates, &inliers, &best.picks, pose, cfg.clamp_sigmas)?
    else {
        return Ok(None);
    };
    pose = p;
    pose_inverse = pose.inverse();
    let mut completion = c;

    // Labels come from agreement with the completed shape, not with the
    // crude posed mean the hypothesis search used.
    let mut completed_sparse = mode.dense.sparse_from_dense(&completion.shape);
    pool_agreement(
        candidates,
        &completed_sparse,
        &pose_inverse,
        &metric_info,
        &mut errors,
        &mut picks,
    );
    let supported: Vec<usize> = (0..n)
        .filter(|&k| errors[k] <= cfg.inlier_threshold)
        .collect();
    if supported.len() < min_inliers {
        return Ok(None);
    }

    // The provisional inliers were only half the landmarks. Re-complete with
    // every supported one: restricted to a small subset, a deformation
    // direction can resemble a similarity and the two solves then split the
    // motion between them arbitrarily, while the full support set keeps them
    // distinguishable.
    if let Some((p, c)) =
        complete_alternating(mode, candidates, &supported, &picks, pose, cfg.clamp_sigmas)?
    {
        pose = p;
        pose_inverse = pose.inverse();
        completion = c;
        completed_sparse = mode.dense.sparse_from_dense(&completion.shape);
        pool_agreement(
            candidates,
            &completed_sparse,
            &pose_inverse,
            &metric_info,
            &mut errors,
            &mut picks,
        );
    }
    let mut visible = vec![false; n];
    let mut visible_count = 0usize;
    let mut error_sum = 0.0;
    for k in 0..n {
        if errors[k] <= cfg.inlier_threshold {
            visible[k] = true;
            visible_count += 1;
            error_sum += errors[k];
        }
    }
    if visible_count < min_inliers {
        return Ok(None);
    }
    let mean_error = (error_sum / visible_count as f64).max(MIN_MEAN_ERROR);

    let dense = completion.shape.transformed(&pose);
    let sparse = mode.dense.sparse_from_dense(&dense);
    Ok(Some(ModeFit {
        id: mode.id,
        pose,
        deform: completion.deform,
        dense,
        sparse,
        visible,
        chosen: picks,
        visible_count,
        mean_error,
        mismatch: best.degree,
        hypotheses_to_best: best.found_at,
        hypotheses_evaluated: evaluated,
        exemplar_fallback,
        clamped: completion.clamped,
    }))
}

#[cfg(test)]
pub(crate) mod test_support {
    //! A small handcrafted pose/expression model shared by the fitter tests.

    use nalgebra::{DMatrix, DVector};

    use crate::appearance::Candidate;
    use crate::geometry::{Mat2, Similarity, Vec2};
    use crate::scheme::LandmarkScheme;
    use crate::shape::{densify, ExemplarSet, ModeId, ModeModel, PointDistributionModel, Shape};

    /// An 8-point ring model with two deformation directions: the first
    /// stretches it horizontally, the second shifts the lower half down.
    pub fn ring_mode(id: ModeId) -> ModeModel {
        shaped_mode(id, 1.0)
    }

    /// Like [`ring_mode`] but with the mean widened by `sx`, giving tests a
    /// family of genuinely different shape models.
    ///
    /// The deformation basis is orthogonalized against the similarity
    /// directions at the mean (translations, scaling, rotation), matching
    /// what principal components of aligned shapes look like; without that
    /// property pose and deformation would not be separable.
    pub fn shaped_mode(id: ModeId, sx: f64) -> ModeModel {
        let n = 8;
        let scheme = LandmarkScheme::synthetic(n, 0);
        let points: Vec<Vec2> = (0..n)
            .map(|i| {
                let a = i as f64 / n as f64 * std::f64::consts::TAU;
                Vec2::new(sx * a.cos(), a.sin())
            })
            .collect();
        let mean = Shape::new(points.clone()).unwrap();

        // Similarity directions at the mean.
        let mut sim = DMatrix::zeros(2 * n, 4);
        for i in 0..n {
            sim[(2 * i, 0)] = 1.0;
            sim[(2 * i + 1, 1)] = 1.0;
            sim[(2 * i, 2)] = points[i].x;
            sim[(2 * i + 1, 2)] = points[i].y;
            sim[(2 * i, 3)] = -points[i].y;
            sim[(2 * i + 1, 3)] = points[i].x;
        }
        // Raw directions: a horizontal stretch and an upper-half lift.
        let mut basis = DMatrix::zeros(2 * n, 2);
        for i in 0..n {
            basis[(2 * i, 0)] = points[i].x;
            basis[(2 * i + 1, 1)] = points[i].y.max(0.0);
        }
        // Project out the similarity span, then orthonormalize.
        let coeffs = (sim.transpose() * &sim)
            .try_inverse()
            .unwrap()
            * (sim.transpose() * &basis);
        basis -= sim * coeffs;
        let basis = nalgebra::QR::new(basis).q();
        let model = PointDistributionModel {
            mean: mean.clone(),
            basis,
            eigenvalues: DVector::from_vec(vec![0.04, 0.01]),
            landmark_cov: vec![Mat2::identity() * 0.01; n],
        };
        let dense = densify(&model, &scheme, 0).unwrap();
        ModeModel {
            id,
            scheme,
            dense,
            exemplars: ExemplarSet { shapes: vec![mean], radius: 0.8 },
            detectors: None,
            box_calibration: None,
        }
    }

    pub fn exact_candidate(p: Vec2, confidence: f64) -> Candidate {
        Candidate {
            mean: p,
            cov: Mat2::identity() * 0.25,
            info: Mat2::identity() * 4.0,
            confidence,
        }
    }

    /// Candidate pools for a posed instance of `mode`: visible landmarks get
    /// their true position (plus any `clutter` extras), `occluded` landmarks
    /// get only clutter.
    pub fn pools_for_instance(
        mode: &ModeModel,
        deform: &DVector<f64>,
        pose: &Similarity,
        occluded: &[usize],
        clutter: &[(usize, Vec2)],
    ) -> Vec<Vec<Candidate>> {
        let truth = mode
            .dense
            .model
            .instantiate(deform)
            .unwrap()
            .transformed(pose);
        let mut pools: Vec<Vec<Candidate>> = (0..mode.scheme.count())
            .map(|k| {
                if occluded.contains(&k) {
                    vec![]
                } else {
                    vec![exact_candidate(truth.point(k), 1.0)]
                }
            })
            .collect();
        for &(k, p) in clutter {
            pools[k].push(exact_candidate(p, 0.5));
        }
        pools
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::{pools_for_instance, ring_mode};
    use super::*;
    use nalgebra::DVector;

    fn test_pose() -> Similarity {
        Similarity::new(40.0, 0.25, Vec2::new(120.0, 95.0)).unwrap()
    }

    #[test]
    fn lower_median_is_the_lower_middle_order_statistic() {
        assert_eq!(lower_median(&mut [1.0, 2.0, 100.0]), 2.0);
        assert_eq!(lower_median(&mut [5.0]), 5.0);
        // Even count: the lower of the two middle elements, not their mean.
        assert_eq!(lower_median(&mut [4.0, 1.0, 3.0, 2.0]), 2.0);
    }

    #[test]
    fn lower_median_tolerates_up_to_half_infinities() {
        let inf = f64::INFINITY;
        assert_eq!(lower_median(&mut [3.0, inf, 1.0, inf, 2.0, inf]), 3.0);
        assert!(lower_median(&mut [1.0, inf, inf, inf, 2.0, inf]).is_infinite());
    }

    #[test]
    fn clean_instance_is_recovered_with_all_landmarks_visible() {
        let mode = ring_mode(ModeId { pose: 0, expression: 0 });
        let q = DVector::from_vec(vec![0.3, -0.15]);
        let pose = test_pose();
        let pools = pools_for_instance(&mode, &q, &pose, &[], &[]);
        let fit = fit_mode(&mode, &pools, &FitConfig::default(), 1)
            .unwrap()
            .expect("clean instance must fit");

        assert_eq!(fit.visible_count, 8);
        let truth = mode.dense.model.instantiate(&q).unwrap().transformed(&pose);
        assert!(
            fit.sparse.rms_distance(&truth) < 0.3,
            "rms {}",
            fit.sparse.rms_distance(&truth)
        );
        assert!((fit.pose.scale - pose.scale).abs() / pose.scale < 0.02);
    }

    #[test]
    fn occluded_landmarks_are_labeled_and_filled_in() {
        let mode = ring_mode(ModeId { pose: 0, expression: 0 });
        let q = DVector::from_vec(vec![0.2, 0.1]);
        let pose = test_pose();
        // Landmarks 2 and 5 vanish; 2 also gets a far-off clutter detection.
        let clutter = [(2usize, Vec2::new(400.0, 180.0))];
        let pools = pools_for_instance(&mode, &q, &pose, &[2, 5], &clutter);
        let fit = fit_mode(&mode, &pools, &FitConfig::default(), 2)
            .unwrap()
            .expect("instance with two occlusions must fit");

        assert!(!fit.visible[5], "undetected landmark must be occluded");
        assert!(!fit.visible[2], "clutter-only landmark must be occluded");
        assert_eq!(fit.visible_count, 6);

        let truth = mode.dense.model.instantiate(&q).unwrap().transformed(&pose);
        for k in [2usize, 5] {
            let err = (fit.sparse.point(k) - truth.point(k)).norm();
            // Hallucinated positions sit near the truth despite never being
            // observed; pose scale is 40, so this is under 5% of a radius.
            assert!(err < 2.0, "landmark {k} hallucinated {err} away");
        }
    }

    #[test]
    fn fitting_is_deterministic_in_the_seed() {
        let mode = ring_mode(ModeId { pose: 0, expression: 0 });
        let q = DVector::from_vec(vec![0.1, -0.05]);
        let pose = test_pose();
        let clutter = [(0usize, Vec2::new(300.0, 40.0)), (4, Vec2::new(30.0, 200.0))];
        let pools = pools_for_instance(&mode, &q, &pose, &[1], &clutter);
        let a = fit_mode(&mode, &pools, &FitConfig::default(), 77).unwrap();
        let b = fit_mode(&mode, &pools, &FitConfig::default(), 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_pools_empty_fails_cleanly() {
        let mode = ring_mode(ModeId { pose: 0, expression: 0 });
        let pools: Vec<Vec<crate::appearance::Candidate>> = vec![vec![]; 8];
        let fit = fit_mode(&mode, &pools, &FitConfig::default(), 0).unwrap();
        assert!(fit.is_none());
    }

    #[test]
    fn pool_count_must_match_the_scheme() {
        let mode = ring_mode(ModeId { pose: 0, expression: 0 });
        let pools: Vec<Vec<crate::appearance::Candidate>> = vec![vec![]; 5];
        assert!(fit_mode(&mode, &pools, &FitConfig::default(), 0).is_err());
    }

    #[test]
    fn early_exit_stops_the_search_on_a_clean_instance() {
        let mode = ring_mode(ModeId { pose: 0, expression: 0 });
        let q = DVector::from_vec(vec![0.0, 0.0]);
        let pose = test_pose();
        let pools = pools_for_instance(&mode, &q, &pose, &[], &[]);
        let fit = fit_mode(&mode, &pools, &FitConfig::default(), 5)
            .unwrap()
            .unwrap();
        // With exact candidates the very first valid pair already explains
        // everything; the search must not burn the whole budget.
        assert!(fit.hypotheses_evaluated < 10, "{}", fit.hypotheses_evaluated);
        assert!(fit.mismatch < FitConfig::default().early_exit);
    }
}
