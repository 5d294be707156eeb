//! Alignment entry points: fit every pose/expression model, pick the best.
//!
//! Modes are fit in parallel; each draws its hypothesis stream from a seed
//! derived from the configured base seed and the mode's index, so results
//! are identical regardless of how the work is scheduled across threads.

use rayon::prelude::*;

use crate::appearance::{
    extract_candidates, extract_reference_window, merge_candidates, response_map, Candidate,
    DescriptorGeometry, SearchSpace,
};
use crate::config::{derive_seed, FitConfig, SearchConfig};
use crate::error::{Error, Result};
use crate::fitter::{fit_mode, refine_fit, rank_by_support, select_best, ModeFit, ModeScore};
use crate::geometry::FaceBox;
use crate::img::{GrayImageF, GridRect};
use crate::shape::{ModeId, ModelEnsemble};

/// Fit summary of one attempted mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeReport {
    pub id: ModeId,
    /// Supported landmark count and mean error, when the mode fit at all.
    pub score: Option<(usize, f64)>,
    /// Hypotheses evaluated until the winning one appeared, when fitted.
    pub hypotheses_to_best: Option<usize>,
}

/// The ensemble's answer for one face.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentOutcome {
    /// The selected fit (refined, when the pipeline had an image to refine
    /// against).
    pub chosen: ModeFit,
    /// Runners-up ranked by support ratio, best first.
    pub alternates: Vec<ModeFit>,
    /// One row per mode, in ensemble order.
    pub reports: Vec<ModeReport>,
}

fn assemble_outcome(
    ensemble: &ModelEnsemble,
    fits: &[Option<ModeFit>],
    top_r: usize,
) -> Result<(usize, AlignmentOutcome)> {
    let scores: Vec<ModeScore> = ensemble
        .modes
        .iter()
        .zip(fits)
        .map(|(m, f)| {
            ModeScore::new(m.id, f.as_ref().map(|f| (f.visible_count, f.mean_error)))
        })
        .collect();
    let chosen_id = select_best(ensemble.pose_count, &scores).ok_or_else(|| {
        Error::AlignmentFailed("no pose/expression model produced a usable fit".into())
    })?;
    let chosen_index = ensemble
        .modes
        .iter()
        .position(|m| m.id == chosen_id)
        .expect("selected id comes from the score table");

    let alternates: Vec<ModeFit> = rank_by_support(&scores)
        .into_iter()
        .filter(|&id| id != chosen_id)
        .take(top_r)
        .map(|id| {
            let idx = ensemble.modes.iter().position(|m| m.id == id).unwrap();
            fits[idx].clone().unwrap()
        })
        .collect();
    let reports: Vec<ModeReport> = ensemble
        .modes
        .iter()
        .zip(fits)
        .map(|(m, f)| ModeReport {
            id: m.id,
            score: f.as_ref().map(|f| (f.visible_count, f.mean_error)),
            hypotheses_to_best: f.as_ref().map(|f| f.hypotheses_to_best),
        })
        .collect();
    let outcome = AlignmentOutcome {
        chosen: fits[chosen_index].clone().unwrap(),
        alternates,
        reports,
    };
    Ok((chosen_index, outcome))
}

/// Aligns one shared set of candidate pools with every mode of the ensemble
/// and selects the best explanation.
///
/// The pools stay in whatever frame the caller produced them in; the chosen
/// fit's shapes come back in that same frame. All modes must expect the
/// caller's landmark count. Fails with [`Error::AlignmentFailed`] when no
/// mode fits.
pub fn align_candidates(
    ensemble: &ModelEnsemble,
    candidates: &[Vec<Candidate>],
    cfg: &FitConfig,
) -> Result<AlignmentOutcome> {
    for m in &ensemble.modes {
        if m.scheme.count() != candidates.len() {
            return Err(Error::dim(
                m.scheme.count(),
                candidates.len(),
                "candidate pools vs ensemble landmarks",
            ));
        }
    }
    let fits: Vec<Option<ModeFit>> = ensemble
        .modes
        .par_iter()
        .enumerate()
        .map(|(idx, mode)| fit_mode(mode, candidates, cfg, derive_seed(cfg.seed, idx as u64)))
        .collect::<Result<Vec<_>>>()?;
    let (_, outcome) = assemble_outcome(ensemble, &fits, cfg.top_r)?;
    Ok(outcome)
}

/// Full alignment of one detected face: detector candidates, per-mode
/// fitting, selection, and tangent refinement of the winner.
///
/// Every mode must carry detectors sharing one descriptor geometry. All
/// output shapes are in image coordinates.
pub fn align_face(
    image: &GrayImageF,
    face: &FaceBox,
    ensemble: &ModelEnsemble,
    fit_cfg: &FitConfig,
    search_cfg: &SearchConfig,
) -> Result<AlignmentOutcome> {
    let desc = match ensemble
        .modes
        .iter()
        .find_map(|m| m.detectors.as_ref().map(|d| &d.descriptor))
    {
        Some(d) => d,
        None => {
            return Err(Error::InvalidParameter(
                "image alignment needs trained detectors".into(),
            ))
        }
    };
    for m in &ensemble.modes {
        match &m.detectors {
            Some(d) if d.descriptor == *desc => {}
            Some(_) => {
                return Err(Error::InvalidParameter(
                    "all modes must share one descriptor geometry".into(),
                ))
            }
            None => {
                return Err(Error::InvalidParameter(format!(
                    "mode {} has no detectors",
                    m.id
                )))
            }
        }
    }
    let geom = DescriptorGeometry::new(desc)?;
    let window = extract_reference_window(image, face, desc)?;
    let space = SearchSpace::new(window.image.clone(), window.valid, &search_cfg.scales)?;
    let half = search_cfg.search_half_width_frac * desc.face_width;

    // Candidate extraction and fitting, one task per mode.
    let per_mode: Vec<(Option<ModeFit>, Vec<Vec<Candidate>>)> = ensemble
        .modes
        .par_iter()
        .enumerate()
        .map(|(idx, mode)| -> Result<(Option<ModeFit>, Vec<Vec<Candidate>>)> {
            let dets = mode.detectors.as_ref().expect("checked above");
            let placement = mode.placement_into_box(&window.face)?;
            let sparse_mean = mode.dense.sparse_from_dense(&mode.dense.model.mean);
            let mut pools = Vec::with_capacity(mode.scheme.count());
            for k in 0..mode.scheme.count() {
                let p = placement.apply(sparse_mean.point(k));
                let region = GridRect::new(
                    (p.x - half).floor() as i64,
                    (p.y - half).floor() as i64,
                    (p.x + half).ceil() as i64,
                    (p.y + half).ceil() as i64,
                );
                let mut cands = Vec::new();
                for det in &dets.per_landmark[k] {
                    let grids = response_map(&space, region, det, &geom, search_cfg)?;
                    cands.extend(extract_candidates(&grids, search_cfg));
                }
                pools.push(merge_candidates(cands, search_cfg.merge_radius));
            }
            let fit = fit_mode(mode, &pools, fit_cfg, derive_seed(fit_cfg.seed, idx as u64))?;
            Ok((fit, pools))
        })
        .collect::<Result<Vec<_>>>()?;
    let (fits, pools): (Vec<_>, Vec<_>) = per_mode.into_iter().unzip();

    let (chosen_index, mut outcome) = assemble_outcome(ensemble, &fits, fit_cfg.top_r)?;
    outcome.chosen = refine_fit(
        &outcome.chosen,
        &ensemble.modes[chosen_index],
        &window.image,
        &pools[chosen_index],
        fit_cfg,
        search_cfg,
    )?;

    // Everything so far lives in window coordinates; hand back image ones.
    let to_image = window.to_reference.inverse();
    outcome.chosen = outcome.chosen.transformed(&to_image);
    for alt in &mut outcome.alternates {
        *alt = alt.transformed(&to_image);
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitter::test_support::{pools_for_instance, shaped_mode};
    use crate::geometry::{Similarity, Vec2};
    use nalgebra::DVector;

    /// Two poses (round and wide), two expressions each (identical models —
    /// expressions only need to exist for the selection plumbing).
    fn two_pose_ensemble() -> ModelEnsemble {
        let widths = [1.0, 1.6];
        let mut modes = Vec::new();
        for (pose, &sx) in widths.iter().enumerate() {
            for expression in 0..2 {
                modes.push(shaped_mode(ModeId { pose, expression }, sx));
            }
        }
        ModelEnsemble::new(2, modes).unwrap()
    }

    #[test]
    fn the_generating_pose_family_is_selected() {
        let ensemble = two_pose_ensemble();
        let pose = Similarity::new(35.0, -0.1, Vec2::new(90.0, 110.0)).unwrap();
        let q = DVector::from_vec(vec![0.05, 0.05]);
        // Instance drawn from the wide family (pose 1).
        let pools = pools_for_instance(&ensemble.modes[2], &q, &pose, &[6], &[]);
        let out = align_candidates(&ensemble, &pools, &FitConfig::default()).unwrap();
        assert_eq!(out.chosen.id.pose, 1, "wide instance must pick the wide pose");
        assert_eq!(out.reports.len(), 4);
        assert!(out.alternates.len() <= FitConfig::default().top_r);
        // The chosen mode never repeats among the alternates.
        assert!(out.alternates.iter().all(|a| a.id != out.chosen.id));
    }

    #[test]
    fn alignment_is_reproducible() {
        let ensemble = two_pose_ensemble();
        let pose = Similarity::new(28.0, 0.2, Vec2::new(70.0, 60.0)).unwrap();
        let q = DVector::from_vec(vec![-0.1, 0.08]);
        let clutter = [(0usize, Vec2::new(10.0, 10.0)), (3, Vec2::new(150.0, 20.0))];
        let pools = pools_for_instance(&ensemble.modes[0], &q, &pose, &[2], &clutter);
        let cfg = FitConfig::default();
        let a = align_candidates(&ensemble, &pools, &cfg).unwrap();
        let b = align_candidates(&ensemble, &pools, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_pools_fail_with_an_alignment_error() {
        let ensemble = two_pose_ensemble();
        let pools = vec![Vec::new(); 8];
        match align_candidates(&ensemble, &pools, &FitConfig::default()) {
            Err(Error::AlignmentFailed(_)) => {}
            other => panic!("expected AlignmentFailed, got {other:?}"),
        }
    }

    #[test]
    fn pool_count_mismatch_is_rejected() {
        let ensemble = two_pose_ensemble();
        let pools = vec![Vec::new(); 5];
        assert!(matches!(
            align_candidates(&ensemble, &pools, &FitConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn detectorless_ensembles_cannot_align_images() {
        let ensemble = two_pose_ensemble();
        let image = GrayImageF::new(64, 64);
        let face = FaceBox::new(10.0, 10.0, 40.0, 40.0).unwrap();
        assert!(align_face(
            &image,
            &face,
            &ensemble,
            &FitConfig::default(),
            &SearchConfig::default()
        )
        .is_err());
    }
}
