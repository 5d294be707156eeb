//! Choosing the pose/expression model that best explains the observations.
//!
//! Selection is two-staged: poses are ranked by the summed support-per-error
//! ratio of their expression fits, then the winning pose's expression with
//! the most supported landmarks is taken. Failed fits contribute nothing,
//! and a pose whose every expression failed is out of the running entirely.

use crate::shape::ModeId;

/// The selection-relevant summary of one fit attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeScore {
    pub id: ModeId,
    /// `None` when the model produced no usable fit.
    pub outcome: Option<(usize, f64)>,
}

impl ModeScore {
    pub fn new(id: ModeId, outcome: Option<(usize, f64)>) -> Self {
        ModeScore { id, outcome }
    }

    fn ratio(&self) -> f64 {
        match self.outcome {
            Some((v, e)) => v as f64 / e,
            None => 0.0,
        }
    }
}

/// Picks the best mode: the pose maximizing the summed support ratio of its
/// expressions, then within it the expression with the most supported
/// landmarks. Ties resolve to the lowest index; all-failed input gives
/// `None`.
pub fn select_best(pose_count: usize, scores: &[ModeScore]) -> Option<ModeId> {
    let mut best_pose: Option<(usize, f64)> = None;
    for pose in 0..pose_count {
        let members = scores.iter().filter(|s| s.id.pose == pose);
        let mut any = false;
        let mut total = 0.0;
        for s in members {
            if s.outcome.is_some() {
                any = true;
                total += s.ratio();
            }
        }
        if !any {
            continue;
        }
        if best_pose.map_or(true, |(_, t)| total > t) {
            best_pose = Some((pose, total));
        }
    }
    let (pose, _) = best_pose?;

    let mut best: Option<(ModeId, usize)> = None;
    for s in scores.iter().filter(|s| s.id.pose == pose) {
        if let Some((v, _)) = s.outcome {
            if best.map_or(true, |(_, bv)| v > bv) {
                best = Some((s.id, v));
            }
        }
    }
    best.map(|(id, _)| id)
}

/// Mode ids of the successful fits ranked by support ratio, best first; ties
/// resolve to the lower `(pose, expression)` index.
pub fn rank_by_support(scores: &[ModeScore]) -> Vec<ModeId> {
    let mut ranked: Vec<&ModeScore> = scores.iter().filter(|s| s.outcome.is_some()).collect();
    ranked.sort_by(|a, b| {
        b.ratio()
            .partial_cmp(&a.ratio())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    ranked.into_iter().map(|s| s.id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(pose: usize, expression: usize) -> ModeId {
        ModeId { pose, expression }
    }

    #[test]
    fn pose_with_the_best_summed_ratio_wins() {
        // Pose 0: 10/1 + 4/2 = 12. Pose 1: 8/0.5 = 16 -> pose 1 wins even
        // though pose 0 has more supported landmarks in total.
        let scores = [
            ModeScore::new(id(0, 0), Some((10, 1.0))),
            ModeScore::new(id(0, 1), Some((4, 2.0))),
            ModeScore::new(id(1, 0), Some((8, 0.5))),
        ];
        assert_eq!(select_best(2, &scores), Some(id(1, 0)));
    }

    #[test]
    fn within_the_pose_the_expression_with_most_support_wins() {
        // Pose 0 wins on ratio through expression 1, but expression 0 has
        // more supported landmarks and takes the final pick.
        let scores = [
            ModeScore::new(id(0, 0), Some((9, 3.0))),
            ModeScore::new(id(0, 1), Some((6, 0.1))),
        ];
        assert_eq!(select_best(1, &scores), Some(id(0, 0)));
    }

    #[test]
    fn failed_fits_do_not_count() {
        let scores = [
            ModeScore::new(id(0, 0), None),
            ModeScore::new(id(0, 1), Some((3, 1.0))),
            ModeScore::new(id(1, 0), None),
        ];
        // Pose 1 has no successful expression; pose 0 wins by default.
        assert_eq!(select_best(2, &scores), Some(id(0, 1)));
        assert_eq!(select_best(2, &[ModeScore::new(id(0, 0), None)]), None);
    }

    #[test]
    fn ties_resolve_to_the_lowest_index() {
        let scores = [
            ModeScore::new(id(0, 0), Some((5, 1.0))),
            ModeScore::new(id(1, 0), Some((5, 1.0))),
        ];
        assert_eq!(select_best(2, &scores), Some(id(0, 0)));

        let scores = [
            ModeScore::new(id(0, 0), Some((5, 2.0))),
            ModeScore::new(id(0, 1), Some((5, 1.0))),
        ];
        // Equal support within the winning pose: expression 0 stays.
        assert_eq!(select_best(1, &scores), Some(id(0, 0)));
    }

    #[test]
    fn ranking_orders_by_support_ratio() {
        let scores = [
            ModeScore::new(id(0, 0), Some((4, 2.0))),
            ModeScore::new(id(0, 1), None),
            ModeScore::new(id(1, 0), Some((6, 1.0))),
            ModeScore::new(id(1, 1), Some((2, 1.0))),
        ];
        assert_eq!(rank_by_support(&scores), vec![id(1, 0), id(0, 0), id(1, 1)]);
    }
}
