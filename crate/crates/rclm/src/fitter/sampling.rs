//! Hypothesis pair sampling over per-landmark candidate pools.
//!
//! A hypothesis names two detections at two different landmarks; the pose of
//! a shape model is pinned by mapping its mean onto that pair. How pairs are
//! drawn spans a spectrum: uniform draws need the most tries but are immune
//! to misleading scores, confidence-weighted draws reach good pairs sooner,
//! and the greedy sweep is fully deterministic, walking pairs in descending
//! confidence order and always taking each landmark's best detection.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::appearance::Candidate;
use crate::config::SamplingStrategy;

/// Two detections at two distinct landmarks, as `(landmark, candidate)`
/// index pairs into the candidate pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HypothesisPair {
    pub a: (usize, usize),
    pub b: (usize, usize),
}

/// Draws hypothesis pairs from a candidate pool under a sampling strategy.
///
/// Randomized strategies never run dry; the greedy sweep ends after visiting
/// every landmark pair once. Fewer than two landmarks with detections means
/// no hypothesis can ever be formed and `next` returns `None` immediately.
pub struct HypothesisSampler<'a> {
    candidates: &'a [Vec<Candidate>],
    strategy: SamplingStrategy,
    rng: ChaCha8Rng,
    /// Landmarks that have at least one detection.
    active: Vec<usize>,
    /// Summed candidate confidence per active landmark.
    pool_confidence: Vec<f64>,
    /// Most confident candidate per active landmark.
    best_candidate: Vec<usize>,
    /// Active-landmark order for the greedy sweep, best first.
    greedy_order: Vec<usize>,
    greedy_step: usize,
}

fn argmax_confidence(pool: &[Candidate]) -> usize {
    let mut best = 0;
    for (i, c) in pool.iter().enumerate().skip(1) {
        if c.confidence > pool[best].confidence {
            best = i;
        }
    }
    best
}

impl<'a> HypothesisSampler<'a> {
    pub fn new(
        candidates: &'a [Vec<Candidate>],
        strategy: SamplingStrategy,
        rng: ChaCha8Rng,
    ) -> Self {
        let active: Vec<usize> = (0..candidates.len())
            .filter(|&i| !candidates[i].is_empty())
            .collect();
        let pool_confidence: Vec<f64> = active
            .iter()
            .map(|&i| candidates[i].iter().map(|c| c.confidence.max(0.0)).sum())
            .collect();
        let best_candidate: Vec<usize> = active
            .iter()
            .map(|&i| argmax_confidence(&candidates[i]))
            .collect();

        // Sort active positions by their best single detection, strongest
        // first; index order breaks ties so the sweep is reproducible.
        let mut greedy_order: Vec<usize> = (0..active.len()).collect();
        greedy_order.sort_by(|&p, &q| {
            let cp = candidates[active[p]][best_candidate[p]].confidence;
            let cq = candidates[active[q]][best_candidate[q]].confidence;
            cq.partial_cmp(&cp)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(active[p].cmp(&active[q]))
        });

        HypothesisSampler {
            candidates,
            strategy,
            rng,
            active,
            pool_confidence,
            best_candidate,
            greedy_order,
            greedy_step: 0,
        }
    }

    /// Draws an index in `0..weights.len()` proportionally to `weights`,
    /// skipping `exclude`. Falls back to a uniform draw when the usable
    /// weight mass vanishes.
    fn weighted_draw(&mut self, weights: &[f64], exclude: Option<usize>) -> usize {
        let total: f64 = weights
            .iter()
            .enumerate()
            .filter(|&(i, _)| Some(i) != exclude)
            .map(|(_, &w)| w)
            .sum();
        if total > 0.0 {
            let mut r = self.rng.gen::<f64>() * total;
            for (i, &w) in weights.iter().enumerate() {
                if Some(i) == exclude {
                    continue;
                }
                r -= w;
                if r <= 0.0 {
                    return i;
                }
            }
        }
        // Zero mass (or accumulated rounding): uniform among the allowed.
        let n = weights.len() - usize::from(exclude.is_some());
        let mut k = self.rng.gen_range(0..n);
        if let Some(e) = exclude {
            if k >= e {
                k += 1;
            }
        }
        k
    }

    fn uniform_pair(&mut self) -> HypothesisPair {
        let n = self.active.len();
        let pi = self.rng.gen_range(0..n);
        let mut pj = self.rng.gen_range(0..n - 1);
        if pj >= pi {
            pj += 1;
        }
        let (i, j) = (self.active[pi], self.active[pj]);
        let ci = self.rng.gen_range(0..self.candidates[i].len());
        let cj = self.rng.gen_range(0..self.candidates[j].len());
        HypothesisPair { a: (i, ci), b: (j, cj) }
    }

    fn confidence_pair(&mut self) -> HypothesisPair {
        let weights = self.pool_confidence.clone();
        let pi = self.weighted_draw(&weights, None);
        let pj = self.weighted_draw(&weights, Some(pi));
        let (i, j) = (self.active[pi], self.active[pj]);
        let wi: Vec<f64> = self.candidates[i].iter().map(|c| c.confidence.max(0.0)).collect();
        let wj: Vec<f64> = self.candidates[j].iter().map(|c| c.confidence.max(0.0)).collect();
        let ci = self.weighted_draw(&wi, None);
        let cj = self.weighted_draw(&wj, None);
        HypothesisPair { a: (i, ci), b: (j, cj) }
    }

    fn greedy_pair(&mut self) -> Option<HypothesisPair> {
        // Enumerate pairs (p, q) with p < q ordered so that pairs among the
        // strongest landmarks come first: (0,1), (0,2), (1,2), (0,3), ...
        let n = self.greedy_order.len();
        let mut step = self.greedy_step;
        let mut q = 1;
        while q < n {
            if step < q {
                self.greedy_step += 1;
                let pa = self.greedy_order[step];
                let pb = self.greedy_order[q];
                return Some(HypothesisPair {
                    a: (self.active[pa], self.best_candidate[pa]),
                    b: (self.active[pb], self.best_candidate[pb]),
                });
            }
            step -= q;
            q += 1;
        }
        None
    }

    pub fn next(&mut self) -> Option<HypothesisPair> {
        if self.active.len() < 2 {
            return None;
        }
        match self.strategy {
            SamplingStrategy::Uniform => Some(self.uniform_pair()),
            SamplingStrategy::Confidence => Some(self.confidence_pair()),
            SamplingStrategy::Greedy => self.greedy_pair(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Mat2, Vec2};
    use rand::SeedableRng;

    fn cand(x: f64, conf: f64) -> Candidate {
        Candidate {
            mean: Vec2::new(x, 0.0),
            cov: Mat2::identity(),
            info: Mat2::identity(),
            confidence: conf,
        }
    }

    fn pool() -> Vec<Vec<Candidate>> {
        vec![
            vec![cand(0.0, 1.0), cand(1.0, 9.0)],
            vec![],
            vec![cand(2.0, 5.0)],
            vec![cand(3.0, 2.0), cand(4.0, 0.5)],
        ]
    }

    #[test]
    fn greedy_sweeps_pairs_in_confidence_order_and_ends() {
        let p = pool();
        let mut s =
            HypothesisSampler::new(&p, SamplingStrategy::Greedy, ChaCha8Rng::seed_from_u64(0));
        // Best-candidate confidences: lm0 -> 9, lm2 -> 5, lm3 -> 2.
        let drawn: Vec<_> = std::iter::from_fn(|| s.next()).collect();
        assert_eq!(
            drawn,
            vec![
                HypothesisPair { a: (0, 1), b: (2, 0) },
                HypothesisPair { a: (0, 1), b: (3, 0) },
                HypothesisPair { a: (2, 0), b: (3, 0) },
            ]
        );
    }

    #[test]
    fn random_strategies_avoid_empty_landmarks_and_self_pairs() {
        let p = pool();
        for strategy in [SamplingStrategy::Uniform, SamplingStrategy::Confidence] {
            let mut s = HypothesisSampler::new(&p, strategy, ChaCha8Rng::seed_from_u64(7));
            for _ in 0..200 {
                let h = s.next().unwrap();
                assert_ne!(h.a.0, h.b.0);
                assert_ne!(h.a.0, 1);
                assert_ne!(h.b.0, 1);
                assert!(h.a.1 < p[h.a.0].len());
                assert!(h.b.1 < p[h.b.0].len());
            }
        }
    }

    #[test]
    fn confidence_sampling_prefers_strong_landmarks() {
        let p = pool();
        let mut s =
            HypothesisSampler::new(&p, SamplingStrategy::Confidence, ChaCha8Rng::seed_from_u64(3));
        let mut hits0 = 0;
        let mut hits3 = 0;
        let draws = 2000;
        for _ in 0..draws {
            let h = s.next().unwrap();
            for lm in [h.a.0, h.b.0] {
                if lm == 0 {
                    hits0 += 1;
                }
                if lm == 3 {
                    hits3 += 1;
                }
            }
        }
        // Landmark 0 carries confidence mass 10.0 vs 2.5 at landmark 3.
        assert!(hits0 > hits3 * 2, "hits0={hits0} hits3={hits3}");
    }

    #[test]
    fn sampling_is_reproducible_for_a_fixed_seed() {
        let p = pool();
        for strategy in [SamplingStrategy::Uniform, SamplingStrategy::Confidence] {
            let mut a = HypothesisSampler::new(&p, strategy, ChaCha8Rng::seed_from_u64(11));
            let mut b = HypothesisSampler::new(&p, strategy, ChaCha8Rng::seed_from_u64(11));
            for _ in 0..100 {
                assert_eq!(a.next(), b.next());
            }
        }
    }

    #[test]
    fn single_landmark_pools_yield_nothing() {
        let p = vec![vec![cand(0.0, 1.0)], vec![]];
        for strategy in [
            SamplingStrategy::Uniform,
            SamplingStrategy::Confidence,
            SamplingStrategy::Greedy,
        ] {
            let mut s = HypothesisSampler::new(&p, strategy, ChaCha8Rng::seed_from_u64(0));
            assert_eq!(s.next(), None);
        }
    }
}
