//! Exemplar shapes for the plausibility filter.
//!
//! The linear deformation model can express configurations far outside the
//! training distribution when driven by bad detections. A small set of
//! cluster centers over the training shapes gives a cheap non-parametric
//! check: a hypothesis whose supporting detections do not resemble any
//! exemplar is suspect, and individual detections far from the best-matching
//! exemplar are dropped.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shape::Shape;

/// Cluster centers over normalized training shapes, plus the per-landmark
/// radius within which a detection counts as consistent with an exemplar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub shapes: Vec<Shape>,
    pub radius: f64,
}

/// Quantile of observed per-landmark deviations used to set the radius.
const RADIUS_QUANTILE: f64 = 0.95;
/// Slack multiplier on top of the observed quantile.
const RADIUS_SLACK: f64 = 2.0;

/// Seeded k-means over flattened normalized shapes. `k` is clamped to the
/// corpus size; empty clusters are reseeded to the farthest shape.
pub fn cluster_exemplars(shapes: &[Shape], k: usize, seed: u64) -> Result<ExemplarSet> {
    if shapes.is_empty() {
        return Err(Error::EmptyInput("no shapes to cluster"));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("exemplar count must be positive".into()));
    }
    let n = shapes[0].len();
    for s in shapes {
        if s.len() != n {
            return Err(Error::dim(n, s.len(), "shape sizes in exemplar corpus"));
        }
    }
    let k = k.min(shapes.len());
    let data: Vec<Vec<f64>> = shapes.iter().map(|s| s.to_flat()).collect();
    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(data[rng.gen_range(0..data.len())].clone());
    while centers.len() < k {
        let d2: Vec<f64> = data
            .iter()
            .map(|x| {
                centers
                    .iter()
                    .map(|c| dist2(x, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        if total <= 1e-24 {
            // All remaining shapes coincide with a center; duplicate one.
            centers.push(centers[0].clone());
            continue;
        }
        let mut pick = rng.gen::<f64>() * total;
        let mut chosen = data.len() - 1;
        for (i, &w) in d2.iter().enumerate() {
            pick -= w;
            if pick <= 0.0 {
                chosen = i;
                break;
            }
        }
        centers.push(data[chosen].clone());
    }

    let mut assign = vec![0usize; data.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, x) in data.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| {
                    dist2(x, &centers[a])
                        .partial_cmp(&dist2(x, &centers[b]))
                        .unwrap()
                })
                .unwrap();
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; n * 2]; k];
        let mut counts = vec![0usize; k];
        for (i, x) in data.iter().enumerate() {
            counts[assign[i]] += 1;
            for (acc, v) in sums[assign[i]].iter_mut().zip(x) {
                *acc += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed dead centers to the point farthest from its center.
                let far = (0..data.len())
                    .max_by(|&a, &b| {
                        dist2(&data[a], &centers[assign[a]])
                            .partial_cmp(&dist2(&data[b], &centers[assign[b]]))
                            .unwrap()
                    })
                    .unwrap();
                centers[c] = data[far].clone();
                changed = true;
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centers[c][j] = s / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // Radius: a high quantile of per-landmark deviations from the assigned
    // center, with slack so members are not rejected by their own cluster.
    let mut devs: Vec<f64> = Vec::with_capacity(data.len() * n);
    for (i, x) in data.iter().enumerate() {
        let c = &centers[assign[i]];
        for j in 0..n {
            let dx = x[j * 2] - c[j * 2];
            let dy = x[j * 2 + 1] - c[j * 2 + 1];
            devs.push(dx.hypot(dy));
        }
    }
    devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q_idx = ((devs.len() - 1) as f64 * RADIUS_QUANTILE).round() as usize;
    let radius = (devs[q_idx] * RADIUS_SLACK).max(1e-6);

    let shapes = centers
        .into_iter()
        .map(|c| Shape::from_flat(&c))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExemplarSet { shapes, radius })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;

    fn blob(center: Vec2, jitter: f64, seed: u64, count: usize) -> Vec<Shape> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let pts = (0..4)
                    .map(|i| {
                        let base = Vec2::new((i % 2) as f64 * 3.0, (i / 2) as f64 * 3.0);
                        base + center
                            + Vec2::new(
                                (rng.gen::<f64>() - 0.5) * jitter,
                                (rng.gen::<f64>() - 0.5) * jitter,
                            )
                    })
                    .collect();
                Shape::new(pts).unwrap()
            })
            .collect()
    }

    #[test]
    fn separated_clusters_are_recovered() {
        let mut shapes = blob(Vec2::new(0.0, 0.0), 0.2, 1, 40);
        shapes.extend(blob(Vec2::new(50.0, 0.0), 0.2, 2, 40));
        let ex = cluster_exemplars(&shapes, 2, 7).unwrap();
        assert_eq!(ex.shapes.len(), 2);
        let c0 = ex.shapes[0].centroid();
        let c1 = ex.shapes[1].centroid();
        assert!((c0 - c1).norm() > 40.0, "centers {c0:?} {c1:?}");
    }

    #[test]
    fn radius_covers_cluster_members() {
        let shapes = blob(Vec2::new(0.0, 0.0), 0.5, 3, 60);
        let ex = cluster_exemplars(&shapes, 1, 7).unwrap();
        let center = &ex.shapes[0];
        let mut covered = 0;
        let mut total = 0;
        for s in &shapes {
            for i in 0..s.len() {
                total += 1;
                if (s.point(i) - center.point(i)).norm() <= ex.radius {
                    covered += 1;
                }
            }
        }
        assert!(covered as f64 / total as f64 > 0.97);
    }

    #[test]
    fn clustering_is_deterministic_per_seed() {
        let mut shapes = blob(Vec2::new(0.0, 0.0), 1.0, 5, 30);
        shapes.extend(blob(Vec2::new(9.0, 4.0), 1.0, 6, 30));
        let a = cluster_exemplars(&shapes, 3, 11).unwrap();
        let b = cluster_exemplars(&shapes, 3, 11).unwrap();
        assert_eq!(a.shapes, b.shapes);
        assert_eq!(a.radius, b.radius);
    }

    #[test]
    fn k_larger_than_corpus_is_clamped() {
        let shapes = blob(Vec2::new(0.0, 0.0), 0.1, 8, 3);
        let ex = cluster_exemplars(&shapes, 10, 1).unwrap();
        assert_eq!(ex.shapes.len(), 3);
    }
}
