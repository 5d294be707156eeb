//! Turns detector response maps into a small set of candidate positions,
//! each with a local uncertainty estimate.
//!
//! Cells above a relative score threshold vote in a mean-shift pass that
//! finds response modes; around each mode a weighted quadratic is fit to the
//! score deficit, giving a sub-cell peak and an information matrix (sharp
//! peaks are trusted more than broad ridges). Candidates from all scale
//! grids are then merged, keeping the strongest within a small radius.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::appearance::response::ResponseGrid;
use crate::config::SearchConfig;
use crate::geometry::{Mat2, Vec2};

const MEAN_SHIFT_MAX_ITER: usize = 60;
const MEAN_SHIFT_TOL: f64 = 1e-3;
/// Minimum support cells for the quadratic fit; fewer falls back to an
/// isotropic bandwidth-sized uncertainty.
const MIN_FIT_CELLS: usize = 6;
const CURVATURE_FLOOR: f64 = 1e-8;

/// One possible landmark position extracted from a response map.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Peak position in the reference frame.
    pub mean: Vec2,
    /// Positional covariance implied by the local peak shape.
    pub cov: Mat2,
    /// Inverse of [`Candidate::cov`]; kept alongside because fitting
    /// consumes the information form far more often.
    pub info: Mat2,
    /// Thresholded score mass supporting the peak; comparable across
    /// scales and landmarks.
    pub confidence: f64,
}

struct SupportCell {
    pos: Vec2, // cell coordinates
    weight: f64,
    score: f64,
}

fn support_cells(grid: &ResponseGrid, threshold: f64) -> Vec<SupportCell> {
    let mut cells = Vec::new();
    for y in 0..grid.height {
        for x in 0..grid.width {
            let s = grid.score(x, y);
            if s > threshold {
                cells.push(SupportCell {
                    pos: Vec2::new(x as f64, y as f64),
                    weight: s - threshold,
                    score: s,
                });
            }
        }
    }
    cells
}

/// Flat-kernel weighted mean shift from `start`; returns the converged mode.
fn shift_to_mode(cells: &[SupportCell], start: Vec2, bandwidth: f64) -> Vec2 {
    let mut pos = start;
    for _ in 0..MEAN_SHIFT_MAX_ITER {
        let mut sum = Vec2::zeros();
        let mut mass = 0.0;
        for c in cells {
            if (c.pos - pos).norm() <= bandwidth {
                sum += c.weight * c.pos;
                mass += c.weight;
            }
        }
        if mass <= 0.0 {
            break;
        }
        let next = sum / mass;
        let step = (next - pos).norm();
        pos = next;
        if step < MEAN_SHIFT_TOL {
            break;
        }
    }
    pos
}

/// Symmetric 2x2 with eigenvalues floored so the matrix stays invertible
/// and positive definite even when the fit saw a ridge or a saddle.
fn clamp_curvature(a: Mat2) -> Mat2 {
    let sym = 0.5 * (a + a.transpose());
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.max();
    let floor = CURVATURE_FLOOR.max(CURVATURE_FLOOR * lmax);
    let fixed = DVector::from_iterator(2, eig.eigenvalues.iter().map(|&l| l.max(floor)));
    let q = eig.eigenvectors;
    q * Mat2::from_diagonal(&Vec2::new(fixed[0], fixed[1])) * q.transpose()
}

/// Fits `score_max - score ~ d'Ad - 2b'd + c` around a mode and converts the
/// curvature into a reference-frame candidate.
fn candidate_from_mode(
    grid: &ResponseGrid,
    cells: &[SupportCell],
    mode: Vec2,
    bandwidth: f64,
) -> Option<Candidate> {
    let local: Vec<&SupportCell> = cells
        .iter()
        .filter(|c| (c.pos - mode).norm() <= bandwidth)
        .collect();
    if local.is_empty() {
        return None;
    }
    let mass: f64 = local.iter().map(|c| c.weight).sum();
    let centroid = local.iter().map(|c| c.weight * c.pos).sum::<Vec2>() / mass;
    let s_max = local.iter().map(|c| c.score).fold(f64::MIN, f64::max);
    let confidence = mass * grid.step * grid.step;

    let fallback = |center: Vec2| {
        let info = Mat2::identity() / (bandwidth * grid.step).powi(2);
        Candidate {
            mean: grid.origin + center * grid.step,
            cov: info.try_inverse().unwrap(),
            info,
            confidence,
        }
    };
    if local.len() < MIN_FIT_CELLS {
        return Some(fallback(centroid));
    }

    // Weighted least squares on the deficit surface, centered at the
    // weighted centroid for conditioning.
    let n = local.len();
    let mut design = DMatrix::zeros(n, 6);
    let mut rhs = DVector::zeros(n);
    for (row, c) in local.iter().enumerate() {
        let d = c.pos - centroid;
        let w = c.weight.sqrt();
        design[(row, 0)] = w * d.x * d.x;
        design[(row, 1)] = w * 2.0 * d.x * d.y;
        design[(row, 2)] = w * d.y * d.y;
        design[(row, 3)] = w * -2.0 * d.x;
        design[(row, 4)] = w * -2.0 * d.y;
        design[(row, 5)] = w;
        rhs[row] = w * (s_max - c.score);
    }
    let svd = design.svd(true, true);
    let params = match svd.solve(&rhs, 1e-12) {
        Ok(p) if p.iter().all(|v| v.is_finite()) => p,
        _ => return Some(fallback(centroid)),
    };
    let a = clamp_curvature(Mat2::new(params[0], params[1], params[1], params[2]));
    let b = Vec2::new(params[3], params[4]);
    let mut offset = a.try_inverse()? * b;
    // A noisy fit can throw the vertex far outside the data it was fit on;
    // keep it within the mean-shift neighborhood.
    let max_off = 2.0 * bandwidth;
    if offset.norm() > max_off {
        offset *= max_off / offset.norm();
    }
    let peak_cell = centroid + offset;
    let info = a / (grid.step * grid.step);
    let cov = info.try_inverse()?;
    Some(Candidate {
        mean: grid.origin + peak_cell * grid.step,
        cov,
        info,
        confidence,
    })
}

fn modes_of_grid(grid: &ResponseGrid, cfg: &SearchConfig) -> Vec<Candidate> {
    let threshold = cfg.threshold_frac * grid.max_possible;
    let cells = support_cells(grid, threshold);
    if cells.is_empty() {
        return Vec::new();
    }
    let bandwidth = (cfg.bandwidth / grid.step).max(1.0);

    let mut modes: Vec<Vec2> = Vec::new();
    for c in &cells {
        let m = shift_to_mode(&cells, c.pos, bandwidth);
        if !modes.iter().any(|q| (q - m).norm() < 0.5 * bandwidth) {
            modes.push(m);
        }
    }
    modes
        .into_iter()
        .filter_map(|m| candidate_from_mode(grid, &cells, m, bandwidth))
        .collect()
}

/// Deduplicates candidates, keeping the highest-confidence one within
/// `merge_radius` (reference-frame units) of each kept peak.
pub fn merge_candidates(mut cands: Vec<Candidate>, merge_radius: f64) -> Vec<Candidate> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&i, &j| {
        cands[j]
            .confidence
            .partial_cmp(&cands[i].confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut kept: Vec<Candidate> = Vec::new();
    for idx in order {
        let c = &cands[idx];
        if !kept.iter().any(|k| (k.mean - c.mean).norm() <= merge_radius) {
            kept.push(c.clone());
        }
    }
    cands.clear();
    kept
}

/// Extracts candidates from every grid of a landmark's response (one grid
/// after max-reduction, one per scale otherwise) and merges the union.
pub fn extract_candidates(grids: &[ResponseGrid], cfg: &SearchConfig) -> Vec<Candidate> {
    let all: Vec<Candidate> = grids
        .iter()
        .flat_map(|g| modes_of_grid(g, cfg))
        .collect();
    merge_candidates(all, cfg.merge_radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Builds a unit-step grid whose scores are a sum of Gaussian bumps
    /// `(amplitude, center, sigma)` in reference coordinates.
    fn bump_grid(
        origin: Vec2,
        width: usize,
        height: usize,
        bumps: &[(f64, Vec2, f64)],
    ) -> ResponseGrid {
        let mut scores = vec![0.0; width * height];
        for y in 0..height {
            for x in 0..width {
                let p = origin + Vec2::new(x as f64, y as f64);
                scores[y * width + x] = bumps
                    .iter()
                    .map(|&(a, c, s)| a * (-(p - c).norm_squared() / (2.0 * s * s)).exp())
                    .sum();
            }
        }
        ResponseGrid {
            origin,
            step: 1.0,
            width,
            height,
            scores,
            clipped: vec![false; width * height],
            max_possible: 1.0,
        }
    }

    #[test]
    fn single_peak_is_located_with_subcell_accuracy() {
        // Center deliberately off the integer lattice.
        let c = Vec2::new(14.4, 11.7);
        let grid = bump_grid(Vec2::zeros(), 30, 25, &[(1.0, c, 2.0)]);
        let cfg = SearchConfig::default();
        let cands = extract_candidates(std::slice::from_ref(&grid), &cfg);
        assert_eq!(cands.len(), 1);
        let cand = &cands[0];
        assert!(
            (cand.mean - c).norm() < 0.25,
            "peak found at {:?}",
            cand.mean
        );
        assert!(cand.confidence > 0.0);
        // info and cov must be consistent inverses and positive definite.
        let prod = cand.info * cand.cov;
        assert!((prod - Mat2::identity()).norm() < 1e-6);
        assert!(cand.cov[(0, 0)] > 0.0 && cand.cov.determinant() > 0.0);
    }

    #[test]
    fn sharper_peaks_carry_more_information() {
        let cfg = SearchConfig::default();
        let sharp = extract_candidates(
            &[bump_grid(Vec2::zeros(), 30, 30, &[(1.0, Vec2::new(15.0, 15.0), 1.2)])],
            &cfg,
        );
        let broad = extract_candidates(
            &[bump_grid(Vec2::zeros(), 30, 30, &[(1.0, Vec2::new(15.0, 15.0), 3.5)])],
            &cfg,
        );
        assert_eq!(sharp.len(), 1);
        assert_eq!(broad.len(), 1);
        assert!(sharp[0].info.trace() > broad[0].info.trace());
    }

    #[test]
    fn well_separated_peaks_yield_two_candidates() {
        let a = Vec2::new(8.0, 10.0);
        let b = Vec2::new(26.0, 12.0);
        let grid = bump_grid(Vec2::zeros(), 36, 22, &[(1.0, a, 1.8), (0.8, b, 1.8)]);
        let cfg = SearchConfig::default();
        let mut cands = extract_candidates(std::slice::from_ref(&grid), &cfg);
        assert_eq!(cands.len(), 2);
        cands.sort_by(|u, v| u.mean.x.partial_cmp(&v.mean.x).unwrap());
        assert!((cands[0].mean - a).norm() < 0.5);
        assert!((cands[1].mean - b).norm() < 0.5);
        // The taller bump accumulates more thresholded mass.
        assert!(cands[0].confidence > cands[1].confidence);
    }

    #[test]
    fn flat_surface_below_threshold_yields_nothing() {
        let grid = ResponseGrid {
            origin: Vec2::zeros(),
            step: 1.0,
            width: 20,
            height: 20,
            scores: vec![0.1; 400],
            clipped: vec![false; 400],
            max_possible: 1.0,
        };
        let cfg = SearchConfig::default();
        assert!(extract_candidates(std::slice::from_ref(&grid), &cfg).is_empty());
    }

    #[test]
    fn nearby_duplicates_collapse_to_the_stronger_one() {
        let strong = Candidate {
            mean: Vec2::new(5.0, 5.0),
            cov: Mat2::identity(),
            info: Mat2::identity(),
            confidence: 3.0,
        };
        let weak = Candidate {
            mean: Vec2::new(5.4, 5.0),
            cov: Mat2::identity(),
            info: Mat2::identity(),
            confidence: 1.0,
        };
        let far = Candidate {
            mean: Vec2::new(12.0, 5.0),
            cov: Mat2::identity(),
            info: Mat2::identity(),
            confidence: 0.5,
        };
        let merged = merge_candidates(vec![weak, strong, far], 1.0);
        assert_eq!(merged.len(), 2);
        assert!((merged[0].mean - Vec2::new(5.0, 5.0)).norm() < 1e-12);
        assert!((merged[0].confidence - 3.0).abs() < 1e-12);
    }

    #[test]
    fn grid_origin_offsets_carry_into_candidate_positions() {
        let c = Vec2::new(54.0, 41.5);
        let grid = bump_grid(Vec2::new(40.0, 30.0), 30, 25, &[(1.0, c, 2.0)]);
        let cfg = SearchConfig::default();
        let cands = extract_candidates(std::slice::from_ref(&grid), &cfg);
        assert_eq!(cands.len(), 1);
        assert!((cands[0].mean - c).norm() < 0.25);
    }

    #[test]
    fn tiny_support_uses_isotropic_fallback() {
        // One cell barely above threshold: too few cells for the fit.
        let mut scores = vec![0.0; 81];
        scores[4 * 9 + 4] = 0.4;
        let grid = ResponseGrid {
            origin: Vec2::zeros(),
            step: 1.0,
            width: 9,
            height: 9,
            scores,
            clipped: vec![false; 81],
            max_possible: 1.0,
        };
        let cfg = SearchConfig::default();
        let cands = extract_candidates(std::slice::from_ref(&grid), &cfg);
        assert_eq!(cands.len(), 1);
        assert!((cands[0].mean - Vec2::new(4.0, 4.0)).norm() < 1e-9);
        let h = (cfg.bandwidth / grid.step).max(1.0) * grid.step;
        assert!((cands[0].cov[(0, 0)] - h * h).abs() < 1e-9);
    }

    #[test]
    fn extraction_is_deterministic() {
        let grid = bump_grid(
            Vec2::zeros(),
            40,
            30,
            &[
                (1.0, Vec2::new(9.3, 8.1), 1.5),
                (0.9, Vec2::new(28.2, 20.4), 2.2),
                (0.7, Vec2::new(20.0, 6.0), 1.3),
            ],
        );
        let cfg = SearchConfig::default();
        let a = extract_candidates(std::slice::from_ref(&grid), &cfg);
        let b = extract_candidates(std::slice::from_ref(&grid), &cfg);
        assert_eq!(a.len(), b.len());
        for (u, v) in a.iter().zip(&b) {
            assert_eq!(u.mean, v.mean);
            assert_eq!(u.confidence, v.confidence);
            assert_eq!(u.cov, v.cov);
        }
    }
}
