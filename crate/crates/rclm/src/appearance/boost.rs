//! Boosted landmark detectors over census descriptors.
//!
//! Weak classifiers are lookup tables over the census code at one descriptor
//! position. Each boosting round scans every position, builds the best
//! weighted table for it, and keeps the position with the lowest weighted
//! error. Scoring an image location therefore needs only the codes at the
//! chosen positions, never the full descriptor.

use serde::{Deserialize, Serialize};

use crate::appearance::census::{DescriptorGeometry, CENSUS_CODES};
use crate::error::{Error, Result};
use crate::img::IntegralImage;

/// Error clamp keeping the vote weight finite on perfectly separated rounds.
const MIN_ROUND_ERROR: f64 = 1e-12;

/// Rounds whose error is within this margin of 0.5 count as chance level;
/// the margin absorbs roundoff from summing many small sample weights.
const CHANCE_MARGIN: f64 = 1e-9;

/// One lookup-table vote: for the census code observed at `position`, the
/// table answers +1 (landmark) or -1 (background), weighted by `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakClassifier {
    pub position: u32,
    pub alpha: f64,
    /// `CENSUS_CODES` entries of +1 or -1.
    pub lut: Vec<i8>,
}

/// Additive ensemble of weak classifiers for one landmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedDetector {
    pub weaks: Vec<WeakClassifier>,
    /// Descriptor length the positions index into.
    pub feature_len: usize,
}

impl BoostedDetector {
    /// Raw additive score of a full descriptor.
    pub fn score(&self, codes: &[u16]) -> f64 {
        debug_assert_eq!(codes.len(), self.feature_len);
        self.weaks
            .iter()
            .map(|w| w.alpha * w.lut[codes[w.position as usize] as usize] as f64)
            .sum()
    }

    /// Score of the patch at `origin`, computing only the codes the ensemble
    /// actually consults.
    pub fn score_at(
        &self,
        geom: &DescriptorGeometry,
        integral: &IntegralImage,
        origin: (usize, usize),
    ) -> f64 {
        self.weaks
            .iter()
            .map(|w| {
                let code = geom.code_at(integral, origin, w.position as usize);
                w.alpha * w.lut[code as usize] as f64
            })
            .sum()
    }

    /// Highest score the ensemble can emit (all votes positive).
    pub fn max_score(&self) -> f64 {
        self.weaks.iter().map(|w| w.alpha).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weaks.is_empty() {
            return Err(Error::EmptyInput("detector has no weak classifiers"));
        }
        for w in &self.weaks {
            if w.position as usize >= self.feature_len {
                return Err(Error::InvalidParameter(
                    "weak classifier position outside descriptor".into(),
                ));
            }
            if w.lut.len() != CENSUS_CODES {
                return Err(Error::dim(CENSUS_CODES, w.lut.len(), "census lookup table"));
            }
            if !(w.alpha.is_finite() && w.alpha > 0.0) {
                return Err(Error::InvalidParameter(
                    "weak classifier weight must be positive".into(),
                ));
            }
            if w.lut.iter().any(|&v| v != 1 && v != -1) {
                return Err(Error::InvalidParameter(
                    "lookup table entries must be +1 or -1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Detector banks for one pose/expression mode: per landmark, one detector
/// per trained expression variant (their candidates are merged at extraction
/// time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDetectors {
    pub descriptor: crate::config::DescriptorConfig,
    pub per_landmark: Vec<Vec<BoostedDetector>>,
}

/// Trains one detector by discrete boosting of census lookup tables.
///
/// Stops early if no position does better than chance; the detector then
/// keeps the rounds trained so far. Returns an error only if even the first
/// round fails, meaning the classes are indistinguishable by any position.
pub fn train_detector(
    positives: &[Vec<u16>],
    negatives: &[Vec<u16>],
    rounds: usize,
) -> Result<BoostedDetector> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::EmptyInput("detector training needs both classes"));
    }
    if rounds == 0 {
        return Err(Error::InvalidParameter("boosting rounds must be positive".into()));
    }
    let feature_len = positives[0].len();
    let n = positives.len() + negatives.len();
    for d in positives.iter().chain(negatives.iter()) {
        if d.len() != feature_len {
            return Err(Error::dim(feature_len, d.len(), "descriptor length"));
        }
        if d.iter().any(|&c| c as usize >= CENSUS_CODES) {
            return Err(Error::InvalidParameter("census code out of range".into()));
        }
    }

    // Samples interleaved positives-then-negatives with labels.
    let samples: Vec<(&[u16], f64)> = positives
        .iter()
        .map(|d| (d.as_slice(), 1.0))
        .chain(negatives.iter().map(|d| (d.as_slice(), -1.0)))
        .collect();
    let mut weights = vec![1.0 / n as f64; n];

    // Per-code weighted class masses, reset lazily via a generation stamp so
    // the scan over positions does not pay for clearing 511 bins each time.
    let mut w_pos = vec![0.0f64; CENSUS_CODES];
    let mut w_neg = vec![0.0f64; CENSUS_CODES];
    let mut stamp = vec![0u32; CENSUS_CODES];
    let mut generation = 0u32;

    let mut weaks: Vec<WeakClassifier> = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let mut best: Option<(f64, usize)> = None;
        for position in 0..feature_len {
            generation += 1;
            for ((codes, label), &w) in samples.iter().zip(weights.iter()) {
                let c = codes[position] as usize;
                if stamp[c] != generation {
                    stamp[c] = generation;
                    w_pos[c] = 0.0;
                    w_neg[c] = 0.0;
                }
                if *label > 0.0 {
                    w_pos[c] += w;
                } else {
                    w_neg[c] += w;
                }
            }
            // Best table for this position answers with the heavier class
            // per code; its error is the lighter mass. Ties vote background.
            let mut err = 0.0;
            for ((codes, _), _) in samples.iter().zip(weights.iter()) {
                let c = codes[position] as usize;
                if stamp[c] == generation {
                    err += w_pos[c].min(w_neg[c]);
                    // Count each code once.
                    stamp[c] = generation.wrapping_sub(1);
                }
            }
            if best.map_or(true, |(e, _)| err < e) {
                best = Some((err, position));
            }
        }
        let (err, position) = best.expect("at least one descriptor position");
        if err >= 0.5 - CHANCE_MARGIN {
            break;
        }

        // Rebuild the winning table.
        generation += 1;
        for ((codes, label), &w) in samples.iter().zip(weights.iter()) {
            let c = codes[position] as usize;
            if stamp[c] != generation {
                stamp[c] = generation;
                w_pos[c] = 0.0;
                w_neg[c] = 0.0;
            }
            if *label > 0.0 {
                w_pos[c] += w;
            } else {
                w_neg[c] += w;
            }
        }
        let lut: Vec<i8> = (0..CENSUS_CODES)
            .map(|c| {
                let (p, q) = if stamp[c] == generation {
                    (w_pos[c], w_neg[c])
                } else {
                    (0.0, 0.0)
                };
                if p > q {
                    1
                } else {
                    -1
                }
            })
            .collect();

        let clamped = err.max(MIN_ROUND_ERROR);
        let alpha = 0.5 * ((1.0 - clamped) / clamped).ln();
        let perfect = err <= MIN_ROUND_ERROR;
        for ((codes, label), w) in samples.iter().zip(weights.iter_mut()) {
            let vote = lut[codes[position] as usize] as f64;
            *w *= (-alpha * label * vote).exp();
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }

        weaks.push(WeakClassifier {
            position: position as u32,
            alpha,
            lut,
        });
        // A round separating the training set perfectly collapses the weight
        // update to a uniform rescale; later rounds would only clone it.
        if perfect {
            break;
        }
    }

    if weaks.is_empty() {
        return Err(Error::InsufficientData(
            "no descriptor position separates the classes better than chance".into(),
        ));
    }
    let det = BoostedDetector { weaks, feature_len };
    det.validate()?;
    Ok(det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_codes(rng: &mut ChaCha8Rng, len: usize) -> Vec<u16> {
        (0..len).map(|_| rng.gen_range(0..CENSUS_CODES as u16)).collect()
    }

    /// Positives always carry a marker code at one position; negatives never
    /// do. One round should solve this perfectly.
    #[test]
    fn planted_marker_is_found_in_one_round() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let len = 64;
        let marker_pos = 17;
        let pos: Vec<Vec<u16>> = (0..50)
            .map(|_| {
                let mut d = random_codes(&mut rng, len);
                d[marker_pos] = 400 + (rng.gen_range(0..5) as u16);
                d
            })
            .collect();
        let neg: Vec<Vec<u16>> = (0..50)
            .map(|_| {
                let mut d = random_codes(&mut rng, len);
                if d[marker_pos] >= 400 {
                    d[marker_pos] = 100;
                }
                d
            })
            .collect();
        let det = train_detector(&pos, &neg, 10).unwrap();
        assert_eq!(det.weaks[0].position as usize, marker_pos);
        for d in &pos {
            assert!(det.score(d) > 0.0);
        }
        for d in &neg {
            assert!(det.score(d) < 0.0);
        }
        assert!(det.max_score() > 0.0);
    }

    #[test]
    fn indistinguishable_classes_stop_at_chance_level() {
        // Identical descriptors in both classes: every position has exactly
        // half the weight on each side, so the very first round is at chance
        // and training refuses to emit a detector.
        let d = vec![vec![42u16; 8]; 10];
        match train_detector(&d, &d, 50) {
            Err(Error::InsufficientData(_)) => {}
            other => panic!("expected chance-level failure, got {other:?}"),
        }
    }

    #[test]
    fn alphas_are_positive_and_luts_binary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let len = 32;
        let pos: Vec<Vec<u16>> = (0..40)
            .map(|_| {
                let mut d = random_codes(&mut rng, len);
                d[3] = 7;
                d[9] = if rng.gen_bool(0.7) { 300 } else { 20 };
                d
            })
            .collect();
        let neg: Vec<Vec<u16>> = (0..40)
            .map(|_| {
                let mut d = random_codes(&mut rng, len);
                d[3] = if rng.gen_bool(0.3) { 7 } else { 8 };
                d
            })
            .collect();
        let det = train_detector(&pos, &neg, 20).unwrap();
        det.validate().unwrap();
        for w in &det.weaks {
            assert!(w.alpha > 0.0);
        }
    }

    #[test]
    fn mismatched_descriptor_lengths_are_rejected() {
        let pos = vec![vec![1u16, 2, 3]];
        let neg = vec![vec![1u16, 2]];
        assert!(train_detector(&pos, &neg, 5).is_err());
    }
}
