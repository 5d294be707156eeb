//! Tunable parameters, grouped by pipeline stage, with the defaults the rest
//! of the crate is calibrated against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Patch and pyramid geometry for the census descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorConfig {
    /// Side length of the square patch a detector sees, in reference-frame
    /// pixels.
    pub patch_size: usize,
    /// Face width the reference frame is normalized to before any patch is
    /// cut, in pixels.
    pub face_width: f64,
    /// Side lengths of the averaged pyramid levels, finest first. The first
    /// entry must equal `patch_size`.
    pub levels: Vec<usize>,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig {
            patch_size: 35,
            face_width: 150.0,
            levels: vec![35, 25, 15, 5],
        }
    }
}

impl DescriptorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::EmptyInput("descriptor needs at least one level"));
        }
        if self.levels[0] != self.patch_size {
            return Err(Error::InvalidParameter(
                "first descriptor level must equal the patch size".into(),
            ));
        }
        for &m in &self.levels {
            if m < 3 || m > self.patch_size {
                return Err(Error::InvalidParameter(format!(
                    "descriptor level {m} outside 3..={}",
                    self.patch_size
                )));
            }
        }
        if !(self.face_width.is_finite() && self.face_width > 0.0) {
            return Err(Error::InvalidParameter("face width must be positive".into()));
        }
        Ok(())
    }

    /// Total descriptor length: every level contributes one census code per
    /// interior pixel, `(m - 2)^2` codes for a level of side `m`.
    pub fn descriptor_len(&self) -> usize {
        self.levels.iter().map(|&m| (m - 2) * (m - 2)).sum()
    }
}

/// Detector training parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    /// Number of boosting rounds (weak classifiers) per detector.
    pub rounds: usize,
    /// Training patches are re-rendered at rotations up to this many degrees
    /// either way.
    pub rotation_augment_deg: f64,
    /// Negatives are sampled from a ring around the true landmark; offsets
    /// closer than this radius are excluded so near-hits are not punished.
    pub negative_core_radius: f64,
    /// Outer radius of the negative sampling ring.
    pub negative_ring_radius: f64,
    /// Negative patches drawn per positive patch.
    pub negatives_per_positive: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            rounds: 100,
            rotation_augment_deg: 10.0,
            negative_core_radius: 5.0,
            negative_ring_radius: 12.0,
            negatives_per_positive: 4,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("boosting rounds must be positive".into()));
        }
        if !(self.negative_core_radius > 0.0
            && self.negative_ring_radius > self.negative_core_radius)
        {
            return Err(Error::InvalidParameter(
                "negative ring must have 0 < core radius < outer radius".into(),
            ));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::InvalidParameter(
                "at least one negative per positive is required".into(),
            ));
        }
        if !(self.rotation_augment_deg.is_finite() && self.rotation_augment_deg >= 0.0) {
            return Err(Error::InvalidParameter(
                "rotation augmentation must be a nonnegative angle".into(),
            ));
        }
        Ok(())
    }
}

/// Response map evaluation and candidate extraction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Relative scales at which each landmark region is rescanned.
    pub scales: Vec<f64>,
    /// How the per-scale maps combine: reduce to one map by taking the max
    /// per reference pixel, or extract candidates per scale and merge them.
    pub cross_scale: CrossScale,
    /// Half-width of the square search region around the predicted landmark,
    /// as a fraction of the face width.
    pub search_half_width_frac: f64,
    /// Candidate segments are cut at this fraction of the maximum achievable
    /// detector score.
    pub threshold_frac: f64,
    /// Mean-shift kernel radius in reference pixels.
    pub bandwidth: f64,
    /// Candidates closer than this are duplicates; the more confident one
    /// survives.
    pub merge_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossScale {
    MaxReduce,
    UnionMerge,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            scales: vec![0.9, 1.0, 1.1],
            cross_scale: CrossScale::MaxReduce,
            search_half_width_frac: 0.12,
            threshold_frac: 0.35,
            bandwidth: 2.5,
            merge_radius: 1.0,
        }
    }
}

/// Hypothesize-and-test fitting parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Hypothesis sampling order.
    pub strategy: SamplingStrategy,
    /// Hypothesis budget per pose/expression model.
    pub max_iter: usize,
    /// A hypothesis with mismatch degree below this ends the search early.
    pub early_exit: f64,
    /// Normalized-frame Mahalanobis radius within which a detection supports
    /// a landmark.
    pub inlier_threshold: f64,
    /// Minimum supported landmarks for a usable fit.
    pub min_inliers: usize,
    /// Shape parameters are clamped to this many standard deviations.
    pub clamp_sigmas: f64,
    /// Half-length of the tangent refinement search, in reference pixels.
    pub refine_half_length: f64,
    /// Base seed; each pose/expression model derives its own stream from it.
    pub seed: u64,
    /// How many ranked results to keep alongside the selected one.
    pub top_r: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            strategy: SamplingStrategy::Uniform,
            max_iter: 2000,
            early_exit: 0.05,
            inlier_threshold: 3.0,
            min_inliers: 3,
            clamp_sigmas: 3.0,
            refine_half_length: 8.0,
            seed: 0,
            top_r: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingStrategy {
    /// Landmark pairs and their candidates drawn uniformly.
    Uniform,
    /// Landmarks and candidates drawn proportionally to detection
    /// confidence.
    Confidence,
    /// Deterministic sweep over landmark pairs in confidence order, always
    /// taking each landmark's most confident candidate.
    Greedy,
}

impl std::str::FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SamplingStrategy::Uniform),
            "confidence" => Ok(SamplingStrategy::Confidence),
            "greedy" => Ok(SamplingStrategy::Greedy),
            other => Err(Error::InvalidParameter(format!(
                "unknown sampling strategy '{other}' (expected uniform, confidence, or greedy)"
            ))),
        }
    }
}

impl std::fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SamplingStrategy::Uniform => "uniform",
            SamplingStrategy::Confidence => "confidence",
            SamplingStrategy::Greedy => "greedy",
        };
        f.write_str(s)
    }
}

/// Shape model training parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeTrainConfig {
    /// Fraction of total variance the retained deformation basis must cover.
    pub variance_fraction: f64,
    /// Alignment iterations stop once the mean shape moves less than this.
    pub align_tolerance: f64,
    pub align_max_iter: usize,
    /// Contour landmarks are expanded into this many extra samples each.
    pub samples_per_contour: usize,
    /// Number of exemplar shapes kept for the plausibility filter.
    pub exemplar_count: usize,
    pub seed: u64,
}

impl Default for ShapeTrainConfig {
    fn default() -> Self {
        ShapeTrainConfig {
            variance_fraction: 0.95,
            align_tolerance: 1e-8,
            align_max_iter: 100,
            samples_per_contour: 7,
            exemplar_count: 8,
            seed: 0,
        }
    }
}

/// Derives an independent RNG stream seed. Used to give every
/// pose/expression model its own stream so multi-threaded fitting stays
/// reproducible.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 over the combined value, twice for good measure.
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for _ in 0..2 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z = z ^ (z >> 31);
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_descriptor_has_expected_length() {
        let cfg = DescriptorConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.descriptor_len(), 1796);
    }

    #[test]
    fn single_level_descriptor_length() {
        let cfg = DescriptorConfig {
            levels: vec![35],
            ..DescriptorConfig::default()
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.descriptor_len(), 1089);
    }

    #[test]
    fn derived_seeds_differ_between_streams() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        let c = derive_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(42, 0));
    }

    #[test]
    fn strategy_parsing_round_trips() {
        for s in ["uniform", "confidence", "greedy"] {
            let parsed: SamplingStrategy = s.parse().unwrap();
            assert_eq!(parsed.to_string(), s);
        }
        assert!("fastest".parse::<SamplingStrategy>().is_err());
    }
}
