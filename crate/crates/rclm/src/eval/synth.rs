//! Planted candidate-pool instances with known ground truth.
//!
//! The generator draws a mode, a deformation, and a pose, then fabricates
//! exactly the candidate pools the detector stage would have produced: a
//! (noisy) true detection for every visible landmark, none for occluded
//! ones, and optional far-off clutter everywhere. Because every quantity is
//! recorded, fitting these instances measures recovery, occlusion labeling,
//! and sampling efficiency against absolute truth.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::appearance::Candidate;
use crate::error::{Error, Result};
use crate::geometry::{Mat2, Similarity, Vec2};
use crate::shape::{ModeId, ModeModel, ModelEnsemble, Shape};

/// Scale of the synthetic image frame: poses are drawn around this many
/// pixels per unit of model space.
pub const BASE_SCALE: f64 = 40.0;

/// The candidate covariance never shrinks below this, so clutter distances
/// and Mahalanobis errors stay meaningful even for noiseless instances.
pub const MIN_CANDIDATE_SIGMA: f64 = 0.5;

/// Clutter lands between these multiples of the candidate sigma away from
/// the true position.
pub const CLUTTER_RANGE_SIGMAS: (f64, f64) = (20.0, 40.0);

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Fraction of landmarks hidden per instance; must stay below one half.
    pub occlusion_rate: f64,
    /// Clutter candidates added to every landmark's pool.
    pub clutter: usize,
    /// Standard deviation of true-detection position noise, in pixels.
    pub noise_sigma: f64,
    /// Give clutter the high confidences and true detections the low ones,
    /// punishing any sampler that trusts confidence.
    pub adversarial_confidence: bool,
    /// Pose scale is `BASE_SCALE` times a draw from this range.
    pub scale_range: (f64, f64),
    /// Pose rotation is drawn from ±this many degrees.
    pub max_angle_deg: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            occlusion_rate: 0.0,
            clutter: 0,
            noise_sigma: 0.5,
            adversarial_confidence: false,
            scale_range: (0.7, 1.4),
            max_angle_deg: 25.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.occlusion_rate) {
            return Err(Error::InvalidParameter(format!(
                "occlusion rate {} outside [0, 0.5): the fitter assumes at least half \
                 the landmarks are visible",
                self.occlusion_rate
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter("noise sigma must be nonnegative".into()));
        }
        let (lo, hi) = self.scale_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return Err(Error::InvalidParameter("bad scale range".into()));
        }
        if !(self.max_angle_deg.is_finite() && self.max_angle_deg >= 0.0) {
            return Err(Error::InvalidParameter("bad angle range".into()));
        }
        Ok(())
    }
}

/// One planted instance: the ground truth and the pools built from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub seed: u64,
    /// The mode the instance was generated from.
    pub mode: ModeId,
    pub deform: DVector<f64>,
    pub pose: Similarity,
    /// Ground-truth named landmarks in the synthetic image frame.
    pub truth: Shape,
    /// Planted visibility (true = landmark got no true detection).
    pub occluded: Vec<bool>,
    /// Sigma actually used for candidate covariances.
    pub sigma: f64,
    pub pools: Vec<Vec<Candidate>>,
}

impl SyntheticInstance {
    /// Mean per-landmark distance between a fitted shape and the truth, in
    /// units of the planted candidate sigma.
    pub fn shape_error(&self, fitted: &Shape) -> Result<f64> {
        if fitted.len() != self.truth.len() {
            return Err(Error::dim(self.truth.len(), fitted.len(), "fitted shape"));
        }
        let n = self.truth.len();
        let sum: f64 = (0..n)
            .map(|k| (fitted.point(k) - self.truth.point(k)).norm())
            .sum();
        Ok(sum / (n as f64 * self.sigma))
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> Vec2 {
    let d = rand_distr::Normal::new(0.0, sigma).expect("finite sigma");
    Vec2::new(d.sample(rng), d.sample(rng))
}

/// Generates one instance. The same ensemble, config, and seed always
/// produce the identical instance.
pub fn synthesize(
    ensemble: &ModelEnsemble,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<SyntheticInstance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mode = &ensemble.modes[rng.gen_range(0..ensemble.modes.len())];
    synthesize_from_mode(mode, cfg, seed, &mut rng)
}

/// Like [`synthesize`] but with the mode chosen by the caller.
pub fn synthesize_mode(
    mode: &ModeModel,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<SyntheticInstance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synthesize_from_mode(mode, cfg, seed, &mut rng)
}

fn synthesize_from_mode(
    mode: &ModeModel,
    cfg: &SynthConfig,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticInstance> {
    let n = mode.scheme.count();
    let model = &mode.dense.model;

    // Deformation well inside the plausibility clamp.
    let deform = DVector::from_iterator(
        model.dims(),
        model
            .eigenvalues
            .iter()
            .map(|&ev| rng.gen_range(-2.0..2.0) * ev.sqrt()),
    );
    let scale = BASE_SCALE * rng.gen_range(cfg.scale_range.0..=cfg.scale_range.1);
    let angle = rng
        .gen_range(-cfg.max_angle_deg..=cfg.max_angle_deg)
        .to_radians();
    let translation = Vec2::new(rng.gen_range(80.0..160.0), rng.gen_range(80.0..160.0));
    let pose = Similarity::new(scale, angle, translation)?;

    let truth = mode
        .dense
        .sparse_from_dense(&model.instantiate(&deform)?)
        .transformed(&pose);

    let hidden = (cfg.occlusion_rate * n as f64).floor() as usize;
    let mut occluded = vec![false; n];
    for i in rand::seq::index::sample(rng, n, hidden) {
        occluded[i] = true;
    }

    let sigma = cfg.noise_sigma.max(MIN_CANDIDATE_SIGMA);
    let cov = Mat2::identity() * sigma * sigma;
    let info = Mat2::identity() / (sigma * sigma);
    let (true_conf, clutter_conf) = if cfg.adversarial_confidence {
        ((0.05, 0.3), (0.7, 1.0))
    } else {
        ((0.6, 1.0), (0.05, 0.5))
    };

    let mut pools = Vec::with_capacity(n);
    for k in 0..n {
        let mut pool = Vec::new();
        if !occluded[k] {
            let noise = if cfg.noise_sigma > 0.0 {
                gaussian(rng, cfg.noise_sigma)
            } else {
                Vec2::zeros()
            };
            pool.push(Candidate {
                mean: truth.point(k) + noise,
                cov,
                info,
                confidence: rng.gen_range(true_conf.0..=true_conf.1),
            });
        }
        for _ in 0..cfg.clutter {
            let distance = rng.gen_range(CLUTTER_RANGE_SIGMAS.0..=CLUTTER_RANGE_SIGMAS.1) * sigma;
            let direction = rng.gen_range(0.0..std::f64::consts::TAU);
            pool.push(Candidate {
                mean: truth.point(k)
                    + Vec2::new(direction.cos(), direction.sin()) * distance,
                cov,
                info,
                confidence: rng.gen_range(clutter_conf.0..=clutter_conf.1),
            });
        }
        pool.shuffle(rng);
        pools.push(pool);
    }

    Ok(SyntheticInstance {
        seed,
        mode: mode.id,
        deform,
        pose,
        truth,
        occluded,
        sigma,
        pools,
    })
}
