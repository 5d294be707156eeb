//! Builds per-landmark detector banks from annotated faces.
//!
//! Each training face is resampled into the reference window; positives are
//! patches centered on the annotated landmark (with small rotation jitter),
//! negatives come from a ring around it so the detector learns to reject
//! near misses rather than just background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::appearance::boost::{train_detector, ModeDetectors};
use crate::appearance::census::DescriptorGeometry;
use crate::appearance::window::extract_reference_window;
use crate::config::{derive_seed, BoostConfig, DescriptorConfig};
use crate::error::{Error, Result};
use crate::geometry::{FaceBox, Similarity, Vec2};
use crate::img::{GrayImageF, IntegralImage};
use crate::shape::Shape;

/// Census descriptor of the patch centered at `center`, rotated by `angle`
/// radians about its center.
pub fn patch_descriptor(
    image: &GrayImageF,
    center: Vec2,
    angle: f64,
    geom: &DescriptorGeometry,
) -> Vec<u16> {
    let side = geom.patch_size();
    let half = Vec2::new((side / 2) as f64, (side / 2) as f64);
    let rot = Similarity::new(1.0, angle, Vec2::zeros()).expect("unit scale");
    // Output pixel p samples the image at center + R (p - half).
    let map = Similarity {
        scale: 1.0,
        angle,
        translation: center - rot.apply(half),
    };
    let patch = image.warp(&map, side, side);
    geom.describe(&IntegralImage::build(&patch), (0, 0))
}

/// Trains one detector bank per landmark from faces annotated in image
/// coordinates. Shapes must all share the landmark count; detectors come
/// back in landmark order with a single variant per bank.
pub fn train_mode_detectors(
    images: &[GrayImageF],
    boxes: &[FaceBox],
    shapes: &[Shape],
    desc_cfg: &DescriptorConfig,
    boost_cfg: &BoostConfig,
    seed: u64,
) -> Result<ModeDetectors> {
    if images.is_empty() {
        return Err(Error::EmptyInput("detector training needs faces"));
    }
    if images.len() != boxes.len() || images.len() != shapes.len() {
        return Err(Error::dim(images.len(), boxes.len().min(shapes.len()), "faces"));
    }
    boost_cfg.validate()?;
    let n_landmarks = shapes[0].len();
    for s in shapes {
        if s.len() != n_landmarks {
            return Err(Error::dim(n_landmarks, s.len(), "landmarks per shape"));
        }
    }
    let geom = DescriptorGeometry::new(desc_cfg)?;

    // Reference windows and mapped landmarks, shared by all landmark loops.
    let mut windows = Vec::with_capacity(images.len());
    for ((img, fb), shape) in images.iter().zip(boxes).zip(shapes) {
        let win = extract_reference_window(img, fb, desc_cfg)?;
        let mapped: Vec<Vec2> = shape.points().iter().map(|p| win.to_reference.apply(*p)).collect();
        windows.push((win, mapped));
    }

    let jitter = boost_cfg.rotation_augment_deg.to_radians();
    let angles: Vec<f64> = if jitter > 0.0 {
        vec![0.0, -jitter, jitter]
    } else {
        vec![0.0]
    };

    let mut per_landmark = Vec::with_capacity(n_landmarks);
    for lm in 0..n_landmarks {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, lm as u64));
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for (win, mapped) in &windows {
            let center = mapped[lm];
            for &a in &angles {
                positives.push(patch_descriptor(&win.image, center, a, &geom));
                for _ in 0..boost_cfg.negatives_per_positive {
                    let r = rng
                        .gen_range(boost_cfg.negative_core_radius..boost_cfg.negative_ring_radius);
                    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                    let off = Vec2::new(r * phi.cos(), r * phi.sin());
                    negatives.push(patch_descriptor(&win.image, center + off, 0.0, &geom));
                }
            }
        }
        let det = train_detector(&positives, &negatives, boost_cfg.rounds).map_err(|e| {
            Error::InsufficientData(format!("landmark {lm}: {e}"))
        })?;
        per_landmark.push(vec![det]);
    }
    Ok(ModeDetectors {
        descriptor: desc_cfg.clone(),
        per_landmark,
    })
}
