//! Draws synthetic grayscale faces for end-to-end pipeline tests.
//!
//! Every landmark gets its own oriented sinusoid-under-Gaussian stamp whose
//! parameters depend only on the landmark index, so detectors trained on one
//! rendered corpus can relocate the same landmarks in another. Stamp size
//! scales with the face so patches look alike once the face is resampled to
//! the reference width. The background is a per-image gradient with pixel
//! noise, keeping detectors honest about texture they must ignore.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::derive_seed;
use crate::geometry::Vec2;
use crate::img::GrayImageF;
use crate::shape::Shape;

/// Stamp envelope radius as a fraction of the face extent.
const STAMP_SIGMA_FRAC: f64 = 0.035;

/// Fixed salt separating the per-landmark stamp streams from everything else
/// seeded in the crate.
const STAMP_STREAM: u64 = 0x57a3_9b0d_11c2_f04e;

/// Per-landmark stamp parameters, a pure function of the landmark index.
struct Stamp {
    orientation: f64,
    wavelength_frac: f64,
    phase: f64,
    amplitude: f64,
}

fn stamp_for(landmark: usize) -> Stamp {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(STAMP_STREAM, landmark as u64));
    Stamp {
        orientation: rng.gen_range(0.0..std::f64::consts::PI),
        wavelength_frac: rng.gen_range(0.045..0.09),
        phase: rng.gen_range(0.0..std::f64::consts::TAU),
        amplitude: rng.gen_range(70.0..110.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
    }
}

/// Renders a face whose landmarks sit at `shape` (image coordinates) onto a
/// `width` x `height` canvas. `seed` drives the background and noise only;
/// landmark appearance is identical across images. Pixels are rounded to
/// integer gray levels so the in-memory image matches its PNG round trip.
pub fn render_face(shape: &Shape, width: usize, height: usize, seed: u64) -> GrayImageF {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x9e_c0de));
    let base = rng.gen_range(95.0..120.0);
    let gx = rng.gen_range(-0.06..0.06);
    let gy = rng.gen_range(-0.06..0.06);
    let noise_amp = 6.0;

    let mut img = GrayImageF::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let v = base + gx * x as f64 + gy * y as f64 + rng.gen_range(-noise_amp..noise_amp);
            img.set(x, y, v);
        }
    }

    let (lo, hi) = shape.bounds();
    let extent = (hi - lo).norm().max(1.0);
    let sigma = STAMP_SIGMA_FRAC * extent;
    let wavelength_scale = extent;
    let reach = (3.0 * sigma).ceil() as i64;

    for (k, &center) in shape.points().iter().enumerate() {
        let stamp = stamp_for(k);
        let (dir_x, dir_y) = (stamp.orientation.cos(), stamp.orientation.sin());
        let freq = std::f64::consts::TAU / (stamp.wavelength_frac * wavelength_scale);
        let cx = center.x.round() as i64;
        let cy = center.y.round() as i64;
        for y in (cy - reach).max(0)..(cy + reach + 1).min(height as i64) {
            for x in (cx - reach).max(0)..(cx + reach + 1).min(width as i64) {
                let d = Vec2::new(x as f64, y as f64) - center;
                let r2 = d.norm_squared();
                if r2 > (reach * reach) as f64 {
                    continue;
                }
                let u = d.x * dir_x + d.y * dir_y;
                let wave = (freq * u + stamp.phase).cos();
                let envelope = (-r2 / (2.0 * sigma * sigma)).exp();
                let v = img.get(x as usize, y as usize) + stamp.amplitude * envelope * wave;
                img.set(x as usize, y as usize, v);
            }
        }
    }

    for v in &mut img.data {
        *v = v.round().clamp(0.0, 255.0);
    }
    img
}
