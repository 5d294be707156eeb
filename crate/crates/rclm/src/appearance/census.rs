//! Census-transform descriptor over an averaged patch pyramid.
//!
//! Each 3x3 block is encoded by comparing its pixels against the block mean,
//! which makes the code invariant to positive-affine intensity changes. The
//! full descriptor concatenates the codes of every interior pixel at several
//! averaged resolutions of the same patch, so it sees both fine texture and
//! coarse structure.

use crate::config::DescriptorConfig;
use crate::error::Result;
use crate::img::IntegralImage;

/// Number of distinct census codes. Nine comparison bits give 512 raw
/// patterns, but the all-ones pattern cannot occur (some pixel is always at
/// or below the mean), so codes span `0..=510`.
pub const CENSUS_CODES: usize = 511;

/// Census code of one 3x3 block, given row-major (center is element 4).
/// Bit `j` is set when pixel `j` exceeds the block mean.
#[inline]
pub fn census_code(block: &[f64; 9]) -> u16 {
    let mean = block.iter().sum::<f64>() / 9.0;
    let mut code = 0u16;
    for (j, &v) in block.iter().enumerate() {
        if v > mean {
            code |= 1 << j;
        }
    }
    code
}

/// Precomputed pyramid geometry for one descriptor configuration: per-level
/// strip partitions of the patch and code offsets into the concatenated
/// descriptor.
#[derive(Debug, Clone)]
pub struct DescriptorGeometry {
    patch_size: usize,
    levels: Vec<LevelGeometry>,
    len: usize,
}

#[derive(Debug, Clone)]
struct LevelGeometry {
    /// Level side length in level pixels.
    side: usize,
    /// `side + 1` strip boundaries partitioning the patch axis.
    bounds: Vec<usize>,
    /// Index of this level's first code in the descriptor.
    offset: usize,
}

impl DescriptorGeometry {
    pub fn new(cfg: &DescriptorConfig) -> Result<Self> {
        cfg.validate()?;
        let mut levels = Vec::with_capacity(cfg.levels.len());
        let mut offset = 0;
        for &side in &cfg.levels {
            let bounds = (0..=side).map(|k| k * cfg.patch_size / side).collect();
            levels.push(LevelGeometry {
                side,
                bounds,
                offset,
            });
            offset += (side - 2) * (side - 2);
        }
        Ok(DescriptorGeometry {
            patch_size: cfg.patch_size,
            levels,
            len: offset,
        })
    }

    pub fn descriptor_len(&self) -> usize {
        self.len
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// Mean of the level pixel `(lx, ly)` for the patch whose top-left pixel
    /// is at `origin` in the integral image.
    #[inline]
    fn level_mean(
        &self,
        level: &LevelGeometry,
        integral: &IntegralImage,
        origin: (usize, usize),
        lx: usize,
        ly: usize,
    ) -> f64 {
        let (x0, x1) = (level.bounds[lx], level.bounds[lx + 1]);
        let (y0, y1) = (level.bounds[ly], level.bounds[ly + 1]);
        let area = ((x1 - x0) * (y1 - y0)) as f64;
        integral.box_sum(origin.0 + x0, origin.1 + y0, origin.0 + x1, origin.1 + y1) / area
    }

    /// Census code for one descriptor position of the patch at `origin`.
    /// `position` indexes the concatenated descriptor.
    pub fn code_at(&self, integral: &IntegralImage, origin: (usize, usize), position: usize) -> u16 {
        debug_assert!(position < self.len);
        let level = self
            .levels
            .iter()
            .rev()
            .find(|l| position >= l.offset)
            .expect("position below every level offset");
        let rel = position - level.offset;
        let interior = level.side - 2;
        // Interior coordinates; the census block is centered one pixel in.
        let cy = rel / interior + 1;
        let cx = rel % interior + 1;
        let mut block = [0.0; 9];
        for dy in 0..3 {
            for dx in 0..3 {
                block[dy * 3 + dx] =
                    self.level_mean(level, integral, origin, cx + dx - 1, cy + dy - 1);
            }
        }
        census_code(&block)
    }

    /// Full descriptor of the patch whose top-left pixel is `origin`.
    pub fn describe(&self, integral: &IntegralImage, origin: (usize, usize)) -> Vec<u16> {
        debug_assert!(origin.0 + self.patch_size <= integral.width());
        debug_assert!(origin.1 + self.patch_size <= integral.height());
        let mut out = Vec::with_capacity(self.len);
        for level in &self.levels {
            let interior = level.side - 2;
            // Cache the level grid so each mean is computed once instead of
            // up to nine times.
            let mut grid = vec![0.0; level.side * level.side];
            for ly in 0..level.side {
                for lx in 0..level.side {
                    grid[ly * level.side + lx] = self.level_mean(level, integral, origin, lx, ly);
                }
            }
            for cy in 1..=interior {
                for cx in 1..=interior {
                    let mut block = [0.0; 9];
                    for dy in 0..3 {
                        for dx in 0..3 {
                            block[dy * 3 + dx] =
                                grid[(cy + dy - 1) * level.side + (cx + dx - 1)];
                        }
                    }
                    out.push(census_code(&block));
                }
            }
        }
        out
    }
}
