//! Grayscale float image buffer with the sampling primitives the detector
//! pipeline needs: clamped bilinear lookup, similarity resampling, and
//! summed-area tables.

use crate::error::{Error, Result};
use crate::geometry::{Similarity, Vec2};

/// Row-major grayscale image with `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImageF {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImageF {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImageF {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dim(width * height, data.len(), "image buffer"));
        }
        Ok(GrayImageF {
            width,
            height,
            data,
        })
    }

    pub fn from_luma8(img: &image::GrayImage) -> Self {
        GrayImageF {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.pixels().map(|p| p.0[0] as f64).collect(),
        }
    }

    pub fn to_luma8(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.get(x as usize, y as usize).clamp(0.0, 255.0);
            image::Luma([v.round() as u8])
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample with edge replication outside the image.
    pub fn sample(&self, p: Vec2) -> f64 {
        let x = p.x.clamp(0.0, (self.width - 1) as f64);
        let y = p.y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bot = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    /// Resamples this image through a similarity: output pixel `(x, y)` reads
    /// `self` at `map(x, y)`.
    pub fn warp(&self, map: &Similarity, out_width: usize, out_height: usize) -> GrayImageF {
        let mut out = GrayImageF::new(out_width, out_height);
        for y in 0..out_height {
            for x in 0..out_width {
                let src = map.apply(Vec2::new(x as f64, y as f64));
                out.set(x, y, self.sample(src));
            }
        }
        out
    }
}

/// Integer pixel rectangle, exclusive on the high edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridRect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl GridRect {
    pub fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Self {
        GridRect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> i64 {
        (self.x1 - self.x0).max(0)
    }

    pub fn height(&self) -> i64 {
        (self.y1 - self.y0).max(0)
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Whether `other` lies entirely inside this rectangle.
    pub fn contains_rect(&self, other: &GridRect) -> bool {
        other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1 <= self.x1 && other.y1 <= self.y1
    }
}

/// Summed-area table. Box sums over any axis-aligned pixel rectangle in
/// constant time. Sums are exact for integer-valued pixels in the ranges a
/// detector window can produce.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    /// `(width + 1) x (height + 1)` cumulative sums, row-major.
    sums: Vec<f64>,
}

impl IntegralImage {
    pub fn build(img: &GrayImageF) -> Self {
        let (w, h) = (img.width, img.height);
        let mut sums = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += img.get(x, y);
                sums[(y + 1) * (w + 1) + (x + 1)] = sums[y * (w + 1) + (x + 1)] + row;
            }
        }
        IntegralImage {
            width: w,
            height: h,
            sums,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Sum over pixels `[x0, x1) x [y0, y1)`. Bounds must be inside the
    /// image; callers clamp beforehand.
    #[inline]
    pub fn box_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        debug_assert!(x0 <= x1 && x1 <= self.width && y0 <= y1 && y1 <= self.height);
        let s = &self.sums;
        let w = self.width + 1;
        s[y1 * w + x1] + s[y0 * w + x0] - s[y0 * w + x1] - s[y1 * w + x0]
    }
}
