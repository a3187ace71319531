//! Training-time augmentation: random resized crop plus horizontal flip.

use rand::Rng;

use crate::image::Image;

pub const SCALE: (f64, f64) = (0.08, 1.0);
pub const RATIO: (f64, f64) = (3.0 / 4.0, 4.0 / 3.0);
const ATTEMPTS: usize = 10;

/// What the sampler actually did, for inspection in tests and logs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentInfo {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub area_fraction: f64,
    pub ratio: f64,
    pub flipped: bool,
    /// True when every random draw failed and the center crop was used.
    pub fallback: bool,
}

fn in_bounds(w: u32, h: u32, width: u32, height: u32) -> bool {
    if w == 0 || h == 0 || w > width || h > height {
        return false;
    }
    let area = (w as f64 * h as f64) / (width as f64 * height as f64);
    let ratio = w as f64 / h as f64;
    area >= SCALE.0 && area <= SCALE.1 && ratio >= RATIO.0 && ratio <= RATIO.1
}

/// Chooses the crop window. Draws are accepted only if the rounded window
/// still satisfies the scale and ratio bounds.
pub fn sample_crop(width: u32, height: u32, rng: &mut impl Rng) -> (u32, u32, u32, u32, bool) {
    let area = width as f64 * height as f64;
    let (log_lo, log_hi) = (RATIO.0.ln(), RATIO.1.ln());
    for _ in 0..ATTEMPTS {
        let target = area * rng.random_range(SCALE.0..=SCALE.1);
        let ratio = rng.random_range(log_lo..=log_hi).exp();
        let w = (target * ratio).sqrt().round() as u32;
        let h = (target / ratio).sqrt().round() as u32;
        if in_bounds(w, h, width, height) {
            let x = rng.random_range(0..=width - w);
            let y = rng.random_range(0..=height - h);
            return (x, y, w, h, false);
        }
    }
    // Center crop with the aspect ratio clamped into range.
    let in_ratio = width as f64 / height as f64;
    let (w, h) = if in_ratio < RATIO.0 {
        (
            width,
            ((width as f64 / RATIO.0).round() as u32).clamp(1, height),
        )
    } else if in_ratio > RATIO.1 {
        (
            ((height as f64 * RATIO.1).round() as u32).clamp(1, width),
            height,
        )
    } else {
        (width, height)
    };
    ((width - w) / 2, (height - h) / 2, w, h, true)
}

/// Random resized crop, flip with probability 1/2, bilinear resize to
/// `size × size`.
pub fn augment_image(img: &Image, size: u32, rng: &mut impl Rng) -> (Image, AugmentInfo) {
    let (x, y, w, h, fallback) = sample_crop(img.width(), img.height(), rng);
    let flipped = rng.random_bool(0.5);
    let mut out = img.crop(x, y, w, h).expect("crop window inside image");
    if flipped {
        out = out.flip_horizontal();
    }
    let info = AugmentInfo {
        x,
        y,
        w,
        h,
        area_fraction: (w as f64 * h as f64) / (img.width() as f64 * img.height() as f64),
        ratio: w as f64 / h as f64,
        flipped,
        fallback,
    };
    (out.resize_bilinear(size, size), info)
}
