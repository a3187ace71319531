use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum HistMode {
    /// bins³ joint HSV histogram.
    Joint,
    /// Three concatenated per-channel HSV histograms (3 · bins).
    PerChannel,
}

impl HistMode {
    pub fn dim(self, bins: usize) -> usize {
        match self {
            HistMode::Joint => bins * bins * bins,
            HistMode::PerChannel => 3 * bins,
        }
    }
}

/// RGB → HSV with H in degrees [0, 360), S in [0, 1], V in [0, 255].
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let (rf, gf, bf) = (r as f64, g as f64, b as f64);
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == rf {
        60.0 * (gf - bf) / delta
    } else if max == gf {
        120.0 + 60.0 * (bf - rf) / delta
    } else {
        240.0 + 60.0 * (rf - gf) / delta
    };
    let h = if h < 0.0 { h + 360.0 } else { h };
    (h, s, max)
}

fn hsv_bins(pixel: &[u8], bins: usize) -> (usize, usize, usize) {
    let (h, s, v) = rgb_to_hsv(pixel[0], pixel[1], pixel[2]);
    let b = bins as f64;
    let hb = ((h / 360.0 * b) as usize).min(bins - 1);
    let sb = ((s * b) as usize).min(bins - 1);
    let vb = ((v / 256.0 * b) as usize).min(bins - 1);
    (hb, sb, vb)
}

/// L1-normalized HSV color histogram of an RGB image.
pub fn color_histogram(img: &Image, bins: usize, mode: HistMode) -> Result<Vec<f64>, FeatureError> {
    if img.channels() != 3 {
        return Err(FeatureError::NotColor);
    }
    if bins == 0 {
        return Err(FeatureError::InvalidConfig("zero histogram bins".into()));
    }
    let mut hist = vec![0u64; mode.dim(bins)];
    for px in img.data().chunks_exact(3) {
        let (h, s, v) = hsv_bins(px, bins);
        match mode {
            HistMode::Joint => hist[(h * bins + s) * bins + v] += 1,
            HistMode::PerChannel => {
                hist[h] += 1;
                hist[bins + s] += 1;
                hist[2 * bins + v] += 1;
            }
        }
    }
    let total: u64 = hist.iter().sum();
    Ok(hist.into_iter().map(|c| c as f64 / total as f64).collect())
}
