//! Gray-level co-occurrence matrices and the 13 Haralick statistics.
//!
//! Entropies use log base 2. Sum variance is taken about the sum average
//! (the original formulation's use of sum entropy there is a known slip).

use super::FeatureError;
use crate::image::Image;

/// Pixel offsets (dx, dy) for 0°, 45°, 90° and 135° at distance 1.
pub const DIRECTIONS: [(i64, i64); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];

pub const HARALICK_NAMES: [&str; 13] = [
    "angular_second_moment",
    "contrast",
    "correlation",
    "sum_of_squares_variance",
    "inverse_difference_moment",
    "sum_average",
    "sum_variance",
    "sum_entropy",
    "entropy",
    "difference_variance",
    "difference_entropy",
    "info_measure_correlation_1",
    "info_measure_correlation_2",
];

/// Symmetric co-occurrence counts, row-major `levels × levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    pub levels: usize,
    pub counts: Vec<u64>,
}

impl Glcm {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.levels + j]
    }

    /// Probabilities summing to 1, or `None` when no pair was counted.
    pub fn normalized(&self) -> Option<Vec<f64>> {
        let total = self.total();
        (total > 0).then(|| {
            self.counts
                .iter()
                .map(|&c| c as f64 / total as f64)
                .collect()
        })
    }
}

/// Maps 8-bit intensities onto `levels` equal-width bins.
pub fn quantize(gray: &Image, levels: usize) -> Vec<u16> {
    gray.data()
        .iter()
        .map(|&g| ((g as usize * levels) / 256) as u16)
        .collect()
}

/// Counts each pixel pair at `offset` in both orders, so the matrix is
/// symmetric by construction. `quantized` holds values `< levels`.
pub fn glcm(
    quantized: &[u16],
    width: usize,
    height: usize,
    levels: usize,
    offset: (i64, i64),
) -> Glcm {
    let mut counts = vec![0u64; levels * levels];
    let (dx, dy) = offset;
    for y in 0..height as i64 {
        let ny = y + dy;
        if ny < 0 || ny >= height as i64 {
            continue;
        }
        for x in 0..width as i64 {
            let nx = x + dx;
            if nx < 0 || nx >= width as i64 {
                continue;
            }
            let a = quantized[(y * width as i64 + x) as usize] as usize;
            let b = quantized[(ny * width as i64 + nx) as usize] as usize;
            counts[a * levels + b] += 1;
            counts[b * levels + a] += 1;
        }
    }
    Glcm { levels, counts }
}

fn entropy(p: impl IntoIterator<Item = f64>) -> f64 {
    -p.into_iter()
        .filter(|&v| v > 0.0)
        .map(|v| v * v.log2())
        .sum::<f64>()
}

/// The 13 statistics of one normalized, symmetric GLCM.
pub fn haralick_from_probabilities(p: &[f64], levels: usize) -> [f64; 13] {
    let n = levels;
    let at = |i: usize, j: usize| p[i * n + j];

    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut p_sum = vec![0.0; 2 * n - 1];
    let mut p_diff = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let v = at(i, j);
            px[i] += v;
            py[j] += v;
            p_sum[i + j] += v;
            p_diff[i.abs_diff(j)] += v;
        }
    }
    let mean = |m: &[f64]| {
        m.iter()
            .enumerate()
            .map(|(k, &v)| k as f64 * v)
            .sum::<f64>()
    };
    let var = |m: &[f64], mu: f64| {
        m.iter()
            .enumerate()
            .map(|(k, &v)| (k as f64 - mu).powi(2) * v)
            .sum::<f64>()
    };
    let (ux, uy) = (mean(&px), mean(&py));
    let (vx, vy) = (var(&px, ux), var(&py, uy));

    let mut asm = 0.0;
    let mut idm = 0.0;
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = at(i, j);
            asm += v * v;
            idm += v / (1.0 + (i as f64 - j as f64).powi(2));
            cross += i as f64 * j as f64 * v;
        }
    }
    let contrast = p_diff
        .iter()
        .enumerate()
        .map(|(k, &v)| (k * k) as f64 * v)
        .sum::<f64>();
    let (sx, sy) = (vx.sqrt(), vy.sqrt());
    // A constant image is perfectly (if trivially) correlated.
    let correlation = if sx == 0.0 || sy == 0.0 {
        1.0
    } else {
        (cross - ux * uy) / (sx * sy)
    };
    let sum_average = mean(&p_sum);
    let sum_variance = var(&p_sum, sum_average);
    let sum_entropy = entropy(p_sum.iter().copied());
    let hxy = entropy(p.iter().copied());
    let diff_variance = var(&p_diff, mean(&p_diff));
    let diff_entropy = entropy(p_diff.iter().copied());

    let hx = entropy(px.iter().copied());
    let hy = entropy(py.iter().copied());
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let q = px[i] * py[j];
            if q > 0.0 {
                hxy1 -= at(i, j) * q.log2();
                hxy2 -= q * q.log2();
            }
        }
    }
    let hmax = hx.max(hy);
    let imc1 = if hmax > 0.0 { (hxy - hxy1) / hmax } else { 0.0 };
    let imc2 = (1.0 - (-2.0 * (hxy2 - hxy)).exp()).max(0.0).sqrt();

    [
        asm,
        contrast,
        correlation,
        vx,
        idm,
        sum_average,
        sum_variance,
        sum_entropy,
        hxy,
        diff_variance,
        diff_entropy,
        imc1,
        imc2,
    ]
}

/// Haralick statistics on pre-quantized levels, averaged over the directions
/// that contain at least one pixel pair.
pub fn haralick_from_levels(
    quantized: &[u16],
    width: usize,
    height: usize,
    levels: usize,
) -> Result<[f64; 13], FeatureError> {
    let mut acc = [0.0; 13];
    let mut used = 0usize;
    for offset in DIRECTIONS {
        let m = glcm(quantized, width, height, levels, offset);
        if let Some(p) = m.normalized() {
            let f = haralick_from_probabilities(&p, levels);
            for (a, v) in acc.iter_mut().zip(f) {
                *a += v;
            }
            used += 1;
        }
    }
    if used == 0 {
        return Err(FeatureError::DegenerateImage);
    }
    Ok(acc.map(|a| a / used as f64))
}

/// Direction-averaged Haralick statistics of an 8-bit gray image,
/// requantized to `levels` gray levels.
pub fn haralick_features(gray: &Image, levels: usize) -> Result<[f64; 13], FeatureError> {
    if gray.channels() != 1 {
        return Err(FeatureError::NotGray);
    }
    if !(2..=256).contains(&levels) {
        return Err(FeatureError::InvalidConfig(format!("{levels} GLCM levels")));
    }
    let q = quantize(gray, levels);
    haralick_from_levels(&q, gray.width() as usize, gray.height() as usize, levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image() {
        let img = Image::filled(9, 7, &[133]).unwrap();
        let f = haralick_features(&img, 32).unwrap();
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], 0.0);
        assert_eq!(f[8], 0.0);
    }

    #[test]
    fn binary_strip_contrast() {
        // Horizontal pairs (0,1), (1,0), (0,1), counted symmetrically: six
        // entries, all off-diagonal, so contrast is exactly 1.
        let q = [0u16, 1, 0, 1];
        let m = glcm(&q, 4, 1, 2, (1, 0));
        assert_eq!(m.counts, vec![0, 3, 3, 0]);
        let f = haralick_from_probabilities(&m.normalized().unwrap(), 2);
        assert_eq!(f[1], 1.0);
        // Only the horizontal direction has pairs in a 1×4 strip.
        assert_eq!(haralick_from_levels(&q, 4, 1, 2).unwrap()[1], 1.0);
    }

    #[test]
    fn random_glcm_symmetric_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<u8> = (0..40 * 30).map(|_| rng.random()).collect();
        let img = Image::new(40, 30, 1, data).unwrap();
        let q = quantize(&img, 32);
        for d in DIRECTIONS {
            let m = glcm(&q, 40, 30, 32, d);
            for i in 0..32 {
                for j in 0..32 {
                    assert_eq!(m.get(i, j), m.get(j, i));
                }
            }
            let s: f64 = m.normalized().unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let f = haralick_features(&img, 32).unwrap();
        assert!(f.iter().all(|v| v.is_finite()));
        // Uniform noise: near-zero correlation, near-maximal entropy.
        assert!(f[2].abs() < 0.1);
        assert!(f[8] > 9.0);
    }

    #[test]
    fn single_pixel_is_degenerate() {
        let img = Image::new(1, 1, 1, vec![3]).unwrap();
        assert!(matches!(
            haralick_features(&img, 32),
            Err(FeatureError::DegenerateImage)
        ));
    }

    #[test]
    fn rejects_color_and_bad_levels() {
        let rgb = Image::filled(3, 3, &[1, 2, 3]).unwrap();
        assert!(matches!(
            haralick_features(&rgb, 32),
            Err(FeatureError::NotGray)
        ));
        let gray = Image::filled(3, 3, &[1]).unwrap();
        assert!(haralick_features(&gray, 1).is_err());
    }
}
