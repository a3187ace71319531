//! Hu's seven moment invariants of an intensity image.

use super::FeatureError;
use crate::image::Image;

/// Normalized central moments η_pq for p + q ∈ {2, 3}.
#[derive(Debug, Clone, Copy)]
struct Eta {
    n20: f64,
    n02: f64,
    n11: f64,
    n30: f64,
    n03: f64,
    n21: f64,
    n12: f64,
}

fn normalized_central_moments(gray: &Image) -> Result<Eta, FeatureError> {
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let px = gray.data();
    let mut m00 = 0.0;
    let mut m10 = 0.0;
    let mut m01 = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = px[y * w + x] as f64;
            m00 += v;
            m10 += x as f64 * v;
            m01 += y as f64 * v;
        }
    }
    if m00 <= 0.0 {
        return Err(FeatureError::ZeroMass);
    }
    let (cx, cy) = (m10 / m00, m01 / m00);

    // Second pass about the centroid keeps the sums well conditioned.
    let (mut mu20, mut mu02, mut mu11) = (0.0, 0.0, 0.0);
    let (mut mu30, mut mu03, mut mu21, mut mu12) = (0.0, 0.0, 0.0, 0.0);
    for y in 0..h {
        let dy = y as f64 - cy;
        for x in 0..w {
            let v = px[y * w + x] as f64;
            if v == 0.0 {
                continue;
            }
            let dx = x as f64 - cx;
            let (dx2, dy2) = (dx * dx, dy * dy);
            mu20 += dx2 * v;
            mu02 += dy2 * v;
            mu11 += dx * dy * v;
            mu30 += dx2 * dx * v;
            mu03 += dy2 * dy * v;
            mu21 += dx2 * dy * v;
            mu12 += dx * dy2 * v;
        }
    }
    let s2 = m00 * m00;
    let s3 = m00.powf(2.5);
    Ok(Eta {
        n20: mu20 / s2,
        n02: mu02 / s2,
        n11: mu11 / s2,
        n30: mu30 / s3,
        n03: mu03 / s3,
        n21: mu21 / s3,
        n12: mu12 / s3,
    })
}

/// The seven Hu invariants of a single-channel image.
pub fn hu_moments(gray: &Image) -> Result<[f64; 7], FeatureError> {
    if gray.channels() != 1 {
        return Err(FeatureError::NotGray);
    }
    let Eta {
        n20,
        n02,
        n11,
        n30,
        n03,
        n21,
        n12,
    } = normalized_central_moments(gray)?;

    let a = n30 + n12;
    let b = n21 + n03;
    let c = n30 - 3.0 * n12;
    let d = 3.0 * n21 - n03;
    Ok([
        n20 + n02,
        (n20 - n02).powi(2) + 4.0 * n11 * n11,
        c * c + d * d,
        a * a + b * b,
        c * a * (a * a - 3.0 * b * b) + d * b * (3.0 * a * a - b * b),
        (n20 - n02) * (a * a - b * b) + 4.0 * n11 * a * b,
        d * a * (a * a - 3.0 * b * b) - c * b * (3.0 * a * a - b * b),
    ])
}

/// `-sign(h) · log10|h|`, zero left as zero.
pub fn signed_log(hu: [f64; 7]) -> [f64; 7] {
    hu.map(|h| {
        if h == 0.0 {
            0.0
        } else {
            -h.signum() * h.abs().log10()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight from the definitions: raw moments, then central moments via
    /// the binomial expansion, then η and the Hu polynomials.
    fn oracle(w: usize, h: usize, px: &[f64]) -> [f64; 7] {
        let raw = |p: i32, q: i32| -> f64 {
            let mut s = 0.0;
            for y in 0..h {
                for x in 0..w {
                    s += (x as f64).powi(p) * (y as f64).powi(q) * px[y * w + x];
                }
            }
            s
        };
        let m00 = raw(0, 0);
        let xb = raw(1, 0) / m00;
        let yb = raw(0, 1) / m00;
        let mu = |p: i32, q: i32| -> f64 {
            let mut s = 0.0;
            for y in 0..h {
                for x in 0..w {
                    s += (x as f64 - xb).powi(p) * (y as f64 - yb).powi(q) * px[y * w + x];
                }
            }
            s
        };
        let eta = |p: i32, q: i32| mu(p, q) / m00.powf(1.0 + (p + q) as f64 / 2.0);
        let (e20, e02, e11) = (eta(2, 0), eta(0, 2), eta(1, 1));
        let (e30, e03, e21, e12) = (eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2));
        [
            e20 + e02,
            (e20 - e02).powi(2) + 4.0 * e11.powi(2),
            (e30 - 3.0 * e12).powi(2) + (3.0 * e21 - e03).powi(2),
            (e30 + e12).powi(2) + (e21 + e03).powi(2),
            (e30 - 3.0 * e12) * (e30 + e12) * ((e30 + e12).powi(2) - 3.0 * (e21 + e03).powi(2))
                + (3.0 * e21 - e03)
                    * (e21 + e03)
                    * (3.0 * (e30 + e12).powi(2) - (e21 + e03).powi(2)),
            (e20 - e02) * ((e30 + e12).powi(2) - (e21 + e03).powi(2))
                + 4.0 * e11 * (e30 + e12) * (e21 + e03),
            (3.0 * e21 - e03) * (e30 + e12) * ((e30 + e12).powi(2) - 3.0 * (e21 + e03).powi(2))
                - (e30 - 3.0 * e12)
                    * (e21 + e03)
                    * (3.0 * (e30 + e12).powi(2) - (e21 + e03).powi(2)),
        ]
    }

    #[test]
    fn three_by_three_matches_oracle() {
        let px: Vec<u8> = vec![10, 200, 30, 0, 90, 255, 60, 5, 120];
        let img = Image::new(3, 3, 1, px.clone()).unwrap();
        let got = hu_moments(&img).unwrap();
        let want = oracle(3, 3, &px.iter().map(|&v| v as f64).collect::<Vec<_>>());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1e-300), "{g} vs {w}");
        }
    }

    #[test]
    fn zero_mass() {
        let img = Image::new(2, 2, 1, vec![0; 4]).unwrap();
        assert!(matches!(hu_moments(&img), Err(FeatureError::ZeroMass)));
    }

    #[test]
    fn single_pixel_is_degenerate_point() {
        let img = Image::new(1, 1, 1, vec![7]).unwrap();
        assert_eq!(hu_moments(&img).unwrap(), [0.0; 7]);
    }

    #[test]
    fn signed_log_sign() {
        let s = signed_log([1e-3, -1e-2, 0.0, 1.0, 1e-3, 1e-3, 1e-3]);
        assert!((s[0] - 3.0).abs() < 1e-12);
        assert!((s[1] + 2.0).abs() < 1e-12);
        assert_eq!(s[2], 0.0);
    }
}
