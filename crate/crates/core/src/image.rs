//! Minimal 8-bit raster type shared by feature extraction and the network.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot load image {path}: {reason}")]
    Load { path: String, reason: String },
    #[error("cannot save image {path}: {reason}")]
    Save { path: String, reason: String },
    #[error("invalid image: {0}")]
    Invalid(String),
    #[error("crop {x},{y} {w}x{h} outside {width}x{height} image")]
    CropOutOfBounds {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },
}

/// Interleaved 8-bit image with 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Invalid(format!("empty {width}x{height} image")));
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::Invalid(format!("{channels} channels")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(ImageError::Invalid(format!(
                "buffer of {} bytes, expected {expected}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, pixel: &[u8]) -> Result<Self, ImageError> {
        let channels = pixel.len() as u8;
        let n = width as usize * height as usize;
        let data = pixel
            .iter()
            .copied()
            .cycle()
            .take(n * pixel.len())
            .collect();
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &mut self.data[i..i + c]
    }

    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<Image, ImageError> {
        if w == 0
            || h == 0
            || x as u64 + w as u64 > self.width as u64
            || y as u64 + h as u64 > self.height as u64
        {
            return Err(ImageError::CropOutOfBounds {
                x,
                y,
                w,
                h,
                width: self.width,
                height: self.height,
            });
        }
        let c = self.channels as usize;
        let mut data = Vec::with_capacity(w as usize * h as usize * c);
        for row in y..y + h {
            let start = (row as usize * self.width as usize + x as usize) * c;
            data.extend_from_slice(&self.data[start..start + w as usize * c]);
        }
        Image::new(w, h, self.channels, data)
    }

    /// Rotates 90° clockwise.
    pub fn rotate90(&self) -> Image {
        let (w, h) = (self.width, self.height);
        let c = self.channels as usize;
        let mut data = vec![0u8; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                // (x, y) lands at column h-1-y, row x of the h×w result.
                let nx = h - 1 - y;
                let ny = x;
                let dst = (ny as usize * h as usize + nx as usize) * c;
                data[dst..dst + c].copy_from_slice(self.pixel(x, y));
            }
        }
        Image {
            width: h,
            height: w,
            channels: self.channels,
            data,
        }
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        let c = self.channels as usize;
        let w = self.width as usize;
        for row in out.data.chunks_mut(w * c) {
            for x in 0..w / 2 {
                for k in 0..c {
                    row.swap(x * c + k, (w - 1 - x) * c + k);
                }
            }
        }
        out
    }

    /// Bilinear resize with half-pixel centers, edge pixels replicated.
    pub fn resize_bilinear(&self, new_w: u32, new_h: u32) -> Image {
        let c = self.channels as usize;
        let mut data = vec![0u8; new_w as usize * new_h as usize * c];
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        for oy in 0..new_h {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            let y0 = fy.floor() as u32;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for ox in 0..new_w {
                let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
                let x0 = fx.floor() as u32;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let (p00, p10, p01, p11) = (
                    self.pixel(x0, y0),
                    self.pixel(x1, y0),
                    self.pixel(x0, y1),
                    self.pixel(x1, y1),
                );
                let dst = (oy as usize * new_w as usize + ox as usize) * c;
                for k in 0..c {
                    let top = p00[k] as f64 * (1.0 - tx) + p10[k] as f64 * tx;
                    let bot = p01[k] as f64 * (1.0 - tx) + p11[k] as f64 * tx;
                    data[dst + k] = (top * (1.0 - ty) + bot * ty).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        Image {
            width: new_w,
            height: new_h,
            channels: self.channels,
            data,
        }
    }

    /// Loads a PNG (or any format the `image` crate was built with). Gray and
    /// gray+alpha images load as 1 channel, everything else as RGB.
    pub fn load(path: impl AsRef<Path>) -> Result<Image, ImageError> {
        let path = path.as_ref();
        let dynamic = ::image::open(path).map_err(|e| ImageError::Load {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let (w, h) = (dynamic.width(), dynamic.height());
        let img = if dynamic.color().has_color() {
            Image::new(w, h, 3, dynamic.into_rgb8().into_raw())
        } else {
            Image::new(w, h, 1, dynamic.into_luma8().into_raw())
        };
        img.map_err(|e| ImageError::Load {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        let color = if self.channels == 3 {
            ::image::ExtendedColorType::Rgb8
        } else {
            ::image::ExtendedColorType::L8
        };
        ::image::save_buffer_with_format(
            path,
            &self.data,
            self.width,
            self.height,
            color,
            ::image::ImageFormat::Png,
        )
        .map_err(|e| ImageError::Save {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: u32, h: u32) -> Image {
        let data = (0..w * h).map(|i| (i * 7 % 256) as u8).collect();
        Image::new(w, h, 1, data).unwrap()
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(Image::new(0, 3, 1, vec![]).is_err());
        assert!(Image::new(2, 2, 2, vec![0; 8]).is_err());
        assert!(Image::new(2, 2, 3, vec![0; 11]).is_err());
    }

    #[test]
    fn four_rotations_are_identity() {
        let img = ramp(5, 3);
        let r = img.rotate90();
        assert_eq!((r.width(), r.height()), (3, 5));
        // Top-left lands at top-right after a clockwise turn.
        assert_eq!(r.pixel(2, 0), img.pixel(0, 0));
        assert_eq!(r.rotate90().rotate90().rotate90(), img);
    }

    #[test]
    fn flip_twice_is_identity() {
        let img = ramp(4, 3);
        let f = img.flip_horizontal();
        assert_eq!(f.pixel(0, 1), img.pixel(3, 1));
        assert_eq!(f.flip_horizontal(), img);
    }

    #[test]
    fn crop_bounds() {
        let img = ramp(4, 4);
        let c = img.crop(1, 1, 2, 3).unwrap();
        assert_eq!(c.pixel(0, 0), img.pixel(1, 1));
        assert!(img.crop(3, 0, 2, 1).is_err());
        assert_eq!(img.crop(0, 0, 4, 4).unwrap(), img);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = ramp(6, 5);
        assert_eq!(img.resize_bilinear(6, 5), img);
        let flat = Image::filled(3, 7, &[10, 20, 30]).unwrap();
        assert_eq!(
            flat.resize_bilinear(224, 224),
            Image::filled(224, 224, &[10, 20, 30]).unwrap()
        );
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::new(3, 2, 3, (0..18).collect()).unwrap();
        let p = dir.path().join("a.png");
        img.save_png(&p).unwrap();
        assert_eq!(Image::load(&p).unwrap(), img);
        let gray = ramp(5, 4);
        gray.save_png(&p).unwrap();
        assert_eq!(Image::load(&p).unwrap(), gray);
    }
}
