//! In-memory frames and patch extraction.

use std::path::Path;

use ndarray::{Array3, Axis};

use crate::error::{DapError, Result};
use crate::geometry::BBox;
use crate::real::Real;

/// Interleaved (height, width, channels) image with float samples.
///
/// Frames loaded from disk keep the 0..=255 range of 8-bit files; the
/// network consumes [`Image::normalized`] frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Image {
            data: vec![value; width * height * channels],
            ..Self::new(width, height, channels)
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    /// Maps 8-bit intensities to roughly [-1, 1] so that zero padding
    /// corresponds to mid grey.
    pub fn normalized(&self) -> Image {
        self.map(|v| (v - 128.0) / 128.0)
    }

    /// Loads an 8-bit image file; grey images stay single channel.
    pub fn load(path: &Path) -> Result<Image> {
        let img = image::open(path).map_err(|e| DapError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let (width, height) = (img.width() as usize, img.height() as usize);
        let (channels, data) = match img.color().channel_count() {
            1 | 2 => (1, img.into_luma8().into_raw()),
            _ => (3, img.into_rgb8().into_raw()),
        };
        Ok(Image {
            width,
            height,
            channels,
            data: data.into_iter().map(f32::from).collect(),
        })
    }

    /// Saves as 8-bit PNG (values are rounded and clamped to 0..=255).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            c => {
                return Err(DapError::Image {
                    path: path.to_path_buf(),
                    message: format!("cannot encode {c} channels"),
                })
            }
        };
        image::save_buffer(path, &bytes, self.width as u32, self.height as u32, color).map_err(|e| DapError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Mean of the samples inside `bbox` (clipped to the image), all channels.
    pub fn region_mean(&self, bbox: &BBox) -> Option<f64> {
        let x0 = bbox.x.max(0.0).floor() as usize;
        let y0 = bbox.y.max(0.0).floor() as usize;
        let x1 = (bbox.right().min(self.width as f64).ceil() as usize).min(self.width);
        let y1 = (bbox.bottom().min(self.height as f64).ceil() as usize).min(self.height);
        if x0 >= x1 || y0 >= y1 {
            return None;
        }
        let mut sum = 0.0;
        for y in y0..y1 {
            for x in x0..x1 {
                for c in 0..self.channels {
                    sum += self.get(x, y, c) as f64;
                }
            }
        }
        Some(sum / ((x1 - x0) * (y1 - y0) * self.channels) as f64)
    }
}

/// Crops `bbox` from `image` and resizes it bilinearly to
/// `out_size x out_size`, returned as (channels, out_size, out_size).
///
/// Output pixels whose source position falls outside the image are zero;
/// inside the image, sampling clamps to the border pixels.
pub fn extract_patch<T: Real>(image: &Image, bbox: &BBox, out_size: usize) -> Result<Array3<T>> {
    if bbox.overlap_with_image(image.width as f64, image.height as f64) <= 0.0 {
        return Err(DapError::OutOfImage(bbox.as_array()));
    }
    let (w, h, ch) = (image.width, image.height, image.channels);
    let sx = bbox.w / out_size as f64;
    let sy = bbox.h / out_size as f64;
    // source coordinates along each axis, None when outside the image
    let axis = |start: f64, step: f64, len: usize| -> Vec<Option<(usize, usize, f64)>> {
        (0..out_size)
            .map(|i| {
                let p = start + (i as f64 + 0.5) * step - 0.5;
                if p < -0.5 || p > len as f64 - 0.5 {
                    return None;
                }
                let p = p.clamp(0.0, (len - 1) as f64);
                let p0 = p.floor() as usize;
                let p1 = (p0 + 1).min(len - 1);
                Some((p0, p1, p - p0 as f64))
            })
            .collect()
    };
    let xs = axis(bbox.x, sx, w);
    let ys = axis(bbox.y, sy, h);
    let mut out = Array3::<T>::zeros((ch, out_size, out_size));
    for (i, yv) in ys.iter().enumerate() {
        let Some((y0, y1, fy)) = *yv else { continue };
        for (j, xv) in xs.iter().enumerate() {
            let Some((x0, x1, fx)) = *xv else { continue };
            for c in 0..ch {
                let top = image.get(x0, y0, c) as f64 * (1.0 - fx) + image.get(x1, y0, c) as f64 * fx;
                let bot = image.get(x0, y1, c) as f64 * (1.0 - fx) + image.get(x1, y1, c) as f64 * fx;
                out[[c, i, j]] = T::lit(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Ok(out)
}

/// Replicates a single-channel patch to `channels` channels.
pub fn replicate_channels<T: Real>(patch: Array3<T>, channels: usize) -> Array3<T> {
    if patch.dim().0 == channels {
        return patch;
    }
    let plane = patch.index_axis(Axis(0), 0);
    let views: Vec<_> = (0..channels).map(|_| plane.insert_axis(Axis(0))).collect();
    ndarray::concatenate(Axis(0), &views).expect("same plane shape")
}

/// An RGB frame and its thermal counterpart, normalized for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub rgb: Image,
    pub thermal: Image,
}

impl FramePair {
    pub fn new(rgb: &Image, thermal: &Image) -> Self {
        FramePair {
            rgb: rgb.normalized(),
            thermal: thermal.normalized(),
        }
    }

    pub fn width(&self) -> usize {
        self.rgb.width
    }

    pub fn height(&self) -> usize {
        self.rgb.height
    }

    /// Three-channel RGB and thermal patches of the same box.
    pub fn patches<T: Real>(&self, bbox: &BBox, size: usize) -> Result<(Array3<T>, Array3<T>)> {
        let rgb = replicate_channels(extract_patch(&self.rgb, bbox, size)?, 3);
        let thermal = replicate_channels(extract_patch(&self.thermal, bbox, size)?, 3);
        Ok((rgb, thermal))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize, ch: usize) -> Image {
        let mut img = Image::new(w, h, ch);
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    img.set(x, y, c, (x * 3 + y * 7 + c * 11) as f32 % 251.0);
                }
            }
        }
        img
    }

    #[test]
    fn identity_crop() {
        let img = ramp(107, 107, 3);
        let bbox = BBox::new(0.0, 0.0, 107.0, 107.0).unwrap();
        let p: Array3<f64> = extract_patch(&img, &bbox, 107).unwrap();
        for y in 0..107 {
            for x in 0..107 {
                for c in 0..3 {
                    assert_eq!(p[[c, y, x]], img.get(x, y, c) as f64);
                }
            }
        }
    }

    #[test]
    fn constant_image_constant_patch() {
        let img = Image::filled(40, 30, 1, 42.0);
        for bbox in [
            BBox::new(3.0, 4.0, 10.0, 7.0).unwrap(),
            BBox::new(0.0, 0.0, 40.0, 30.0).unwrap(),
            BBox::new(10.2, 5.7, 21.3, 15.1).unwrap(),
        ] {
            let p: Array3<f32> = extract_patch(&img, &bbox, 17).unwrap();
            assert!(p.iter().all(|&v| (v - 42.0).abs() < 1e-4), "{bbox:?}");
        }
    }

    #[test]
    fn out_of_bounds_region_is_zero() {
        let img = Image::filled(20, 20, 3, 9.0);
        // left half of the box lies left of the image
        let bbox = BBox::new(-10.0, 0.0, 20.0, 20.0).unwrap();
        let p: Array3<f64> = extract_patch(&img, &bbox, 10).unwrap();
        for c in 0..3 {
            for y in 0..10 {
                for x in 0..5 {
                    assert_eq!(p[[c, y, x]], 0.0);
                }
                for x in 5..10 {
                    assert_eq!(p[[c, y, x]], 9.0);
                }
            }
        }
    }

    #[test]
    fn fully_outside_is_error() {
        let img = Image::filled(20, 20, 1, 1.0);
        let bbox = BBox::new(25.0, 0.0, 5.0, 5.0).unwrap();
        assert!(matches!(extract_patch::<f32>(&img, &bbox, 8), Err(DapError::OutOfImage(_))));
    }

    #[test]
    fn replicate_grey() {
        let p = Array3::from_shape_fn((1, 2, 2), |(_, i, j)| (i * 2 + j) as f32);
        let r = replicate_channels(p.clone(), 3);
        assert_eq!(r.dim(), (3, 2, 2));
        for c in 0..3 {
            assert_eq!(r.index_axis(Axis(0), c), p.index_axis(Axis(0), 0));
        }
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for ch in [1, 3] {
            let img = ramp(9, 5, ch);
            let path = dir.path().join(format!("f{ch}.png"));
            img.save_png(&path).unwrap();
            assert_eq!(Image::load(&path).unwrap(), img);
        }
    }
}
