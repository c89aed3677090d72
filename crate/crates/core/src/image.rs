//! Grayscale image container with elementwise helpers, plus NTSC
//! panchromatic conversion of RGB inputs.
//!
//! Pixels are double-precision intensities in row-major order, nominally
//! in [0,1]. Solver iterates may leave that range; clamping happens only
//! when writing files. Images are immutable values after construction.

use crate::error::{Error, Result};

/// Single-channel image, row-major, `height * width` finite intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// Validating constructor: dimensions positive, length consistent,
    /// all values finite.
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::InvalidDimensions(format!(
                "pixel count {} does not match {height}x{width}",
                pixels.len()
            )));
        }
        if let Some(index) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinitePixel { index });
        }
        Ok(Self { height, width, pixels })
    }

    /// Internal constructor for arithmetic results whose inputs were
    /// already validated. Finiteness is only debug-checked here.
    pub(crate) fn from_raw(height: usize, width: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), height * width);
        Self { height, width, pixels }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_raw(height, width, vec![0.0; height * width])
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Self::from_raw(height, width, vec![value; height * width])
    }

    /// Build from a per-pixel function of (row, col).
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::from_raw(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Read with replicate (nearest-pixel) boundary extension.
    #[inline]
    pub fn at_clamped(&self, row: i64, col: i64) -> f64 {
        let r = row.clamp(0, self.height as i64 - 1) as usize;
        let c = col.clamp(0, self.width as i64 - 1) as usize;
        self.pixels[r * self.width + c]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::from_raw(self.height, self.width, self.pixels.iter().map(|&v| f(v)).collect())
    }

    pub fn add(&self, other: &Image) -> Image {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Image) -> Image {
        self.zip(other, |a, b| a - b)
    }

    pub fn scaled(&self, factor: f64) -> Image {
        self.map(|v| v * factor)
    }

    /// a + factor * b, the workhorse of the iterative solvers.
    pub fn axpy(&self, factor: f64, other: &Image) -> Image {
        self.zip(other, |a, b| a + factor * b)
    }

    pub fn dot(&self, other: &Image) -> f64 {
        assert!(self.same_shape(other), "dot on mismatched shapes");
        self.pixels.iter().zip(&other.pixels).map(|(a, b)| a * b).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.pixels.len() as f64
    }

    fn zip(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Image {
        assert!(self.same_shape(other), "elementwise op on mismatched shapes");
        let pixels = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Image::from_raw(self.height, self.width, pixels)
    }
}

/// RGB image with channel-interleaved row-major samples in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if pixels.len() != 3 * height * width {
            return Err(Error::InvalidDimensions(format!(
                "sample count {} does not match 3x{height}x{width}",
                pixels.len()
            )));
        }
        if let Some(index) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinitePixel { index });
        }
        Ok(Self { height, width, pixels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn rgb(&self, row: usize, col: usize) -> (f64, f64, f64) {
        let base = 3 * (row * self.width + col);
        (self.pixels[base], self.pixels[base + 1], self.pixels[base + 2])
    }
}

/// NTSC luminance: 0.30 R + 0.59 G + 0.11 B per pixel.
pub fn ntsc_luminance(img: &RgbImage) -> Image {
    Image::from_fn(img.height(), img.width(), |r, c| {
        let (red, green, blue) = img.rgb(r, c);
        0.30 * red + 0.59 * green + 0.11 * blue
    })
}

/// Extract the `h x w` window with top-left corner (top, left).
pub fn crop(img: &Image, top: usize, left: usize, h: usize, w: usize) -> Result<Image> {
    if h == 0 || w == 0 {
        return Err(Error::InvalidDimensions("crop window must be nonempty".into()));
    }
    if top + h > img.height() || left + w > img.width() {
        return Err(Error::OutOfBounds(format!(
            "crop window ({top},{left})+{h}x{w} exceeds image {}x{}",
            img.height(),
            img.width()
        )));
    }
    Ok(Image::from_fn(h, w, |r, c| img.at(top + r, left + c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ramp(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |r, c| (r * w + c) as f64)
    }

    #[test]
    fn new_rejects_bad_shapes_and_values() {
        assert!(Image::new(0, 3, vec![]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(matches!(
            Image::new(1, 2, vec![0.0, f64::NAN]),
            Err(Error::NonFinitePixel { index: 1 })
        ));
    }

    #[test]
    fn ntsc_all_ones_is_ones() {
        let rgb = RgbImage::new(2, 2, vec![1.0; 12]).unwrap();
        let lum = ntsc_luminance(&rgb);
        for &v in lum.pixels() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn ntsc_pure_red_is_030() {
        let mut px = vec![0.0; 12];
        for p in 0..4 {
            px[3 * p] = 1.0;
        }
        let lum = ntsc_luminance(&RgbImage::new(2, 2, px).unwrap());
        for &v in lum.pixels() {
            assert_abs_diff_eq!(v, 0.30, epsilon = 1e-15);
        }
    }

    #[test]
    fn ntsc_mixed_channel_example() {
        let rgb = RgbImage::new(1, 1, vec![0.2, 0.4, 0.6]).unwrap();
        let lum = ntsc_luminance(&rgb);
        assert_abs_diff_eq!(lum.at(0, 0), 0.362, epsilon = 1e-15);
    }

    #[test]
    fn ntsc_is_linear() {
        let a = RgbImage::new(1, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let b = RgbImage::new(1, 2, vec![0.6, 0.5, 0.4, 0.3, 0.2, 0.1]).unwrap();
        let (s, t) = (0.7, 0.25);
        let mixed: Vec<f64> = (0..6).map(|i| s * a.pixels[i] + t * b.pixels[i]).collect();
        let lum_mixed = ntsc_luminance(&RgbImage::new(1, 2, mixed).unwrap());
        let la = ntsc_luminance(&a);
        let lb = ntsc_luminance(&b);
        for i in 0..2 {
            let want = s * la.pixels()[i] + t * lb.pixels()[i];
            assert_abs_diff_eq!(lum_mixed.pixels()[i], want, epsilon = 1e-14);
        }
    }

    #[test]
    fn crop_identity_window() {
        let img = ramp(3, 4);
        let out = crop(&img, 0, 0, 3, 4).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn crop_bottom_right_block() {
        let img = ramp(3, 3);
        let out = crop(&img, 1, 1, 2, 2).unwrap();
        assert_eq!(out.pixels(), &[4.0, 5.0, 7.0, 8.0]);
    }

    #[test]
    fn crop_out_of_bounds_errors() {
        let img = ramp(3, 3);
        assert!(crop(&img, 0, 0, 4, 3).is_err());
        assert!(crop(&img, 2, 2, 2, 2).is_err());
    }

    #[test]
    fn crop_composes() {
        let img = ramp(8, 8);
        let once = crop(&img, 1 + 2, 2 + 1, 3, 3).unwrap();
        let twice = crop(&crop(&img, 1, 2, 6, 5).unwrap(), 2, 1, 3, 3).unwrap();
        assert_eq!(once, twice);
    }
}
