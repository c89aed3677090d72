//! Matrix-free linear operators of the twin-image forward model: blur B,
//! decimation D, integer shift S, their exact adjoints, and the stacked
//! twin operator H = [DB; DBS] mapping one HR image to two LR images.
//!
//! Blur is 2-D correlation with replicate boundary extension; decimation
//! keeps the top-left sample of each block; the shift moves content down
//! by `rows` and left by `cols` with replicate boundary. Adjoints
//! accumulate the clamped-boundary contributions exactly, so every
//! forward/adjoint pair satisfies <A u, w> = <u, A^T w> to rounding.

use crate::error::{Error, Result};
use crate::image::Image;

/// Normalized odd-sized convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::InvalidKernel(format!("size must be odd, got {size}")));
        }
        if weights.len() != size * size {
            return Err(Error::InvalidKernel(format!(
                "weight count {} does not match {size}x{size}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidKernel("non-finite weight".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidKernel(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self { size, weights })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.size + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Isotropic Gaussian taps exp(-((i-c)^2+(j-c)^2)/(2 variance)), normalized.
pub fn gaussian_kernel(size: usize, variance: f64) -> Result<Kernel> {
    if size == 0 || size % 2 == 0 {
        return Err(Error::InvalidKernel(format!("size must be odd, got {size}")));
    }
    if !(variance > 0.0) {
        return Err(Error::InvalidKernel(format!("variance must be positive, got {variance}")));
    }
    let center = (size as f64 - 1.0) / 2.0;
    let mut weights = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let di = i as f64 - center;
            let dj = j as f64 - center;
            weights.push((-(di * di + dj * dj) / (2.0 * variance)).exp());
        }
    }
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    Kernel::new(size, weights)
}

/// Blur kernel, decimation ratio, and shift convention on a fixed HR
/// geometry; defines B, D, S and the stacked H.
#[derive(Debug, Clone)]
pub struct DegradationModel {
    pub kernel: Kernel,
    pub factor: usize,
    pub shift_rows: i64,
    pub shift_cols: i64,
    pub hr_height: usize,
    pub hr_width: usize,
}

impl DegradationModel {
    pub fn new(
        kernel: Kernel,
        factor: usize,
        shift_rows: i64,
        shift_cols: i64,
        hr_height: usize,
        hr_width: usize,
    ) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidParameter("decimation factor must be positive".into()));
        }
        if hr_height == 0 || hr_width == 0 || hr_height % factor != 0 || hr_width % factor != 0 {
            return Err(Error::InvalidDimensions(format!(
                "hr dimensions {hr_height}x{hr_width} not divisible by factor {factor}"
            )));
        }
        Ok(Self { kernel, factor, shift_rows, shift_cols, hr_height, hr_width })
    }

    /// The paper's geometry: factor 2, one-HR-pixel down-left twin shift.
    pub fn standard(kernel: Kernel, hr_height: usize, hr_width: usize) -> Result<Self> {
        Self::new(kernel, 2, 1, 1, hr_height, hr_width)
    }

    pub fn lr_height(&self) -> usize {
        self.hr_height / self.factor
    }

    pub fn lr_width(&self) -> usize {
        self.hr_width / self.factor
    }

    fn check_hr(&self, z: &Image) -> Result<()> {
        if z.height() != self.hr_height || z.width() != self.hr_width {
            return Err(Error::DimensionMismatch(format!(
                "image {}x{} does not match model HR {}x{}",
                z.height(),
                z.width(),
                self.hr_height,
                self.hr_width
            )));
        }
        Ok(())
    }
}

/// The stacked observation y = [y1; y2] of the twin pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedObservation {
    pub y1: Image,
    pub y2: Image,
}

impl StackedObservation {
    pub fn new(y1: Image, y2: Image) -> Result<Self> {
        if !y1.same_shape(&y2) {
            return Err(Error::DimensionMismatch(format!(
                "twin observations {}x{} vs {}x{}",
                y1.height(),
                y1.width(),
                y2.height(),
                y2.width()
            )));
        }
        Ok(Self { y1, y2 })
    }

    pub fn dot(&self, other: &StackedObservation) -> f64 {
        self.y1.dot(&other.y1) + self.y2.dot(&other.y2)
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sub(&self, other: &StackedObservation) -> StackedObservation {
        StackedObservation { y1: self.y1.sub(&other.y1), y2: self.y2.sub(&other.y2) }
    }
}

fn check_kernel_fits(img: &Image, kernel: &Kernel) -> Result<()> {
    if kernel.size() > img.height() || kernel.size() > img.width() {
        return Err(Error::InvalidKernel(format!(
            "kernel {0}x{0} larger than image {1}x{2}",
            kernel.size(),
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

/// 2-D correlation with replicate boundary, same-size output.
pub fn blur(img: &Image, kernel: &Kernel) -> Result<Image> {
    check_kernel_fits(img, kernel)?;
    let (h, w) = (img.height(), img.width());
    let k = kernel.size();
    let half = (k / 2) as i64;
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for i in 0..k {
                for j in 0..k {
                    let rr = r as i64 + i as i64 - half;
                    let cc = c as i64 + j as i64 - half;
                    acc += kernel.weight(i, j) * img.at_clamped(rr, cc);
                }
            }
            out[r * w + c] = acc;
        }
    }
    Ok(Image::from_raw(h, w, out))
}

/// Exact adjoint of `blur`: scatter each input sample through the clamped
/// correlation taps.
pub fn blur_adjoint(img: &Image, kernel: &Kernel) -> Result<Image> {
    check_kernel_fits(img, kernel)?;
    let (h, w) = (img.height(), img.width());
    let k = kernel.size();
    let half = (k / 2) as i64;
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let v = img.at(r, c);
            for i in 0..k {
                for j in 0..k {
                    let rr = (r as i64 + i as i64 - half).clamp(0, h as i64 - 1) as usize;
                    let cc = (c as i64 + j as i64 - half).clamp(0, w as i64 - 1) as usize;
                    out[rr * w + cc] += kernel.weight(i, j) * v;
                }
            }
        }
    }
    Ok(Image::from_raw(h, w, out))
}

/// Top-left decimation: out(r, c) = in(factor r, factor c).
pub fn decimate(img: &Image, factor: usize) -> Result<Image> {
    if factor == 0 {
        return Err(Error::InvalidParameter("decimation factor must be positive".into()));
    }
    if img.height() % factor != 0 || img.width() % factor != 0 {
        return Err(Error::InvalidDimensions(format!(
            "image {}x{} not divisible by factor {factor}",
            img.height(),
            img.width()
        )));
    }
    let (h, w) = (img.height() / factor, img.width() / factor);
    Ok(Image::from_fn(h, w, |r, c| img.at(factor * r, factor * c)))
}

/// Zero-insertion upsampling, the adjoint of top-left decimation.
pub fn decimate_adjoint(img: &Image, factor: usize, out_h: usize, out_w: usize) -> Result<Image> {
    if factor == 0 {
        return Err(Error::InvalidParameter("decimation factor must be positive".into()));
    }
    if out_h != factor * img.height() || out_w != factor * img.width() {
        return Err(Error::DimensionMismatch(format!(
            "adjoint output {out_h}x{out_w} does not equal factor x input {}x{}",
            img.height(),
            img.width()
        )));
    }
    let mut out = vec![0.0; out_h * out_w];
    for r in 0..img.height() {
        for c in 0..img.width() {
            out[factor * r * out_w + factor * c] = img.at(r, c);
        }
    }
    Ok(Image::from_raw(out_h, out_w, out))
}

fn check_shift(img: &Image, rows: i64, cols: i64) -> Result<()> {
    if rows.unsigned_abs() as usize >= img.height() || cols.unsigned_abs() as usize >= img.width() {
        return Err(Error::OutOfBounds(format!(
            "shift ({rows},{cols}) magnitude reaches image {}x{}",
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

/// Integer shift with replicate boundary: content moves down by `rows` and
/// left by `cols` for positive arguments,
/// out(r, c) = in(clamp(r - rows), clamp(c + cols)).
pub fn shift(img: &Image, rows: i64, cols: i64) -> Result<Image> {
    check_shift(img, rows, cols)?;
    Ok(Image::from_fn(img.height(), img.width(), |r, c| {
        img.at_clamped(r as i64 - rows, c as i64 + cols)
    }))
}

/// Exact adjoint of `shift`, accumulating clamped-boundary contributions.
pub fn shift_adjoint(img: &Image, rows: i64, cols: i64) -> Result<Image> {
    check_shift(img, rows, cols)?;
    let (h, w) = (img.height(), img.width());
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let rr = (r as i64 - rows).clamp(0, h as i64 - 1) as usize;
            let cc = (c as i64 + cols).clamp(0, w as i64 - 1) as usize;
            out[rr * w + cc] += img.at(r, c);
        }
    }
    Ok(Image::from_raw(h, w, out))
}

/// Forward twin operator: y1 = D B z, y2 = D B S z.
pub fn apply_h(model: &DegradationModel, z: &Image) -> Result<StackedObservation> {
    model.check_hr(z)?;
    let blurred = blur(z, &model.kernel)?;
    let y1 = decimate(&blurred, model.factor)?;
    let shifted = shift(z, model.shift_rows, model.shift_cols)?;
    let y2 = decimate(&blur(&shifted, &model.kernel)?, model.factor)?;
    StackedObservation::new(y1, y2)
}

/// Adjoint of the twin operator: H^T y = B^T D^T y1 + S^T B^T D^T y2.
pub fn apply_ht(model: &DegradationModel, obs: &StackedObservation) -> Result<Image> {
    let (m, n) = (model.lr_height(), model.lr_width());
    if obs.y1.height() != m || obs.y1.width() != n {
        return Err(Error::DimensionMismatch(format!(
            "observation {}x{} does not match model LR {m}x{n}",
            obs.y1.height(),
            obs.y1.width()
        )));
    }
    let up1 = decimate_adjoint(&obs.y1, model.factor, model.hr_height, model.hr_width)?;
    let part1 = blur_adjoint(&up1, &model.kernel)?;
    let up2 = decimate_adjoint(&obs.y2, model.factor, model.hr_height, model.hr_width)?;
    let part2 = shift_adjoint(&blur_adjoint(&up2, &model.kernel)?, model.shift_rows, model.shift_cols)?;
    Ok(part1.add(&part2))
}
