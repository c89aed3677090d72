//! Full-reference quality metrics and subpixel twin registration.
//!
//! PSNR uses MAX = 1 on normalized images; SSIM is the standard 11x11
//! Gaussian-window (sigma 1.5) formulation with C1 = 0.01^2, C2 = 0.03^2.
//! Shift estimation runs phase correlation to integer precision and then
//! refines the correlation peak on a local grid sampled at 1/upsample
//! pixel via a separable upsampled DFT.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::Image;

/// PSNR and SSIM of one reconstruction against its reference.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub id: String,
    /// +infinity for identical images.
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Estimated twin displacement in LR pixels.
///
/// (dx, dy) is the (leftward, downward) content motion of `b` relative to
/// `a`, matching the shift operator's sign convention.
#[derive(Debug, Clone, Copy)]
pub struct ShiftEstimate {
    pub dx: f64,
    pub dy: f64,
    /// Ratio of the main correlation peak to the strongest secondary peak.
    pub confidence: f64,
}

fn check_same_shape(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::DimensionMismatch(format!(
            "metric inputs {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB, 10 log10(1 / MSE).
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_same_shape(a, b)?;
    let mse = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn ssim_window() -> Vec<f64> {
    let half = (SSIM_WINDOW as f64 - 1.0) / 2.0;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            let di = i as f64 - half;
            let dj = j as f64 - half;
            w.push((-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Mean local SSIM over all fully-interior 11x11 windows.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_same_shape(a, b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::InvalidDimensions(format!(
            "ssim needs min dimension >= {SSIM_WINDOW}, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let window = ssim_window();
    let positions_r = a.height() - SSIM_WINDOW + 1;
    let positions_c = a.width() - SSIM_WINDOW + 1;
    let mut total = 0.0;
    for top in 0..positions_r {
        for left in 0..positions_c {
            let (mut mx, mut my, mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let w = window[i * SSIM_WINDOW + j];
                    let x = a.at(top + i, left + j);
                    let y = b.at(top + i, left + j);
                    mx += w * x;
                    my += w * y;
                    mxx += w * x * x;
                    myy += w * y * y;
                    mxy += w * x * y;
                }
            }
            let vx = mxx - mx * mx;
            let vy = myy - my * my;
            let cov = mxy - mx * my;
            let numerator = (2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let denominator = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2);
            total += numerator / denominator;
        }
    }
    Ok(total / (positions_r * positions_c) as f64)
}

/// 2-D FFT of an image into a row-major complex spectrum.
fn fft2d(img: &Image) -> Vec<Complex<f64>> {
    let (h, w) = (img.height(), img.width());
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);

    let mut data: Vec<Complex<f64>> =
        img.pixels().iter().map(|&v| Complex::new(v, 0.0)).collect();
    for r in 0..h {
        row_fft.process(&mut data[r * w..(r + 1) * w]);
    }
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            column[r] = data[r * w + c];
        }
        col_fft.process(&mut column);
        for r in 0..h {
            data[r * w + c] = column[r];
        }
    }
    data
}

/// Signed frequency index of bin k for transform length n.
#[inline]
fn signed_frequency(k: usize, n: usize) -> f64 {
    if k <= (n - 1) / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Evaluate the correlation surface (inverse DFT of the cross-power
/// spectrum) at fractional lags around a center point, by separable
/// matrix-multiply DFT. Returns the argmax lag.
fn refine_peak(
    spectrum: &[Complex<f64>],
    h: usize,
    w: usize,
    center_y: f64,
    center_x: f64,
    upsample: usize,
) -> (f64, f64) {
    let steps = upsample as i64; // cover +-1 px in 1/upsample steps
    let points = (2 * steps + 1) as usize;
    let lag = |center: f64, idx: usize| center + (idx as i64 - steps) as f64 / upsample as f64;

    // Stage 1: contract the row dimension for every sampled y-lag.
    // partial[(py, kx)] = sum_ky spectrum[ky, kx] e^{i 2 pi fy uy / h}
    let mut partial = vec![Complex::new(0.0, 0.0); points * w];
    for py in 0..points {
        let uy = lag(center_y, py);
        for ky in 0..h {
            let fy = signed_frequency(ky, h);
            let phase = std::f64::consts::TAU * fy * uy / h as f64;
            let rot = Complex::from_polar(1.0, phase);
            let row = &spectrum[ky * w..(ky + 1) * w];
            let dst = &mut partial[py * w..(py + 1) * w];
            for kx in 0..w {
                dst[kx] += row[kx] * rot;
            }
        }
    }

    // Stage 2: contract the column dimension and track the maximum.
    let mut best = (center_y, center_x);
    let mut best_value = f64::NEG_INFINITY;
    for py in 0..points {
        let row = &partial[py * w..(py + 1) * w];
        for px in 0..points {
            let ux = lag(center_x, px);
            let mut acc = Complex::new(0.0, 0.0);
            for (kx, &value) in row.iter().enumerate() {
                let fx = signed_frequency(kx, w);
                let phase = std::f64::consts::TAU * fx * ux / w as f64;
                acc += value * Complex::from_polar(1.0, phase);
            }
            if acc.re > best_value {
                best_value = acc.re;
                best = (lag(center_y, py), ux);
            }
        }
    }
    best
}

/// Subpixel displacement of `b` relative to `a` via phase correlation
/// with localized upsampled refinement to 1/upsample pixel.
pub fn estimate_shift(a: &Image, b: &Image, upsample: usize) -> Result<ShiftEstimate> {
    check_same_shape(a, b)?;
    if upsample < 10 {
        return Err(Error::InvalidParameter(format!(
            "upsample must be >= 10, got {upsample}"
        )));
    }
    let variance = |img: &Image| {
        let mean = img.mean();
        img.pixels().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / img.len() as f64
    };
    if variance(a) < 1e-16 || variance(b) < 1e-16 {
        return Err(Error::DegenerateImage("constant image has no correlation peak".into()));
    }

    let (h, w) = (a.height(), a.width());
    let fa = fft2d(a);
    let fb = fft2d(b);

    // Normalized cross-power spectrum; peak of its inverse DFT sits at the
    // index-space motion s with b(r, c) = a(r - sy, c - sx).
    let mut spectrum = Vec::with_capacity(h * w);
    for (va, vb) in fa.iter().zip(&fb) {
        let cross = va.conj() * vb;
        let magnitude = cross.norm();
        spectrum.push(if magnitude > 1e-300 { cross / magnitude } else { Complex::new(0.0, 0.0) });
    }

    // Integer-precision peak from the inverse FFT of the spectrum.
    let mut planner = FftPlanner::new();
    let row_ifft = planner.plan_fft_inverse(w);
    let col_ifft = planner.plan_fft_inverse(h);
    let mut surface = spectrum.clone();
    for r in 0..h {
        row_ifft.process(&mut surface[r * w..(r + 1) * w]);
    }
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            column[r] = surface[r * w + c];
        }
        col_ifft.process(&mut column);
        for r in 0..h {
            surface[r * w + c] = column[r];
        }
    }

    let mut peak_idx = 0;
    let mut peak_value = f64::NEG_INFINITY;
    for (idx, v) in surface.iter().enumerate() {
        if v.re > peak_value {
            peak_value = v.re;
            peak_idx = idx;
        }
    }
    let peak_r = peak_idx / w;
    let peak_c = peak_idx % w;

    // Strongest secondary peak outside a 2-px neighborhood (cyclic).
    let mut second = 0.0f64;
    for r in 0..h {
        for c in 0..w {
            let dr = (r as i64 - peak_r as i64).rem_euclid(h as i64).min(
                (peak_r as i64 - r as i64).rem_euclid(h as i64),
            );
            let dc = (c as i64 - peak_c as i64).rem_euclid(w as i64).min(
                (peak_c as i64 - c as i64).rem_euclid(w as i64),
            );
            if dr.max(dc) > 2 {
                second = second.max(surface[r * w + c].re);
            }
        }
    }
    let confidence = if second > 0.0 { peak_value / second } else { f64::INFINITY };

    // Wrap to signed lags, then refine around the integer estimate.
    let sy0 = if peak_r > h / 2 { peak_r as f64 - h as f64 } else { peak_r as f64 };
    let sx0 = if peak_c > w / 2 { peak_c as f64 - w as f64 } else { peak_c as f64 };
    let (sy, sx) = refine_peak(&spectrum, h, w, sy0, sx0, upsample);

    if sy.abs() > h as f64 / 2.0 || sx.abs() > w as f64 / 2.0 {
        return Err(Error::DegenerateImage(format!(
            "correlation peak at implausible lag ({sy}, {sx})"
        )));
    }

    // Index-space motion -> (leftward, downward) convention: dx = -sx.
    Ok(ShiftEstimate { dx: -sx, dy: sy, confidence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::synthetic_scene;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn psnr_identical_is_infinite() {
        let a = synthetic_scene(16, 16, 1);
        assert!(psnr(&a, &a).unwrap().is_infinite());
    }

    #[test]
    fn psnr_uniform_error_example() {
        let a = Image::constant(8, 8, 0.5);
        let b = Image::constant(8, 8, 0.6);
        assert_abs_diff_eq!(psnr(&a, &b).unwrap(), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn psnr_matches_bruteforce_mse() {
        let a = synthetic_scene(12, 12, 2);
        let b = synthetic_scene(12, 12, 3);
        let mse: f64 = a
            .pixels()
            .iter()
            .zip(b.pixels())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / 144.0;
        assert_relative_eq!(psnr(&a, &b).unwrap(), -10.0 * mse.log10(), max_relative = 1e-12);
    }

    #[test]
    fn psnr_symmetric_and_monotone() {
        let a = synthetic_scene(12, 12, 4);
        let mut previous = f64::INFINITY;
        for scale in [0.01, 0.02, 0.05, 0.1] {
            let b = a.map(|v| v + scale);
            assert_abs_diff_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap(), epsilon = 1e-12);
            let value = psnr(&a, &b).unwrap();
            assert!(value < previous);
            previous = value;
        }
    }

    #[test]
    fn ssim_identical_is_one() {
        let a = synthetic_scene(16, 16, 5);
        assert_abs_diff_eq!(ssim(&a, &a).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ssim_inverted_image_scores_low() {
        let a = synthetic_scene(24, 24, 6);
        let b = a.map(|v| 1.0 - v);
        assert!(ssim(&a, &b).unwrap() < 0.5);
    }

    #[test]
    fn ssim_decreases_with_noise() {
        let a = synthetic_scene(24, 24, 7);
        let noise = synthetic_scene(24, 24, 8).map(|v| v - 0.5);
        let mut previous = 1.0;
        for scale in [0.02, 0.05, 0.1, 0.2] {
            let b = a.axpy(scale, &noise);
            let value = ssim(&a, &b).unwrap();
            assert!(value < previous, "ssim {value} not below {previous}");
            previous = value;
        }
    }

    #[test]
    fn ssim_symmetric_and_rejects_small() {
        let a = synthetic_scene(16, 16, 9);
        let b = synthetic_scene(16, 16, 10);
        assert_relative_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap(), max_relative = 1e-12);
        assert!(ssim(&Image::zeros(8, 8), &Image::zeros(8, 8)).is_err());
    }

    #[test]
    fn shift_zero_lag() {
        let a = synthetic_scene(32, 32, 11);
        let est = estimate_shift(&a, &a, 100).unwrap();
        assert_abs_diff_eq!(est.dx, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(est.dy, 0.0, epsilon = 1e-9);
        assert!(est.confidence > 2.0);
    }

    #[test]
    fn shift_integer_translate_circular() {
        // Circular translate: content moves down 1 row (dy = +1), no dx.
        let a = synthetic_scene(32, 32, 12);
        let b = Image::from_fn(32, 32, |r, c| a.at((r + 31) % 32, c));
        let est = estimate_shift(&a, &b, 100).unwrap();
        assert_abs_diff_eq!(est.dy, 1.0, epsilon = 0.01);
        assert_abs_diff_eq!(est.dx, 0.0, epsilon = 0.01);

        // Leftward translate: column c shows a(c + 1), dx = +1.
        let left = Image::from_fn(32, 32, |r, c| a.at(r, (c + 1) % 32));
        let est = estimate_shift(&a, &left, 100).unwrap();
        assert_abs_diff_eq!(est.dx, 1.0, epsilon = 0.01);
        assert_abs_diff_eq!(est.dy, 0.0, epsilon = 0.01);
    }

    #[test]
    fn shift_antisymmetry() {
        let a = synthetic_scene(32, 32, 13);
        let b = Image::from_fn(32, 32, |r, c| a.at((r + 30) % 32, (c + 2) % 32));
        let fwd = estimate_shift(&a, &b, 100).unwrap();
        let rev = estimate_shift(&b, &a, 100).unwrap();
        assert_abs_diff_eq!(fwd.dx, -rev.dx, epsilon = 2.0 / 100.0);
        assert_abs_diff_eq!(fwd.dy, -rev.dy, epsilon = 2.0 / 100.0);
    }

    #[test]
    fn shift_rejects_degenerate_and_bad_upsample() {
        let flat = Image::constant(16, 16, 0.5);
        assert!(matches!(
            estimate_shift(&flat, &flat, 100),
            Err(Error::DegenerateImage(_))
        ));
        let a = synthetic_scene(16, 16, 14);
        assert!(estimate_shift(&a, &a, 5).is_err());
    }
}
