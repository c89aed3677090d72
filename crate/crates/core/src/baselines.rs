//! Reference reconstructors: bicubic 2x single-image upscaling and
//! iterative back projection through the twin forward model.
//!
//! IBP is plain gradient descent on the stacked least-squares misfit,
//! z <- z + step H^T (y - H z), started from the bicubic upscale of y1;
//! with the adjoint as back-projection kernel it is the transparent
//! lambda = 0 reference point for the ADMM solver.

use crate::degradation::{apply_h, apply_ht, DegradationModel, StackedObservation};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::simgen::TwinPair;

/// Cubic convolution kernel with a = -0.5.
fn cubic_weight(t: f64) -> f64 {
    let a = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * (t * t * t - 5.0 * t * t + 8.0 * t - 4.0)
    } else {
        0.0
    }
}

/// Separable 1-D cubic interpolation along one axis at coordinate `pos`
/// (in source samples), replicate boundary.
#[inline]
fn cubic_taps(pos: f64) -> (i64, [f64; 4]) {
    let base = pos.floor();
    let frac = pos - base;
    let weights = [
        cubic_weight(frac + 1.0),
        cubic_weight(frac),
        cubic_weight(1.0 - frac),
        cubic_weight(2.0 - frac),
    ];
    (base as i64 - 1, weights)
}

/// 2x upscaling by separable cubic convolution (a = -0.5, replicate
/// boundary); output pixel (2r, 2c) interpolates at LR coordinate (r, c).
pub fn bicubic_x2(y: &Image) -> Image {
    let (m, n) = (y.height(), y.width());
    let (big_m, big_n) = (2 * m, 2 * n);

    // Rows first: interpolate vertically onto the HR row lattice.
    let mut rows = vec![0.0; big_m * n];
    for r in 0..big_m {
        let (start, weights) = cubic_taps(r as f64 / 2.0);
        for c in 0..n {
            let mut acc = 0.0;
            for (tap, w) in weights.iter().enumerate() {
                acc += w * y.at_clamped(start + tap as i64, c as i64);
            }
            rows[r * n + c] = acc;
        }
    }

    // Then columns.
    let mut out = vec![0.0; big_m * big_n];
    for c in 0..big_n {
        let (start, weights) = cubic_taps(c as f64 / 2.0);
        for r in 0..big_m {
            let mut acc = 0.0;
            for (tap, w) in weights.iter().enumerate() {
                let cc = (start + tap as i64).clamp(0, n as i64 - 1) as usize;
                acc += w * rows[r * n + cc];
            }
            out[r * big_n + c] = acc;
        }
    }
    Image::from_raw(big_m, big_n, out)
}

/// IBP output with its residual trace and divergence flag.
#[derive(Debug, Clone)]
pub struct IbpResult {
    pub image: Image,
    /// Stacked data residual |y - H z| after each accepted iteration,
    /// starting with the bicubic initialization.
    pub residual_history: Vec<f64>,
    pub diverged: bool,
}

/// Iterative back projection using both twins.
pub fn ibp_reconstruct(
    pair: &TwinPair,
    model: &DegradationModel,
    iters: usize,
    step: f64,
) -> Result<IbpResult> {
    if pair.y1.height() != model.lr_height() || pair.y1.width() != model.lr_width() {
        return Err(Error::DimensionMismatch(format!(
            "pair {}x{} does not match model LR {}x{}",
            pair.y1.height(),
            pair.y1.width(),
            model.lr_height(),
            model.lr_width()
        )));
    }
    let y = StackedObservation::new(pair.y1.clone(), pair.y2.clone())?;

    let mut z = bicubic_x2(&pair.y1);
    let residual_of = |z: &Image| -> Result<(StackedObservation, f64)> {
        let r = y.sub(&apply_h(model, z)?);
        let norm = r.norm_l2();
        Ok((r, norm))
    };

    let (mut residual, mut norm) = residual_of(&z)?;
    let mut history = vec![norm];
    let mut best = z.clone();
    let mut best_norm = norm;
    let mut growth_streak = 0usize;
    let mut diverged = false;

    for _ in 0..iters {
        z = z.add(&apply_ht(model, &residual)?.scaled(step));
        let (r_next, n_next) = residual_of(&z)?;
        residual = r_next;
        history.push(n_next);
        if n_next < best_norm {
            best = z.clone();
            best_norm = n_next;
        }
        if n_next > norm {
            growth_streak += 1;
            if growth_streak >= 3 {
                diverged = true;
                break;
            }
        } else {
            growth_streak = 0;
        }
        norm = n_next;
    }

    let image = if diverged { best } else { z };
    Ok(IbpResult { image, residual_history: history, diverged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::gaussian_kernel;
    use crate::simgen::{simulate_ideal, synthetic_scene};
    use approx::assert_abs_diff_eq;

    #[test]
    fn bicubic_reproduces_constants() {
        let out = bicubic_x2(&Image::constant(6, 7, 0.42));
        assert_eq!((out.height(), out.width()), (12, 14));
        for &v in out.pixels() {
            assert_abs_diff_eq!(v, 0.42, epsilon = 1e-12);
        }
    }

    #[test]
    fn bicubic_even_lattice_matches_input() {
        let y = synthetic_scene(8, 8, 40);
        let out = bicubic_x2(&y);
        for r in 0..8 {
            for c in 0..8 {
                assert_abs_diff_eq!(out.at(2 * r, 2 * c), y.at(r, c), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn bicubic_reproduces_interior_linear_ramp() {
        let y = Image::from_fn(8, 8, |r, _| r as f64);
        let out = bicubic_x2(&y);
        // Interior HR rows follow the half-step ramp exactly.
        for r in 3..13 {
            for c in 0..16 {
                assert_abs_diff_eq!(out.at(r, c), r as f64 / 2.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn bicubic_impulse_has_cubic_footprint() {
        let mut pixels = vec![0.0; 64];
        pixels[4 * 8 + 4] = 1.0;
        let y = Image::new(8, 8, pixels).unwrap();
        let out = bicubic_x2(&y);
        // Odd HR rows/cols sample the kernel at half-integer offsets
        // {-1.5, -0.5, 0.5, 1.5}.
        let w_half = [cubic_weight(1.5), cubic_weight(0.5)];
        assert_abs_diff_eq!(out.at(8, 8), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.at(9, 8), w_half[1], epsilon = 1e-12);
        assert_abs_diff_eq!(out.at(7, 8), w_half[1], epsilon = 1e-12);
        assert_abs_diff_eq!(out.at(11, 8), w_half[0], epsilon = 1e-12);
        assert_abs_diff_eq!(out.at(9, 9), w_half[1] * w_half[1], epsilon = 1e-12);
        assert_abs_diff_eq!(cubic_weight(0.5), 0.5625, epsilon = 1e-15);
        assert_abs_diff_eq!(cubic_weight(1.5), -0.0625, epsilon = 1e-15);
    }

    #[test]
    fn ibp_zero_residual_initialization_is_fixed_point() {
        // Manufacture a pair whose observations equal H of the bicubic
        // upscale, so the initial residual is exactly zero.
        let kernel = gaussian_kernel(7, 0.65).unwrap();
        let y1 = synthetic_scene(16, 16, 41);
        let z0 = bicubic_x2(&y1);
        let model = DegradationModel::standard(kernel, 32, 32).unwrap();
        let obs = apply_h(&model, &z0).unwrap();
        let pair = TwinPair::new(obs.y1, obs.y2, 0.5, 0.5, None, model.clone()).unwrap();
        let result = ibp_reconstruct(&pair, &model, 10, 0.5).unwrap();
        assert!(!result.diverged);
        for (a, b) in result.image.pixels().iter().zip(z0.pixels()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn ibp_step_zero_returns_bicubic() {
        let kernel = gaussian_kernel(7, 0.65).unwrap();
        let z = synthetic_scene(32, 32, 42);
        let pair = simulate_ideal(&z, &kernel).unwrap();
        let result = ibp_reconstruct(&pair, &pair.model, 5, 0.0).unwrap();
        assert_eq!(result.image, bicubic_x2(&pair.y1));
    }

    #[test]
    fn ibp_residual_is_nonincreasing_with_default_step() {
        let kernel = gaussian_kernel(7, 0.65).unwrap();
        for seed in [43, 44, 45] {
            let z = synthetic_scene(32, 32, seed);
            let pair = simulate_ideal(&z, &kernel).unwrap();
            let result = ibp_reconstruct(&pair, &pair.model, 50, 0.5).unwrap();
            assert!(!result.diverged);
            for pair in result.residual_history.windows(2) {
                assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
            }
            assert!(result.image.pixels().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn ibp_divergence_detector_stops_and_returns_best() {
        let kernel = gaussian_kernel(7, 0.65).unwrap();
        let z = synthetic_scene(16, 16, 46);
        let pair = simulate_ideal(&z, &kernel).unwrap();
        // A hugely overshooting step makes the residual grow immediately.
        let result = ibp_reconstruct(&pair, &pair.model, 50, 50.0).unwrap();
        assert!(result.diverged);
        assert!(result.residual_history.len() < 51);
        let best = result.residual_history.iter().cloned().fold(f64::INFINITY, f64::min);
        let obs = StackedObservation::new(pair.y1.clone(), pair.y2.clone()).unwrap();
        let check = obs.sub(&apply_h(&pair.model, &result.image).unwrap()).norm_l2();
        assert_abs_diff_eq!(check, best, epsilon = 1e-9);
        assert!(result.image.pixels().iter().all(|v| v.is_finite()));
    }
}
