//! Simulated twin-pair generation.
//!
//! Two protocols: the ideal half-pixel protocol (blur with the 7x7
//! variance-0.65 Gaussian, 2x2 decimation, twin from a one-HR-pixel
//! down-left shift) which matches the solver's forward model bit for bit,
//! and the nonideal protocol that builds the HR truth by 5x block-mean
//! downsampling of an original scene and the LR pair by 10x, so an n-pixel
//! shift of the original becomes a 0.1 n LR-pixel twin offset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::degradation::{apply_h, blur, gaussian_kernel, shift, DegradationModel, Kernel};
use crate::error::{Error, Result};
use crate::image::{crop, Image};

pub const IDEAL_KERNEL_SIZE: usize = 7;
pub const IDEAL_KERNEL_VARIANCE: f64 = 0.65;

/// Simulation protocol selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Half-pixel twin via the solver's exact forward model.
    Ideal,
    /// Original-resolution shift of n pixels -> 0.1 n LR-pixel offset.
    Nonideal { shift_n: u32 },
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Ideal => "ideal",
            Protocol::Nonideal { .. } => "nonideal",
        }
    }
}

/// A twin observation with its ground-truth shift metadata and, for
/// simulated data, the reference HR image.
#[derive(Debug, Clone)]
pub struct TwinPair {
    pub y1: Image,
    pub y2: Image,
    /// True twin offsets in LR pixels (leftward, downward).
    pub true_shift_x: f64,
    pub true_shift_y: f64,
    pub ground_truth: Option<Image>,
    pub model: DegradationModel,
}

impl TwinPair {
    pub fn new(
        y1: Image,
        y2: Image,
        true_shift_x: f64,
        true_shift_y: f64,
        ground_truth: Option<Image>,
        model: DegradationModel,
    ) -> Result<Self> {
        if !y1.same_shape(&y2) {
            return Err(Error::DimensionMismatch(format!(
                "twin pair {}x{} vs {}x{}",
                y1.height(),
                y1.width(),
                y2.height(),
                y2.width()
            )));
        }
        if !(0.0..=1.0).contains(&true_shift_x) || !(0.0..=1.0).contains(&true_shift_y) {
            return Err(Error::InvalidParameter(format!(
                "true shifts ({true_shift_x}, {true_shift_y}) outside [0, 1]"
            )));
        }
        if let Some(truth) = &ground_truth {
            if truth.height() != model.factor * y1.height()
                || truth.width() != model.factor * y1.width()
            {
                return Err(Error::DimensionMismatch(format!(
                    "ground truth {}x{} is not factor x LR {}x{}",
                    truth.height(),
                    truth.width(),
                    y1.height(),
                    y1.width()
                )));
            }
        }
        Ok(Self { y1, y2, true_shift_x, true_shift_y, ground_truth, model })
    }
}

/// Ideal half-pixel protocol: y1 = DBz, y2 = DBSz, true shifts (0.5, 0.5).
pub fn simulate_ideal(z: &Image, kernel: &Kernel) -> Result<TwinPair> {
    if z.height() % 2 != 0 || z.width() % 2 != 0 {
        return Err(Error::InvalidDimensions(format!(
            "ideal protocol needs even HR dimensions, got {}x{}",
            z.height(),
            z.width()
        )));
    }
    let model = DegradationModel::standard(kernel.clone(), z.height(), z.width())?;
    let obs = apply_h(&model, z)?;
    TwinPair::new(obs.y1, obs.y2, 0.5, 0.5, Some(z.clone()), model)
}

/// Block-mean downsampling by `factor`.
pub fn downsample_avg(img: &Image, factor: usize) -> Result<Image> {
    if factor == 0 {
        return Err(Error::InvalidParameter("downsampling factor must be positive".into()));
    }
    if img.height() % factor != 0 || img.width() % factor != 0 {
        return Err(Error::InvalidDimensions(format!(
            "image {}x{} not divisible by factor {factor}",
            img.height(),
            img.width()
        )));
    }
    let (h, w) = (img.height() / factor, img.width() / factor);
    let norm = 1.0 / (factor * factor) as f64;
    Ok(Image::from_fn(h, w, |r, c| {
        let mut acc = 0.0;
        for i in 0..factor {
            for j in 0..factor {
                acc += img.at(factor * r + i, factor * c + j);
            }
        }
        acc * norm
    }))
}

/// Nonideal protocol: truth z by 5x block mean of the original; the pair
/// by blurring the original (7x7, variance 0.65) and 10x block mean, the
/// twin from the original shifted diagonally by `shift_n` pixels.
pub fn simulate_nonideal(original: &Image, shift_n: u32) -> Result<TwinPair> {
    if shift_n > 10 {
        return Err(Error::InvalidParameter(format!("shift_n must be in 0..=10, got {shift_n}")));
    }
    if original.height() % 10 != 0 || original.width() % 10 != 0 {
        return Err(Error::InvalidDimensions(format!(
            "nonideal protocol needs dimensions divisible by 10, got {}x{}",
            original.height(),
            original.width()
        )));
    }
    let kernel = gaussian_kernel(IDEAL_KERNEL_SIZE, IDEAL_KERNEL_VARIANCE)?;
    let truth = downsample_avg(original, 5)?;
    let y1 = downsample_avg(&blur(original, &kernel)?, 10)?;
    let shifted = shift(original, shift_n as i64, shift_n as i64)?;
    let y2 = downsample_avg(&blur(&shifted, &kernel)?, 10)?;
    // The solver's working model stays the standard twin geometry.
    let model = DegradationModel::standard(kernel, truth.height(), truth.width())?;
    let offset = 0.1 * shift_n as f64;
    TwinPair::new(y1, y2, offset, offset, Some(truth), model)
}

/// One manifest entry of a generated dataset.
#[derive(Debug, Clone)]
pub struct DatasetEntry {
    pub id: String,
    pub source: String,
    pub protocol: Protocol,
    pub pair: TwinPair,
}

/// Crop nonoverlapping `tile x tile` windows from each source and apply
/// the protocol. Deterministic: tiles are enumerated row-major per source
/// in input order; `seed` is recorded by the caller for provenance.
pub fn make_dataset(
    sources: &[(String, Image)],
    protocol: Protocol,
    tile: usize,
    _seed: u64,
) -> Result<Vec<DatasetEntry>> {
    if tile == 0 {
        return Err(Error::InvalidParameter("tile size must be positive".into()));
    }
    match protocol {
        Protocol::Ideal if tile % 2 != 0 => {
            return Err(Error::InvalidParameter("ideal protocol needs an even tile size".into()))
        }
        Protocol::Nonideal { shift_n } => {
            if tile % 10 != 0 {
                return Err(Error::InvalidParameter(
                    "nonideal protocol needs a tile size divisible by 10".into(),
                ));
            }
            if shift_n > 10 {
                return Err(Error::InvalidParameter(format!(
                    "shift_n must be in 0..=10, got {shift_n}"
                )));
            }
        }
        _ => {}
    }

    let mut entries = Vec::new();
    let mut index = 0usize;
    for (source, img) in sources {
        let tiles_r = img.height() / tile;
        let tiles_c = img.width() / tile;
        for tr in 0..tiles_r {
            for tc in 0..tiles_c {
                let window = crop(img, tr * tile, tc * tile, tile, tile)?;
                let pair = match protocol {
                    Protocol::Ideal => {
                        let kernel = gaussian_kernel(IDEAL_KERNEL_SIZE, IDEAL_KERNEL_VARIANCE)?;
                        simulate_ideal(&window, &kernel)?
                    }
                    Protocol::Nonideal { shift_n } => simulate_nonideal(&window, shift_n)?,
                };
                entries.push(DatasetEntry {
                    id: format!("t{index:04}"),
                    source: source.clone(),
                    protocol,
                    pair,
                });
                index += 1;
            }
        }
    }
    Ok(entries)
}

/// Deterministic synthetic test scene: smooth background gradients, a
/// lattice of repeated motifs (patch self-similarity), a few contrast
/// edges, and mild texture, normalized into [0.05, 0.95].
pub fn synthetic_scene(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = vec![0.0f64; height * width];
    let (hf, wf) = (height as f64, width as f64);

    // Smooth background: three low-frequency cosine sheets.
    for _ in 0..3 {
        let amp = 0.2 + 0.3 * rng.random::<f64>();
        let fr = 0.5 + 1.5 * rng.random::<f64>();
        let fc = 0.5 + 1.5 * rng.random::<f64>();
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        for r in 0..height {
            for c in 0..width {
                let arg = std::f64::consts::TAU
                    * (fr * r as f64 / hf + fc * c as f64 / wf)
                    + phase;
                pixels[r * width + c] += amp * arg.cos();
            }
        }
    }

    // Repeated motif on a jittered lattice: a bright blob with a dark rim.
    let motif = (height.min(width) / 10).clamp(4, 12);
    let spacing = motif * 2;
    let mr = motif as f64 / 2.0;
    for gr in 0..height / spacing {
        for gc in 0..width / spacing {
            let jr = rng.random_range(0..=motif / 2);
            let jc = rng.random_range(0..=motif / 2);
            let top = gr * spacing + jr;
            let left = gc * spacing + jc;
            if top + motif >= height || left + motif >= width {
                continue;
            }
            for r in 0..motif {
                for c in 0..motif {
                    let dr = r as f64 - mr + 0.5;
                    let dc = c as f64 - mr + 0.5;
                    let dist = (dr * dr + dc * dc).sqrt() / mr;
                    let value = if dist < 0.6 { 0.8 } else if dist < 1.0 { -0.5 } else { 0.0 };
                    pixels[(top + r) * width + (left + c)] += value;
                }
            }
        }
    }

    // A few straight high-contrast edges.
    for _ in 0..4 {
        let vertical = rng.random::<bool>();
        let pos = rng.random_range(0..if vertical { width } else { height });
        let contrast = 0.4 * (rng.random::<f64>() - 0.5);
        for r in 0..height {
            for c in 0..width {
                let side = if vertical { c >= pos } else { r >= pos };
                if side {
                    pixels[r * width + c] += contrast;
                }
            }
        }
    }

    // Mild oriented texture.
    let (tf_r, tf_c) = (rng.random_range(6..14) as f64, rng.random_range(6..14) as f64);
    for r in 0..height {
        for c in 0..width {
            let arg = std::f64::consts::TAU * (tf_r * r as f64 / hf + tf_c * c as f64 / wf);
            pixels[r * width + c] += 0.08 * arg.sin();
        }
    }

    // Normalize into [0.05, 0.95].
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &pixels {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1e-12);
    for v in &mut pixels {
        *v = 0.05 + 0.9 * (*v - lo) / span;
    }
    Image::from_raw(height, width, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn ideal_constant_scene_gives_constant_pair() {
        let kernel = gaussian_kernel(IDEAL_KERNEL_SIZE, IDEAL_KERNEL_VARIANCE).unwrap();
        let z = Image::constant(16, 16, 0.42);
        let pair = simulate_ideal(&z, &kernel).unwrap();
        for &v in pair.y1.pixels().iter().chain(pair.y2.pixels()) {
            assert_abs_diff_eq!(v, 0.42, epsilon = 1e-13);
        }
        assert_eq!(pair.true_shift_x, 0.5);
        assert_eq!(pair.true_shift_y, 0.5);
    }

    #[test]
    fn ideal_matches_forward_model_exactly() {
        let kernel = gaussian_kernel(IDEAL_KERNEL_SIZE, IDEAL_KERNEL_VARIANCE).unwrap();
        let z = synthetic_scene(16, 16, 7);
        let pair = simulate_ideal(&z, &kernel).unwrap();
        let obs = apply_h(&pair.model, &z).unwrap();
        assert_eq!(pair.y1, obs.y1);
        assert_eq!(pair.y2, obs.y2);
    }

    #[test]
    fn ideal_rejects_odd_dimensions() {
        let kernel = gaussian_kernel(IDEAL_KERNEL_SIZE, IDEAL_KERNEL_VARIANCE).unwrap();
        assert!(simulate_ideal(&Image::zeros(15, 16), &kernel).is_err());
    }

    #[test]
    fn downsample_avg_examples() {
        let img = Image::new(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(downsample_avg(&img, 1).unwrap(), img);
        let out = downsample_avg(&img, 2).unwrap();
        assert_eq!(out.pixels(), &[0.5]);
        assert!(downsample_avg(&Image::zeros(3, 4), 2).is_err());
    }

    #[test]
    fn downsample_avg_preserves_mean() {
        let img = synthetic_scene(40, 40, 3);
        let down = downsample_avg(&img, 5).unwrap();
        assert_relative_eq!(down.mean(), img.mean(), max_relative = 1e-14);
    }

    #[test]
    fn nonideal_zero_shift_gives_identical_pair() {
        let original = synthetic_scene(80, 80, 9);
        let pair = simulate_nonideal(&original, 0).unwrap();
        assert_eq!(pair.y1, pair.y2);
        assert_eq!(pair.true_shift_x, 0.0);
    }

    #[test]
    fn nonideal_ideal_case_is_half_pixel() {
        let original = synthetic_scene(80, 80, 10);
        let pair = simulate_nonideal(&original, 5).unwrap();
        assert_eq!(pair.true_shift_x, 0.5);
        assert_eq!(pair.true_shift_y, 0.5);
        let truth = pair.ground_truth.as_ref().unwrap();
        assert_eq!((truth.height(), truth.width()), (16, 16));
        assert_eq!((pair.y1.height(), pair.y1.width()), (8, 8));
    }

    #[test]
    fn nonideal_rejects_bad_arguments() {
        let original = synthetic_scene(80, 80, 11);
        assert!(simulate_nonideal(&original, 11).is_err());
        assert!(simulate_nonideal(&Image::zeros(75, 80), 5).is_err());
    }

    #[test]
    fn dataset_is_deterministic_with_expected_tile_count() {
        let source = synthetic_scene(64, 96, 21);
        let sources = vec![("scene".to_string(), source)];
        let a = make_dataset(&sources, Protocol::Ideal, 32, 5).unwrap();
        let b = make_dataset(&sources, Protocol::Ideal, 32, 5).unwrap();
        assert_eq!(a.len(), (64 / 32) * (96 / 32));
        assert_eq!(a.len(), b.len());
        for (ea, eb) in a.iter().zip(&b) {
            assert_eq!(ea.id, eb.id);
            assert_eq!(ea.pair.y1, eb.pair.y1);
            assert_eq!(ea.pair.y2, eb.pair.y2);
        }
    }

    #[test]
    fn dataset_entries_satisfy_twin_invariants() {
        let source = synthetic_scene(40, 40, 22);
        let sources = vec![("scene".to_string(), source)];
        let entries = make_dataset(&sources, Protocol::Nonideal { shift_n: 3 }, 20, 5).unwrap();
        assert_eq!(entries.len(), 4);
        for e in &entries {
            assert!(e.pair.y1.same_shape(&e.pair.y2));
            let truth = e.pair.ground_truth.as_ref().unwrap();
            assert_eq!(truth.height(), 2 * e.pair.y1.height());
            assert_abs_diff_eq!(e.pair.true_shift_x, 0.3);
        }
    }

    #[test]
    fn synthetic_scene_is_seeded_and_in_range() {
        let a = synthetic_scene(32, 32, 123);
        let b = synthetic_scene(32, 32, 123);
        let c = synthetic_scene(32, 32, 124);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for &v in a.pixels() {
            assert!((0.05..=0.95).contains(&v));
        }
    }
}
