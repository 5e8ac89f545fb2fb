//! Seeded white noise and its 2D FFT radial shaping into spatially coherent
//! ("pink") noise.
//!
//! Frequencies are in cycles per sample: bin `k` of an `n`-point axis maps to
//! `k / n` for `k <= n / 2` and `(k - n) / n` otherwise. The shaping filter is
//! `1 / (1 + |f|)^f_alpha`, which has unit gain at DC.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::grid::FeatureGrid;
use crate::rng::{derive_seed, standard_normals};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    White,
    Pink(f64),
}

/// `channels` independent 2D fields over a `height x width` grid, stored
/// channel-major: index `(c * height + y) * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
    kind: NoiseKind,
}

impl NoiseField {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
        kind: NoiseKind,
    ) -> Result<Self> {
        check_dims(&[channels, height, width])?;
        if data.len() != channels * height * width {
            return invalid(format!(
                "noise field {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("noise field contains non-finite values");
        }
        Ok(Self { channels, height, width, data, kind })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// Writes the field as a `channels x height x width` float32 NPY array.
    pub fn write_npy(&self, path: &std::path::Path) -> Result<()> {
        crate::npy::write_npy_file(path, &[self.channels, self.height, self.width], &self.data)
    }

    /// Channel `c` becomes feature channel `c` of every token.
    pub fn to_feature_grid(&self) -> FeatureGrid {
        let (h, w) = (self.height, self.width);
        FeatureGrid::from_fn(h, w, self.channels, |y, x, c| self.data[(c * h + y) * w + x])
            .expect("noise field dimensions are validated at construction")
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.contains(&0) {
        return invalid(format!("all dimensions must be >= 1, got {dims:?}"));
    }
    Ok(())
}

/// I.i.d. standard normals. Channel `c` is drawn from its own ChaCha8 stream
/// keyed by `derive_seed(seed, [c])`, so the result does not depend on the
/// order or parallelism of channel generation.
pub fn sample_white(channels: usize, height: usize, width: usize, seed: u64) -> Result<NoiseField> {
    check_dims(&[channels, height, width])?;
    let n = height * width;
    let data: Vec<f64> = (0..channels)
        .into_par_iter()
        .flat_map_iter(|c| standard_normals(derive_seed(seed, &[c as u64]), n))
        .collect();
    NoiseField::new(channels, height, width, data, NoiseKind::White)
}

/// Signed FFT frequency of bin `k` on an `n`-point axis, in cycles per sample.
pub fn fft_frequency(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

/// Radial frequency `|f|` of every bin of a `height x width` 2D FFT.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialFrequencyGrid {
    height: usize,
    width: usize,
    magnitudes: Vec<f64>,
}

impl RadialFrequencyGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.magnitudes[i * self.width + j]
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

pub fn radial_frequency_grid(height: usize, width: usize) -> Result<RadialFrequencyGrid> {
    check_dims(&[height, width])?;
    let mut magnitudes = Vec::with_capacity(height * width);
    for i in 0..height {
        let fy = fft_frequency(i, height);
        for j in 0..width {
            let fx = fft_frequency(j, width);
            magnitudes.push((fy * fy + fx * fx).sqrt());
        }
    }
    Ok(RadialFrequencyGrid { height, width, magnitudes })
}

/// In-place 2D FFT of a row-major `height x width` buffer. The inverse
/// transform is scaled by `1 / (height * width)`.
pub fn fft2_in_place(buf: &mut [Complex<f64>], height: usize, width: usize, inverse: bool) {
    assert_eq!(buf.len(), height * width);
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    row_fft.process(buf);
    let mut column = vec![Complex::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = buf[y * width + x];
        }
        col_fft.process(&mut column);
        for y in 0..height {
            buf[y * width + x] = column[y];
        }
    }
    if inverse {
        let scale = 1.0 / (height * width) as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }
}

pub fn fft2(real: &[f64], height: usize, width: usize) -> Vec<Complex<f64>> {
    let mut buf: Vec<_> = real.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2_in_place(&mut buf, height, width, false);
    buf
}

/// Real part of the inverse 2D FFT.
pub fn ifft2_real(spectrum: &[Complex<f64>], height: usize, width: usize) -> Vec<f64> {
    let mut buf = spectrum.to_vec();
    fft2_in_place(&mut buf, height, width, true);
    buf.into_iter().map(|v| v.re).collect()
}

/// Multiplies every channel's spectrum by `1 / (1 + |f|)^f_alpha`.
pub fn pink_filter(white: &NoiseField, f_alpha: f64) -> Result<NoiseField> {
    if !f_alpha.is_finite() || f_alpha < 0.0 {
        return invalid(format!("f_alpha must be finite and >= 0, got {f_alpha}"));
    }
    if white.kind != NoiseKind::White {
        return invalid("pink_filter expects a white noise field");
    }
    let (h, w) = (white.height, white.width);
    let gain: Vec<f64> =
        radial_frequency_grid(h, w)?.magnitudes.iter().map(|f| (1.0 + f).powf(-f_alpha)).collect();
    let data: Vec<f64> = (0..white.channels)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut spectrum = fft2(white.channel(c), h, w);
            spectrum.iter_mut().zip(&gain).for_each(|(s, g)| *s *= g);
            ifft2_real(&spectrum, h, w)
        })
        .collect();
    NoiseField::new(white.channels, h, w, data, NoiseKind::Pink(f_alpha))
}

/// Rescales each channel to zero mean and unit population variance.
/// Channels whose values are all equal become all-zeros.
pub fn normalize_field(field: &NoiseField) -> NoiseField {
    let n = field.height * field.width;
    let mut data = Vec::with_capacity(field.data.len());
    for c in 0..field.channels {
        let ch = field.channel(c);
        let constant = ch.iter().all(|&v| v == ch[0]);
        if constant {
            data.extend(std::iter::repeat_n(0.0, n));
            continue;
        }
        let mean = ch.iter().sum::<f64>() / n as f64;
        let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let inv_std = 1.0 / var.sqrt();
        data.extend(ch.iter().map(|v| (v - mean) * inv_std));
    }
    NoiseField { data, ..field.clone() }
}

/// White noise shaped by [`pink_filter`] and standardized by [`normalize_field`].
pub fn normalized_pink(
    channels: usize,
    height: usize,
    width: usize,
    f_alpha: f64,
    seed: u64,
) -> Result<NoiseField> {
    let white = sample_white(channels, height, width, seed)?;
    Ok(normalize_field(&pink_filter(&white, f_alpha)?))
}
