//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use stride_core::rng::standard_normals;
use stride_core::spectral::{fft2, fft_frequency, pink_filter, sample_white};
use stride_core::{FeatureGrid, FeatureMap};

pub fn random_grid(h: usize, w: usize, d: usize, seed: u64) -> FeatureGrid {
    FeatureGrid::new(h, w, d, standard_normals(seed, h * w * d)).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    DMatrix::from_vec(rows, cols, standard_normals(seed, rows * cols))
}

pub fn grid_bits(g: &FeatureGrid) -> Vec<u64> {
    g.data().iter().map(|v| v.to_bits()).collect()
}

pub fn map_bits(m: &FeatureMap) -> Vec<u64> {
    m.images().iter().flat_map(grid_bits).collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Periodogram of one `n x n` field, `|FFT|^2`.
fn periodogram(field: &[f64], n: usize) -> Vec<f64> {
    fft2(field, n, n).iter().map(|c| c.norm_sqr()).collect()
}

/// Least-squares slope of radially averaged log-power against `log(1 + |f|)`
/// for pink noise on an `n x n` grid, with power averaged over `seeds`.
/// Bins are 64 equal-width shells over `0 < |f| <= 0.5`.
pub fn radial_log_power_slope(f_alpha: f64, n: usize, seeds: u64) -> f64 {
    const BINS: usize = 64;
    let mut power = vec![0.0; n * n];
    for seed in 0..seeds {
        let white = sample_white(1, n, n, 1000 + seed).unwrap();
        let pink = pink_filter(&white, f_alpha).unwrap();
        for (acc, p) in power.iter_mut().zip(periodogram(pink.channel(0), n)) {
            *acc += p;
        }
    }
    let mut sum_p = vec![0.0; BINS];
    let mut sum_x = vec![0.0; BINS];
    let mut count = vec![0usize; BINS];
    for i in 0..n {
        for j in 0..n {
            let (fy, fx) = (fft_frequency(i, n), fft_frequency(j, n));
            let f = (fy * fy + fx * fx).sqrt();
            if f == 0.0 || f > 0.5 {
                continue;
            }
            let b = ((f / 0.5) * BINS as f64).ceil() as usize - 1;
            sum_p[b] += power[i * n + j];
            sum_x[b] += (1.0 + f).ln();
            count[b] += 1;
        }
    }
    let pts: Vec<(f64, f64)> = (0..BINS)
        .filter(|&b| count[b] > 0)
        .map(|b| (sum_x[b] / count[b] as f64, (sum_p[b] / count[b] as f64).ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Mean power with `|f| > 0.25` divided by mean power with `0 < |f| < 0.1`.
pub fn band_ratio(field: &[f64], h: usize, w: usize) -> f64 {
    let spec = fft2(field, h, w);
    let (mut hi, mut nhi, mut lo, mut nlo) = (0.0, 0, 0.0, 0);
    for i in 0..h {
        for j in 0..w {
            let (fy, fx) = (fft_frequency(i, h), fft_frequency(j, w));
            let f = (fy * fy + fx * fx).sqrt();
            let p = spec[i * w + j].norm_sqr();
            if f > 0.25 {
                hi += p;
                nhi += 1;
            } else if f > 0.0 && f < 0.1 {
                lo += p;
                nlo += 1;
            }
        }
    }
    (hi / nhi as f64) / (lo / nlo as f64)
}

pub fn center_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    c
}

/// Top-`k` right singular vectors and values of `x` from a full dense SVD.
pub fn exact_top_k(x: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>) {
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let cols: Vec<DVector<f64>> = order[..k].iter().map(|&i| v_t.row(i).transpose()).collect();
    (DMatrix::from_columns(&cols), order[..k].iter().map(|&i| svd.singular_values[i]).collect())
}

/// Largest principal angle between the column spans of two orthonormal
/// bases, from `sin(theta_max) = ||(I - A A^T) B||_2`.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let residual = b - a * (a.transpose() * b);
    let s = residual.singular_values().max();
    s.min(1.0).asin()
}

/// `rows x cols` matrix with zero column means and exactly the given
/// singular values.
pub fn matrix_with_spectrum(rows: usize, cols: usize, sigma: &[f64], seed: u64) -> DMatrix<f64> {
    let r = sigma.len();
    let mut u = random_matrix(rows, r, seed);
    let ones = DVector::from_element(rows, 1.0 / (rows as f64).sqrt());
    for mut col in u.column_iter_mut() {
        let proj = ones.dot(&col);
        col.axpy(-proj, &ones, 1.0);
    }
    let u = u.qr().q();
    let v = random_matrix(cols, r, seed + 1).qr().q();
    u * DMatrix::from_diagonal(&DVector::from_column_slice(sigma)) * v.transpose()
}

/// Unbiased MMD^2 with the cubic polynomial kernel, evaluated entry by entry.
pub fn mmd2_double_loop(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let d = x[0].len() as f64;
    let k = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
        (dot / d + 1.0).powi(3)
    };
    let (m, n) = (x.len(), y.len());
    let mut xx = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                xx += k(&x[i], &x[j]);
            }
        }
    }
    let mut yy = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                yy += k(&y[i], &y[j]);
            }
        }
    }
    let mut xy = 0.0;
    for a in x {
        for b in y {
            xy += k(a, b);
        }
    }
    xx / (m * (m - 1)) as f64 + yy / (n * (n - 1)) as f64 - 2.0 * xy / (m * n) as f64
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
