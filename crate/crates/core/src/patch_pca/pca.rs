use nalgebra::{DMatrix, DVector};

use super::patch::PatchMatrix;
use crate::error::{invalid, Result};
use crate::rng::standard_normals;

/// Top principal directions of a patch matrix.
///
/// `directions` is `(P^2 D) x k` with orthonormal columns, `singular_values`
/// are the matching singular values of the centered matrix in non-increasing
/// order, and `mean` is the column mean used for centering. The left singular
/// vectors are not kept.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub directions: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub mean: DVector<f64>,
    pub requested: usize,
}

impl PcaBasis {
    pub fn k_effective(&self) -> usize {
        self.directions.ncols()
    }

    pub fn dim(&self) -> usize {
        self.directions.nrows()
    }

    /// Mean of the retained singular values.
    pub fn mean_singular_value(&self) -> f64 {
        if self.singular_values.is_empty() {
            return 0.0;
        }
        self.singular_values.iter().sum::<f64>() / self.singular_values.len() as f64
    }

    /// Fraction of the centered variance carried by the retained directions.
    pub fn explained(&self, total_variance: f64) -> f64 {
        self.singular_values.iter().map(|s| s * s).sum::<f64>() / total_variance
    }
}

fn orthonormal_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().qr().q()
}

/// Randomized truncated PCA of the patch features.
pub fn fit_pca(patches: &PatchMatrix, k: usize, power_iterations: usize, seed: u64) -> Result<PcaBasis> {
    fit_pca_matrix(patches.matrix(), k, power_iterations, seed)
}

/// Randomized truncated PCA of the rows of `x`.
///
/// The columns are centered, then a rank-`q` range finder with
/// `q = min(k, rows, cols)` and no oversampling is run: a Gaussian test
/// matrix is pushed through `A`, refined by `power_iterations` rounds of
/// `A^T`/`A` products with QR re-orthonormalization after every product,
/// and the small projected matrix `Q^T A` is decomposed exactly. Each
/// returned direction is signed so its largest-magnitude entry is positive.
pub fn fit_pca_matrix(x: &DMatrix<f64>, k: usize, power_iterations: usize, seed: u64) -> Result<PcaBasis> {
    let (m, n) = x.shape();
    if m < 2 {
        return invalid(format!("PCA needs at least 2 rows, got {m}"));
    }
    if k == 0 {
        return invalid("PCA needs k >= 1");
    }
    if x.iter().any(|v| !v.is_finite()) {
        return invalid("PCA input contains non-finite values");
    }
    let q = k.min(m).min(n);
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }

    if centered.iter().all(|&v| v == 0.0) {
        return Ok(PcaBasis {
            directions: DMatrix::identity(n, q),
            singular_values: vec![0.0; q],
            mean,
            requested: k,
        });
    }

    let omega = DMatrix::from_vec(n, q, standard_normals(seed, n * q));
    let mut range = orthonormal_columns(&(&centered * omega));
    let centered_t = centered.transpose();
    for _ in 0..power_iterations {
        let row_space = orthonormal_columns(&(&centered_t * &range));
        range = orthonormal_columns(&(&centered * row_space));
    }
    let projected = range.transpose() * &centered;
    let svd = projected.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors were requested");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    order.truncate(q);

    let mut directions = DMatrix::zeros(n, q);
    let mut singular_values = Vec::with_capacity(q);
    for (col, &src) in order.iter().enumerate() {
        let mut v = v_t.row(src).transpose();
        let pivot = v.iter().copied().fold(0.0_f64, |best, e| if e.abs() > best.abs() { e } else { best });
        if pivot < 0.0 {
            v.neg_mut();
        }
        directions.set_column(col, &v);
        singular_values.push(svd.singular_values[src].max(0.0));
    }
    Ok(PcaBasis { directions, singular_values, mean, requested: k })
}

/// Projects noise patches onto the basis and reweights each coordinate by
/// `s_i / mean(s)`: `d = ((N V) * diag(s / mean(s))) V^T`. The noise is not
/// centered. An all-zero spectrum yields all-zero output.
pub fn project_and_scale(noise: &PatchMatrix, basis: &PcaBasis) -> Result<PatchMatrix> {
    let out = project_and_scale_matrix(noise.matrix(), basis)?;
    PatchMatrix::new(out, noise.layout())
}

pub fn project_and_scale_matrix(noise: &DMatrix<f64>, basis: &PcaBasis) -> Result<DMatrix<f64>> {
    if noise.ncols() != basis.dim() {
        return invalid(format!(
            "noise has {} columns but the basis lives in dimension {}",
            noise.ncols(),
            basis.dim()
        ));
    }
    let s_bar = basis.mean_singular_value();
    if s_bar == 0.0 {
        return Ok(DMatrix::zeros(noise.nrows(), noise.ncols()));
    }
    let mut coords = noise * &basis.directions;
    for (mut col, s) in coords.column_iter_mut().zip(&basis.singular_values) {
        col *= s / s_bar;
    }
    Ok(coords * basis.directions.transpose())
}
