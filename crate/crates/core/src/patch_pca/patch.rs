use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::grid::FeatureGrid;

/// Geometry needed to map patch rows back onto the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchLayout {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub patch: usize,
    pub stride: usize,
}

impl PatchLayout {
    pub fn new(height: usize, width: usize, channels: usize, patch: usize, stride: usize) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return invalid(format!("grid dimensions must be >= 1, got {height}x{width}x{channels}"));
        }
        if patch == 0 || stride == 0 {
            return invalid(format!("patch size and stride must be >= 1, got P={patch}, S={stride}"));
        }
        if patch > height || patch > width {
            return invalid(format!("patch size {patch} exceeds grid {height}x{width}"));
        }
        Ok(Self { height, width, channels, patch, stride })
    }

    /// Patch origins along the vertical axis: `floor((H - P) / S) + 1`.
    pub fn rows(&self) -> usize {
        (self.height - self.patch) / self.stride + 1
    }

    pub fn cols(&self) -> usize {
        (self.width - self.patch) / self.stride + 1
    }

    pub fn num_patches(&self) -> usize {
        self.rows() * self.cols()
    }

    /// `P^2 * D`.
    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * self.channels
    }

    /// Grid coordinates of entry `k` of patch row `m`. Rows enumerate patch
    /// origins row-major; within a patch, entries run over `(dy, dx, c)` with
    /// channels fastest.
    #[inline]
    fn locate(&self, m: usize, k: usize) -> (usize, usize, usize) {
        let (py, px) = (m / self.cols(), m % self.cols());
        let c = k % self.channels;
        let cell = k / self.channels;
        let (dy, dx) = (cell / self.patch, cell % self.patch);
        (py * self.stride + dy, px * self.stride + dx, c)
    }
}

/// `M x (P^2 D)` matrix of flattened patches together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    data: DMatrix<f64>,
    layout: PatchLayout,
}

impl PatchMatrix {
    pub fn new(data: DMatrix<f64>, layout: PatchLayout) -> Result<Self> {
        if data.nrows() != layout.num_patches() || data.ncols() != layout.patch_dim() {
            return invalid(format!(
                "patch matrix is {}x{} but layout {:?} implies {}x{}",
                data.nrows(),
                data.ncols(),
                layout,
                layout.num_patches(),
                layout.patch_dim()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("patch matrix contains non-finite values");
        }
        Ok(Self { data, layout })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn layout(&self) -> PatchLayout {
        self.layout
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }
}

/// Extracts every full `P x P` patch at stride `S`. Rows or columns of the
/// grid past the last full patch are not represented.
pub fn patchify(grid: &FeatureGrid, patch: usize, stride: usize) -> Result<PatchMatrix> {
    let (h, w, d) = grid.shape();
    let layout = PatchLayout::new(h, w, d, patch, stride)?;
    let (m, n) = (layout.num_patches(), layout.patch_dim());
    let data = DMatrix::from_fn(m, n, |r, k| {
        let (y, x, c) = layout.locate(r, k);
        grid.get(y, x, c)
    });
    PatchMatrix::new(data, layout)
}

/// Scatters patch rows back to the grid, averaging cells covered by several
/// patches. Cells covered by no patch are zero. A cell covered exactly once
/// receives its patch value unchanged.
pub fn unpatchify(patches: &PatchMatrix) -> Result<FeatureGrid> {
    let layout = patches.layout;
    let mut grid = FeatureGrid::zeros(layout.height, layout.width, layout.channels)?;
    let mut counts = vec![0u32; grid.data().len()];
    let data = patches.matrix();
    for r in 0..data.nrows() {
        for k in 0..data.ncols() {
            let (y, x, c) = layout.locate(r, k);
            let idx = grid.index(y, x, c);
            let v = data[(r, k)];
            let cell = &mut grid.data_mut()[idx];
            if counts[idx] == 0 {
                *cell = v;
            } else {
                *cell += v;
            }
            counts[idx] += 1;
        }
    }
    for (v, &n) in grid.data_mut().iter_mut().zip(&counts) {
        if n > 1 {
            *v /= n as f64;
        }
    }
    Ok(grid)
}
