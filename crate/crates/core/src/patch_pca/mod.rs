//! Spatial patchification of feature grids, truncated PCA of the patch
//! features by randomized SVD, and the singular-value-weighted projection of
//! noise onto the fitted basis.

mod patch;
mod pca;

pub use patch::{patchify, unpatchify, PatchLayout, PatchMatrix};
pub use pca::{fit_pca, fit_pca_matrix, project_and_scale, project_and_scale_matrix, PcaBasis};
