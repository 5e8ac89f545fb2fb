//! Structured feature perturbation for few-step generators.
//!
//! Pink noise is shaped in 2D Fourier space, patchified alongside the
//! features it perturbs, projected onto the principal directions of each
//! image's own patch features, and added back to the features after selected
//! blocks. The crate also ships a deterministic toy generator to host the
//! injection, diversity metrics, and an experiment runner that writes CSV and
//! SVG reports.

pub mod error;
pub mod experiment;
pub mod grid;
pub mod inject;
pub mod metrics;
pub mod npy;
pub mod patch_pca;
pub mod rng;
pub mod spectral;
pub mod toy;

pub use error::{Result, StrideError};
pub use grid::{FeatureGrid, FeatureMap};
pub use inject::{
    input_noise_blend, no_pca_perturb, perturbation_energy, stride_perturb, NoPcaHook, StrideConfig,
    StrideHook,
};
pub use metrics::{in_batch_similarity, kid, pairwise_matrix, vendi_score, EmbeddingSet, Kernel};
pub use patch_pca::{fit_pca, patchify, project_and_scale, unpatchify, PatchMatrix, PcaBasis};
pub use spectral::{normalize_field, pink_filter, radial_frequency_grid, sample_white, NoiseField};
pub use toy::{FeatureHook, GeneratorSpec, ToyGenerator};
