//! Additive feature injection `h' = h + alpha * d`, where `d` is pink noise
//! projected onto the per-image patch PCA basis, plus the two comparison
//! perturbations: raw pink noise on features (no projection) and pink noise
//! blended into the input latent.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{FeatureGrid, FeatureMap};
use crate::patch_pca::{fit_pca, patchify, project_and_scale, unpatchify, PcaBasis};
use crate::rng::{derive_seed, tag};
use crate::spectral::normalized_pink;
use crate::toy::FeatureHook;

/// Every perturbation knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrideConfig {
    /// Injection strength.
    pub alpha: f64,
    /// Spectral exponent of the pink-noise filter.
    pub f_alpha: f64,
    pub patch_size: usize,
    pub stride: usize,
    pub k_components: usize,
    pub power_iterations: usize,
    /// Block indices at which injection happens.
    pub layer_set: BTreeSet<usize>,
    /// Timestep indices at which injection happens.
    pub step_gate: BTreeSet<usize>,
    pub seed: u64,
    /// For the unprojected ablation: rescale the noise to the Frobenius norm
    /// the projected perturbation would have had at the same site.
    pub energy_match: bool,
}

impl Default for StrideConfig {
    fn default() -> Self {
        Self::for_depth(6)
    }
}

impl StrideConfig {
    /// Defaults for a `depth`-block generator: the first third of the blocks
    /// (at least one), step 0 only, non-overlapping 2x2 patches.
    pub fn for_depth(depth: usize) -> Self {
        let early = (depth / 3).max(1);
        Self {
            alpha: 0.25,
            f_alpha: 1.0,
            patch_size: 2,
            stride: 2,
            k_components: 8,
            power_iterations: 2,
            layer_set: (0..early).collect(),
            step_gate: BTreeSet::from([0]),
            seed: 0,
            energy_match: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return invalid(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !self.f_alpha.is_finite() || self.f_alpha < 0.0 {
            return invalid(format!("f_alpha must be finite and >= 0, got {}", self.f_alpha));
        }
        for (name, v) in
            [("patch_size", self.patch_size), ("stride", self.stride), ("k_components", self.k_components)]
        {
            if v == 0 {
                return invalid(format!("{name} must be >= 1"));
            }
        }
        if self.is_active() && (self.layer_set.is_empty() || self.step_gate.is_empty()) {
            return invalid("layer_set and step_gate must be non-empty when alpha > 0");
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.alpha > 0.0
    }

    pub fn gates(&self, block: usize, step: usize) -> bool {
        self.layer_set.contains(&block) && self.step_gate.contains(&step)
    }
}

/// Intermediate products of the projected perturbation at one site.
#[derive(Debug, Clone)]
pub struct StrideDirection {
    /// Normalized pink noise on the token grid, one field per channel.
    pub noise: FeatureGrid,
    /// PCA basis fitted on the image's own patch features.
    pub basis: PcaBasis,
    /// The unpatchified, projected and reweighted noise `d`.
    pub direction: FeatureGrid,
}

fn site_noise(
    image: &FeatureGrid,
    cfg: &StrideConfig,
    sample_id: u64,
    block: usize,
    step: usize,
) -> Result<FeatureGrid> {
    let (h, w, d) = image.shape();
    let seed = derive_seed(cfg.seed, &[tag::STRIDE_NOISE, sample_id, block as u64, step as u64]);
    Ok(normalized_pink(d, h, w, cfg.f_alpha, seed)?.to_feature_grid())
}

/// Builds `d` for one image at one (block, step) site.
pub fn stride_direction(
    image: &FeatureGrid,
    cfg: &StrideConfig,
    sample_id: u64,
    block: usize,
    step: usize,
) -> Result<StrideDirection> {
    let noise = site_noise(image, cfg, sample_id, block, step)?;
    let features = patchify(image, cfg.patch_size, cfg.stride)?;
    let pca_seed = derive_seed(cfg.seed, &[tag::STRIDE_PCA, sample_id, block as u64, step as u64]);
    let basis = fit_pca(&features, cfg.k_components, cfg.power_iterations, pca_seed)?;
    let noise_patches = patchify(&noise, cfg.patch_size, cfg.stride)?;
    let direction = unpatchify(&project_and_scale(&noise_patches, &basis)?)?;
    Ok(StrideDirection { noise, basis, direction })
}

fn check_inputs(h: &FeatureMap, cfg: &StrideConfig) -> Result<()> {
    cfg.validate()?;
    if h.images().iter().any(|g| !g.is_finite()) {
        return invalid("features contain non-finite values");
    }
    Ok(())
}

fn per_image<F>(h: &FeatureMap, f: F) -> Result<FeatureMap>
where
    F: Fn(&FeatureGrid, u64) -> Result<FeatureGrid> + Sync,
{
    let images = h
        .images()
        .par_iter()
        .zip(h.sample_ids().par_iter())
        .map(|(img, &id)| f(img, id))
        .collect::<Result<Vec<_>>>()?;
    Ok(h.replace_images(images))
}

/// PCA-directed pink-noise injection. Sites outside the gates, and
/// `alpha == 0`, return the input unchanged.
pub fn stride_perturb(h: &FeatureMap, cfg: &StrideConfig) -> Result<FeatureMap> {
    check_inputs(h, cfg)?;
    let (block, step) = (h.block_index, h.timestep_index);
    if !cfg.is_active() || !cfg.gates(block, step) {
        return Ok(h.clone());
    }
    per_image(h, |img, id| {
        let d = stride_direction(img, cfg, id, block, step)?;
        img.add_scaled(&d.direction, cfg.alpha)
    })
}

/// Same noise as [`stride_perturb`], added without the PCA projection.
pub fn no_pca_perturb(h: &FeatureMap, cfg: &StrideConfig) -> Result<FeatureMap> {
    check_inputs(h, cfg)?;
    let (block, step) = (h.block_index, h.timestep_index);
    if !cfg.is_active() || !cfg.gates(block, step) {
        return Ok(h.clone());
    }
    per_image(h, |img, id| {
        if !cfg.energy_match {
            let noise = site_noise(img, cfg, id, block, step)?;
            return img.add_scaled(&noise, cfg.alpha);
        }
        let projected = stride_direction(img, cfg, id, block, step)?;
        let noise_norm = projected.noise.frobenius_norm();
        let scale = if noise_norm == 0.0 { 0.0 } else { projected.direction.frobenius_norm() / noise_norm };
        img.add_scaled(&projected.noise, cfg.alpha * scale)
    })
}

/// `(1 - alpha) z + alpha z_pink` for one latent grid.
pub fn blend_latent(z: &FeatureGrid, alpha: f64, f_alpha: f64, seed: u64) -> Result<FeatureGrid> {
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("blend alpha must lie in [0, 1], got {alpha}"));
    }
    if alpha == 0.0 {
        return Ok(z.clone());
    }
    let (h, w, d) = z.shape();
    let pink = normalized_pink(d, h, w, f_alpha, seed)?.to_feature_grid();
    if alpha == 1.0 {
        return Ok(pink);
    }
    let data = z.data().iter().zip(pink.data()).map(|(a, p)| (1.0 - alpha) * a + alpha * p).collect();
    FeatureGrid::new(h, w, d, data)
}

/// Blends a normalized pink field into each latent of the batch. Image `b`
/// uses the stream `derive_seed(seed, [INPUT_NOISE, sample_id_b])`.
pub fn input_noise_blend(z: &FeatureMap, alpha: f64, f_alpha: f64, seed: u64) -> Result<FeatureMap> {
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("blend alpha must lie in [0, 1], got {alpha}"));
    }
    per_image(z, |img, id| blend_latent(img, alpha, f_alpha, derive_seed(seed, &[tag::INPUT_NOISE, id])))
}

/// Frobenius norm of `after - before`.
pub fn perturbation_energy(before: &FeatureMap, after: &FeatureMap) -> Result<f64> {
    if before.shape() != after.shape() {
        return invalid(format!("feature maps differ in shape: {:?} vs {:?}", before.shape(), after.shape()));
    }
    let sum: f64 = before
        .images()
        .iter()
        .zip(after.images())
        .flat_map(|(a, b)| a.data().iter().zip(b.data()))
        .map(|(x, y)| (y - x) * (y - x))
        .sum();
    Ok(sum.sqrt())
}

/// Forward hook applying [`stride_perturb`].
#[derive(Debug, Clone)]
pub struct StrideHook(pub StrideConfig);

impl FeatureHook for StrideHook {
    fn apply(&self, features: FeatureMap) -> Result<FeatureMap> {
        stride_perturb(&features, &self.0)
    }
}

/// Forward hook applying [`no_pca_perturb`].
#[derive(Debug, Clone)]
pub struct NoPcaHook(pub StrideConfig);

impl FeatureHook for NoPcaHook {
    fn apply(&self, features: FeatureMap) -> Result<FeatureMap> {
        no_pca_perturb(&features, &self.0)
    }
}
