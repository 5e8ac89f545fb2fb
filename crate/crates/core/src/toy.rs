//! A deterministic, untrained stand-in for a distilled few-step generator.
//!
//! Each block maps token features `h` (`N x D`, one row per token) to
//!
//! ```text
//! h' = b + kappa * phi(A h W),    phi(x) = tanh(g x) / g
//! ```
//!
//! * `A` mixes tokens: `(1 - mu) I + mu * G`, with `G` a periodic Gaussian
//!   blur whose weights sum to one, so `||A||_2 <= 1`.
//! * `W = Q_l diag(s) Q_{l+1}^T` with `s_i = (i + 1)^-1.5`; block `l` reads
//!   along the orthonormal frame `Q_l` and writes along `Q_{l+1}` (frames are
//!   cyclic, so step `t + 1` reads what step `t` wrote). `||W||_2 = s_1 = 1`.
//! * `b` is a fixed, spatially smooth bias living in the two leading output
//!   directions; it is the common mode every sample is pulled toward.
//! * `phi` has slope in `(0, 1]`, so each block is `kappa`-Lipschitz in the
//!   Frobenius norm with `kappa = CONTRACTION`.
//!
//! The readout takes the first `out_dim` directions of the final frame and is
//! 1-Lipschitz, so the whole map is `kappa^(depth * steps)`-Lipschitz.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{FeatureGrid, FeatureMap};
use crate::inject::perturbation_energy;
use crate::npy::write_npy_file;
use crate::rng::{derive_seed, rng_from, standard_normals};
use crate::spectral::normalized_pink;

/// Per-block Lipschitz factor.
pub const CONTRACTION: f64 = 0.9;
/// Exponent of the channel singular-value profile `s_i = (i + 1)^-SPECTRUM_DECAY`.
pub const SPECTRUM_DECAY: f64 = 1.5;
/// Number of output directions carrying the shared bias.
const BIAS_RANK: usize = 2;
/// Per-direction bias amplitudes.
const BIAS_SCALE: [f64; BIAS_RANK] = [0.25, 0.15];

/// Channel singular values for a `dim`-wide block.
pub fn channel_spectrum(dim: usize) -> Vec<f64> {
    (0..dim).map(|i| ((i + 1) as f64).powf(-SPECTRUM_DECAY)).collect()
}

/// Shape and seed describing a generator in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub depth: usize,
    pub steps: usize,
    pub height: usize,
    pub width: usize,
    pub feat_dim: usize,
    pub out_dim: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self { seed: 2024, depth: 6, steps: 1, height: 16, width: 16, feat_dim: 32, out_dim: 3 }
    }
}

/// Where a hook fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HookSite {
    pub block_index: usize,
    pub timestep_index: usize,
}

/// Forward hook called after every block with that block's output.
pub trait FeatureHook: Sync {
    fn apply(&self, features: FeatureMap) -> Result<FeatureMap>;
}

impl<F> FeatureHook for F
where
    F: Fn(FeatureMap) -> Result<FeatureMap> + Sync,
{
    fn apply(&self, features: FeatureMap) -> Result<FeatureMap> {
        self(features)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub token_mix: DMatrix<f64>,
    pub channel: DMatrix<f64>,
    pub bias: DMatrix<f64>,
    pub gain: f64,
}

impl Block {
    fn forward(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let pre = &self.token_mix * h * &self.channel;
        let g = self.gain;
        let mut out = self.bias.clone();
        out.zip_apply(&pre, |o, p| *o += CONTRACTION * (g * p).tanh() / g);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyGenerator {
    spec: GeneratorSpec,
    blocks: Vec<Block>,
    readout: DMatrix<f64>,
}

/// Output of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    /// `height x width x out_dim`.
    pub image: FeatureGrid,
    /// Post-hook features at every site, ordered by step then block.
    pub trace: Vec<FeatureMap>,
    /// Root-sum-square over sites of the Frobenius norm of what the hook changed.
    pub injected_energy: f64,
}

fn random_orthogonal(dim: usize, seed: u64) -> DMatrix<f64> {
    DMatrix::from_vec(dim, dim, standard_normals(seed, dim * dim)).qr().q()
}

fn periodic_blur(height: usize, width: usize, sigma: f64) -> DMatrix<f64> {
    let wrap = |d: usize, n: usize| d.min(n - d) as f64;
    let weight = |dy: usize, dx: usize| {
        let (y, x) = (wrap(dy, height), wrap(dx, width));
        (-(y * y + x * x) / (2.0 * sigma * sigma)).exp()
    };
    let total: f64 =
        (0..height).flat_map(|dy| (0..width).map(move |dx| (dy, dx))).map(|(dy, dx)| weight(dy, dx)).sum();
    let n = height * width;
    DMatrix::from_fn(n, n, |i, j| {
        let (yi, xi) = (i / width, i % width);
        let (yj, xj) = (j / width, j % width);
        weight((yi + height - yj) % height, (xi + width - xj) % width) / total
    })
}

fn grid_to_matrix(g: &FeatureGrid) -> DMatrix<f64> {
    DMatrix::from_row_slice(g.tokens(), g.channels(), g.data())
}

fn matrix_to_grid(m: &DMatrix<f64>, height: usize, width: usize) -> FeatureGrid {
    let (n, d) = m.shape();
    let mut data = Vec::with_capacity(n * d);
    for r in 0..n {
        data.extend(m.row(r).iter());
    }
    FeatureGrid::new(height, width, d, data).expect("block output keeps the grid shape")
}

impl ToyGenerator {
    pub fn build(spec: GeneratorSpec) -> Result<Self> {
        let GeneratorSpec { seed, depth, steps, height, width, feat_dim, out_dim } = spec;
        if [depth, steps, height, width, feat_dim, out_dim].contains(&0) {
            return invalid(format!("generator counts must all be >= 1, got {spec:?}"));
        }
        if out_dim > feat_dim {
            return invalid(format!("out_dim {out_dim} exceeds feat_dim {feat_dim}"));
        }
        let frames: Vec<DMatrix<f64>> =
            (0..depth).map(|l| random_orthogonal(feat_dim, derive_seed(seed, &[1, l as u64]))).collect();
        let spectrum = DMatrix::from_diagonal(&channel_spectrum(feat_dim).into());
        let bias_rank = BIAS_RANK.min(feat_dim);
        let blocks = (0..depth)
            .map(|l| {
                let mut rng = rng_from(derive_seed(seed, &[2, l as u64]));
                let sigma = rng.random_range(0.6..1.2);
                let mix = rng.random_range(0.3..0.7);
                let gain = rng.random_range(0.5..1.5);
                let n = height * width;
                let token_mix =
                    DMatrix::identity(n, n) * (1.0 - mix) + periodic_blur(height, width, sigma) * mix;
                let (reads, writes) = (&frames[l], &frames[(l + 1) % depth]);
                let channel = reads * &spectrum * writes.transpose();
                let spatial =
                    normalized_pink(bias_rank, height, width, 2.0, derive_seed(seed, &[3, l as u64]))?;
                let mut bias = DMatrix::zeros(n, feat_dim);
                for (r, scale) in BIAS_SCALE.iter().enumerate().take(bias_rank) {
                    let field = DMatrix::from_column_slice(n, 1, spatial.channel(r));
                    bias += field * writes.column(r).transpose() * *scale;
                }
                Ok(Block { token_mix, channel, bias, gain })
            })
            .collect::<Result<Vec<_>>>()?;
        let readout = frames[0].columns(0, out_dim).into_owned();
        Ok(Self { spec, blocks, readout })
    }

    pub fn spec(&self) -> GeneratorSpec {
        self.spec
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn readout(&self) -> &DMatrix<f64> {
        &self.readout
    }

    /// Lipschitz bound of the full latent-to-image map.
    pub fn lipschitz_bound(&self) -> f64 {
        CONTRACTION.powi((self.spec.depth * self.spec.steps) as i32)
    }

    pub fn latent_shape(&self) -> (usize, usize, usize) {
        (self.spec.height, self.spec.width, self.spec.feat_dim)
    }

    /// A standard-normal latent drawn from `seed`.
    pub fn sample_latent(&self, seed: u64) -> FeatureGrid {
        let (h, w, d) = self.latent_shape();
        FeatureGrid::new(h, w, d, standard_normals(seed, h * w * d)).expect("latent shape is valid")
    }

    pub fn hook_sites(&self) -> impl Iterator<Item = HookSite> + '_ {
        (0..self.spec.steps).flat_map(move |t| {
            (0..self.spec.depth).map(move |l| HookSite { block_index: l, timestep_index: t })
        })
    }

    /// Forward pass with the hook keyed to sample id 0.
    pub fn generate(&self, latent: &FeatureGrid, hook: Option<&dyn FeatureHook>) -> Result<Generation> {
        self.generate_tagged(latent, 0, hook)
    }

    /// Forward pass; the hook sees feature maps carrying `sample_id`.
    pub fn generate_tagged(
        &self,
        latent: &FeatureGrid,
        sample_id: u64,
        hook: Option<&dyn FeatureHook>,
    ) -> Result<Generation> {
        if latent.shape() != self.latent_shape() {
            return invalid(format!(
                "latent shape {:?} does not match generator {:?}",
                latent.shape(),
                self.latent_shape()
            ));
        }
        if !latent.is_finite() {
            return invalid("latent contains non-finite values");
        }
        let (h, w, _) = self.latent_shape();
        let mut state = grid_to_matrix(latent);
        let mut trace = Vec::with_capacity(self.spec.depth * self.spec.steps);
        let mut energy_sq = 0.0;
        for site in self.hook_sites() {
            let block = &self.blocks[site.block_index];
            let out = block.forward(&state);
            let features = FeatureMap::with_ids(
                vec![matrix_to_grid(&out, h, w)],
                vec![sample_id],
                site.block_index,
                site.timestep_index,
            )?;
            let features = match hook {
                Some(hook) => {
                    let after = hook.apply(features.clone())?;
                    energy_sq += perturbation_energy(&features, &after)?.powi(2);
                    state = grid_to_matrix(&after.images()[0]);
                    after
                }
                None => {
                    state = out;
                    features
                }
            };
            trace.push(features);
        }
        let image = matrix_to_grid(&(state * &self.readout), h, w);
        Ok(Generation { image, trace, injected_energy: energy_sq.sqrt() })
    }

    /// Element-wise [`generate_tagged`](Self::generate_tagged) with sample
    /// ids equal to batch positions.
    pub fn batch_generate(
        &self,
        latents: &[FeatureGrid],
        hook: Option<&dyn FeatureHook>,
    ) -> Result<Vec<Generation>> {
        let ids: Vec<u64> = (0..latents.len() as u64).collect();
        self.batch_generate_tagged(latents, &ids, hook)
    }

    pub fn batch_generate_tagged(
        &self,
        latents: &[FeatureGrid],
        sample_ids: &[u64],
        hook: Option<&dyn FeatureHook>,
    ) -> Result<Vec<Generation>> {
        if latents.is_empty() {
            return invalid("batch_generate needs at least one latent");
        }
        if latents.len() != sample_ids.len() {
            return invalid(format!("{} sample ids for {} latents", sample_ids.len(), latents.len()));
        }
        latents
            .par_iter()
            .zip(sample_ids.par_iter())
            .map(|(z, &id)| self.generate_tagged(z, id, hook))
            .collect()
    }

    /// Writes every parameter as float32 NPY files into `dir`.
    pub fn dump_npy(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let save = |name: String, m: &DMatrix<f64>| {
            let rows: Vec<f64> = m.transpose().iter().copied().collect();
            write_npy_file(&dir.join(name), &[m.nrows(), m.ncols()], &rows)
        };
        for (l, b) in self.blocks.iter().enumerate() {
            save(format!("block{l:02}_token_mix.npy"), &b.token_mix)?;
            save(format!("block{l:02}_channel.npy"), &b.channel)?;
            save(format!("block{l:02}_bias.npy"), &b.bias)?;
        }
        save("readout.npy".into(), &self.readout)
    }
}

/// Writes each trace entry as `step{t}_block{l}.npy` with shape `(H, W, D)`.
pub fn dump_trace_npy(trace: &[FeatureMap], dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for fm in trace {
        for (img, id) in fm.images().iter().zip(fm.sample_ids()) {
            let (h, w, d) = img.shape();
            let name = format!("sample{id}_step{}_block{:02}.npy", fm.timestep_index, fm.block_index);
            write_npy_file(&dir.join(name), &[h, w, d], img.data())?;
        }
    }
    Ok(())
}
