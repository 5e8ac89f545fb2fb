//! Toy-scale experiment runner: method comparisons and one-axis sweeps over
//! the perturbation knobs, producing per-prompt result rows.
//!
//! A "prompt" is an independent latent stream. Sample `j` of prompt `p` uses
//! the latent seeded by `derive_seed(seed, [LATENT, p, j])` and carries the
//! hook sample id `(p << 32) | j`, so adding prompts or samples never changes
//! the noise seen by existing ones.

mod report;

pub use report::{
    csv_string, emit_csv, emit_pareto_svg, format_sig6, pareto_svg, write_manifest, CSV_HEADER,
};

use std::collections::BTreeSet;
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::inject::{blend_latent, NoPcaHook, StrideConfig, StrideHook};
use crate::metrics::{in_batch_similarity, kid, vendi_score, EmbeddingSet};
use crate::rng::{derive_seed, tag};
use crate::toy::{FeatureHook, GeneratorSpec, ToyGenerator};

/// Tag recorded with every embedding set built from toy outputs.
pub const EMBEDDING_SOURCE: &str = "toy-pixels";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    InputNoise,
    NoPca,
    Stride,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Baseline, Method::InputNoise, Method::NoPca, Method::Stride];

    pub fn label(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::InputNoise => "input_noise",
            Method::NoPca => "no_pca",
            Method::Stride => "stride",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = crate::StrideError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.label() == s).ok_or_else(|| {
            crate::StrideError::InvalidArgument(format!(
                "unknown method '{s}' (expected baseline, input_noise, no_pca or stride)"
            ))
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSelection {
    pub in_batch_sim: bool,
    pub vendi: bool,
    pub kid: bool,
    pub kid_blocks: usize,
}

impl Default for MetricSelection {
    fn default() -> Self {
        Self { in_batch_sim: true, vendi: true, kid: false, kid_blocks: 10 }
    }
}

/// One experiment, mirrored field-for-field by the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub generator: GeneratorSpec,
    /// Seed of the latent streams.
    pub seed: u64,
    pub prompts: usize,
    pub samples_per_prompt: usize,
    pub method: Method,
    pub stride: StrideConfig,
    pub metrics: MetricSelection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl ExperimentSpec {
    /// The shipped collapse demonstration: 32 prompts x 4 samples on the
    /// default generator, perturbing blocks 0-1 at step 0.
    pub fn demo() -> Self {
        let generator = GeneratorSpec::default();
        Self {
            generator,
            seed: 7,
            prompts: 32,
            samples_per_prompt: 4,
            method: Method::Stride,
            stride: StrideConfig { energy_match: true, ..StrideConfig::for_depth(generator.depth) },
            metrics: MetricSelection::default(),
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompts == 0 {
            return invalid("prompts: must be >= 1");
        }
        if self.samples_per_prompt == 0 {
            return invalid("samples_per_prompt: must be >= 1");
        }
        let pairwise = self.metrics.in_batch_sim || self.metrics.vendi;
        if pairwise && self.samples_per_prompt < 2 {
            return invalid("samples_per_prompt: pairwise metrics need >= 2");
        }
        if self.metrics.kid {
            let total = self.prompts * self.samples_per_prompt;
            if self.metrics.kid_blocks == 0 || total / self.metrics.kid_blocks < 2 {
                return invalid(format!(
                    "metrics.kid_blocks: {} blocks need >= {} samples, experiment has {total}",
                    self.metrics.kid_blocks,
                    2 * self.metrics.kid_blocks.max(1)
                ));
            }
        }
        self.stride.validate().map_err(|e| prefix_error("stride", e))?;
        if self.method == Method::InputNoise && self.stride.alpha > 1.0 {
            return invalid("stride.alpha: input-noise blending needs alpha in [0, 1]");
        }
        let g = &self.generator;
        if self.stride.patch_size > g.height.min(g.width) {
            return invalid(format!(
                "stride.patch_size: {} exceeds the {}x{} token grid",
                self.stride.patch_size, g.height, g.width
            ));
        }
        ToyGenerator::build(*g).map_err(|e| prefix_error("generator", e))?;
        Ok(())
    }

    /// Hash of everything except the method and output location, so runs
    /// differing only in method share a digest.
    pub fn config_digest(&self) -> String {
        let key = serde_json::json!({
            "generator": self.generator,
            "seed": self.seed,
            "prompts": self.prompts,
            "samples_per_prompt": self.samples_per_prompt,
            "stride": self.stride,
            "metrics": self.metrics,
        });
        let digest = Sha256::digest(key.to_string().as_bytes());
        hex::encode(&digest[..6])
    }

    pub fn with_method(&self, method: Method) -> Self {
        Self { method, ..self.clone() }
    }
}

fn prefix_error(field: &str, e: crate::StrideError) -> crate::StrideError {
    match e {
        crate::StrideError::InvalidArgument(msg) => {
            crate::StrideError::InvalidArgument(format!("{field}: {msg}"))
        }
        other => other,
    }
}

/// One row per (method, config, prompt).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// Swept parameter name, or `-` outside sweeps.
    pub axis: String,
    pub axis_value: String,
    pub method: Method,
    pub config_digest: String,
    pub prompt: usize,
    pub in_batch_sim: Option<f64>,
    pub vendi: Option<f64>,
    /// Means over all prompts of the run.
    pub mean_in_batch_sim: Option<f64>,
    pub mean_vendi: Option<f64>,
    /// Set-level KID of all generated samples against a baseline reference.
    pub kid: Option<f64>,
    /// Mean over the prompt's samples of the injected perturbation norm.
    pub perturbation_energy: f64,
    /// Seconds spent generating and scoring this prompt. Not written to CSV.
    pub wall_clock_secs: f64,
}

impl ResultRow {
    /// The row with its timing zeroed, for comparisons.
    pub fn untimed(&self) -> Self {
        Self { wall_clock_secs: 0.0, ..self.clone() }
    }
}

/// Hook sample id for sample `j` of prompt `p`.
pub fn sample_id(prompt: usize, sample: usize) -> u64 {
    ((prompt as u64) << 32) | sample as u64
}

struct PromptOutcome {
    embeddings: Vec<Vec<f64>>,
    energies: Vec<f64>,
    secs: f64,
}

fn run_prompt(
    spec: &ExperimentSpec,
    gen: &ToyGenerator,
    hook: Option<&dyn FeatureHook>,
    prompt: usize,
) -> Result<PromptOutcome> {
    let start = Instant::now();
    let mut embeddings = Vec::with_capacity(spec.samples_per_prompt);
    let mut energies = Vec::with_capacity(spec.samples_per_prompt);
    for j in 0..spec.samples_per_prompt {
        let id = sample_id(prompt, j);
        let latent = gen.sample_latent(derive_seed(spec.seed, &[tag::LATENT, prompt as u64, j as u64]));
        let out = match spec.method {
            Method::InputNoise => {
                let seed = derive_seed(spec.stride.seed, &[tag::INPUT_NOISE, id]);
                let blended = blend_latent(&latent, spec.stride.alpha, spec.stride.f_alpha, seed)?;
                let moved = blended.add_scaled(&latent, -1.0)?.frobenius_norm();
                let mut out = gen.generate_tagged(&blended, id, None)?;
                out.injected_energy = moved;
                out
            }
            _ => gen.generate_tagged(&latent, id, hook)?,
        };
        energies.push(out.injected_energy);
        embeddings.push(out.image.into_data());
    }
    Ok(PromptOutcome { embeddings, energies, secs: start.elapsed().as_secs_f64() })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Runs every prompt of `spec` under its method and scores the samples.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let gen = ToyGenerator::build(spec.generator)?;
    let stride_hook = StrideHook(spec.stride.clone());
    let no_pca_hook = NoPcaHook(spec.stride.clone());
    let hook: Option<&dyn FeatureHook> = match spec.method {
        Method::Stride => Some(&stride_hook),
        Method::NoPca => Some(&no_pca_hook),
        Method::Baseline | Method::InputNoise => None,
    };
    let outcomes = (0..spec.prompts)
        .into_par_iter()
        .map(|p| run_prompt(spec, &gen, hook, p))
        .collect::<Result<Vec<_>>>()?;

    let per_prompt = outcomes
        .iter()
        .map(|o| {
            let set = EmbeddingSet::from_rows(&o.embeddings, EMBEDDING_SOURCE)?;
            let ibs = spec.metrics.in_batch_sim.then(|| in_batch_similarity(&set)).transpose()?;
            let vendi = spec.metrics.vendi.then(|| vendi_score(&set)).transpose()?;
            Ok((ibs, vendi))
        })
        .collect::<Result<Vec<_>>>()?;

    let kid_value = if spec.metrics.kid {
        let generated: Vec<Vec<f64>> = outcomes.iter().flat_map(|o| o.embeddings.clone()).collect();
        let reference = (0..generated.len())
            .into_par_iter()
            .map(|i| {
                let z = gen.sample_latent(derive_seed(spec.seed, &[tag::REFERENCE, i as u64]));
                Ok(gen.generate(&z, None)?.image.into_data())
            })
            .collect::<Result<Vec<_>>>()?;
        let generated = EmbeddingSet::from_rows(&generated, EMBEDDING_SOURCE)?;
        let reference = EmbeddingSet::from_rows(&reference, EMBEDDING_SOURCE)?;
        Some(kid(&generated, &reference, spec.metrics.kid_blocks, spec.seed)?)
    } else {
        None
    };

    let mean_ibs = spec.metrics.in_batch_sim.then(|| mean(per_prompt.iter().filter_map(|r| r.0)));
    let mean_vendi = spec.metrics.vendi.then(|| mean(per_prompt.iter().filter_map(|r| r.1)));
    let digest = spec.config_digest();
    Ok(outcomes
        .iter()
        .zip(per_prompt)
        .enumerate()
        .map(|(p, (o, (ibs, vendi)))| ResultRow {
            axis: "-".into(),
            axis_value: "-".into(),
            method: spec.method,
            config_digest: digest.clone(),
            prompt: p,
            in_batch_sim: ibs,
            vendi,
            mean_in_batch_sim: mean_ibs,
            mean_vendi,
            kid: kid_value,
            perturbation_energy: mean(o.energies.iter().copied()),
            wall_clock_secs: o.secs,
        })
        .collect())
}

/// Runs `base` once per method and concatenates the rows.
pub fn compare_methods(base: &ExperimentSpec, methods: &[Method]) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for &m in methods {
        rows.extend(run_experiment(&base.with_method(m))?);
    }
    Ok(rows)
}

/// Parameters a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Alpha,
    FAlpha,
    PatchSize,
    Components,
    LayerSet,
    StepGate,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Alpha => "alpha",
            SweepAxis::FAlpha => "f_alpha",
            SweepAxis::PatchSize => "P",
            SweepAxis::Components => "K",
            SweepAxis::LayerSet => "layer_set",
            SweepAxis::StepGate => "step_gate",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = crate::StrideError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "alpha" => SweepAxis::Alpha,
            "f_alpha" => SweepAxis::FAlpha,
            "P" | "patch_size" => SweepAxis::PatchSize,
            "K" | "k_components" => SweepAxis::Components,
            "layer_set" => SweepAxis::LayerSet,
            "step_gate" => SweepAxis::StepGate,
            other => {
                return invalid(format!(
                    "unknown sweep axis '{other}' (expected alpha, f_alpha, P, K, layer_set or step_gate)"
                ))
            }
        })
    }
}

fn as_number(axis: SweepAxis, v: &Value) -> Result<f64> {
    v.as_f64().ok_or_else(|| {
        crate::StrideError::InvalidArgument(format!("{}: expected a number, got {v}", axis.name()))
    })
}

fn as_count(axis: SweepAxis, v: &Value) -> Result<usize> {
    v.as_u64().map(|n| n as usize).ok_or_else(|| {
        crate::StrideError::InvalidArgument(format!("{}: expected a count, got {v}", axis.name()))
    })
}

fn as_index_set(axis: SweepAxis, v: &Value) -> Result<BTreeSet<usize>> {
    match v {
        Value::Array(items) => items.iter().map(|i| as_count(axis, i)).collect(),
        single => Ok(BTreeSet::from([as_count(axis, single)?])),
    }
}

/// `v` formatted for the `axis_value` column. Sets are `;`-separated.
fn axis_label(axis: SweepAxis, cfg: &StrideConfig) -> String {
    let join = |s: &BTreeSet<usize>| s.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
    match axis {
        SweepAxis::Alpha => format_sig6(cfg.alpha),
        SweepAxis::FAlpha => format_sig6(cfg.f_alpha),
        SweepAxis::PatchSize => cfg.patch_size.to_string(),
        SweepAxis::Components => cfg.k_components.to_string(),
        SweepAxis::LayerSet => join(&cfg.layer_set),
        SweepAxis::StepGate => join(&cfg.step_gate),
    }
}

/// `base` with one axis set to `value`. Setting the patch size also sets the
/// stride, keeping patches non-overlapping.
pub fn apply_axis(base: &ExperimentSpec, axis: SweepAxis, value: &Value) -> Result<ExperimentSpec> {
    let mut spec = base.clone();
    let s = &mut spec.stride;
    match axis {
        SweepAxis::Alpha => s.alpha = as_number(axis, value)?,
        SweepAxis::FAlpha => s.f_alpha = as_number(axis, value)?,
        SweepAxis::PatchSize => {
            s.patch_size = as_count(axis, value)?;
            s.stride = s.patch_size;
        }
        SweepAxis::Components => s.k_components = as_count(axis, value)?,
        SweepAxis::LayerSet => s.layer_set = as_index_set(axis, value)?,
        SweepAxis::StepGate => s.step_gate = as_index_set(axis, value)?,
    }
    Ok(spec)
}

/// One [`run_experiment`] per value; rows are tagged with the axis and value.
pub fn sweep(base: &ExperimentSpec, axis: SweepAxis, values: &[Value]) -> Result<Vec<ResultRow>> {
    let specs = values.iter().map(|v| apply_axis(base, axis, v)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for spec in &specs {
        let label = axis_label(axis, &spec.stride);
        rows.extend(run_experiment(spec)?.into_iter().map(|r| ResultRow {
            axis: axis.name().into(),
            axis_value: label.clone(),
            ..r
        }));
    }
    Ok(rows)
}
