mod common;

use common::*;
use stride_core::rng::standard_normals;
use stride_core::{
    in_batch_similarity, patchify, EmbeddingSet, FeatureGrid, GeneratorSpec, NoPcaHook, StrideConfig,
    StrideHook, ToyGenerator,
};

fn rows(images: &[FeatureGrid]) -> Vec<Vec<f64>> {
    images.iter().map(|g| g.data().to_vec()).collect()
}

#[test]
fn outputs_collapse_relative_to_white_noise() {
    let gen = ToyGenerator::build(GeneratorSpec::default()).unwrap();
    let latents: Vec<FeatureGrid> = (0..64).map(|i| gen.sample_latent(i)).collect();
    let images: Vec<FeatureGrid> =
        gen.batch_generate(&latents, None).unwrap().into_iter().map(|g| g.image).collect();
    let (h, w, c) = images[0].shape();
    let white: Vec<Vec<f64>> = (0..64).map(|i| standard_normals(9000 + i, h * w * c)).collect();
    let gen_sim = in_batch_similarity(&EmbeddingSet::from_rows(&rows(&images), "gen").unwrap()).unwrap();
    let white_sim = in_batch_similarity(&EmbeddingSet::from_rows(&white, "white").unwrap()).unwrap();
    assert!(gen_sim > white_sim + 0.5, "{gen_sim} vs {white_sim}");
}

#[test]
fn early_block_patches_are_low_rank() {
    let gen = ToyGenerator::build(GeneratorSpec::default()).unwrap();
    for seed in 0..4 {
        let out = gen.generate(&gen.sample_latent(seed), None).unwrap();
        for block in 0..2 {
            let features = &out.trace[block].images()[0];
            let x = center_columns(patchify(features, 2, 2).unwrap().matrix());
            let mut s2: Vec<f64> = x.singular_values().iter().map(|s| s * s).collect();
            s2.sort_by(|a, b| b.total_cmp(a));
            let top = s2.len().div_ceil(10);
            let frac = s2[..top].iter().sum::<f64>() / s2.iter().sum::<f64>();
            assert!(frac >= 0.9, "seed {seed} block {block}: {frac}");
        }
    }
}

#[test]
fn batched_generation_matches_sequential() {
    let gen = ToyGenerator::build(GeneratorSpec::default()).unwrap();
    let latents: Vec<FeatureGrid> = (0..8).map(|i| gen.sample_latent(50 + i)).collect();
    let ids: Vec<u64> = (0..8).map(|i| 7 * i + 3).collect();
    let cfg = StrideConfig { alpha: 0.4, layer_set: [0, 1, 4].into(), ..StrideConfig::for_depth(6) };
    let stride = StrideHook(cfg.clone());
    let no_pca = NoPcaHook(cfg);
    for hook in [&stride as &dyn stride_core::FeatureHook, &no_pca] {
        let batched = gen.batch_generate_tagged(&latents, &ids, Some(hook)).unwrap();
        for ((z, &id), b) in latents.iter().zip(&ids).zip(&batched) {
            let seq = gen.generate_tagged(z, id, Some(hook)).unwrap();
            assert_eq!(grid_bits(&seq.image), grid_bits(&b.image));
            assert_eq!(seq.injected_energy.to_bits(), b.injected_energy.to_bits());
        }
    }
}

#[test]
fn zero_alpha_hook_leaves_outputs_bit_identical() {
    let spec = GeneratorSpec { steps: 2, ..GeneratorSpec::default() };
    let gen = ToyGenerator::build(spec).unwrap();
    let z = gen.sample_latent(4);
    let hook = StrideHook(StrideConfig { alpha: 0.0, ..StrideConfig::for_depth(6) });
    let plain = gen.generate(&z, None).unwrap();
    let hooked = gen.generate(&z, Some(&hook)).unwrap();
    assert_eq!(grid_bits(&plain.image), grid_bits(&hooked.image));
    assert_eq!(hooked.injected_energy, 0.0);
}
