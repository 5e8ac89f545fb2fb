//! Fixtures shared by the benchmarks.

use stride_core::{FeatureGrid, FeatureMap, GeneratorSpec, StrideConfig, ToyGenerator};

/// The default toy generator.
pub fn generator() -> ToyGenerator {
    ToyGenerator::build(GeneratorSpec::default()).expect("default spec is valid")
}

/// Block-0 features of `batch` default-generator samples, tagged for injection.
pub fn block_features(gen: &ToyGenerator, batch: usize) -> FeatureMap {
    let images: Vec<FeatureGrid> = (0..batch as u64)
        .map(|i| {
            let out = gen.generate(&gen.sample_latent(i), None).expect("generation succeeds");
            out.trace[0].images()[0].clone()
        })
        .collect();
    FeatureMap::with_ids(images, (0..batch as u64).collect(), 0, 0).expect("consistent batch")
}

pub fn stride_config() -> StrideConfig {
    StrideConfig { alpha: 0.25, ..StrideConfig::for_depth(6) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_expected_shape() {
        let gen = generator();
        assert_eq!(block_features(&gen, 3).shape(), (3, 16, 16, 32));
    }
}
