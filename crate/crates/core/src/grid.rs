use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// One image's hidden states on an `height x width` token grid with `channels`
/// features per token. Storage is row-major over space with channels fastest,
/// i.e. index `(y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return invalid(format!("grid dimensions must be >= 1, got {height}x{width}x{channels}"));
        }
        if data.len() != height * width * channels {
            return invalid(format!(
                "grid {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            ));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn tokens(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self + scale * other`, elementwise.
    pub fn add_scaled(&self, other: &FeatureGrid, scale: f64) -> Result<FeatureGrid> {
        if self.shape() != other.shape() {
            return invalid(format!("shape mismatch: {:?} vs {:?}", self.shape(), other.shape()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + scale * b).collect();
        Ok(FeatureGrid { data, ..*self })
    }

    pub fn scaled(&self, scale: f64) -> FeatureGrid {
        FeatureGrid { data: self.data.iter().map(|v| v * scale).collect(), ..*self }
    }
}

/// A batch of feature grids captured at one (block, timestep) site.
///
/// `sample_ids` key the per-image random streams; they default to the batch
/// position but travel with the image, so reordering a batch reorders outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    images: Vec<FeatureGrid>,
    sample_ids: Vec<u64>,
    pub block_index: usize,
    pub timestep_index: usize,
}

impl FeatureMap {
    pub fn new(images: Vec<FeatureGrid>, block_index: usize, timestep_index: usize) -> Result<Self> {
        let ids = (0..images.len() as u64).collect();
        Self::with_ids(images, ids, block_index, timestep_index)
    }

    pub fn with_ids(
        images: Vec<FeatureGrid>,
        sample_ids: Vec<u64>,
        block_index: usize,
        timestep_index: usize,
    ) -> Result<Self> {
        let Some(first) = images.first() else {
            return invalid("feature map needs at least one image");
        };
        if let Some(bad) = images.iter().find(|g| g.shape() != first.shape()) {
            return invalid(format!(
                "batch images differ in shape: {:?} vs {:?}",
                first.shape(),
                bad.shape()
            ));
        }
        if sample_ids.len() != images.len() {
            return invalid(format!("{} sample ids for {} images", sample_ids.len(), images.len()));
        }
        if !images.iter().all(FeatureGrid::is_finite) {
            return invalid("feature map contains non-finite values");
        }
        Ok(Self { images, sample_ids, block_index, timestep_index })
    }

    pub fn batch(&self) -> usize {
        self.images.len()
    }

    /// `(batch, height, width, channels)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        let (h, w, d) = self.images[0].shape();
        (self.images.len(), h, w, d)
    }

    pub fn images(&self) -> &[FeatureGrid] {
        &self.images
    }

    pub fn sample_ids(&self) -> &[u64] {
        &self.sample_ids
    }

    pub fn into_images(self) -> Vec<FeatureGrid> {
        self.images
    }

    /// Same site and ids, new image contents.
    pub(crate) fn replace_images(&self, images: Vec<FeatureGrid>) -> FeatureMap {
        FeatureMap {
            images,
            sample_ids: self.sample_ids.clone(),
            block_index: self.block_index,
            timestep_index: self.timestep_index,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(FeatureGrid::new(0, 1, 1, vec![]).is_err());
        assert!(FeatureGrid::new(2, 2, 1, vec![0.0; 3]).is_err());
        let a = FeatureGrid::zeros(2, 2, 1).unwrap();
        let b = FeatureGrid::zeros(2, 1, 2).unwrap();
        assert!(FeatureMap::new(vec![a.clone(), b], 0, 0).is_err());
        assert!(FeatureMap::new(vec![], 0, 0).is_err());
        assert!(FeatureMap::with_ids(vec![a], vec![1, 2], 0, 0).is_err());
    }

    #[test]
    fn layout_is_channel_fastest() {
        let g = FeatureGrid::from_fn(2, 3, 2, |y, x, c| (100 * y + 10 * x + c) as f64).unwrap();
        assert_eq!(g.data()[..4], [0.0, 1.0, 10.0, 11.0]);
        assert_eq!(g.get(1, 2, 1), 121.0);
    }
}
