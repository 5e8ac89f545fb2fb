//! Diversity and distribution-distance metrics over embedding vectors.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;

use crate::error::{invalid, Result};
use crate::rng::{derive_seed, rng_from, tag};

/// Largest negative eigenvalue of the normalized kernel treated as round-off.
pub const EIGEN_CLAMP: f64 = 1e-8;

/// `n` embedding vectors (one per row) plus a note of where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    vectors: DMatrix<f64>,
    pub source: String,
}

impl EmbeddingSet {
    pub fn new(vectors: DMatrix<f64>, source: impl Into<String>) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return invalid("embedding set needs at least one non-empty vector");
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return invalid("embedding set contains non-finite values");
        }
        Ok(Self { vectors, source: source.into() })
    }

    pub fn from_rows(rows: &[Vec<f64>], source: impl Into<String>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return invalid("embedding set needs at least one vector");
        };
        if rows.iter().any(|r| r.len() != first.len()) {
            return invalid("embedding vectors differ in length");
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), first.len(), &flat), source)
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    fn select(&self, rows: &[usize]) -> DMatrix<f64> {
        self.vectors.select_rows(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// Cosine similarity; a zero vector has similarity 0 with every other
    /// vector and 1 with itself.
    Cosine,
    /// `(x . y / d + 1)^3`.
    Poly3,
}

fn poly3(x: f64, dim: usize) -> f64 {
    (x / dim as f64 + 1.0).powi(3)
}

pub fn pairwise_matrix(set: &EmbeddingSet, kernel: Kernel) -> DMatrix<f64> {
    let v = &set.vectors;
    let gram = v * v.transpose();
    let n = set.len();
    match kernel {
        Kernel::Poly3 => gram.map(|g| poly3(g, set.dim())),
        Kernel::Cosine => {
            let norms: Vec<f64> = (0..n).map(|i| gram[(i, i)].sqrt()).collect();
            DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    1.0
                } else if norms[i] == 0.0 || norms[j] == 0.0 {
                    0.0
                } else {
                    gram[(i, j)] / (norms[i] * norms[j])
                }
            })
        }
    }
}

/// Mean cosine similarity over the `n (n - 1) / 2` unordered pairs.
pub fn in_batch_similarity(set: &EmbeddingSet) -> Result<f64> {
    let n = set.len();
    if n < 2 {
        return invalid(format!("in-batch similarity needs at least 2 vectors, got {n}"));
    }
    let k = pairwise_matrix(set, Kernel::Cosine);
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += k[(i, j)];
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

/// Exponential of the Shannon entropy of the eigenvalues of `K / n`, with
/// `K` the cosine kernel.
pub fn vendi_score(set: &EmbeddingSet) -> Result<f64> {
    let n = set.len();
    let k = pairwise_matrix(set, Kernel::Cosine) / n as f64;
    if k.iter().any(|v| !v.is_finite()) {
        return invalid("similarity kernel is not finite");
    }
    let eig = SymmetricEigen::new(k).eigenvalues;
    let mut entropy = 0.0;
    for &l in eig.iter() {
        if l < -EIGEN_CLAMP {
            return invalid(format!("kernel eigenvalue {l} is too negative for a PSD kernel"));
        }
        if l > 0.0 {
            entropy -= l * l.ln();
        }
    }
    Ok(entropy.exp())
}

/// Unbiased squared MMD between two samples under the cubic polynomial
/// kernel. Both samples need at least two rows.
pub fn mmd2_unbiased(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let (m, n) = (x.nrows(), y.nrows());
    if m < 2 || n < 2 {
        return invalid(format!("unbiased MMD needs >= 2 samples per set, got {m} and {n}"));
    }
    if x.ncols() != y.ncols() {
        return invalid(format!("dimension mismatch: {} vs {}", x.ncols(), y.ncols()));
    }
    let d = x.ncols();
    let kxx = (x * x.transpose()).map(|g| poly3(g, d));
    let kyy = (y * y.transpose()).map(|g| poly3(g, d));
    let kxy = (x * y.transpose()).map(|g| poly3(g, d));
    let off_diag = |k: &DMatrix<f64>| k.sum() - k.trace();
    Ok(off_diag(&kxx) / (m * (m - 1)) as f64 + off_diag(&kyy) / (n * (n - 1)) as f64
        - 2.0 * kxy.sum() / (m * n) as f64)
}

/// Per-block unbiased MMD^2 values behind a KID estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct KidEstimate {
    pub blocks: Vec<f64>,
}

impl KidEstimate {
    pub fn mean(&self) -> f64 {
        self.blocks.iter().sum::<f64>() / self.blocks.len() as f64
    }

    /// Standard error of the block mean (0 for a single block).
    pub fn std_error(&self) -> f64 {
        let b = self.blocks.len();
        if b < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let var = self.blocks.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
        (var / b as f64).sqrt()
    }
}

/// KID over `block_count` disjoint blocks. Each set is shuffled with a seeded
/// permutation and cut into blocks of `min(n_gen, n_ref) / block_count` rows;
/// leftover rows are unused.
pub fn kid_blocks(
    generated: &EmbeddingSet,
    reference: &EmbeddingSet,
    block_count: usize,
    seed: u64,
) -> Result<KidEstimate> {
    if block_count == 0 {
        return invalid("KID needs block_count >= 1");
    }
    if generated.dim() != reference.dim() {
        return invalid(format!("embedding dimensions differ: {} vs {}", generated.dim(), reference.dim()));
    }
    let block = generated.len().min(reference.len()) / block_count;
    if block < 2 {
        return invalid(format!(
            "KID with {block_count} blocks needs >= {} samples per set, got {} and {}",
            2 * block_count,
            generated.len(),
            reference.len()
        ));
    }
    let shuffled = |len: usize, stream: u64| {
        let mut idx: Vec<usize> = (0..len).collect();
        idx.shuffle(&mut rng_from(derive_seed(seed, &[tag::KID_BLOCKS, stream])));
        idx
    };
    let gen_idx = shuffled(generated.len(), 0);
    let ref_idx = shuffled(reference.len(), 1);
    let blocks = (0..block_count)
        .map(|b| {
            let range = b * block..(b + 1) * block;
            mmd2_unbiased(&generated.select(&gen_idx[range.clone()]), &reference.select(&ref_idx[range]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KidEstimate { blocks })
}

pub fn kid(generated: &EmbeddingSet, reference: &EmbeddingSet, block_count: usize, seed: u64) -> Result<f64> {
    Ok(kid_blocks(generated, reference, block_count, seed)?.mean())
}

/// Metric values for one set of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub in_batch_sim: Option<f64>,
    pub vendi: Option<f64>,
    pub kid: Option<f64>,
}
