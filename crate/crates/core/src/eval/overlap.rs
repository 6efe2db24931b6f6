//! Cosine overlap between image rows and joint-text rows of the same item,
//! against a seeded derangement of the pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{FeatureTable, FeatureType};
use crate::error::{Error, Result};

pub const BIN_WIDTH: f64 = 0.05;
const N_BINS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    pub n: usize,
    pub mean: f64,
    pub stdev: f64,
    /// `(bin_start, count)` over [-1, 1].
    pub histogram: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapStats {
    pub positive: Distribution,
    pub negative: Distribution,
    pub gap: f64,
    /// Items dropped for a zero-norm row in either table.
    pub excluded: usize,
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    ab / (aa * bb).sqrt()
}

fn norm(a: &[f32]) -> f64 {
    a.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

fn distribution(values: &[f64]) -> Distribution {
    let n = values.len();
    let mean = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
    let var = if n < 2 {
        0.0
    } else {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
    };
    let mut counts = vec![0usize; N_BINS];
    for v in values {
        let b = ((v + 1.0) / BIN_WIDTH).floor();
        counts[(b.max(0.0) as usize).min(N_BINS - 1)] += 1;
    }
    Distribution {
        n,
        mean,
        stdev: var.sqrt(),
        histogram: counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| (-1.0 + i as f64 * BIN_WIDTH, c))
            .collect(),
    }
}

/// Sattolo's algorithm: a uniformly random cyclic permutation, hence a
/// derangement for two or more elements.
pub fn derangement(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..i);
        p.swap(i, j);
    }
    p
}

pub fn overlap_report(img: &FeatureTable, joint: &FeatureTable, seed: u64) -> Result<OverlapStats> {
    if img.kind() != FeatureType::Img || joint.kind() != FeatureType::JointText {
        return Err(Error::invalid("overlap needs an img table and a jointtext table"));
    }
    if img.dim() != joint.dim() {
        return Err(Error::DimensionMismatch {
            expected: img.dim(),
            actual: joint.dim(),
        });
    }
    let mut pairs = Vec::new();
    let mut excluded = 0;
    for id in img.ids() {
        if let (Some(a), Some(b)) = (img.row(id), joint.row(id)) {
            if norm(a) == 0.0 || norm(b) == 0.0 {
                excluded += 1;
            } else {
                pairs.push((a, b));
            }
        }
    }
    if pairs.len() < 2 {
        return Err(Error::invalid("overlap needs at least two items present in both tables"));
    }
    let pos: Vec<f64> = pairs.iter().map(|(a, b)| cosine(a, b)).collect();
    let perm = derangement(pairs.len(), seed);
    let neg: Vec<f64> = pairs
        .iter()
        .enumerate()
        .map(|(i, (a, _))| cosine(a, pairs[perm[i]].1))
        .collect();
    let positive = distribution(&pos);
    let negative = distribution(&neg);
    Ok(OverlapStats {
        gap: positive.mean - negative.mean,
        positive,
        negative,
        excluded,
    })
}
