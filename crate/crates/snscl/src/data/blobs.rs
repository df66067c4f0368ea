//! Fine-grained blob generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Dataset, SampleRecord, Split};
use crate::error::{Error, Result};

/// Generation parameters. Classes are assigned to super-groups
/// contiguously: with `classes = 10` and `super_groups = 5`, classes
/// `2g` and `2g + 1` are siblings of group `g`.
#[derive(Clone, Debug)]
pub struct BlobSpec {
    pub classes: usize,
    pub feature_dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub super_groups: usize,
    /// Radius of the ball around a super-center within which sub-class
    /// centers are placed.
    pub intra_spread: f64,
    /// Scale of super-center placement; centers are redrawn until they are
    /// mutually at least `0.7 * inter_spread` apart.
    pub inter_spread: f64,
    /// Isotropic standard deviation of samples around their sub-class center.
    pub sample_std: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct BlobPair {
    pub train: Dataset,
    pub test: Dataset,
}

/// Generate a train/test pair of fine-grained blobs. Deterministic under the
/// spec seed; features are standardized per dimension using train statistics,
/// and the returned labels are still clean (`noisy_label == clean_label`).
pub fn make_fine_grained_blobs(spec: &BlobSpec) -> Result<BlobPair> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.feature_dim;

    let super_centers = draw_super_centers(spec, &mut rng);

    // Sub-class centers: uniform in a ball of radius intra_spread around the
    // group center.
    let per_group = spec.classes / spec.super_groups;
    let mut class_centers = Vec::with_capacity(spec.classes);
    for class in 0..spec.classes {
        let group = class / per_group;
        let offset = uniform_in_ball(&mut rng, dim, spec.intra_spread);
        let center: Vec<f64> = super_centers[group]
            .iter()
            .zip(&offset)
            .map(|(c, o)| c + o)
            .collect();
        class_centers.push(center);
    }

    let mut train_features = draw_samples(spec, &class_centers, spec.train_per_class, &mut rng);
    let mut test_features = draw_samples(spec, &class_centers, spec.test_per_class, &mut rng);

    standardize(&mut train_features, &mut test_features, dim);

    let train = build_dataset(spec, Split::Train, &train_features, spec.train_per_class, 0);
    let test = build_dataset(
        spec,
        Split::Test,
        &test_features,
        spec.test_per_class,
        train.len(),
    );
    Ok(BlobPair { train, test })
}

fn validate(spec: &BlobSpec) -> Result<()> {
    if spec.classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {}",
            spec.classes
        )));
    }
    if spec.super_groups == 0 || spec.classes % spec.super_groups != 0 {
        return Err(Error::InvalidArgument(format!(
            "classes ({}) must be divisible by super_groups ({})",
            spec.classes, spec.super_groups
        )));
    }
    if !(spec.intra_spread > 0.0) || !(spec.inter_spread > spec.intra_spread) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < intra_spread ({}) < inter_spread ({})",
            spec.intra_spread, spec.inter_spread
        )));
    }
    if spec.feature_dim == 0 || spec.train_per_class == 0 || spec.test_per_class == 0 {
        return Err(Error::InvalidArgument(
            "feature_dim and per-class counts must be positive".into(),
        ));
    }
    if !(spec.sample_std > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sample_std must be > 0, got {}",
            spec.sample_std
        )));
    }
    Ok(())
}

fn draw_super_centers(spec: &BlobSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let min_dist = 0.7 * spec.inter_spread;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.super_groups);
    for _ in 0..spec.super_groups {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..64 {
            let candidate: Vec<f64> = (0..spec.feature_dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * spec.inter_spread)
                .collect();
            let nearest = centers
                .iter()
                .map(|c| distance(c, &candidate))
                .fold(f64::INFINITY, f64::min);
            if nearest >= min_dist {
                best = Some((nearest, candidate));
                break;
            }
            if best.as_ref().is_none_or(|(d, _)| nearest > *d) {
                best = Some((nearest, candidate));
            }
        }
        centers.push(best.expect("at least one candidate drawn").1);
    }
    centers
}

fn uniform_in_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    dir.iter().map(|v| v / norm * r).collect()
}

fn draw_samples(
    spec: &BlobSpec,
    centers: &[Vec<f64>],
    per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let mut features = Vec::with_capacity(spec.classes * per_class);
    for center in centers {
        for _ in 0..per_class {
            let sample: Vec<f64> = center
                .iter()
                .map(|c| c + spec.sample_std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            features.push(sample);
        }
    }
    features
}

/// Zero-mean / unit-variance per dimension, fit on train, applied to both.
fn standardize(train: &mut [Vec<f64>], test: &mut [Vec<f64>], dim: usize) {
    let n = train.len() as f64;
    for j in 0..dim {
        let mean = train.iter().map(|f| f[j]).sum::<f64>() / n;
        let var = train.iter().map(|f| (f[j] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-12);
        for f in train.iter_mut() {
            f[j] = (f[j] - mean) / std;
        }
        for f in test.iter_mut() {
            f[j] = (f[j] - mean) / std;
        }
    }
}

fn build_dataset(
    spec: &BlobSpec,
    split: Split,
    features: &[Vec<f64>],
    per_class: usize,
    id_offset: usize,
) -> Dataset {
    let records = features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let class = i / per_class;
            SampleRecord {
                id: id_offset + i,
                features: f.clone(),
                clean_label: class,
                noisy_label: class,
            }
        })
        .collect();
    Dataset {
        classes: spec.classes,
        feature_dim: spec.feature_dim,
        split,
        records,
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
