//! Label-noise transition matrices and injection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Flip to any other class uniformly with total probability `rate`.
    Symmetric,
    /// Flip to one designated class, `(c + 1) mod C`, with probability `rate`.
    Asymmetric,
}

#[derive(Clone, Copy, Debug)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub seed: u64,
}

/// Row-stochastic matrix of flip probabilities; `row(i)[j] = P(observed = j | clean = i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    /// Validates non-negativity and that each row sums to 1 within 1e-9.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let classes = rows.len();
        if classes < 2 {
            return Err(Error::InvalidArgument("transition matrix needs at least 2 classes".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != classes {
                return Err(Error::ShapeMismatch {
                    op: "transition_matrix",
                    details: format!("row {} has {} entries, expected {}", i, row.len(), classes),
                });
            }
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "row {i} contains a negative or non-finite probability"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "row {i} sums to {sum}, expected 1 within 1e-9"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn classes(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.rows[class]
    }
}

/// Build the transition matrix for a noise spec: diagonal `1 - r`, and the
/// flip mass either spread uniformly (`r / (C - 1)`) or concentrated on the
/// cyclic successor class.
pub fn build_transition(spec: &NoiseSpec, classes: usize) -> Result<TransitionMatrix> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if !(0.0..1.0).contains(&spec.rate) {
        return Err(Error::InvalidArgument(format!(
            "noise rate must be in [0, 1), got {}",
            spec.rate
        )));
    }
    let r = spec.rate;
    let rows = (0..classes)
        .map(|c| {
            let mut row = match spec.kind {
                NoiseKind::Symmetric => vec![r / (classes - 1) as f64; classes],
                NoiseKind::Asymmetric => {
                    let mut row = vec![0.0; classes];
                    row[(c + 1) % classes] = r;
                    row
                }
            };
            row[c] = 1.0 - r;
            row
        })
        .collect();
    TransitionMatrix::new(rows)
}

/// Replace each observed label with a draw from the transition row of its
/// clean label. Features and clean labels are untouched; returns the noisy
/// dataset and the number of flipped labels. Deterministic under `seed`.
pub fn inject_noise(
    dataset: &Dataset,
    transition: &TransitionMatrix,
    seed: u64,
) -> Result<(Dataset, usize)> {
    if dataset.split != Split::Train {
        return Err(Error::InvalidArgument(
            "noise is only injected into the train split".into(),
        ));
    }
    if transition.classes() != dataset.classes {
        return Err(Error::ShapeMismatch {
            op: "inject_noise",
            details: format!(
                "transition is {0}x{0}, dataset has {1} classes",
                transition.classes(),
                dataset.classes
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = dataset.clone();
    let mut flipped = 0;
    for record in &mut out.records {
        let row = transition.row(record.clean_label);
        let draw: f64 = rng.random();
        let mut acc = 0.0;
        let mut observed = dataset.classes - 1;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if draw < acc {
                observed = j;
                break;
            }
        }
        record.noisy_label = observed;
        if observed != record.clean_label {
            flipped += 1;
        }
    }
    Ok((out, flipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{empirical_noise_rate, make_fine_grained_blobs, stats, BlobSpec};
    use proptest::prelude::*;

    fn blob_spec(classes: usize, per_class: usize) -> BlobSpec {
        BlobSpec {
            classes,
            feature_dim: 2,
            train_per_class: per_class,
            test_per_class: 5,
            super_groups: classes / 2,
            intra_spread: 1.0,
            inter_spread: 8.0,
            sample_std: 0.5,
            seed: 3,
        }
    }

    #[test]
    fn symmetric_rate_zero_is_identity() {
        let t = build_transition(
            &NoiseSpec { kind: NoiseKind::Symmetric, rate: 0.0, seed: 0 },
            4,
        )
        .unwrap();
        for c in 0..4 {
            for j in 0..4 {
                let expected = if c == j { 1.0 } else { 0.0 };
                assert_eq!(t.row(c)[j], expected);
            }
        }
    }

    #[test]
    fn symmetric_matrix_values() {
        let t = build_transition(
            &NoiseSpec { kind: NoiseKind::Symmetric, rate: 0.4, seed: 0 },
            10,
        )
        .unwrap();
        for c in 0..10 {
            assert!((t.row(c)[c] - 0.6).abs() < 1e-12);
            for j in (0..10).filter(|&j| j != c) {
                assert!((t.row(c)[j] - 0.4 / 9.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn asymmetric_matrix_values() {
        let t = build_transition(
            &NoiseSpec { kind: NoiseKind::Asymmetric, rate: 0.3, seed: 0 },
            4,
        )
        .unwrap();
        for c in 0..4 {
            assert!((t.row(c)[c] - 0.7).abs() < 1e-12);
            assert!((t.row(c)[(c + 1) % 4] - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_rate_one_and_tiny_class_counts() {
        assert!(build_transition(
            &NoiseSpec { kind: NoiseKind::Symmetric, rate: 1.0, seed: 0 },
            10
        )
        .is_err());
        assert!(build_transition(
            &NoiseSpec { kind: NoiseKind::Symmetric, rate: 0.2, seed: 0 },
            1
        )
        .is_err());
    }

    #[test]
    fn identity_transition_changes_nothing() {
        let pair = make_fine_grained_blobs(&blob_spec(4, 20)).unwrap();
        let t = build_transition(
            &NoiseSpec { kind: NoiseKind::Symmetric, rate: 0.0, seed: 0 },
            4,
        )
        .unwrap();
        let (noisy, flipped) = inject_noise(&pair.train, &t, 11).unwrap();
        assert_eq!(flipped, 0);
        assert_eq!(noisy, pair.train);
        assert!((empirical_noise_rate(&noisy) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_flip_rate_within_binomial_bound() {
        // n = 10_000, r = 0.4: 3-sigma bound is 3 * sqrt(0.4 * 0.6 / 1e4) ~ 0.0147.
        let pair = make_fine_grained_blobs(&blob_spec(10, 1000)).unwrap();
        let t = build_transition(
            &NoiseSpec { kind: NoiseKind::Symmetric, rate: 0.4, seed: 0 },
            10,
        )
        .unwrap();
        let (noisy, flipped) = inject_noise(&pair.train, &t, 17).unwrap();
        let rate = empirical_noise_rate(&noisy);
        assert!((rate - 0.4).abs() < 0.015, "rate {rate}");
        assert_eq!(rate, flipped as f64 / noisy.len() as f64);
    }

    #[test]
    fn asymmetric_flips_land_on_cyclic_successor() {
        let pair = make_fine_grained_blobs(&blob_spec(4, 200)).unwrap();
        let t = build_transition(
            &NoiseSpec { kind: NoiseKind::Asymmetric, rate: 0.3, seed: 0 },
            4,
        )
        .unwrap();
        let (noisy, flipped) = inject_noise(&pair.train, &t, 23).unwrap();
        assert!(flipped > 0);
        for r in &noisy.records {
            if r.noisy_label != r.clean_label {
                assert_eq!(r.noisy_label, (r.clean_label + 1) % 4);
            }
        }
    }

    #[test]
    fn full_permutation_transition_flips_everything() {
        let pair = make_fine_grained_blobs(&blob_spec(4, 20)).unwrap();
        let rows = (0..4)
            .map(|c| {
                let mut row = vec![0.0; 4];
                row[(c + 1) % 4] = 1.0;
                row
            })
            .collect();
        let t = TransitionMatrix::new(rows).unwrap();
        let (noisy, flipped) = inject_noise(&pair.train, &t, 5).unwrap();
        assert_eq!(flipped, noisy.len());
        assert!((empirical_noise_rate(&noisy) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn injection_never_touches_features() {
        let pair = make_fine_grained_blobs(&blob_spec(6, 50)).unwrap();
        let t = build_transition(
            &NoiseSpec { kind: NoiseKind::Symmetric, rate: 0.4, seed: 0 },
            6,
        )
        .unwrap();
        let (noisy, _) = inject_noise(&pair.train, &t, 29).unwrap();
        for (a, b) in pair.train.records.iter().zip(&noisy.records) {
            assert_eq!(a.features, b.features);
            assert_eq!(a.clean_label, b.clean_label);
        }
    }

    #[test]
    fn injection_is_deterministic_under_seed() {
        let pair = make_fine_grained_blobs(&blob_spec(6, 50)).unwrap();
        let t = build_transition(
            &NoiseSpec { kind: NoiseKind::Symmetric, rate: 0.3, seed: 0 },
            6,
        )
        .unwrap();
        let (a, _) = inject_noise(&pair.train, &t, 31).unwrap();
        let (b, _) = inject_noise(&pair.train, &t, 31).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_labels_are_uniform_over_other_classes() {
        let pair = make_fine_grained_blobs(&blob_spec(10, 1000)).unwrap();
        let t = build_transition(
            &NoiseSpec { kind: NoiseKind::Symmetric, rate: 0.4, seed: 0 },
            10,
        )
        .unwrap();
        let (noisy, _) = inject_noise(&pair.train, &t, 37).unwrap();
        let mut offsets = vec![0usize; 9];
        for r in &noisy.records {
            if r.noisy_label != r.clean_label {
                let offset = (r.noisy_label + 10 - r.clean_label) % 10;
                offsets[offset - 1] += 1;
            }
        }
        let p = stats::chi_squared_uniform_pvalue(&offsets);
        assert!(p > 0.01, "chi-squared uniformity p = {p}");
    }

    proptest! {
        #[test]
        fn transition_rows_are_stochastic(
            classes in 2usize..30,
            rate in 0.0..0.99f64,
            asymmetric in proptest::bool::ANY,
        ) {
            let kind = if asymmetric { NoiseKind::Asymmetric } else { NoiseKind::Symmetric };
            let t = build_transition(&NoiseSpec { kind, rate, seed: 0 }, classes).unwrap();
            for c in 0..classes {
                let sum: f64 = t.row(c).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                prop_assert!(t.row(c).iter().all(|&p| p >= 0.0));
            }
        }
    }
}
