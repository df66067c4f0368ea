//! Synthetic fine-grained datasets and label-noise injection.
//!
//! Datasets are built as coarse super-clusters that each contain several
//! nearly overlapping sub-classes, so most of the class confusion happens
//! between siblings of the same super-group. Noise is injected through a
//! row-stochastic transition matrix; the clean label is retained on every
//! record but only evaluation and diagnostics may read it — the training
//! path works off [`TrainView`], which carries noisy labels only.

mod blobs;
mod io;
mod noise;
pub mod stats;

pub use blobs::{make_fine_grained_blobs, BlobPair, BlobSpec};
pub use io::{read_dataset_csv, write_dataset_csv};
pub use noise::{build_transition, inject_noise, NoiseKind, NoiseSpec, TransitionMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub id: usize,
    pub features: Vec<f64>,
    /// Ground-truth label; hidden from the training path.
    pub clean_label: usize,
    /// Observed (possibly corrupted) label.
    pub noisy_label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub classes: usize,
    pub feature_dim: usize,
    pub split: Split,
    pub records: Vec<SampleRecord>,
}

/// What the trainer is allowed to see: features and observed labels.
#[derive(Clone, Debug)]
pub struct TrainView {
    pub classes: usize,
    pub feature_dim: usize,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

/// Evaluation view with ground-truth labels.
#[derive(Clone, Debug)]
pub struct EvalView {
    pub classes: usize,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Noisy-label view for training. Clean labels do not cross this boundary.
    pub fn train_view(&self) -> TrainView {
        TrainView {
            classes: self.classes,
            feature_dim: self.feature_dim,
            features: self.records.iter().map(|r| r.features.clone()).collect(),
            labels: self.records.iter().map(|r| r.noisy_label).collect(),
        }
    }

    /// Clean-label view for evaluation and diagnostics.
    pub fn eval_view(&self) -> EvalView {
        EvalView {
            classes: self.classes,
            features: self.records.iter().map(|r| r.features.clone()).collect(),
            labels: self.records.iter().map(|r| r.clean_label).collect(),
        }
    }

    pub fn clean_labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.clean_label).collect()
    }
}

/// Fraction of samples whose observed label differs from the clean one.
pub fn empirical_noise_rate(dataset: &Dataset) -> f64 {
    if dataset.records.is_empty() {
        return 0.0;
    }
    let flipped = dataset
        .records
        .iter()
        .filter(|r| r.noisy_label != r.clean_label)
        .count();
    flipped as f64 / dataset.records.len() as f64
}
