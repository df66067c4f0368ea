//! Soft labels and the weighted correction strategy.
//!
//! A corrected label blends the model prediction with the observed noisy
//! one-hot according to the sample weight: `y_hat = (1 - w) * y_pred + w * y`.
//! Across epochs the blend is stabilized by a moving average
//! `y^e = alpha * y^(e-1) + (1 - alpha) * y_new`.

use crate::error::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-6;

/// Probability vector over classes; sums to 1 within 1e-6.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftLabel(Vec<f64>);

impl SoftLabel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("soft label needs at least one class".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument(
                "soft label probabilities must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "soft label sums to {sum}, expected 1 within {NORMALIZATION_TOL}"
            )));
        }
        Ok(Self(probs))
    }

    /// Normalize arbitrary non-negative mass to a soft label.
    pub fn renormalized(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "cannot renormalize mass summing to {sum}"
            )));
        }
        Self::new(probs.iter().map(|p| p / sum).collect())
    }

    pub fn one_hot(class: usize, classes: usize) -> Self {
        let mut probs = vec![0.0; classes];
        probs[class] = 1.0;
        Self(probs)
    }

    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0 / classes as f64; classes])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }
}

/// Weighted correction: `(1 - omega) * predicted + omega * noisy`.
///
/// With `omega = 1` the observed label is kept untouched, so the blend only
/// moves labels of samples the reliability step found suspect.
pub fn weighted_correct(
    omega: f64,
    noisy: &SoftLabel,
    predicted: &SoftLabel,
) -> Result<SoftLabel> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::InvalidArgument(format!("omega must be in [0, 1], got {omega}")));
    }
    if noisy.classes() != predicted.classes() {
        return Err(Error::InvalidArgument(format!(
            "class count mismatch: {} vs {}",
            noisy.classes(),
            predicted.classes()
        )));
    }
    let probs = noisy
        .probs()
        .iter()
        .zip(predicted.probs())
        .map(|(&y, &p)| (1.0 - omega) * p + omega * y)
        .collect();
    SoftLabel::new(probs)
}

/// Moving-average update `alpha * previous + (1 - alpha) * new`, renormalized
/// defensively against float drift.
pub fn moving_average_update(
    previous: &SoftLabel,
    new: &SoftLabel,
    alpha: f64,
) -> Result<SoftLabel> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must be in [0, 1], got {alpha}")));
    }
    if previous.classes() != new.classes() {
        return Err(Error::InvalidArgument(format!(
            "class count mismatch: {} vs {}",
            previous.classes(),
            new.classes()
        )));
    }
    let blended: Vec<f64> = previous
        .probs()
        .iter()
        .zip(new.probs())
        .map(|(&p, &n)| alpha * p + (1.0 - alpha) * n)
        .collect();
    SoftLabel::renormalized(blended)
}

/// Argmax with ties broken toward the lowest index.
pub fn hard_label(label: &SoftLabel) -> usize {
    let mut best = 0;
    for (i, &p) in label.probs().iter().enumerate() {
        if p > label.probs()[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn correction_endpoints() {
        let noisy = SoftLabel::one_hot(0, 2);
        let pred = SoftLabel::new(vec![0.2, 0.8]).unwrap();
        assert_eq!(weighted_correct(1.0, &noisy, &pred).unwrap(), noisy);
        assert_eq!(weighted_correct(0.0, &noisy, &pred).unwrap(), pred);
    }

    #[test]
    fn correction_direct_arithmetic() {
        let noisy = SoftLabel::one_hot(0, 2);
        let pred = SoftLabel::new(vec![0.2, 0.8]).unwrap();
        let out = weighted_correct(0.4, &noisy, &pred).unwrap();
        assert!((out.probs()[0] - 0.52).abs() < 1e-12);
        assert!((out.probs()[1] - 0.48).abs() < 1e-12);
    }

    #[test]
    fn correction_rejects_unnormalized_input() {
        assert!(SoftLabel::new(vec![0.5, 0.4]).is_err());
        assert!(SoftLabel::new(vec![1.2, -0.2]).is_err());
    }

    #[test]
    fn moving_average_direct_arithmetic() {
        let prev = SoftLabel::one_hot(0, 2);
        let new = SoftLabel::one_hot(1, 2);
        let out = moving_average_update(&prev, &new, 0.99).unwrap();
        assert!((out.probs()[0] - 0.99).abs() < 1e-12);
        assert!((out.probs()[1] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn moving_average_alpha_zero_returns_new() {
        let prev = SoftLabel::new(vec![0.7, 0.3]).unwrap();
        let new = SoftLabel::new(vec![0.1, 0.9]).unwrap();
        let out = moving_average_update(&prev, &new, 0.0).unwrap();
        assert_eq!(out, new);
    }

    #[test]
    fn hard_label_cases() {
        assert_eq!(hard_label(&SoftLabel::new(vec![0.1, 0.7, 0.2]).unwrap()), 1);
        assert_eq!(hard_label(&SoftLabel::new(vec![0.5, 0.5]).unwrap()), 0);
        assert_eq!(hard_label(&SoftLabel::one_hot(3, 6)), 3);
    }

    fn soft_label_strategy(classes: usize) -> impl Strategy<Value = SoftLabel> {
        proptest::collection::vec(0.01..1.0f64, classes)
            .prop_map(|raw| SoftLabel::renormalized(raw).unwrap())
    }

    proptest! {
        #[test]
        fn correction_stays_on_segment(
            noisy in soft_label_strategy(5),
            pred in soft_label_strategy(5),
            omega in 0.0..=1.0f64,
        ) {
            let out = weighted_correct(omega, &noisy, &pred).unwrap();
            for ((&o, &y), &p) in out.probs().iter().zip(noisy.probs()).zip(pred.probs()) {
                prop_assert!(o >= y.min(p) - 1e-12);
                prop_assert!(o <= y.max(p) + 1e-12);
            }
            let sum: f64 = out.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
        }

        #[test]
        fn moving_average_preserves_normalization(
            prev in soft_label_strategy(5),
            new in soft_label_strategy(5),
            alpha in 0.0..=1.0f64,
        ) {
            let out = moving_average_update(&prev, &new, alpha).unwrap();
            let sum: f64 = out.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
        }

        #[test]
        fn hard_label_invariant_under_positive_rescale(
            label in soft_label_strategy(6),
            scale in 0.1..10.0f64,
        ) {
            let rescaled = SoftLabel::renormalized(
                label.probs().iter().map(|p| p * scale).collect()
            ).unwrap();
            prop_assert_eq!(hard_label(&label), hard_label(&rescaled));
        }
    }
}
