//! Class-partitioned FIFO momentum queue.
//!
//! One ring of capacity `D` per class, total capacity `D * C`. Entries are
//! unit-norm embedding vectors stored as plain constants: nothing ever
//! backpropagates into queue contents. Insertion is gated by the sample
//! weight: `omega = 1` inserts unconditionally (drawing nothing from the
//! RNG), otherwise the embedding is inserted with probability `omega`.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct MomentumQueue {
    capacity: usize,
    dim: usize,
    rings: Vec<VecDeque<Vec<f64>>>,
}

impl MomentumQueue {
    pub fn new(classes: usize, capacity: usize, dim: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "queue needs at least 2 classes, got {classes}"
            )));
        }
        if capacity == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "queue capacity and embedding dim must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            dim,
            rings: vec![VecDeque::with_capacity(capacity); classes],
        })
    }

    pub fn classes(&self) -> usize {
        self.rings.len()
    }

    pub fn capacity_per_class(&self) -> usize {
        self.capacity
    }

    pub fn total_capacity(&self) -> usize {
        self.capacity * self.rings.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.dim
    }

    pub fn occupancy(&self, class: usize) -> usize {
        self.rings.get(class).map_or(0, VecDeque::len)
    }

    pub fn occupancies(&self) -> Vec<usize> {
        self.rings.iter().map(VecDeque::len).collect()
    }

    pub fn total_len(&self) -> usize {
        self.rings.iter().map(VecDeque::len).sum()
    }

    /// Insert `embedding` into the ring of `class` with probability `omega`
    /// (unconditionally when `omega == 1`), evicting the oldest entry when
    /// the ring is full. Returns whether the insertion happened.
    pub fn weighted_update<R: Rng + ?Sized>(
        &mut self,
        class: usize,
        embedding: &[f64],
        omega: f64,
        rng: &mut R,
    ) -> Result<bool> {
        if class >= self.rings.len() {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for {} classes",
                self.rings.len()
            )));
        }
        if embedding.len() != self.dim {
            return Err(Error::ShapeMismatch {
                op: "queue::weighted_update",
                details: format!("embedding dim {} vs queue dim {}", embedding.len(), self.dim),
            });
        }
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::InvalidArgument(format!(
                "omega must be in [0, 1], got {omega}"
            )));
        }
        let norm: f64 = embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "queue entries must be unit-norm, got norm {norm}"
            )));
        }
        let insert = omega >= 1.0 || rng.random::<f64>() < omega;
        if insert {
            let ring = &mut self.rings[class];
            if ring.len() == self.capacity {
                ring.pop_front();
            }
            ring.push_back(embedding.to_vec());
        }
        Ok(insert)
    }

    /// Current contents of the class ring, oldest first.
    pub fn positives(&self, class: usize) -> Result<Vec<&[f64]>> {
        self.rings
            .get(class)
            .map(|ring| ring.iter().map(Vec::as_slice).collect())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "class {class} out of range for {} classes",
                    self.rings.len()
                ))
            })
    }

    /// Contents of every other ring, tagged with their class.
    pub fn negatives(&self, class: usize) -> Result<Vec<(usize, &[f64])>> {
        if class >= self.rings.len() {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for {} classes",
                self.rings.len()
            )));
        }
        Ok(self
            .rings
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != class)
            .flat_map(|(c, ring)| ring.iter().map(move |e| (c, e.as_slice())))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(dim: usize, axis: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[axis % dim] = 1.0;
        v
    }

    fn tagged_unit(dim: usize, tag: usize) -> Vec<f64> {
        // Distinct unit vectors: rotate within a 2D plane by the tag.
        let angle = tag as f64 * 0.37;
        let mut v = vec![0.0; dim];
        v[0] = angle.cos();
        v[1] = angle.sin();
        v
    }

    #[test]
    fn new_queue_is_empty_with_full_capacity() {
        let q = MomentumQueue::new(10, 32, 8).unwrap();
        assert_eq!(q.total_capacity(), 320);
        assert_eq!(q.capacity_per_class(), 32);
        for c in 0..10 {
            assert_eq!(q.occupancy(c), 0);
        }
    }

    #[test]
    fn omega_one_always_inserts_and_omega_zero_never() {
        let mut q = MomentumQueue::new(2, 4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert!(q.weighted_update(0, &unit(3, 0), 1.0, &mut rng).unwrap());
            assert!(!q.weighted_update(1, &unit(3, 1), 0.0, &mut rng).unwrap());
        }
        assert_eq!(q.occupancy(0), 4);
        assert_eq!(q.occupancy(1), 0);
    }

    #[test]
    fn insertion_frequency_tracks_omega() {
        let mut q = MomentumQueue::new(2, 4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trials = 10_000;
        let mut inserted = 0;
        for _ in 0..trials {
            if q.weighted_update(0, &unit(3, 0), 0.3, &mut rng).unwrap() {
                inserted += 1;
            }
        }
        let freq = inserted as f64 / trials as f64;
        assert!((freq - 0.3).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn fifo_keeps_the_most_recent_entries() {
        let capacity = 4;
        let mut q = MomentumQueue::new(2, capacity, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inserts = 7;
        for i in 0..inserts {
            q.weighted_update(0, &tagged_unit(4, i), 1.0, &mut rng).unwrap();
        }
        let got = q.positives(0).unwrap();
        assert_eq!(got.len(), capacity);
        for (slot, i) in (inserts - capacity..inserts).enumerate() {
            assert_eq!(got[slot], tagged_unit(4, i).as_slice());
        }
    }

    #[test]
    fn partial_ring_returns_in_insert_order() {
        let mut q = MomentumQueue::new(3, 8, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..3 {
            q.weighted_update(1, &tagged_unit(4, i), 1.0, &mut rng).unwrap();
        }
        let got = q.positives(1).unwrap();
        assert_eq!(got.len(), 3);
        for (slot, e) in got.iter().enumerate() {
            assert_eq!(*e, tagged_unit(4, slot).as_slice());
        }
    }

    #[test]
    fn negatives_are_everything_outside_the_class() {
        let mut q = MomentumQueue::new(3, 2, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for c in 0..3 {
            for i in 0..2 {
                q.weighted_update(c, &tagged_unit(4, 10 * c + i), 1.0, &mut rng).unwrap();
            }
        }
        let neg = q.negatives(0).unwrap();
        assert_eq!(neg.len(), 4); // D * (C - 1)
        assert!(neg.iter().all(|(c, _)| *c != 0));
        // Partition: positives + negatives cover everything, no overlap.
        let pos = q.positives(0).unwrap();
        assert_eq!(pos.len() + neg.len(), q.total_len());
        for p in &pos {
            assert!(!neg.iter().any(|(_, n)| n == p));
        }
        // Two classes reduce to "the other ring".
        let mut q2 = MomentumQueue::new(2, 2, 4).unwrap();
        q2.weighted_update(1, &tagged_unit(4, 5), 1.0, &mut rng).unwrap();
        let neg0 = q2.negatives(0).unwrap();
        let ring1 = q2.positives(1).unwrap();
        assert_eq!(neg0.len(), ring1.len());
        assert!(neg0.iter().zip(&ring1).all(|((c, n), p)| *c == 1 && n == p));
    }

    #[test]
    fn rejects_out_of_range_class_and_unnormalized_embeddings() {
        let mut q = MomentumQueue::new(2, 2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(q.weighted_update(2, &unit(3, 0), 1.0, &mut rng).is_err());
        assert!(q.weighted_update(0, &[0.5, 0.5, 0.5], 1.0, &mut rng).is_err());
        assert!(q.positives(7).is_err());
        assert!(q.negatives(7).is_err());
    }

    proptest! {
        /// FIFO replay oracle: ring contents always equal the last
        /// min(D, inserts) accepted entries, in order.
        #[test]
        fn fifo_matches_replay_oracle(
            capacity in 1usize..6,
            tags in proptest::collection::vec(0usize..50, 0..40),
        ) {
            let mut q = MomentumQueue::new(2, capacity, 4).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let mut log: Vec<Vec<f64>> = Vec::new();
            for tag in tags {
                let e = tagged_unit(4, tag);
                q.weighted_update(0, &e, 1.0, &mut rng).unwrap();
                log.push(e);
            }
            let expected: Vec<&[f64]> = log
                .iter()
                .skip(log.len().saturating_sub(capacity))
                .map(Vec::as_slice)
                .collect();
            prop_assert_eq!(q.positives(0).unwrap(), expected);
        }
    }
}
