//! Interaction data: the item catalog, time-stamped behaviour sequences,
//! ingestion from CSV, splitting, interval clamping and a synthetic generator.

mod ingest;
mod synth;

pub use ingest::{
    ingest_csv, ingest_reader, read_catalog, read_sequences, write_catalog, write_raw_csv,
    write_sequences, IngestReport, SECONDS_PER_QUARTER, SECONDS_PER_WEEK,
};
pub use synth::{generate_synthetic, SyntheticData, SyntheticWorld};

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FancError, Result};
use crate::numerics::Scalar;

/// Bijection between external item ids and dense indices `0..N`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ItemCatalog {
    ids: IndexSet<String>,
}

impl ItemCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `id`, assigning the next free index if unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        match self.ids.get_index_of(id) {
            Some(i) => i,
            None => self.ids.insert_full(id.to_owned()).0,
        }
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.get_index_of(id)
    }

    pub fn id_of(&self, index: usize) -> Option<&str> {
        self.ids.get_index(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }
}

impl FromIterator<String> for ItemCatalog {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        ItemCatalog {
            ids: iter.into_iter().collect(),
        }
    }
}

/// One interaction: an item index and a time in model units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interaction<T> {
    pub item: usize,
    pub time: T,
}

/// Ordered interactions of one user, with strictly increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct BehaviourSequence<T> {
    id: String,
    steps: Vec<Interaction<T>>,
}

impl<T: Scalar> BehaviourSequence<T> {
    pub fn new(id: impl Into<String>, steps: Vec<Interaction<T>>, n_items: usize) -> Result<Self> {
        let id = id.into();
        if steps.len() < 2 {
            return Err(FancError::Data(format!(
                "sequence `{id}` has {} interactions, need at least 2",
                steps.len()
            )));
        }
        for (k, s) in steps.iter().enumerate() {
            if s.item >= n_items {
                return Err(FancError::Data(format!(
                    "sequence `{id}`: item index {} out of range for {n_items} items",
                    s.item
                )));
            }
            if !s.time.is_finite() {
                return Err(FancError::Data(format!("sequence `{id}`: non-finite time at {k}")));
            }
            if k > 0 && !(s.time > steps[k - 1].time) {
                return Err(FancError::Data(format!(
                    "sequence `{id}`: times not strictly increasing at position {k}"
                )));
            }
        }
        Ok(BehaviourSequence { id, steps })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn steps(&self) -> &[Interaction<T>] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.item)
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        self.steps.iter().map(|s| s.time)
    }

    /// Consecutive time differences; one fewer than the number of steps.
    pub fn intervals(&self) -> Vec<T> {
        self.steps.windows(2).map(|w| w[1].time - w[0].time).collect()
    }

    /// Number of next-item predictions the sequence yields.
    pub fn n_predictions(&self) -> usize {
        self.steps.len() - 1
    }

    /// Rebuilds times from `intervals`, keeping the first time and the items.
    /// Times are copied while nothing has changed yet; after that, round-off
    /// is resolved downwards so no rebuilt interval exceeds its target.
    fn with_intervals(&self, intervals: &[T]) -> Self {
        let mut t = self.steps[0].time;
        let mut steps = Vec::with_capacity(self.steps.len());
        steps.push(self.steps[0]);
        for (w, &dt) in self.steps.windows(2).zip(intervals) {
            let (prev, s) = (t, &w[1]);
            if prev == w[0].time && dt == s.time - w[0].time {
                t = s.time;
            } else {
                t += dt;
                while t - prev > dt {
                    t -= T::epsilon() * t.abs().max(T::min_positive_value());
                }
            }
            steps.push(Interaction { item: s.item, time: t });
        }
        BehaviourSequence {
            id: self.id.clone(),
            steps,
        }
    }
}

/// Train/validation/test partition by whole sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: Vec<BehaviourSequence<T>>,
    pub valid: Vec<BehaviourSequence<T>>,
    pub test: Vec<BehaviourSequence<T>>,
    pub seed: u64,
}

/// Shuffles with `seed` and cuts into contiguous train/valid/test blocks.
/// Validation and test each receive at least one sequence.
pub fn split<T: Scalar>(
    sequences: Vec<BehaviourSequence<T>>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit<T>> {
    let n = sequences.len();
    if n < 3 {
        return Err(FancError::Data(format!("need at least 3 sequences to split, got {n}")));
    }
    let (r_train, r_valid, r_test) = ratios;
    if [r_train, r_valid, r_test].iter().any(|r| *r < 0.0)
        || ((r_train + r_valid + r_test) - 1.0).abs() > 1e-9
    {
        return Err(FancError::contract("split", format!("ratios {ratios:?} must sum to 1")));
    }
    let nf = n as f64;
    let n_valid = ((r_valid * nf).round() as usize).max(1);
    let n_test = ((r_test * nf).round() as usize).max(1);
    let n_valid = n_valid.min(n - 2);
    let n_test = n_test.min(n - 1 - n_valid);
    let n_train = n - n_valid - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<BehaviourSequence<T>>> = sequences.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| -> Vec<BehaviourSequence<T>> {
        idx.iter().map(|&i| slots[i].take().expect("index used once")).collect()
    };
    let train = take(&order[..n_train]);
    let valid = take(&order[n_train..n_train + n_valid]);
    let test = take(&order[n_train + n_valid..]);
    Ok(DatasetSplit {
        train,
        valid,
        test,
        seed,
    })
}

/// Caps every consecutive interval at `max_interval`; the first time is kept.
pub fn clamp_intervals<T: Scalar>(
    sequence: &BehaviourSequence<T>,
    max_interval: T,
) -> Result<BehaviourSequence<T>> {
    if !(max_interval > T::zero()) {
        return Err(FancError::contract("clamp_intervals", "max_interval must be positive"));
    }
    let capped: Vec<T> = sequence
        .intervals()
        .into_iter()
        .map(|dt| dt.min(max_interval))
        .collect();
    Ok(sequence.with_intervals(&capped))
}

/// Rounds every interval to the nearest positive multiple of `grid_step`
/// (at least one step, so times stay strictly increasing).
pub fn quantize_intervals<T: Scalar>(
    sequence: &BehaviourSequence<T>,
    grid_step: T,
) -> Result<BehaviourSequence<T>> {
    if !(grid_step > T::zero()) {
        return Err(FancError::contract("quantize_intervals", "grid_step must be positive"));
    }
    let q: Vec<T> = sequence
        .intervals()
        .into_iter()
        .map(|dt| (dt / grid_step).round().max(T::one()) * grid_step)
        .collect();
    Ok(sequence.with_intervals(&q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(id: &str, times: &[f64]) -> BehaviourSequence<f64> {
        let steps = times
            .iter()
            .enumerate()
            .map(|(i, &t)| Interaction { item: i % 3, time: t })
            .collect();
        BehaviourSequence::new(id, steps, 3).unwrap()
    }

    #[test]
    fn sequence_invariants_are_enforced() {
        let one = vec![Interaction { item: 0, time: 0.0 }];
        assert!(BehaviourSequence::new("a", one, 3).is_err());
        let tied = vec![Interaction { item: 0, time: 0.0 }, Interaction { item: 1, time: 0.0 }];
        assert!(BehaviourSequence::new("a", tied, 3).is_err());
        let bad_item = vec![Interaction { item: 0, time: 0.0 }, Interaction { item: 3, time: 1.0 }];
        assert!(BehaviourSequence::new("a", bad_item, 3).is_err());
    }

    #[test]
    fn clamp_examples() {
        let s = seq("a", &[0.0, 0.5, 1.4]);
        assert_eq!(clamp_intervals(&s, 1.5).unwrap(), s);

        let s = seq("a", &[0.0, 2.0, 2.3]);
        let c = clamp_intervals(&s, 1.5).unwrap();
        let iv = c.intervals();
        assert_eq!(iv[0], 1.5);
        assert!((iv[1] - 0.3).abs() < 1e-12);

        let s = seq("a", &[0.0, 4.0, 8.0]);
        let c: Vec<f64> = clamp_intervals(&s, 1.5).unwrap().times().collect();
        assert_eq!(c, vec![0.0, 1.5, 3.0]);
    }

    #[test]
    fn clamp_keeps_first_time() {
        let s = seq("a", &[10.0, 20.0]);
        let c: Vec<f64> = clamp_intervals(&s, 1.5).unwrap().times().collect();
        assert_eq!(c, vec![10.0, 11.5]);
    }

    #[test]
    fn split_sizes_follow_ratios() {
        let seqs: Vec<_> = (0..10).map(|i| seq(&format!("s{i}"), &[0.0, 1.0])).collect();
        let sp = split(seqs, (0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!((sp.train.len(), sp.valid.len(), sp.test.len()), (8, 1, 1));
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let make = || (0..100).map(|i| seq(&format!("s{i}"), &[0.0, 1.0])).collect::<Vec<_>>();
        let a = split(make(), (0.8, 0.1, 0.1), 1).unwrap();
        let b = split(make(), (0.8, 0.1, 0.1), 1).unwrap();
        let c = split(make(), (0.8, 0.1, 0.1), 2).unwrap();
        assert_eq!(a, b);
        let ids = |s: &DatasetSplit<f64>| s.train.iter().map(|x| x.id().to_owned()).collect::<Vec<_>>();
        assert_ne!(ids(&a), ids(&c));
    }

    #[test]
    fn split_needs_three_sequences() {
        let seqs: Vec<_> = (0..2).map(|i| seq(&format!("s{i}"), &[0.0, 1.0])).collect();
        assert!(split(seqs, (0.8, 0.1, 0.1), 0).is_err());
        let seqs: Vec<_> = (0..3).map(|i| seq(&format!("s{i}"), &[0.0, 1.0])).collect();
        let sp = split(seqs, (0.8, 0.1, 0.1), 0).unwrap();
        assert_eq!((sp.train.len(), sp.valid.len(), sp.test.len()), (1, 1, 1));
    }

    #[test]
    fn quantize_rounds_to_grid_with_one_step_minimum() {
        let s = seq("a", &[0.0, 0.04, 0.37, 1.5]);
        let q = quantize_intervals(&s, 0.1).unwrap();
        let iv = q.intervals();
        assert!((iv[0] - 0.1).abs() < 1e-12);
        assert!((iv[1] - 0.3).abs() < 1e-12);
        assert!((iv[2] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn catalog_is_a_bijection() {
        let mut c = ItemCatalog::new();
        assert_eq!(c.intern("x"), 0);
        assert_eq!(c.intern("y"), 1);
        assert_eq!(c.intern("x"), 0);
        assert_eq!(c.id_of(1), Some("y"));
        assert_eq!(c.index_of("z"), None);
        assert_eq!(c.len(), 2);
    }
}
