//! Popularity and first-order Markov chain baselines.

use std::collections::BTreeMap;

use crate::data::BehaviourSequence;
use crate::decision::rank_descending;
use crate::error::{FancError, Result};
use crate::evaluation::metrics::NextItemRanker;
use crate::numerics::Scalar;

/// Items by descending interaction count in the training set, ties by index.
#[derive(Clone, Debug, PartialEq)]
pub struct Popularity {
    pub counts: Vec<u64>,
    pub ranked: Vec<usize>,
}

pub fn popularity_baseline<T: Scalar>(train: &[BehaviourSequence<T>], n_items: usize) -> Result<Popularity> {
    if train.is_empty() {
        return Err(FancError::Data("popularity baseline needs training sequences".into()));
    }
    let mut counts = vec![0u64; n_items];
    for s in train {
        for i in s.items() {
            *counts.get_mut(i).ok_or_else(|| FancError::Data(format!("item {i} outside catalog")))? += 1;
        }
    }
    Ok(Popularity::from_counts(counts))
}

impl Popularity {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let scores: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        Popularity {
            ranked: rank_descending(&scores),
            counts,
        }
    }
}

impl<T: Scalar> NextItemRanker<T> for Popularity {
    fn n_items(&self) -> usize {
        self.counts.len()
    }

    fn rank_steps(&self, sequence: &BehaviourSequence<T>) -> Result<Vec<Vec<usize>>> {
        Ok(vec![self.ranked.clone(); sequence.n_predictions()])
    }
}

/// First-order transition counts with additive smoothing `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChain {
    n_items: usize,
    alpha: f64,
    transitions: Vec<BTreeMap<usize, u64>>,
    totals: Vec<u64>,
}

pub fn fmc_baseline<T: Scalar>(train: &[BehaviourSequence<T>], n_items: usize, alpha: f64) -> Result<MarkovChain> {
    if !(alpha >= 0.0) {
        return Err(FancError::contract("fmc_baseline", "alpha must be non-negative"));
    }
    let mut transitions = vec![BTreeMap::new(); n_items];
    let mut totals = vec![0u64; n_items];
    for s in train {
        for w in s.steps().windows(2) {
            let (a, b) = (w[0].item, w[1].item);
            if a >= n_items || b >= n_items {
                return Err(FancError::Data(format!("transition {a}->{b} outside catalog")));
            }
            *transitions[a].entry(b).or_insert(0) += 1;
            totals[a] += 1;
        }
    }
    Ok(MarkovChain {
        n_items,
        alpha,
        transitions,
        totals,
    })
}

impl MarkovChain {
    pub fn from_pairs(pairs: &[(usize, usize)], n_items: usize, alpha: f64) -> Self {
        let mut transitions = vec![BTreeMap::new(); n_items];
        let mut totals = vec![0u64; n_items];
        for &(a, b) in pairs {
            *transitions[a].entry(b).or_insert(0) += 1;
            totals[a] += 1;
        }
        MarkovChain {
            n_items,
            alpha,
            transitions,
            totals,
        }
    }

    /// `P(b | a) = (C[a→b] + α) / (Σ C[a→·] + α N)`; uniform when the
    /// denominator vanishes.
    pub fn probabilities(&self, last: usize) -> Vec<f64> {
        let n = self.n_items as f64;
        let total = self.totals.get(last).copied().unwrap_or(0) as f64 + self.alpha * n;
        if total == 0.0 {
            return vec![1.0 / n; self.n_items];
        }
        let row = self.transitions.get(last);
        (0..self.n_items)
            .map(|b| {
                let c = row.and_then(|r| r.get(&b)).copied().unwrap_or(0) as f64;
                (c + self.alpha) / total
            })
            .collect()
    }

    pub fn rank(&self, last: usize) -> Vec<usize> {
        rank_descending(&self.probabilities(last))
    }
}

impl<T: Scalar> NextItemRanker<T> for MarkovChain {
    fn n_items(&self) -> usize {
        self.n_items
    }

    fn rank_steps(&self, sequence: &BehaviourSequence<T>) -> Result<Vec<Vec<usize>>> {
        let items: Vec<usize> = sequence.items().collect();
        Ok(items[..items.len() - 1].iter().map(|&a| self.rank(a)).collect())
    }
}
