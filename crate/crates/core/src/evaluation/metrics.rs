//! Recall@k and nDCG@k against the full catalog.

use std::io::Write;

use rayon::prelude::*;

use crate::data::BehaviourSequence;
use crate::error::{FancError, Result};
use crate::model::FancModel;
use crate::numerics::Scalar;
use crate::training::forward_sequence;

/// 1-based position of `target` in `ranked`.
fn rank_of(ranked: &[usize], target: usize) -> Option<usize> {
    ranked.iter().position(|&i| i == target).map(|p| p + 1)
}

/// 1 if `target` is among the first `k` entries of `ranked`, else 0.
pub fn recall_at_k(ranked: &[usize], target: usize, k: usize) -> f64 {
    match rank_of(ranked, target) {
        Some(r) if r <= k => 1.0,
        _ => 0.0,
    }
}

/// Binary-relevance nDCG with a single relevant item: `1 / log2(1 + rank)`
/// inside the top `k`, else 0.
pub fn ndcg_at_k(ranked: &[usize], target: usize, k: usize) -> f64 {
    match rank_of(ranked, target) {
        Some(r) if r <= k => 1.0 / ((1 + r) as f64).log2(),
        _ => 0.0,
    }
}

/// Anything that ranks the full catalog at every prediction step of a sequence.
pub trait NextItemRanker<T>: Sync {
    fn n_items(&self) -> usize;

    /// One ranking per prediction step (target `s_{j+1}` at step `j`).
    fn rank_steps(&self, sequence: &BehaviourSequence<T>) -> Result<Vec<Vec<usize>>>;
}

impl<T: Scalar> NextItemRanker<T> for FancModel<T> {
    fn n_items(&self) -> usize {
        self.dims().n_items
    }

    fn rank_steps(&self, sequence: &BehaviourSequence<T>) -> Result<Vec<Vec<usize>>> {
        Ok(forward_sequence(self, sequence)?
            .distributions
            .into_iter()
            .map(|d| d.ranked)
            .collect())
    }
}

/// Metrics pooled over every prediction step of every sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub k_list: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub n_predictions: usize,
    pub n_sequences: usize,
}

impl MetricsTable {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.k_list.iter().position(|&x| x == k).map(|i| self.recall[i])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.k_list.iter().position(|&x| x == k).map(|i| self.ndcg[i])
    }

    pub const CSV_HEADER: [&'static str; 6] = ["model", "k", "recall", "ndcg", "n_predictions", "n_sequences"];

    /// Appends this table's rows under `label`.
    pub fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>, label: &str) -> Result<()> {
        for (i, k) in self.k_list.iter().enumerate() {
            w.write_record([
                label,
                &k.to_string(),
                &format!("{:.6}", self.recall[i]),
                &format!("{:.6}", self.ndcg[i]),
                &self.n_predictions.to_string(),
                &self.n_sequences.to_string(),
            ])?;
        }
        Ok(())
    }
}

/// Writes several labelled tables to one CSV.
pub fn write_metrics_csv<W: Write>(out: W, tables: &[(&str, &MetricsTable)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MetricsTable::CSV_HEADER)?;
    for (label, t) in tables {
        t.write_csv_rows(&mut w, label)?;
    }
    w.flush()?;
    Ok(())
}

pub fn evaluate_ranker<T, R>(
    ranker: &R,
    sequences: &[BehaviourSequence<T>],
    k_list: &[usize],
) -> Result<MetricsTable>
where
    T: Scalar,
    R: NextItemRanker<T> + ?Sized,
{
    if sequences.is_empty() {
        return Err(FancError::Data("evaluation needs at least one sequence".into()));
    }
    let n = ranker.n_items();
    if let Some(&k) = k_list.iter().find(|&&k| k == 0 || k > n) {
        return Err(FancError::contract("evaluate", format!("k = {k} outside 1..={n}")));
    }
    // per-sequence sums, reduced in sequence order
    let per_seq: Vec<(Vec<f64>, Vec<f64>, usize)> = sequences
        .par_iter()
        .map(|s| {
            let ranks = ranker.rank_steps(s)?;
            let targets: Vec<usize> = s.items().skip(1).collect();
            let mut r = vec![0.0; k_list.len()];
            let mut g = vec![0.0; k_list.len()];
            for (ranked, &t) in ranks.iter().zip(&targets) {
                for (i, &k) in k_list.iter().enumerate() {
                    r[i] += recall_at_k(ranked, t, k);
                    g[i] += ndcg_at_k(ranked, t, k);
                }
            }
            Ok((r, g, targets.len()))
        })
        .collect::<Result<_>>()?;
    let mut recall = vec![0.0; k_list.len()];
    let mut ndcg = vec![0.0; k_list.len()];
    let mut count = 0;
    for (r, g, c) in per_seq {
        for i in 0..k_list.len() {
            recall[i] += r[i];
            ndcg[i] += g[i];
        }
        count += c;
    }
    let denom = count.max(1) as f64;
    Ok(MetricsTable {
        k_list: k_list.to_vec(),
        recall: recall.into_iter().map(|x| x / denom).collect(),
        ndcg: ndcg.into_iter().map(|x| x / denom).collect(),
        n_predictions: count,
        n_sequences: sequences.len(),
    })
}

pub fn evaluate<T: Scalar>(
    model: &FancModel<T>,
    sequences: &[BehaviourSequence<T>],
    k_list: &[usize],
) -> Result<MetricsTable> {
    evaluate_ranker(model, sequences, k_list)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_k(&[4, 0, 1], 4, 1), 1.0);
        assert_eq!(recall_at_k(&[4, 0, 1, 2], 2, 3), 0.0);
        assert_eq!(recall_at_k(&[3, 1, 2], 2, 2), 0.0);
        assert_eq!(recall_at_k(&[3, 1, 2], 2, 3), 1.0);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[1, 0], 1, 1), 1.0);
        assert_eq!(ndcg_at_k(&[1, 0, 2], 2, 2), 0.0);
        assert!((ndcg_at_k(&[1, 0, 2], 0, 2) - 0.630_929_753_571_457_4).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn metrics_are_monotone_and_ordered(
            perm in Just((0..12usize).collect::<Vec<_>>()).prop_shuffle(),
            target in 0usize..12,
        ) {
            let mut prev = (0.0, 0.0);
            for k in 1..=12 {
                let r = recall_at_k(&perm, target, k);
                let g = ndcg_at_k(&perm, target, k);
                prop_assert!(r >= prev.0 && g >= prev.1);
                prop_assert!(r >= g);
                prop_assert!((0.0..=1.0).contains(&g));
                prev = (r, g);
            }
        }
    }
}
