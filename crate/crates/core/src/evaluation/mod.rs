//! Ranking metrics, baselines and diagnostic reports.

pub mod analysis;
pub mod baselines;
pub mod metrics;

pub use analysis::{
    pleasure_reality_report, whatif_sweep, write_pleasure_reality_csv, PleasureRealityRow, WhatIfRow,
    WhatIfTable,
};
pub use baselines::{fmc_baseline, popularity_baseline, MarkovChain, Popularity};
pub use metrics::{
    evaluate, evaluate_ranker, ndcg_at_k, recall_at_k, write_metrics_csv, MetricsTable, NextItemRanker,
};
