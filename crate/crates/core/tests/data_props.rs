use std::collections::BTreeSet;

use fanc::data::{clamp_intervals, ingest_reader, split, BehaviourSequence, Interaction};
use fanc::training::forward_sequence;
use fanc::{Dims, FancModel, ModelConfig};
use proptest::prelude::*;

fn sequence_strategy() -> impl Strategy<Value = BehaviourSequence<f64>> {
    prop::collection::vec((0usize..6, 0.01f64..4.0), 2..10).prop_map(|raw| {
        let mut time = 0.0;
        let steps = raw
            .into_iter()
            .map(|(item, dt)| {
                time += dt;
                Interaction { item, time }
            })
            .collect();
        BehaviourSequence::new("s", steps, 6).unwrap()
    })
}

/// Random raw rows: `(user, item, whole seconds)`.
fn rows_strategy() -> impl Strategy<Value = Vec<(u8, u8, u32)>> {
    prop::collection::vec((0u8..5, 0u8..7, 0u32..5_000_000), 1..40)
}

fn to_csv(rows: &[(u8, u8, u32)], time_factor: u32) -> String {
    let mut s = String::from("sequence_id,item_id,timestamp\n");
    for (u, i, t) in rows {
        s += &format!("u{u},i{i},{}\n", t * time_factor);
    }
    s
}

proptest! {
    #[test]
    fn clamp_is_idempotent(s in sequence_strategy(), cap in 0.1f64..3.0) {
        let once = clamp_intervals(&s, cap).unwrap();
        let twice = clamp_intervals(&once, cap).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.intervals().iter().all(|&dt| dt > 0.0 && dt <= cap));
    }

    #[test]
    fn split_is_a_partition(n in 3usize..60, seed in any::<u64>()) {
        let seqs: Vec<BehaviourSequence<f64>> = (0..n)
            .map(|k| {
                let steps = vec![Interaction { item: 0, time: 0.0 }, Interaction { item: 1, time: 1.0 }];
                BehaviourSequence::new(format!("s{k}"), steps, 2).unwrap()
            })
            .collect();
        let s = split(seqs, (0.8, 0.1, 0.1), seed).unwrap();
        prop_assert!(!s.train.is_empty() && !s.valid.is_empty() && !s.test.is_empty());
        let ids: Vec<&str> = s.train.iter().chain(&s.valid).chain(&s.test).map(|x| x.id()).collect();
        let unique: BTreeSet<&str> = ids.iter().copied().collect();
        prop_assert_eq!(ids.len(), n);
        prop_assert_eq!(unique.len(), n);
    }

    #[test]
    fn ingested_sequences_satisfy_their_invariants(rows in rows_strategy(), max_len in 1usize..6) {
        let csv = to_csv(&rows, 1);
        let (catalog, seqs, report) = ingest_reader::<f64, _>(csv.as_bytes(), 604_800.0, max_len).unwrap();
        prop_assert_eq!(report.kept, seqs.len());
        prop_assert_eq!(
            report.sequences_seen,
            report.kept + report.dropped_duplicate_timestamps + report.dropped_too_short
        );
        let mut used = BTreeSet::new();
        for s in &seqs {
            prop_assert!(s.len() >= 2 && s.len() <= max_len + 1);
            prop_assert_eq!(s.steps()[0].time, 0.0);
            prop_assert!(s.intervals().iter().all(|&dt| dt > 0.0));
            used.extend(s.items());
        }
        // contiguous indices, each used by some kept sequence
        prop_assert_eq!(used, (0..catalog.len()).collect::<BTreeSet<_>>());
    }

    #[test]
    fn doubling_timestamps_and_unit_changes_nothing(rows in rows_strategy()) {
        let (c1, a, _) = ingest_reader::<f64, _>(to_csv(&rows, 1).as_bytes(), 604_800.0, 5).unwrap();
        let (c2, b, _) = ingest_reader::<f64, _>(to_csv(&rows, 2).as_bytes(), 1_209_600.0, 5).unwrap();
        prop_assert_eq!(&c1, &c2);
        prop_assert_eq!(&a, &b);
        if c1.len() >= 2 {
            let m = FancModel::<f64>::init(Dims { n_items: c1.len(), d_u: 3, d_c: 2 }, ModelConfig::default(), 1).unwrap();
            for (x, y) in a.iter().zip(&b) {
                let x = clamp_intervals(x, 1.5).unwrap();
                let y = clamp_intervals(y, 1.5).unwrap();
                prop_assert_eq!(forward_sequence(&m, &x).unwrap(), forward_sequence(&m, &y).unwrap());
            }
        }
    }
}
