use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use super::{BehaviourSequence, Interaction, ItemCatalog};
use crate::error::{FancError, Result};
use crate::numerics::Scalar;

/// One week in seconds.
pub const SECONDS_PER_WEEK: f64 = 604_800.0;
/// A quarter of a mean Julian year (365.25 / 4 days) in seconds.
pub const SECONDS_PER_QUARTER: f64 = 7_889_400.0;

const RAW_HEADER: [&str; 3] = ["sequence_id", "item_id", "timestamp"];

/// Counts gathered while ingesting a raw interaction file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows: usize,
    pub sequences_seen: usize,
    /// Sequences discarded because two interactions share a timestamp.
    pub dropped_duplicate_timestamps: usize,
    /// Sequences discarded because fewer than two interactions remained.
    pub dropped_too_short: usize,
    pub kept: usize,
    pub items: usize,
}

impl std::fmt::Display for IngestReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "rows={} sequences={} kept={} dropped_duplicate_timestamps={} dropped_too_short={} items={}",
            self.rows,
            self.sequences_seen,
            self.kept,
            self.dropped_duplicate_timestamps,
            self.dropped_too_short,
            self.items
        )
    }
}

/// Reads `sequence_id,item_id,timestamp` rows (timestamps in seconds).
///
/// Each sequence is sorted by timestamp; sequences with a repeated timestamp
/// are dropped, the most recent `max_len + 1` interactions are kept, and times
/// are re-expressed in units of `seconds_per_unit` relative to the first kept
/// interaction.
pub fn ingest_csv<T: Scalar>(
    path: impl AsRef<Path>,
    seconds_per_unit: f64,
    max_len: usize,
) -> Result<(ItemCatalog, Vec<BehaviourSequence<T>>, IngestReport)> {
    ingest_reader(File::open(path)?, seconds_per_unit, max_len)
}

pub fn ingest_reader<T: Scalar, R: Read>(
    reader: R,
    seconds_per_unit: f64,
    max_len: usize,
) -> Result<(ItemCatalog, Vec<BehaviourSequence<T>>, IngestReport)> {
    if !(seconds_per_unit > 0.0) || max_len == 0 {
        return Err(FancError::contract(
            "ingest_csv",
            "seconds_per_unit and max_len must be positive",
        ));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != RAW_HEADER {
        return Err(FancError::Parse {
            line: 1,
            msg: format!("expected header `{}`, found `{}`", RAW_HEADER.join(","), header.join(",")),
        });
    }

    let mut report = IngestReport::default();
    let mut groups: IndexMap<String, Vec<(String, f64)>> = IndexMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            FancError::Parse {
                line,
                msg: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 3 {
            return Err(FancError::Parse {
                line,
                msg: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let ts: f64 = rec[2].parse().map_err(|_| FancError::Parse {
            line,
            msg: format!("timestamp `{}` is not a number", &rec[2]),
        })?;
        if !ts.is_finite() || rec[0].is_empty() || rec[1].is_empty() {
            return Err(FancError::Parse {
                line,
                msg: "empty id or non-finite timestamp".into(),
            });
        }
        report.rows += 1;
        groups
            .entry(rec[0].to_owned())
            .or_default()
            .push((rec[1].to_owned(), ts));
    }
    report.sequences_seen = groups.len();

    let mut surviving = Vec::new();
    for (id, mut rows) in groups {
        rows.sort_by(|a, b| a.1.total_cmp(&b.1));
        if rows.windows(2).any(|w| w[0].1 == w[1].1) {
            report.dropped_duplicate_timestamps += 1;
            continue;
        }
        let start = rows.len().saturating_sub(max_len + 1);
        let window = rows.split_off(start);
        if window.len() < 2 {
            report.dropped_too_short += 1;
            continue;
        }
        surviving.push((id, window));
    }

    let mut catalog = ItemCatalog::new();
    for (_, rows) in &surviving {
        for (item, _) in rows {
            catalog.intern(item);
        }
    }
    let n_items = catalog.len();
    let sequences = surviving
        .into_iter()
        .map(|(id, rows)| {
            let t0 = rows[0].1;
            let steps = rows
                .iter()
                .map(|(item, ts)| Interaction {
                    item: catalog.index_of(item).expect("interned above"),
                    time: T::lit((ts - t0) / seconds_per_unit),
                })
                .collect();
            BehaviourSequence::new(id, steps, n_items)
        })
        .collect::<Result<Vec<_>>>()?;
    report.kept = sequences.len();
    report.items = n_items;
    Ok((catalog, sequences, report))
}

/// Writes sequences in the raw ingestion format, converting times back to seconds.
pub fn write_raw_csv<T: Scalar>(
    path: impl AsRef<Path>,
    catalog: &ItemCatalog,
    sequences: &[BehaviourSequence<T>],
    seconds_per_unit: f64,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RAW_HEADER)?;
    for s in sequences {
        for step in s.steps() {
            let id = catalog
                .id_of(step.item)
                .ok_or_else(|| FancError::Data(format!("item {} not in catalog", step.item)))?;
            let ts = step.time.to_f64_lossy() * seconds_per_unit;
            w.write_record([s.id(), id, &ts.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `index,item_id` listing of a catalog.
pub fn write_catalog(path: impl AsRef<Path>, catalog: &ItemCatalog) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "item_id"])?;
    for (i, id) in catalog.ids().enumerate() {
        w.write_record([i.to_string().as_str(), id])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_catalog(path: impl AsRef<Path>) -> Result<ItemCatalog> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut ids = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let idx: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| FancError::Parse {
            line,
            msg: "bad item index".into(),
        })?;
        if idx != k {
            return Err(FancError::Parse {
                line,
                msg: format!("item indices must be contiguous, expected {k} got {idx}"),
            });
        }
        ids.push(rec.get(1).unwrap_or_default().to_owned());
    }
    let catalog: ItemCatalog = ids.iter().cloned().collect();
    if catalog.len() != ids.len() {
        return Err(FancError::Data("duplicate item id in catalog".into()));
    }
    Ok(catalog)
}

/// Writes prepared sequences as `sequence_id,item_index,time` (times in model units).
pub fn write_sequences<T: Scalar>(
    mut out: impl Write,
    sequences: &[BehaviourSequence<T>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["sequence_id", "item_index", "time"])?;
    for s in sequences {
        for step in s.steps() {
            w.write_record([
                s.id(),
                &step.item.to_string(),
                &step.time.to_f64_lossy().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_sequences<T: Scalar>(
    path: impl AsRef<Path>,
    n_items: usize,
) -> Result<Vec<BehaviourSequence<T>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut groups: IndexMap<String, Vec<Interaction<T>>> = IndexMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |what: &str| FancError::Parse {
            line,
            msg: format!("bad {what}"),
        };
        let item: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("item_index"))?;
        let time: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("time"))?;
        groups
            .entry(rec.get(0).unwrap_or_default().to_owned())
            .or_default()
            .push(Interaction {
                item,
                time: T::lit(time),
            });
    }
    groups
        .into_iter()
        .map(|(id, steps)| BehaviourSequence::new(id, steps, n_items))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str, spu: f64, max_len: usize) -> Result<(ItemCatalog, Vec<BehaviourSequence<f64>>, IngestReport)> {
        ingest_reader(text.as_bytes(), spu, max_len)
    }

    #[test]
    fn single_sequence_starts_at_zero() {
        let (cat, seqs, rep) = ingest("sequence_id,item_id,timestamp\nu,a,100\nu,b,160\nu,c,220\n", 60.0, 10).unwrap();
        assert_eq!(seqs.len(), 1);
        assert_eq!(cat.len(), 3);
        let t: Vec<f64> = seqs[0].times().collect();
        assert_eq!(t, vec![0.0, 1.0, 2.0]);
        assert_eq!(rep.kept, 1);
    }

    #[test]
    fn duplicate_timestamp_drops_sequence() {
        let text = "sequence_id,item_id,timestamp\nu,a,1\nu,b,1\nu,c,5\nv,a,1\nv,b,2\n";
        let (_, seqs, rep) = ingest(text, 1.0, 10).unwrap();
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].id(), "v");
        assert_eq!(rep.dropped_duplicate_timestamps, 1);
    }

    #[test]
    fn week_units() {
        let text = "sequence_id,item_id,timestamp\nu,a,0\nu,b,604800\n";
        let (_, seqs, _) = ingest(text, SECONDS_PER_WEEK, 10).unwrap();
        let t: Vec<f64> = seqs[0].times().collect();
        assert_eq!(t, vec![0.0, 1.0]);
    }

    #[test]
    fn rows_are_sorted_and_windowed_to_most_recent() {
        let text = "sequence_id,item_id,timestamp\nu,d,4\nu,a,1\nu,c,3\nu,b,2\n";
        let (cat, seqs, _) = ingest(text, 1.0, 2).unwrap();
        let items: Vec<&str> = seqs[0].items().map(|i| cat.id_of(i).unwrap()).collect();
        assert_eq!(items, vec!["b", "c", "d"]);
        assert_eq!(seqs[0].times().next(), Some(0.0));
        // item `a` fell outside the window, so it is not catalogued
        assert_eq!(cat.index_of("a"), None);
    }

    #[test]
    fn short_sequences_are_counted() {
        let text = "sequence_id,item_id,timestamp\nu,a,1\nv,a,1\nv,b,2\n";
        let (_, seqs, rep) = ingest(text, 1.0, 5).unwrap();
        assert_eq!(seqs.len(), 1);
        assert_eq!(rep.dropped_too_short, 1);
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "sequence_id,item_id,timestamp\nu,a,1\nu,b,oops\n";
        match ingest(text, 1.0, 5) {
            Err(FancError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "sequence_id,item_id,timestamp\nu,a,1\nu,b\n";
        assert!(matches!(ingest(text, 1.0, 5), Err(FancError::Parse { line: 3, .. })));
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(matches!(ingest("user,item,ts\nu,a,1\n", 1.0, 5), Err(FancError::Parse { line: 1, .. })));
    }

    #[test]
    fn prepared_sequences_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let text = "sequence_id,item_id,timestamp\nu,a,0\nu,b,7\nu,c,9.5\nv,c,3\nv,a,4\n";
        let (cat, seqs, _) = ingest(text, 7.0, 5).unwrap();
        let p = dir.path().join("seqs.csv");
        write_sequences(File::create(&p).unwrap(), &seqs).unwrap();
        let back: Vec<BehaviourSequence<f64>> = read_sequences(&p, cat.len()).unwrap();
        assert_eq!(back, seqs);
        let cp = dir.path().join("items.csv");
        write_catalog(&cp, &cat).unwrap();
        assert_eq!(read_catalog(&cp).unwrap(), cat);
    }
}
