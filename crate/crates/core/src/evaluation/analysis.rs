//! What-if sweeps over the next consumption time and the per-sequence
//! pleasure/reality report.

use std::io::Write;

use rayon::prelude::*;

use crate::data::{BehaviourSequence, ItemCatalog};
use crate::decision::rank_descending;
use crate::error::{FancError, Result};
use crate::model::FancModel;
use crate::numerics::{Scalar, Tape};
use crate::training::forward::Cell;
use crate::training::forward_sequence;

#[derive(Clone, Debug, PartialEq)]
pub struct WhatIfRow<T> {
    pub delta_t: T,
    pub top_k: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WhatIfTable<T> {
    pub sequence_id: String,
    pub rows: Vec<WhatIfRow<T>>,
}

fn label(catalog: Option<&ItemCatalog>, item: usize) -> String {
    catalog
        .and_then(|c| c.id_of(item))
        .map_or_else(|| item.to_string(), str::to_owned)
}

impl<T: Scalar> WhatIfTable<T> {
    pub fn write_csv<W: Write>(&self, out: W, catalog: Option<&ItemCatalog>) -> Result<()> {
        let k = self.rows.first().map_or(0, |r| r.top_k.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sequence_id".to_string(), "delta_t".to_string()];
        header.extend((1..=k).map(|r| format!("rank_{r}")));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![self.sequence_id.clone(), row.delta_t.to_f64_lossy().to_string()];
            rec.extend(row.top_k.iter().map(|&i| label(catalog, i)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Column-aligned plain text.
    pub fn to_text(&self, catalog: Option<&ItemCatalog>) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut v = vec![format!("{:.4}", r.delta_t.to_f64_lossy())];
                v.extend(r.top_k.iter().map(|&i| label(catalog, i)));
                v
            })
            .collect();
        let k = cells.first().map_or(0, |c| c.len() - 1);
        let mut header = vec!["delta_t".to_string()];
        header.extend((1..=k).map(|r| format!("#{r}")));
        let mut widths: Vec<usize> = header.iter().map(String::len).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |row: &[String]| {
            row.iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = format!("sequence {}\n{}\n", self.sequence_id, line(&header));
        for row in &cells {
            out += &line(row);
            out.push('\n');
        }
        out
    }
}

/// Top-k recommendations if the next interaction happened `delta_t` after
/// the last consumed item, for each `delta_t`. Everything up to the last
/// shift is computed once and shared.
pub fn whatif_sweep<T: Scalar>(
    model: &FancModel<T>,
    sequence: &BehaviourSequence<T>,
    delta_ts: &[T],
    k: usize,
) -> Result<WhatIfTable<T>> {
    let n = model.dims().n_items;
    if k == 0 || k > n {
        return Err(FancError::contract("whatif_sweep", format!("k = {k} outside 1..={n}")));
    }
    let pad = model.config.pad;
    if let Some(bad) = delta_ts.iter().find(|&&dt| !(dt > T::zero()) || dt > pad) {
        return Err(FancError::contract("whatif_sweep", format!("delta_t {bad} outside (0, {pad}]")));
    }
    let mut tape = Tape::new();
    let vars = model.params.register(&mut tape, &model.config);
    let mut cell = Cell {
        tape: &mut tape,
        vars: &vars,
        config: &model.config,
    };
    let dims = model.dims();
    let steps = sequence.steps();
    let (mut c, mut h) = cell.initial(dims.d_c, dims.d_u);
    let last = steps.len() - 2;
    for j in 0..last {
        let (c_new, h_shift, _) = cell.consume(c, h, steps[j].item)?;
        h = cell.float(h_shift, steps[j + 1].time - steps[j].time)?;
        c = c_new;
    }
    let (c_last, h_shift, _) = cell.consume(c, h, steps[last].item)?;
    let mut rows = Vec::with_capacity(delta_ts.len());
    for &dt in delta_ts {
        let h_new = cell.float(h_shift, dt)?;
        let (_, _, logits) = cell.decide(c_last, h_new)?;
        let mut ranked = rank_descending(cell.tape.values(logits));
        ranked.truncate(k);
        rows.push(WhatIfRow { delta_t: dt, top_k: ranked });
    }
    Ok(WhatIfTable {
        sequence_id: sequence.id().to_owned(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PleasureRealityRow<T> {
    pub sequence_id: String,
    /// Mean over prediction steps of `‖u after floating − u after the shift‖`.
    pub displacement: T,
    /// Decision gate averaged over components and prediction steps.
    pub delta_bar: T,
}

pub fn pleasure_reality_report<T: Scalar>(
    model: &FancModel<T>,
    sequences: &[BehaviourSequence<T>],
) -> Result<Vec<PleasureRealityRow<T>>> {
    if sequences.is_empty() {
        return Err(FancError::Data("report needs at least one sequence".into()));
    }
    sequences
        .par_iter()
        .map(|s| {
            let out = forward_sequence(model, s)?;
            let n = T::from_usize_lossy(out.diagnostics.len());
            let disp: T = out.diagnostics.iter().map(|d| d.displacement).sum();
            let delta: T = out.diagnostics.iter().map(|d| d.delta_mean).sum();
            Ok(PleasureRealityRow {
                sequence_id: s.id().to_owned(),
                displacement: disp / n,
                delta_bar: delta / n,
            })
        })
        .collect()
}

pub fn write_pleasure_reality_csv<T: Scalar, W: Write>(out: W, rows: &[PleasureRealityRow<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sequence_id", "displacement", "delta_bar"])?;
    for r in rows {
        w.write_record([
            r.sequence_id.as_str(),
            &r.displacement.to_f64_lossy().to_string(),
            &r.delta_bar.to_f64_lossy().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
