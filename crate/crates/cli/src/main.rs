mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Arg, ArgMatches, Command};
use fanc::data::{
    clamp_intervals, generate_synthetic, ingest_csv, read_catalog, read_sequences, split, write_catalog,
    write_raw_csv, write_sequences, BehaviourSequence, DatasetSplit, ItemCatalog,
};
use fanc::evaluation::{
    evaluate_ranker, fmc_baseline, pleasure_reality_report, popularity_baseline, whatif_sweep,
    write_metrics_csv, write_pleasure_reality_csv, MetricsTable,
};
use fanc::training::{
    load_checkpoint, model_gradient_check, prepare_for_model, save_checkpoint, tiny_instance, train,
};
use fanc::{FancError, FancModel, Model};

use config::{RunConfig, UsageError, KEYS};

/// Failed gradient check or similar verdict. Maps to exit code 3.
#[derive(Debug)]
struct NumericFailure(String);

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

const SUBCOMMANDS: [(&str, &str); 8] = [
    ("synth", "write a synthetic interaction CSV to `data`"),
    ("prep", "ingest `data`, split 80/10/10, cap intervals, write files to `prep_dir`"),
    ("train", "train on the prepared split; write the checkpoint and history.csv"),
    ("eval", "score `models` on `split`; write metrics.csv"),
    ("baseline", "score POP and FMC on `split`; write baseline_metrics.csv"),
    ("whatif", "top-k recommendations for one sequence over several next intervals"),
    ("analyze", "per-sequence displacement and decision gate; write pleasure_reality.csv"),
    ("gradcheck", "finite-difference check of every parameter group on a tiny instance"),
];

fn cli() -> Command {
    let keys: Vec<Arg> = KEYS
        .iter()
        .map(|k| {
            let default = if k.default.is_empty() { "\"\"" } else { k.default };
            Arg::new(k.name)
                .long(k.name)
                .value_name("VALUE")
                .global(true)
                .help(format!("{} [default: {default}]", k.help))
        })
        .collect();
    Command::new("fanc")
        .about("Time-aware next-item recommender driven by a recurrent cell and a gravity field")
        .after_help("Settings resolve as defaults < `--config` file < flags. File lines are `key = value`.")
        .subcommand_required(true)
        .args(keys)
        .subcommands(SUBCOMMANDS.iter().map(|(name, about)| Command::new(*name).about(*about)))
}

fn resolve(matches: &ArgMatches) -> anyhow::Result<RunConfig> {
    let mut flags = BTreeMap::new();
    for k in KEYS.iter().filter(|k| k.name != "config") {
        if let Some(v) = matches.get_one::<String>(k.name) {
            flags.insert(k.name.to_owned(), v.clone());
        }
    }
    let file = matches.get_one::<String>("config").map(PathBuf::from);
    Ok(RunConfig::resolve(file.as_deref(), flags)?)
}

fn create_file(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

const SPLIT_NAMES: [&str; 3] = ["train", "valid", "test"];

struct Prepared {
    catalog: ItemCatalog,
    split: DatasetSplit<f64>,
}

impl Prepared {
    fn load(cfg: &RunConfig) -> anyhow::Result<Self> {
        let dir = &cfg.prep_dir;
        let catalog = read_catalog(dir.join("catalog.csv"))
            .with_context(|| format!("reading the catalog in {} (run `prep` first)", dir.display()))?;
        let mut parts = SPLIT_NAMES.iter().map(|name| {
            let p = dir.join(format!("{name}.csv"));
            read_sequences::<f64>(&p, catalog.len()).with_context(|| format!("reading {}", p.display()))
        });
        let mut next = || parts.next().expect("three splits");
        let (train, valid, test) = (next()?, next()?, next()?);
        Ok(Prepared {
            catalog,
            split: DatasetSplit {
                train,
                valid,
                test,
                seed: cfg.seed,
            },
        })
    }

    fn part(&self, name: &str) -> &[BehaviourSequence<f64>] {
        match name {
            "train" => &self.split.train,
            "valid" => &self.split.valid,
            _ => &self.split.test,
        }
    }
}

fn load_model(cfg: &RunConfig, n_items: usize) -> anyhow::Result<Model> {
    let ckpt = load_checkpoint::<f64>(&cfg.checkpoint)
        .with_context(|| format!("loading checkpoint {}", cfg.checkpoint.display()))?;
    let model = ckpt.model;
    if model.dims().n_items != n_items {
        return Err(FancError::Data(format!(
            "checkpoint has {} items but the catalog has {n_items}",
            model.dims().n_items
        ))
        .into());
    }
    Ok(model)
}

fn synth(cfg: &RunConfig) -> anyhow::Result<()> {
    let data = generate_synthetic::<f64>(cfg.n_items, cfg.n_sequences, cfg.max_len, cfg.seed)?;
    create_file(&cfg.data)?;
    write_raw_csv(&cfg.data, &data.catalog, &data.sequences, cfg.seconds_per_unit)?;
    println!(
        "wrote {} sequences over {} items to {}",
        data.sequences.len(),
        data.catalog.len(),
        cfg.data.display()
    );
    Ok(())
}

fn prep(cfg: &RunConfig) -> anyhow::Result<()> {
    let (catalog, seqs, report) = ingest_csv::<f64>(&cfg.data, cfg.seconds_per_unit, cfg.max_len)
        .with_context(|| format!("ingesting {}", cfg.data.display()))?;
    println!("{report}");
    println!("dropped {} sequence(s) with duplicated timestamps", report.dropped_duplicate_timestamps);
    let capped = seqs
        .iter()
        .map(|s| clamp_intervals(s, cfg.model.pad))
        .collect::<fanc::Result<Vec<_>>>()?;
    let s = split(capped, (0.8, 0.1, 0.1), cfg.seed)?;
    fs::create_dir_all(&cfg.prep_dir).with_context(|| format!("creating {}", cfg.prep_dir.display()))?;
    write_catalog(cfg.prep_dir.join("catalog.csv"), &catalog)?;
    for (name, part) in SPLIT_NAMES.iter().zip([&s.train, &s.valid, &s.test]) {
        let mut w = create_file(&cfg.prep_dir.join(format!("{name}.csv")))?;
        write_sequences(&mut w, part)?;
        w.flush()?;
    }
    println!(
        "split train={} valid={} test={} into {}",
        s.train.len(),
        s.valid.len(),
        s.test.len(),
        cfg.prep_dir.display()
    );
    Ok(())
}

fn train_cmd(cfg: &RunConfig) -> anyhow::Result<()> {
    let prepared = Prepared::load(cfg)?;
    let model = FancModel::init(cfg.dims(prepared.catalog.len()), cfg.model, cfg.seed)?;
    let outcome = train(model, &prepared.split, &cfg.train)?;
    create_file(&cfg.checkpoint)?;
    save_checkpoint(&outcome.checkpoint(), &cfg.checkpoint)?;
    let mut w = csv::Writer::from_writer(create_file(&cfg.out_dir.join("history.csv"))?);
    w.write_record(["epoch", "learning_rate", "train_loss", "valid_loss"])?;
    for r in &outcome.history {
        w.write_record([
            r.epoch.to_string(),
            r.learning_rate.to_string(),
            r.train_loss.to_string(),
            r.valid_loss.to_string(),
        ])?;
    }
    w.flush()?;
    println!(
        "{} epochs{}, best validation loss {:.6} at epoch {}; checkpoint {}",
        outcome.history.len(),
        if outcome.stopped_early { " (early stop)" } else { "" },
        outcome.best_valid_loss,
        outcome.best_epoch,
        cfg.checkpoint.display()
    );
    Ok(())
}

fn print_tables(tables: &[(&str, &MetricsTable)]) {
    for (label, t) in tables {
        let cells: Vec<String> = t
            .k_list
            .iter()
            .enumerate()
            .map(|(i, k)| format!("R@{k}={:.4} N@{k}={:.4}", t.recall[i], t.ndcg[i]))
            .collect();
        println!("{label:>5}  {}", cells.join("  "));
    }
}

fn score(cfg: &RunConfig, models: &[String], file: &str) -> anyhow::Result<()> {
    let prepared = Prepared::load(cfg)?;
    let n = prepared.catalog.len();
    let fanc_model = if models.iter().any(|m| m == "fanc") { Some(load_model(cfg, n)?) } else { None };
    // the model's grid when a checkpoint is in play, the configured one otherwise
    let grid_owner = match &fanc_model {
        Some(m) => m.clone(),
        None => FancModel::init(cfg.dims(n), cfg.model, cfg.seed)?,
    };
    let seqs = prepare_for_model(&grid_owner, prepared.part(&cfg.split))?;
    let mut tables = Vec::new();
    for m in models {
        let table = match m.as_str() {
            "fanc" => evaluate_ranker(fanc_model.as_ref().expect("loaded above"), &seqs, &cfg.k_list)?,
            "pop" => evaluate_ranker(&popularity_baseline(&prepared.split.train, n)?, &seqs, &cfg.k_list)?,
            _ => evaluate_ranker(
                &fmc_baseline(&prepared.split.train, n, cfg.fmc_alpha)?,
                &seqs,
                &cfg.k_list,
            )?,
        };
        tables.push((m.as_str(), table));
    }
    let refs: Vec<(&str, &MetricsTable)> = tables.iter().map(|(l, t)| (*l, t)).collect();
    let path = cfg.out_dir.join(file);
    write_metrics_csv(create_file(&path)?, &refs)?;
    println!("{} split, {} sequences", cfg.split, seqs.len());
    print_tables(&refs);
    println!("wrote {}", path.display());
    Ok(())
}

fn whatif(cfg: &RunConfig) -> anyhow::Result<()> {
    let prepared = Prepared::load(cfg)?;
    let model = load_model(cfg, prepared.catalog.len())?;
    let seqs = prepare_for_model(&model, prepared.part(&cfg.split))?;
    let seq = match &cfg.sequence_id {
        Some(id) => seqs
            .iter()
            .find(|s| s.id() == id)
            .ok_or_else(|| UsageError(format!("no sequence `{id}` in the {} split", cfg.split)))?,
        None => seqs
            .first()
            .ok_or_else(|| FancError::Data(format!("the {} split is empty", cfg.split)))?,
    };
    let table = whatif_sweep(&model, seq, &cfg.delta_t, cfg.top_k)?;
    let path = cfg.out_dir.join("whatif.csv");
    table.write_csv(create_file(&path)?, Some(&prepared.catalog))?;
    print!("{}", table.to_text(Some(&prepared.catalog)));
    println!("wrote {}", path.display());
    Ok(())
}

fn analyze(cfg: &RunConfig) -> anyhow::Result<()> {
    let prepared = Prepared::load(cfg)?;
    let model = load_model(cfg, prepared.catalog.len())?;
    let seqs = prepare_for_model(&model, prepared.part(&cfg.split))?;
    let rows = pleasure_reality_report(&model, &seqs)?;
    let path = cfg.out_dir.join("pleasure_reality.csv");
    write_pleasure_reality_csv(create_file(&path)?, &rows)?;
    let n = rows.len() as f64;
    println!(
        "{} sequences: mean displacement {:.4}, mean delta_bar {:.4}",
        rows.len(),
        rows.iter().map(|r| r.displacement).sum::<f64>() / n,
        rows.iter().map(|r| r.delta_bar).sum::<f64>() / n
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn gradcheck(cfg: &RunConfig) -> anyhow::Result<()> {
    let (model, seqs) = tiny_instance::<f64>(cfg.seed, 2);
    let checks = model_gradient_check(&model, &seqs, cfg.fd_step, cfg.fd_tol)?;
    for c in &checks {
        println!(
            "{:<10} max_rel_error={:.3e} {}",
            c.name,
            c.report.max_rel_error,
            if c.report.passed { "ok" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.report.passed).map(|c| c.name).collect();
    if !failed.is_empty() {
        return Err(NumericFailure(format!("gradient check failed for {}", failed.join(", "))).into());
    }
    println!("all {} groups within {:e}", checks.len(), cfg.fd_tol);
    Ok(())
}

fn run(matches: &ArgMatches) -> anyhow::Result<()> {
    let cfg = resolve(matches)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    match matches.subcommand_name().expect("subcommand required") {
        "synth" => synth(&cfg),
        "prep" => prep(&cfg),
        "train" => train_cmd(&cfg),
        "eval" => score(&cfg, &cfg.models, "metrics.csv"),
        "baseline" => score(&cfg, &["pop".into(), "fmc".into()], "baseline_metrics.csv"),
        "whatif" => whatif(&cfg),
        "analyze" => analyze(&cfg),
        "gradcheck" => gradcheck(&cfg),
        other => unreachable!("unregistered subcommand {other}"),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    if err.downcast_ref::<NumericFailure>().is_some() {
        return 3;
    }
    match err.downcast_ref::<FancError>() {
        Some(FancError::Contract { .. }) => 1,
        Some(e) if e.is_numeric() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        cli().debug_assert();
    }

    #[test]
    fn error_classes() {
        assert_eq!(exit_code(&UsageError("x".into()).into()), 1);
        assert_eq!(exit_code(&FancError::Data("x".into()).into()), 2);
        assert_eq!(exit_code(&FancError::NonFinite("x".into()).into()), 3);
        let wrapped = anyhow::Error::from(FancError::Integration { step: 2 }).context("training");
        assert_eq!(exit_code(&wrapped), 3);
    }
}
