//! Run configuration: built-in defaults, then a `key = value` file, then
//! `--key value` flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fanc::training::TrainConfig;
use fanc::{Dims, ModelConfig};

/// A bad flag, key or value. Maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

/// Every recognised key. `config` is read from the command line only.
pub const KEYS: &[Key] = &[
    key("config", "", "key = value file applied before command-line flags"),
    key("data", "interactions.csv", "raw CSV (sequence_id,item_id,timestamp); synth writes it, prep reads it"),
    key("prep_dir", "prep", "directory for the catalog and split files"),
    key("out_dir", "out", "directory for checkpoints, histories and reports"),
    key("checkpoint", "", "checkpoint path; empty means <out_dir>/model.fanc"),
    key("seconds_per_unit", "604800", "seconds in one model time unit"),
    key("max_len", "5", "predictions per sequence L; the most recent L+1 interactions are kept"),
    key("seed", "0", "seed for synthesis, splitting, initialisation and shuffling"),
    key("n_items", "20", "synth: catalog size"),
    key("n_sequences", "60", "synth: number of sequences"),
    key("d_u", "16", "unconscious dimension"),
    key("d_c", "8", "conscious dimension"),
    key("steps_per_unit", "10", "RK4 steps per time unit"),
    key("pad", "1.5", "interval cap in time units"),
    key("epsilon", "0.5", "gravitational softening"),
    key("a_max", "100", "acceleration norm cap"),
    key("clamp_acceleration", "true", "apply the a_max cap"),
    key("ablate_conscious_only", "false", "decide from the conscious projection alone"),
    key("learning_rate", "1e-4", "Adam learning rate after warm-up"),
    key("batch_size", "4", "sequences per mini-batch"),
    key("max_epochs", "100", "epoch limit"),
    key("patience", "10", "epochs without validation improvement before stopping"),
    key("warmup_epochs", "5", "linear warm-up length"),
    key("k_list", "1,5,10,20", "cut-offs for Recall@k and nDCG@k"),
    key("fmc_alpha", "0.01", "FMC additive smoothing"),
    key("split", "test", "split to evaluate or analyse: train, valid or test"),
    key("models", "fanc,pop,fmc", "eval: rankers to score"),
    key("sequence_id", "", "whatif: sequence to sweep; empty means the first of the split"),
    key("delta_t", "0.1,0.25,0.5,1,1.5", "whatif: candidate next intervals in time units"),
    key("top_k", "5", "whatif: items listed per row"),
    key("fd_step", "1e-6", "gradcheck: central-difference step"),
    key("fd_tol", "1e-4", "gradcheck: max relative error"),
    key("threads", "0", "worker threads; 0 uses every core"),
];

pub fn default_of(name: &str) -> Option<&'static str> {
    KEYS.iter().find(|k| k.name == name).map(|k| k.default)
}

/// Parses `key = value` lines. `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, UsageError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected `key = value`", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k == "config" || default_of(k).is_none() {
            return Err(usage(format!("config line {}: unknown key `{k}`", i + 1)));
        }
        if out.insert(k.to_owned(), v.to_owned()).is_some() {
            return Err(usage(format!("config line {}: duplicate key `{k}`", i + 1)));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub prep_dir: PathBuf,
    pub out_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub seconds_per_unit: f64,
    pub max_len: usize,
    pub seed: u64,
    pub n_items: usize,
    pub n_sequences: usize,
    pub dims_u: usize,
    pub dims_c: usize,
    pub model: ModelConfig<f64>,
    pub train: TrainConfig<f64>,
    pub k_list: Vec<usize>,
    pub fmc_alpha: f64,
    pub split: String,
    pub models: Vec<String>,
    pub sequence_id: Option<String>,
    pub delta_t: Vec<f64>,
    pub top_k: usize,
    pub fd_step: f64,
    pub fd_tol: f64,
    pub threads: usize,
}

struct Values(BTreeMap<String, String>);

impl Values {
    fn raw(&self, name: &str) -> &str {
        self.0.get(name).map(String::as_str).unwrap_or_else(|| default_of(name).expect("known key"))
    }

    fn get<T: FromStr>(&self, name: &str) -> Result<T, UsageError>
    where
        T::Err: fmt::Display,
    {
        let v = self.raw(name);
        v.parse().map_err(|e| usage(format!("invalid value `{v}` for `{name}`: {e}")))
    }

    fn list<T: FromStr>(&self, name: &str) -> Result<Vec<T>, UsageError>
    where
        T::Err: fmt::Display,
    {
        self.raw(name)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| usage(format!("invalid entry `{s}` in `{name}`: {e}"))))
            .collect()
    }
}

impl RunConfig {
    /// Resolves `file` (if any) and then `flags` over the defaults.
    pub fn resolve(file: Option<&Path>, flags: BTreeMap<String, String>) -> Result<Self, UsageError> {
        let mut values = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        values.extend(flags);
        Self::from_values(Values(values))
    }

    fn from_values(v: Values) -> Result<Self, UsageError> {
        let out_dir: PathBuf = v.get("out_dir")?;
        let checkpoint = match v.raw("checkpoint") {
            "" => out_dir.join("model.fanc"),
            p => PathBuf::from(p),
        };
        let model = ModelConfig {
            softening: v.get("epsilon")?,
            max_accel: if v.get("clamp_acceleration")? { Some(v.get("a_max")?) } else { None },
            steps_per_unit: v.get("steps_per_unit")?,
            pad: v.get("pad")?,
            ablate_conscious_only: v.get("ablate_conscious_only")?,
        };
        model.validate().map_err(|e| usage(e.to_string()))?;
        let seed = v.get("seed")?;
        let train = TrainConfig {
            learning_rate: v.get("learning_rate")?,
            batch_size: v.get("batch_size")?,
            max_epochs: v.get("max_epochs")?,
            patience: v.get("patience")?,
            warmup_epochs: v.get("warmup_epochs")?,
            seed,
            ..TrainConfig::default()
        };
        train.validate().map_err(|e| usage(e.to_string()))?;
        let split: String = v.get("split")?;
        if !["train", "valid", "test"].contains(&split.as_str()) {
            return Err(usage(format!("`split` must be train, valid or test, got `{split}`")));
        }
        let models: Vec<String> = v.list("models")?;
        if let Some(m) = models.iter().find(|m| !["fanc", "pop", "fmc"].contains(&m.as_str())) {
            return Err(usage(format!("unknown model `{m}` in `models`")));
        }
        let seconds_per_unit: f64 = v.get("seconds_per_unit")?;
        if seconds_per_unit.is_nan() || seconds_per_unit <= 0.0 {
            return Err(usage("`seconds_per_unit` must be positive"));
        }
        let sequence_id: String = v.get("sequence_id")?;
        Ok(RunConfig {
            data: v.get("data")?,
            prep_dir: v.get("prep_dir")?,
            out_dir,
            checkpoint,
            seconds_per_unit,
            max_len: v.get("max_len")?,
            seed,
            n_items: v.get("n_items")?,
            n_sequences: v.get("n_sequences")?,
            dims_u: v.get("d_u")?,
            dims_c: v.get("d_c")?,
            model,
            train,
            k_list: v.list("k_list")?,
            fmc_alpha: v.get("fmc_alpha")?,
            split,
            models,
            sequence_id: (!sequence_id.is_empty()).then_some(sequence_id),
            delta_t: v.list("delta_t")?,
            top_k: v.get("top_k")?,
            fd_step: v.get("fd_step")?,
            fd_tol: v.get("fd_tol")?,
            threads: v.get("threads")?,
        })
    }

    pub fn dims(&self, n_items: usize) -> Dims {
        Dims {
            n_items,
            d_u: self.dims_u,
            d_c: self.dims_c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults() {
        let c = RunConfig::resolve(None, BTreeMap::new()).unwrap();
        assert_eq!((c.dims_u, c.dims_c), (16, 8));
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.model, ModelConfig::default());
        assert_eq!(c.k_list, [1, 5, 10, 20]);
        assert_eq!(c.checkpoint, PathBuf::from("out/model.fanc"));
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "# demo\nd_u = 4\nlearning_rate = 0.01 # faster\n").unwrap();
        let c = RunConfig::resolve(Some(&p), flags(&[("d_u", "6")])).unwrap();
        assert_eq!(c.dims_u, 6);
        assert_eq!(c.train.learning_rate, 0.01);
    }

    #[test]
    fn file_errors_name_the_line() {
        let e = parse_config_text("d_u = 4\nbogus = 1\n").unwrap_err();
        assert!(e.0.contains("line 2") && e.0.contains("bogus"), "{e}");
        assert!(parse_config_text("d_u 4").is_err());
        assert!(parse_config_text("d_u = 4\nd_u = 5").is_err());
    }

    #[test]
    fn bad_values_are_usage_errors() {
        assert!(RunConfig::resolve(None, flags(&[("batch_size", "zero")])).is_err());
        assert!(RunConfig::resolve(None, flags(&[("split", "dev")])).is_err());
        assert!(RunConfig::resolve(None, flags(&[("pad", "-1")])).is_err());
        let c = RunConfig::resolve(None, flags(&[("clamp_acceleration", "false")])).unwrap();
        assert_eq!(c.model.max_accel, None);
    }
}
