//! Binary checkpoints.
//!
//! Layout: the bytes `FANC`, a version byte, a little-endian `u32` header
//! length, a UTF-8 header of `key value` lines, then every array listed in the
//! header as raw little-endian `f64` in header order.

use std::fs;
use std::path::Path;

use crate::error::{FancError, Result};
use crate::model::{FancModel, ModelConfig, ModelParameters, PARAM_NAMES};
use crate::numerics::{RealArray, Scalar};
use crate::training::optim::AdamState;

pub const CHECKPOINT_VERSION: u8 = 1;
const MAGIC: &[u8; 4] = b"FANC";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub model: FancModel<T>,
    pub adam: AdamState<T>,
    pub epoch: usize,
    pub valid_history: Vec<T>,
    pub train_history: Vec<T>,
}

fn shape_text(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

impl<T: Scalar> Checkpoint<T> {
    fn arrays(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for (name, a) in PARAM_NAMES.iter().zip(self.model.params.groups()) {
            out.push((name.to_string(), a.shape().to_vec(), a.as_slice()));
        }
        for (prefix, moments) in [("adam_m", &self.adam.m), ("adam_v", &self.adam.v)] {
            for (name, a) in PARAM_NAMES.iter().zip(moments) {
                out.push((format!("{prefix}.{name}"), a.shape().to_vec(), a.as_slice()));
            }
        }
        out.push(("valid_history".into(), vec![self.valid_history.len()], &self.valid_history));
        out.push(("train_history".into(), vec![self.train_history.len()], &self.train_history));
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dims = self.model.dims();
        let cfg = &self.model.config;
        let mut header = format!(
            "dims {} {} {}\nepoch {}\nadam_step {}\n",
            dims.n_items, dims.d_u, dims.d_c, self.epoch, self.adam.step
        );
        header += &format!("meta.softening {}\n", cfg.softening.to_f64_lossy());
        match cfg.max_accel {
            Some(a) => header += &format!("meta.max_accel {}\n", a.to_f64_lossy()),
            None => header += "meta.max_accel none\n",
        }
        header += &format!("meta.steps_per_unit {}\n", cfg.steps_per_unit.to_f64_lossy());
        header += &format!("meta.pad {}\n", cfg.pad.to_f64_lossy());
        header += &format!("meta.ablate_conscious_only {}\n", cfg.ablate_conscious_only);
        let arrays = self.arrays();
        for (name, shape, _) in &arrays {
            header += &format!("array {name} {}\n", shape_text(shape));
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(CHECKPOINT_VERSION);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for (_, _, data) in arrays {
            for x in data {
                out.extend_from_slice(&x.to_f64_lossy().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(FancError::checkpoint("magic", "not a checkpoint file"));
        }
        match bytes.get(4) {
            Some(&CHECKPOINT_VERSION) => {}
            Some(v) => {
                return Err(FancError::checkpoint(
                    "version",
                    format!("unsupported version {v}, expected {CHECKPOINT_VERSION}"),
                ))
            }
            None => return Err(FancError::checkpoint("version", "missing")),
        }
        let len_bytes: [u8; 4] = bytes
            .get(5..9)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| FancError::checkpoint("header", "missing length"))?;
        let header_len = u32::from_le_bytes(len_bytes) as usize;
        let header = bytes
            .get(9..9 + header_len)
            .ok_or_else(|| FancError::checkpoint("header", "truncated"))?;
        let header = std::str::from_utf8(header).map_err(|_| FancError::checkpoint("header", "not UTF-8"))?;
        let mut body = &bytes[9 + header_len..];

        let mut dims = None;
        let mut epoch = None;
        let mut adam_step = None;
        let mut cfg = ModelConfig::<T>::default();
        let mut arrays: Vec<(String, RealArray<T>)> = Vec::new();
        for line in header.lines() {
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or("");
            let rest: Vec<&str> = parts.collect();
            let bad = |what: &str| FancError::checkpoint(format!("header.{key}"), format!("malformed {what}"));
            let num = |s: &str| s.parse::<f64>().map(T::lit).map_err(|_| bad("number"));
            let one = || rest.first().copied().ok_or_else(|| bad("line"));
            match key {
                "dims" => {
                    let v: Vec<usize> = rest.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(|_| bad("dims"))?;
                    if v.len() != 3 {
                        return Err(bad("dims"));
                    }
                    dims = Some((v[0], v[1], v[2]));
                }
                "epoch" => epoch = Some(one()?.parse::<usize>().map_err(|_| bad("epoch"))?),
                "adam_step" => adam_step = Some(one()?.parse::<u64>().map_err(|_| bad("step"))?),
                "meta.softening" => cfg.softening = num(one()?)?,
                "meta.max_accel" => {
                    cfg.max_accel = match one()? {
                        "none" => None,
                        s => Some(num(s)?),
                    }
                }
                "meta.steps_per_unit" => cfg.steps_per_unit = num(one()?)?,
                "meta.pad" => cfg.pad = num(one()?)?,
                "meta.ablate_conscious_only" => {
                    cfg.ablate_conscious_only = one()?.parse().map_err(|_| bad("flag"))?
                }
                "array" => {
                    if rest.len() != 2 {
                        return Err(bad("array entry"));
                    }
                    let name = rest[0].to_string();
                    let shape: Vec<usize> = rest[1]
                        .split('x')
                        .map(|s| s.parse())
                        .collect::<Result<_, _>>()
                        .map_err(|_| FancError::checkpoint(&name, "malformed shape"))?;
                    let n: usize = shape.iter().product();
                    if body.len() < 8 * n {
                        return Err(FancError::checkpoint(
                            &name,
                            format!("truncated: need {} bytes, {} left", 8 * n, body.len()),
                        ));
                    }
                    let data = body[..8 * n]
                        .chunks_exact(8)
                        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                        .collect();
                    body = &body[8 * n..];
                    let array = RealArray::from_shape(&shape, data).map_err(|e| FancError::checkpoint(&name, e.to_string()))?;
                    arrays.push((name, array));
                }
                "" => {}
                other => return Err(FancError::checkpoint("header", format!("unknown key `{other}`"))),
            }
        }
        if !body.is_empty() {
            return Err(FancError::checkpoint("trailer", format!("{} unexpected trailing bytes", body.len())));
        }
        let (n_items, d_u, d_c) = dims.ok_or_else(|| FancError::checkpoint("header.dims", "missing"))?;
        let epoch = epoch.ok_or_else(|| FancError::checkpoint("header.epoch", "missing"))?;
        let step = adam_step.ok_or_else(|| FancError::checkpoint("header.adam_step", "missing"))?;

        let mut take = |name: &str| -> Result<RealArray<T>> {
            let pos = arrays
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| FancError::checkpoint(name, "missing"))?;
            Ok(arrays.remove(pos).1)
        };
        let params: Vec<RealArray<T>> = PARAM_NAMES.iter().map(|n| take(n)).collect::<Result<_>>()?;
        let params = ModelParameters::from_groups(params).map_err(|e| FancError::checkpoint("parameters", e.to_string()))?;
        let d = params.dims();
        if (d.n_items, d.d_u, d.d_c) != (n_items, d_u, d_c) {
            return Err(FancError::checkpoint("header.dims", "disagree with the stored arrays"));
        }
        let mut moments = |prefix: &str| -> Result<Vec<RealArray<T>>> {
            PARAM_NAMES
                .iter()
                .zip(params.groups())
                .map(|(n, p)| {
                    let name = format!("{prefix}.{n}");
                    let a = take(&name)?;
                    if a.shape() != p.shape() {
                        return Err(FancError::checkpoint(name, "shape disagrees with the parameter"));
                    }
                    Ok(a)
                })
                .collect()
        };
        let m = moments("adam_m")?;
        let v = moments("adam_v")?;
        let valid_history = take("valid_history")?.into_vec();
        let train_history = take("train_history")?.into_vec();
        let model = FancModel::new(params, cfg).map_err(|e| FancError::checkpoint("header.meta", e.to_string()))?;
        Ok(Checkpoint {
            model,
            adam: AdamState { m, v, step },
            epoch,
            valid_history,
            train_history,
        })
    }
}

pub fn save_checkpoint<T: Scalar>(checkpoint: &Checkpoint<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, checkpoint.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;

    fn sample() -> Checkpoint<f64> {
        let dims = Dims { n_items: 5, d_u: 3, d_c: 2 };
        let cfg = ModelConfig { max_accel: None, softening: 0.3, ..ModelConfig::default() };
        let model = FancModel::init(dims, cfg, 4).unwrap();
        let mut adam = AdamState::new(&model.params);
        adam.m[0].as_mut_slice()[2] = 0.125;
        adam.v[13].as_mut_slice()[0] = 1e-300;
        adam.step = 42;
        Checkpoint {
            model,
            adam,
            epoch: 7,
            valid_history: vec![3.5, 2.25, 0.1 + 0.2],
            train_history: vec![4.0, 3.0, 2.0],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = Checkpoint::<f64>::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), c.to_bytes());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.fanc");
        save_checkpoint(&sample(), &path).unwrap();
        assert_eq!(load_checkpoint::<f64>(&path).unwrap(), sample());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut b = sample().to_bytes();
        b[0] = b'X';
        let err = Checkpoint::<f64>::from_bytes(&b).unwrap_err();
        assert!(matches!(err, FancError::Checkpoint { ref section, .. } if section == "magic"));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut b = sample().to_bytes();
        b[4] = 2;
        let err = Checkpoint::<f64>::from_bytes(&b).unwrap_err();
        assert!(matches!(err, FancError::Checkpoint { ref section, .. } if section == "version"));
    }

    #[test]
    fn truncation_names_the_array() {
        let b = sample().to_bytes();
        let header_len = u32::from_le_bytes(b[5..9].try_into().unwrap()) as usize;
        // embeddings (15) and log_mass (5) then cut inside w_z
        let cut = 9 + header_len + 8 * (15 + 5) + 12;
        let err = Checkpoint::<f64>::from_bytes(&b[..cut]).unwrap_err();
        assert!(matches!(err, FancError::Checkpoint { ref section, .. } if section == "w_z"), "{err}");
    }
}
