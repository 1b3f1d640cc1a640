//! The full parameter set, model-level configuration and initialisation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::conscious::{ConsciousParams, ConsciousVars};
use crate::decision::{DecisionParams, DecisionVars};
use crate::error::{FancError, Result};
use crate::numerics::{RealArray, Scalar, Tape};
use crate::unconscious::{FieldVars, GravityField, ShiftParams, ShiftVars};

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<T: Scalar>(rows: usize, cols: usize, rng: &mut impl Rng) -> RealArray<T> {
    let limit = (6.0 / (rows + cols).max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    let data = (0..rows * cols).map(|_| T::lit(dist.sample(rng))).collect();
    RealArray::matrix(rows, cols, data).expect("shape by construction")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n_items: usize,
    pub d_u: usize,
    pub d_c: usize,
}

/// Parameter names in their fixed storage order.
pub const PARAM_NAMES: [&str; 14] = [
    "embeddings",
    "log_mass",
    "w_z",
    "u_z",
    "w_c",
    "u_c",
    "w_g",
    "u_g",
    "theta",
    "w_gamma",
    "u_gamma",
    "phi",
    "w_delta",
    "u_delta",
];

/// Every trainable array. The embedding table both encodes consumed items
/// and anchors the scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters<T> {
    pub embeddings: RealArray<T>,
    pub log_mass: RealArray<T>,
    pub conscious: ConsciousParams<T>,
    pub shift: ShiftParams<T>,
    pub decision: DecisionParams<T>,
}

/// Tape handles for a registered [`ModelParameters`].
#[derive(Clone, Debug)]
pub struct ModelVars<T> {
    pub field: FieldVars<T>,
    pub conscious: ConsciousVars,
    pub shift: ShiftVars,
    pub decision: DecisionVars,
}

impl<T: Scalar> ModelParameters<T> {
    pub fn zeros(dims: Dims) -> Self {
        let Dims { n_items, d_u, d_c } = dims;
        ModelParameters {
            embeddings: RealArray::zeros(&[n_items, d_u]),
            log_mass: RealArray::zeros(&[n_items]),
            conscious: ConsciousParams::zeros(d_c, d_u),
            shift: ShiftParams::zeros(d_u, d_c),
            decision: DecisionParams::zeros(d_u, d_c),
        }
    }

    /// Embeddings `N(0, 0.1²)`, log-masses `−ln N` (unit total mass), Glorot
    /// for every weight matrix.
    pub fn init(dims: Dims, rng: &mut impl Rng) -> Self {
        Self::init_scaled(dims, 0.1, rng)
    }

    pub(crate) fn init_scaled(dims: Dims, embedding_std: f64, rng: &mut impl Rng) -> Self {
        let Dims { n_items, d_u, d_c } = dims;
        let normal = Normal::new(0.0, embedding_std).expect("positive std");
        let emb = (0..n_items * d_u).map(|_| T::lit(normal.sample(rng))).collect();
        let rho = T::lit(-(n_items as f64).ln());
        ModelParameters {
            embeddings: RealArray::matrix(n_items, d_u, emb).expect("shape by construction"),
            log_mass: RealArray::vector(vec![rho; n_items]),
            conscious: ConsciousParams::init(d_c, d_u, rng),
            shift: ShiftParams::init(d_u, d_c, rng),
            decision: DecisionParams::init(d_u, d_c, rng),
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n_items: self.embeddings.rows(),
            d_u: self.embeddings.cols(),
            d_c: self.conscious.u_z.rows(),
        }
    }

    /// Arrays in [`PARAM_NAMES`] order.
    pub fn groups(&self) -> [&RealArray<T>; 14] {
        let c = &self.conscious;
        [
            &self.embeddings,
            &self.log_mass,
            &c.w_z,
            &c.u_z,
            &c.w_c,
            &c.u_c,
            &c.w_g,
            &c.u_g,
            &self.shift.theta,
            &self.shift.w_gamma,
            &self.shift.u_gamma,
            &self.decision.phi,
            &self.decision.w_delta,
            &self.decision.u_delta,
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut RealArray<T>; 14] {
        let c = &mut self.conscious;
        [
            &mut self.embeddings,
            &mut self.log_mass,
            &mut c.w_z,
            &mut c.u_z,
            &mut c.w_c,
            &mut c.u_c,
            &mut c.w_g,
            &mut c.u_g,
            &mut self.shift.theta,
            &mut self.shift.w_gamma,
            &mut self.shift.u_gamma,
            &mut self.decision.phi,
            &mut self.decision.w_delta,
            &mut self.decision.u_delta,
        ]
    }

    /// Rebuilds from arrays in [`PARAM_NAMES`] order, checking every shape.
    pub fn from_groups(arrays: Vec<RealArray<T>>) -> Result<Self> {
        if arrays.len() != PARAM_NAMES.len() {
            return Err(FancError::contract("model_parameters", "wrong number of arrays"));
        }
        let n = arrays[0].shape().first().copied().unwrap_or(0);
        let d_u = arrays[0].shape().get(1).copied().unwrap_or(0);
        let d_c = arrays[3].shape().first().copied().unwrap_or(0);
        let dims = Dims { n_items: n, d_u, d_c };
        let mut out = Self::zeros(dims);
        for ((slot, array), name) in out.groups_mut().into_iter().zip(arrays).zip(PARAM_NAMES) {
            if slot.shape() != array.shape() {
                return Err(FancError::contract(
                    "model_parameters",
                    format!("`{name}` has shape {:?}, expected {:?}", array.shape(), slot.shape()),
                ));
            }
            *slot = array;
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.groups().iter().all(|a| a.all_finite())
    }

    pub fn n_scalars(&self) -> usize {
        self.groups().iter().map(|a| a.len()).sum()
    }

    pub fn field(&self, config: &ModelConfig<T>) -> GravityField<T> {
        GravityField {
            embeddings: self.embeddings.clone(),
            log_mass: self.log_mass.clone(),
            softening: config.softening,
            max_accel: config.max_accel,
        }
    }

    /// Records every array as a named parameter leaf.
    pub fn register(&self, tape: &mut Tape<T>, config: &ModelConfig<T>) -> ModelVars<T> {
        let e = tape.param("embeddings", self.embeddings.clone());
        let rho = tape.param("log_mass", self.log_mass.clone());
        ModelVars {
            field: FieldVars::new(e, rho, self.embeddings.cols(), config.softening, config.max_accel),
            conscious: self.conscious.register(tape),
            shift: self.shift.register(tape),
            decision: self.decision.register(tape),
        }
    }
}

/// Settings that change what the model computes (as opposed to how it is trained).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig<T> {
    pub softening: T,
    pub max_accel: Option<T>,
    pub steps_per_unit: T,
    /// Longest interval the cell floats over; also the shared grid length.
    pub pad: T,
    pub ablate_conscious_only: bool,
}

impl<T: Scalar> Default for ModelConfig<T> {
    fn default() -> Self {
        ModelConfig {
            softening: T::lit(0.5),
            max_accel: Some(T::lit(100.0)),
            steps_per_unit: T::lit(10.0),
            pad: T::lit(1.5),
            ablate_conscious_only: false,
        }
    }
}

impl<T: Scalar> ModelConfig<T> {
    /// Grid steps across the whole pad, at least one.
    pub fn steps_for_pad(&self) -> usize {
        ((self.pad * self.steps_per_unit).round().to_f64_lossy() as usize).max(1)
    }

    pub fn grid_step(&self) -> T {
        self.pad / T::from_usize_lossy(self.steps_for_pad())
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.softening >= T::zero()
            && self.steps_per_unit > T::zero()
            && self.pad > T::zero()
            && self.max_accel.is_none_or(|a| a > T::zero());
        if ok {
            Ok(())
        } else {
            Err(FancError::contract("model_config", format!("invalid settings {self:?}")))
        }
    }
}

/// Parameters together with the configuration they are evaluated under.
#[derive(Clone, Debug, PartialEq)]
pub struct FancModel<T> {
    pub params: ModelParameters<T>,
    pub config: ModelConfig<T>,
}

impl<T: Scalar> FancModel<T> {
    pub fn new(params: ModelParameters<T>, config: ModelConfig<T>) -> Result<Self> {
        config.validate()?;
        Ok(FancModel { params, config })
    }

    /// Fresh model initialised from `seed`.
    pub fn init(dims: Dims, config: ModelConfig<T>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(ModelParameters::init(dims, &mut rng), config)
    }

    pub fn dims(&self) -> Dims {
        self.params.dims()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_respects_its_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w: RealArray<f64> = glorot(8, 4, &mut rng);
        let limit = (6.0f64 / 12.0).sqrt();
        assert!(w.as_slice().iter().all(|x| x.abs() <= limit));
        assert!(w.as_slice().iter().any(|x| x.abs() > limit / 2.0));
    }

    #[test]
    fn init_gives_unit_total_mass() {
        let dims = Dims { n_items: 7, d_u: 3, d_c: 2 };
        let p = ModelParameters::<f64>::init(dims, &mut ChaCha8Rng::seed_from_u64(1));
        let total: f64 = p.log_mass.as_slice().iter().map(|r| r.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(p.dims(), dims);
    }

    #[test]
    fn groups_round_trip() {
        let dims = Dims { n_items: 5, d_u: 3, d_c: 2 };
        let p = ModelParameters::<f64>::init(dims, &mut ChaCha8Rng::seed_from_u64(2));
        let arrays = p.groups().iter().map(|a| (*a).clone()).collect();
        assert_eq!(ModelParameters::from_groups(arrays).unwrap(), p);
    }

    #[test]
    fn from_groups_rejects_bad_shape() {
        let dims = Dims { n_items: 5, d_u: 3, d_c: 2 };
        let p = ModelParameters::<f64>::zeros(dims);
        let mut arrays: Vec<_> = p.groups().iter().map(|a| (*a).clone()).collect();
        arrays[9] = RealArray::zeros(&[2, 2]);
        assert!(ModelParameters::from_groups(arrays).is_err());
    }

    #[test]
    fn default_grid() {
        let c = ModelConfig::<f64>::default();
        assert_eq!(c.steps_for_pad(), 15);
        assert!((c.grid_step() - 0.1).abs() < 1e-15);
    }
}
