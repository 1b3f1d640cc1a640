//! Finite-difference verification of the end-to-end loss gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{BehaviourSequence, Interaction};
use crate::error::Result;
use crate::model::{Dims, FancModel, ModelConfig, ModelParameters, PARAM_NAMES};
use crate::numerics::{finite_difference_check, FdReport, Gradients, Scalar};
use crate::training::forward::{sequence_gradients, total_loss};

#[derive(Clone, Debug, PartialEq)]
pub struct GroupCheck<T> {
    pub name: &'static str,
    pub report: FdReport<T>,
}

/// Summed loss gradient over `sequences`.
pub fn loss_gradients<T: Scalar>(
    model: &FancModel<T>,
    sequences: &[BehaviourSequence<T>],
) -> Result<(T, Gradients<T>)> {
    let (mut loss, mut grads) = sequence_gradients(model, &sequences[0])?;
    for s in &sequences[1..] {
        let (l, g) = sequence_gradients(model, s)?;
        loss += l;
        grads.accumulate(&g)?;
    }
    Ok((loss, grads))
}

/// Compares the analytic gradient of the summed loss with central differences,
/// one report per parameter group.
pub fn model_gradient_check<T: Scalar>(
    model: &FancModel<T>,
    sequences: &[BehaviourSequence<T>],
    step: T,
    tol: T,
) -> Result<Vec<GroupCheck<T>>> {
    let (_, grads) = loss_gradients(model, sequences)?;
    let mut out = Vec::with_capacity(PARAM_NAMES.len());
    for (g, name) in PARAM_NAMES.iter().enumerate() {
        let base = model.params.groups()[g].as_slice().to_vec();
        let analytic = grads.get(name).expect("every parameter is registered").as_slice().to_vec();
        let mut probe = model.clone();
        let f = |p: &[T]| -> Result<T> {
            probe.params.groups_mut()[g].as_mut_slice().copy_from_slice(p);
            total_loss(&probe, sequences)
        };
        let report = finite_difference_check(f, &base, &analytic, step, tol)?;
        out.push(GroupCheck { name, report });
    }
    Ok(out)
}

/// A small random model and dataset for gradient checks: `N = 8`, `d_u = 4`,
/// `d_c = 3`, sequences of `L = 4` predictions one time unit apart, two RK4
/// steps per interval, softening 0.5 and no acceleration clamp.
pub fn tiny_instance<T: Scalar>(seed: u64, n_sequences: usize) -> (FancModel<T>, Vec<BehaviourSequence<T>>) {
    let dims = Dims { n_items: 8, d_u: 4, d_c: 3 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // wider embeddings than the training default so every group carries a
    // gradient well above finite-difference round-off
    let mut params = ModelParameters::init_scaled(dims, 0.7, &mut rng);
    for r in params.log_mass.as_mut_slice() {
        *r += T::lit(rng.random_range(-0.5..0.5));
    }
    let config = ModelConfig {
        softening: T::lit(0.5),
        max_accel: None,
        steps_per_unit: T::lit(2.0),
        pad: T::lit(1.5),
        ablate_conscious_only: false,
    };
    let sequences = (0..n_sequences)
        .map(|k| {
            let steps = (0..5)
                .map(|j| Interaction {
                    item: rng.random_range(0..dims.n_items),
                    time: T::from_usize_lossy(j),
                })
                .collect();
            BehaviourSequence::new(format!("g{k}"), steps, dims.n_items).expect("valid by construction")
        })
        .collect();
    (FancModel { params, config }, sequences)
}
