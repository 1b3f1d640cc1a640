//! Synthetic sequences drawn from a planted model, for tests and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};

use super::{BehaviourSequence, Interaction, ItemCatalog};
use crate::decision::RecommendationDistribution;
use crate::error::{FancError, Result};
use crate::model::{Dims, FancModel, ModelConfig, ModelParameters};
use crate::numerics::{RealArray, Scalar, Tape};
use crate::training::forward::Cell;

/// Hidden sizes of the planted model.
pub const PLANTED_D_U: usize = 4;
pub const PLANTED_D_C: usize = 4;
/// Standard deviation of planted embeddings. Wide spacing makes the planted
/// next-item distribution sharp enough to be learnable from few sequences.
const PLANTED_EMBEDDING_STD: f64 = 2.5;
/// Std of the per-item log-mass jitter around `-ln N`.
const PLANTED_MASS_JITTER: f64 = 0.3;
/// Multipliers on the Glorot draws. A strong conscious path makes the next
/// item depend on the history, so popularity alone ranks poorly.
const PLANTED_PHI_SCALE: f64 = 8.0;
const PLANTED_W_C_SCALE: f64 = 4.0;
const PLANTED_THETA_SCALE: f64 = 6.0;
const MAX_INTERVAL: f64 = 1.5;

/// The ground truth behind a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWorld<T> {
    pub model: FancModel<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData<T> {
    pub catalog: ItemCatalog,
    pub sequences: Vec<BehaviourSequence<T>>,
    pub world: SyntheticWorld<T>,
}

impl<T: Scalar> SyntheticWorld<T> {
    pub fn new(n_items: usize, rng: &mut impl Rng) -> Self {
        let dims = Dims {
            n_items,
            d_u: PLANTED_D_U,
            d_c: PLANTED_D_C,
        };
        let mut params = ModelParameters::init_scaled(dims, PLANTED_EMBEDDING_STD, rng);
        let jitter = Normal::new(0.0, PLANTED_MASS_JITTER).expect("positive std");
        for r in params.log_mass.as_mut_slice() {
            *r += T::lit(jitter.sample(rng));
        }
        let scale = |a: &mut RealArray<T>, f: f64| a.as_mut_slice().iter_mut().for_each(|x| *x *= T::lit(f));
        scale(&mut params.decision.phi, PLANTED_PHI_SCALE);
        scale(&mut params.conscious.w_c, PLANTED_W_C_SCALE);
        scale(&mut params.shift.theta, PLANTED_THETA_SCALE);
        SyntheticWorld {
            model: FancModel {
                params,
                config: ModelConfig::default(),
            },
        }
    }

    /// Simulates one sequence of `len + 1` interactions.
    fn simulate(&self, id: String, len: usize, rng: &mut impl Rng) -> Result<BehaviourSequence<T>> {
        let model = &self.model;
        let n = model.dims().n_items;
        let mut tape = Tape::new();
        let vars = model.params.register(&mut tape, &model.config);
        let mut cell = Cell {
            tape: &mut tape,
            vars: &vars,
            config: &model.config,
        };
        let (mut c, mut h) = cell.initial(PLANTED_D_C, PLANTED_D_U);
        let pad = T::lit(MAX_INTERVAL);
        let mut item = rng.random_range(0..n);
        let mut time = T::zero();
        let mut steps = vec![Interaction { item, time }];
        for _ in 0..len {
            // (0, 1.5]
            let dt = pad * T::lit(1.0 - rng.random::<f64>());
            let mut next = time + dt;
            while next - time > pad {
                next *= T::one() - T::epsilon();
            }
            let (c_new, h_shift, _) = cell.consume(c, h, item)?;
            let h_new = cell.float(h_shift, next - time)?;
            let (_, _, logits) = cell.decide(c_new, h_new)?;
            let dist = RecommendationDistribution::from_logits(cell.tape.values(logits));
            let weights: Vec<f64> = dist.probs.iter().map(|p| p.to_f64_lossy()).collect();
            let sampler = WeightedIndex::new(&weights)
                .map_err(|e| FancError::NonFinite(format!("planted distribution: {e}")))?;
            item = sampler.sample(rng);
            time = next;
            steps.push(Interaction { item, time });
            c = c_new;
            h = h_new;
        }
        BehaviourSequence::new(id, steps, n)
    }
}

/// Draws `n_sequences` sequences of `len + 1` interactions over `n_items`
/// items from a freshly planted model. Deterministic per seed.
pub fn generate_synthetic<T: Scalar>(
    n_items: usize,
    n_sequences: usize,
    len: usize,
    seed: u64,
) -> Result<SyntheticData<T>> {
    if n_items < 2 || len == 0 {
        return Err(FancError::contract(
            "generate_synthetic",
            format!("need n_items >= 2 and L >= 1, got {n_items} and {len}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = SyntheticWorld::new(n_items, &mut rng);
    let width = n_items.to_string().len();
    let catalog: ItemCatalog = (0..n_items).map(|i| format!("item{i:0width$}")).collect();
    let swidth = n_sequences.to_string().len();
    let sequences = (0..n_sequences)
        .map(|k| world.simulate(format!("user{k:0swidth$}"), len, &mut rng))
        .collect::<Result<_>>()?;
    Ok(SyntheticData {
        catalog,
        sequences,
        world,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::forward_sequence;

    #[test]
    fn same_seed_same_data() {
        let a = generate_synthetic::<f64>(10, 5, 4, 3).unwrap();
        let b = generate_synthetic::<f64>(10, 5, 4, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic::<f64>(10, 5, 4, 4).unwrap();
        assert_ne!(a.sequences, c.sequences);
    }

    #[test]
    fn construction_bounds() {
        let d = generate_synthetic::<f64>(20, 60, 5, 7).unwrap();
        assert_eq!(d.sequences.len(), 60);
        assert_eq!(d.catalog.len(), 20);
        for s in &d.sequences {
            assert_eq!(s.len(), 6);
            assert!(s.items().all(|i| i < 20));
            assert!(s.intervals().iter().all(|&dt| dt > 0.0 && dt <= 1.5));
        }
    }

    #[test]
    fn rejects_single_item() {
        assert!(generate_synthetic::<f64>(1, 5, 4, 3).is_err());
    }

    fn ranks(x: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
        let mut r = vec![0.0; x.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        let (ra, rb) = (ranks(a), ranks(b));
        let n = a.len() as f64;
        let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn draws_follow_the_planted_probabilities() {
        // 10^4 single-step sequences: tally observed next items against the
        // planted model's expected counts for the same prefixes
        let d = generate_synthetic::<f64>(20, 10_000, 1, 21).unwrap();
        let mut expected = vec![0.0; 20];
        let mut observed = vec![0.0; 20];
        for s in &d.sequences {
            let out = forward_sequence(&d.world.model, s).unwrap();
            for (e, p) in expected.iter_mut().zip(&out.distributions[0].probs) {
                *e += p;
            }
            observed[out.targets[0]] += 1.0;
        }
        let rho = spearman(&expected, &observed);
        assert!(rho > 0.5, "rank correlation {rho}");
    }
}
