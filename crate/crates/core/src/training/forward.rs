//! Causal sequence forward pass.
//!
//! At each prediction step the cell consumes `s_j`, updates the conscious
//! state, shifts the unconscious state, floats it to the next interaction time
//! `t_{j+1}` and scores every item as a candidate for `s_{j+1}`.

use crate::data::BehaviourSequence;
use crate::decision::{decision_state_on, RecommendationDistribution};
use crate::error::{FancError, Result};
use crate::model::{FancModel, ModelConfig, ModelVars};
use crate::numerics::array::squared_distance;
use crate::numerics::{Gradients, Scalar, Tape, Var};
use crate::unconscious::{float_batch_padded_on, shift_state_on};
use crate::conscious::gru_step_on;

/// Conscious vector `c` and extended unconscious state `h = [u, v]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState<T> {
    pub c: Vec<T>,
    pub h: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics<T> {
    /// `‖u after floating − u after the shift‖`
    pub displacement: T,
    /// Mean decision gate; exactly one under the conscious-only ablation.
    pub delta_mean: T,
    pub gamma_mean: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceOutput<T> {
    pub distributions: Vec<RecommendationDistribution<T>>,
    pub targets: Vec<usize>,
    pub diagnostics: Vec<StepDiagnostics<T>>,
    /// Cross-entropy summed over prediction steps.
    pub loss: T,
    pub final_state: CellState<T>,
}

/// Tape handles produced by one prediction step.
#[derive(Clone, Copy, Debug)]
pub struct StepVars {
    pub c: Var,
    pub h_shift: Var,
    pub gamma: Var,
    pub h: Var,
    pub d: Var,
    pub delta: Option<Var>,
    pub logits: Var,
    pub target: usize,
}

/// Grid steps the cell floats for an interval: nearest grid point, at least one.
pub fn interval_grid_steps<T: Scalar>(config: &ModelConfig<T>, delta_t: T) -> usize {
    let k = (delta_t / config.grid_step()).round().to_f64_lossy() as usize;
    k.max(1)
}

/// Records the cell on a tape.
pub(crate) struct Cell<'a, T: Scalar> {
    pub tape: &'a mut Tape<T>,
    pub vars: &'a ModelVars<T>,
    pub config: &'a ModelConfig<T>,
}

impl<T: Scalar> Cell<'_, T> {
    pub fn initial(&mut self, d_c: usize, d_u: usize) -> (Var, Var) {
        (self.tape.zeros(d_c), self.tape.zeros(2 * d_u))
    }

    /// Consumes an item: GRU update then shift. Returns `(c, h_shift, gamma)`.
    pub fn consume(&mut self, c_prev: Var, h_prev: Var, item: usize) -> Result<(Var, Var, Var)> {
        let e = self.tape.row(self.vars.field.embeddings, item)?;
        let c = gru_step_on(self.tape, &self.vars.conscious, c_prev, e)?;
        let (h_shift, gamma) = shift_state_on(self.tape, &self.vars.shift, c, h_prev)?;
        Ok((c, h_shift, gamma))
    }

    /// Floats over an interval snapped to the shared grid.
    pub fn float(&mut self, h_shift: Var, delta_t: T) -> Result<Var> {
        let pad = self.config.pad;
        // grid-quantised times may overshoot the pad by a few ulps
        let slack = self.config.grid_step() * T::lit(1e-6);
        if !(delta_t > T::zero()) || delta_t > pad + slack {
            return Err(FancError::contract(
                "forward_sequence",
                format!("interval {delta_t} outside (0, {pad}]; clamp intervals first"),
            ));
        }
        let steps = self.config.steps_for_pad();
        let k = interval_grid_steps(self.config, delta_t).min(steps);
        let snapped = self.config.grid_step() * T::from_usize_lossy(k);
        let snapped = snapped.min(pad);
        let out = float_batch_padded_on(self.tape, &self.vars.field, &[h_shift], &[snapped], pad, steps)?;
        Ok(out[0])
    }

    /// Decision state and logits over the catalog.
    pub fn decide(&mut self, c: Var, h: Var) -> Result<(Var, Option<Var>, Var)> {
        let d_u = self.vars.field.dim;
        let u = self.tape.slice(h, 0, d_u)?;
        let (d, delta) = decision_state_on(
            self.tape,
            &self.vars.decision,
            c,
            u,
            self.config.ablate_conscious_only,
        )?;
        let logits = self.tape.neg_sq_dist(d, self.vars.field.embeddings)?;
        Ok((d, delta, logits))
    }
}

/// Records all prediction steps of one sequence; returns the steps and the
/// summed cross-entropy node.
pub fn forward_sequence_on<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &ModelVars<T>,
    config: &ModelConfig<T>,
    d_c: usize,
    sequence: &BehaviourSequence<T>,
) -> Result<(Vec<StepVars>, Var)> {
    let n_items = tape.value(vars.field.embeddings).rows();
    if let Some(bad) = sequence.items().find(|&i| i >= n_items) {
        return Err(FancError::Data(format!(
            "sequence `{}` uses item {bad} but the model has {n_items} items",
            sequence.id()
        )));
    }
    let steps = sequence.steps();
    let mut cell = Cell { tape, vars, config };
    let (mut c, mut h) = cell.initial(d_c, vars.field.dim);
    let mut out = Vec::with_capacity(steps.len() - 1);
    let mut nll = Vec::with_capacity(steps.len() - 1);
    for j in 0..steps.len() - 1 {
        let (c_new, h_shift, gamma) = cell.consume(c, h, steps[j].item)?;
        let h_new = cell.float(h_shift, steps[j + 1].time - steps[j].time)?;
        let (d, delta, logits) = cell.decide(c_new, h_new)?;
        let target = steps[j + 1].item;
        let lp = cell.tape.log_softmax_at(logits, target)?;
        nll.push(cell.tape.scale(lp, -T::one())?);
        out.push(StepVars {
            c: c_new,
            h_shift,
            gamma,
            h: h_new,
            d,
            delta,
            logits,
            target,
        });
        c = c_new;
        h = h_new;
    }
    let loss = cell.tape.sum(&nll)?;
    Ok((out, loss))
}

fn mean<T: Scalar>(x: &[T]) -> T {
    x.iter().copied().sum::<T>() / T::from_usize_lossy(x.len().max(1))
}

/// Runs the model over a sequence and collects distributions and diagnostics.
pub fn forward_sequence<T: Scalar>(
    model: &FancModel<T>,
    sequence: &BehaviourSequence<T>,
) -> Result<SequenceOutput<T>> {
    let mut tape = Tape::new();
    let vars = model.params.register(&mut tape, &model.config);
    let d_c = model.dims().d_c;
    let d_u = model.dims().d_u;
    let (steps, loss) = forward_sequence_on(&mut tape, &vars, &model.config, d_c, sequence)?;
    let loss = tape.scalar(loss);
    if !loss.is_finite() {
        return Err(FancError::NonFinite(format!("loss of sequence `{}`", sequence.id())));
    }
    let mut distributions = Vec::with_capacity(steps.len());
    let mut diagnostics = Vec::with_capacity(steps.len());
    for s in &steps {
        distributions.push(RecommendationDistribution::from_logits(tape.values(s.logits)));
        let u_shift = &tape.values(s.h_shift)[..d_u];
        let u_new = &tape.values(s.h)[..d_u];
        diagnostics.push(StepDiagnostics {
            displacement: squared_distance(u_new, u_shift).sqrt(),
            delta_mean: s.delta.map_or(T::one(), |v| mean(tape.values(v))),
            gamma_mean: mean(tape.values(s.gamma)),
        });
    }
    let last = steps.last().expect("at least one prediction");
    Ok(SequenceOutput {
        distributions,
        targets: steps.iter().map(|s| s.target).collect(),
        diagnostics,
        loss,
        final_state: CellState {
            c: tape.values(last.c).to_vec(),
            h: tape.values(last.h).to_vec(),
        },
    })
}

/// `−Σ ln p[target]` over prediction steps.
pub fn sequence_loss<T: Scalar>(
    distributions: &[RecommendationDistribution<T>],
    targets: &[usize],
) -> Result<T> {
    if distributions.len() != targets.len() {
        return Err(FancError::contract("sequence_loss", "one target per distribution"));
    }
    let mut total = T::zero();
    for (dist, &t) in distributions.iter().zip(targets) {
        let p = *dist
            .probs
            .get(t)
            .ok_or_else(|| FancError::contract("sequence_loss", format!("target {t} out of range")))?;
        total -= p.ln();
    }
    Ok(total)
}

/// Loss of one sequence and its gradient with respect to every parameter.
pub fn sequence_gradients<T: Scalar>(
    model: &FancModel<T>,
    sequence: &BehaviourSequence<T>,
) -> Result<(T, Gradients<T>)> {
    let mut tape = Tape::new();
    let vars = model.params.register(&mut tape, &model.config);
    let (_, loss) = forward_sequence_on(&mut tape, &vars, &model.config, model.dims().d_c, sequence)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(FancError::NonFinite(format!("loss of sequence `{}`", sequence.id())));
    }
    Ok((value, tape.gradients(loss)?))
}

/// Summed loss over sequences, without gradients.
pub fn total_loss<T: Scalar>(model: &FancModel<T>, sequences: &[BehaviourSequence<T>]) -> Result<T> {
    let mut total = T::zero();
    for s in sequences {
        total += forward_sequence(model, s)?.loss;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Interaction;
    use crate::model::{Dims, ModelParameters};
    use crate::numerics::RealArray;

    fn seq(items: &[usize], times: &[f64], n: usize) -> BehaviourSequence<f64> {
        let steps = items
            .iter()
            .zip(times)
            .map(|(&item, &time)| Interaction { item, time })
            .collect();
        BehaviourSequence::new("s", steps, n).unwrap()
    }

    fn random_model(seed: u64) -> FancModel<f64> {
        let dims = Dims { n_items: 6, d_u: 3, d_c: 2 };
        FancModel::init(dims, ModelConfig::default(), seed).unwrap()
    }

    #[test]
    fn two_interactions_give_one_prediction() {
        let m = random_model(1);
        let out = forward_sequence(&m, &seq(&[0, 3], &[0.0, 0.7], 6)).unwrap();
        assert_eq!(out.distributions.len(), 1);
        assert_eq!(out.targets, vec![3]);
    }

    #[test]
    fn zero_model_scores_distances_from_origin() {
        let dims = Dims { n_items: 3, d_u: 2, d_c: 2 };
        let mut p = ModelParameters::<f64>::zeros(dims);
        p.embeddings = RealArray::matrix(3, 2, vec![1.0, 0.0, 0.0, 2.0, -0.5, 0.5]).unwrap();
        p.log_mass = RealArray::vector(vec![-100.0; 3]);
        let m = FancModel::new(p.clone(), ModelConfig::default()).unwrap();
        let out = forward_sequence(&m, &seq(&[0, 1, 2, 0], &[0.0, 0.5, 1.2, 2.0], 3)).unwrap();
        let expect = crate::decision::score_items(&[0.0, 0.0], &p.embeddings).unwrap();
        for dist in &out.distributions {
            for (a, b) in dist.probs.iter().zip(&expect.probs) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let m = random_model(2);
        let s = seq(&[0, 3, 5, 1], &[0.0, 0.3, 1.0, 2.4], 6);
        assert_eq!(forward_sequence(&m, &s).unwrap(), forward_sequence(&m, &s).unwrap());
    }

    #[test]
    fn loss_node_matches_distribution_loss() {
        let m = random_model(3);
        let s = seq(&[0, 3, 5, 1], &[0.0, 0.3, 1.0, 2.4], 6);
        let out = forward_sequence(&m, &s).unwrap();
        let again = sequence_loss(&out.distributions, &out.targets).unwrap();
        assert!((out.loss - again).abs() < 1e-12);
    }

    #[test]
    fn loss_examples() {
        let certain = RecommendationDistribution { probs: vec![1.0, 0.0], ranked: vec![0, 1] };
        assert_eq!(sequence_loss(&[certain], &[0]).unwrap(), 0.0);
        let uniform = RecommendationDistribution::from_logits(&[0.0; 5]);
        assert!((sequence_loss(&[uniform], &[3]).unwrap() - 5f64.ln()).abs() < 1e-14);
        let two = RecommendationDistribution::<f64>::from_logits(&[0.0, -1.0]);
        assert!((sequence_loss(&[two], &[1]).unwrap() - 1.313_261_687_518_223).abs() < 1e-4);
    }

    #[test]
    fn unclamped_interval_is_rejected() {
        let m = random_model(4);
        let err = forward_sequence(&m, &seq(&[0, 1], &[0.0, 2.0], 6)).unwrap_err();
        assert!(matches!(err, FancError::Contract { .. }));
    }

    #[test]
    fn ablation_reports_unit_gate() {
        let mut m = random_model(5);
        m.config.ablate_conscious_only = true;
        let out = forward_sequence(&m, &seq(&[0, 1, 2], &[0.0, 0.4, 0.9], 6)).unwrap();
        assert!(out.diagnostics.iter().all(|d| d.delta_mean == 1.0));
    }
}
