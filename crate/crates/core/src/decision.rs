//! Decision gate balancing conscious and unconscious states, and the
//! recommendation layer: a softmax over negative squared distances between the
//! decision state and every item embedding.

use std::cmp::Ordering;

use rand::Rng;

use crate::error::{FancError, Result};
use crate::model::glorot;
use crate::numerics::tape::log_sum_exp;
use crate::numerics::{RealArray, Scalar, Tape, Var};

/// `Phi` (the linear map `d_u × d_c`) and the decision gate weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionParams<T> {
    pub phi: RealArray<T>,
    pub w_delta: RealArray<T>,
    pub u_delta: RealArray<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct DecisionVars {
    pub phi: Var,
    pub w_delta: Var,
    pub u_delta: Var,
}

impl<T: Scalar> DecisionParams<T> {
    pub fn zeros(d_u: usize, d_c: usize) -> Self {
        DecisionParams {
            phi: RealArray::zeros(&[d_u, d_c]),
            w_delta: RealArray::zeros(&[d_u, d_c]),
            u_delta: RealArray::zeros(&[d_u, d_u]),
        }
    }

    pub fn init(d_u: usize, d_c: usize, rng: &mut impl Rng) -> Self {
        DecisionParams {
            phi: glorot(d_u, d_c, rng),
            w_delta: glorot(d_u, d_c, rng),
            u_delta: glorot(d_u, d_u, rng),
        }
    }

    pub fn register(&self, tape: &mut Tape<T>) -> DecisionVars {
        DecisionVars {
            phi: tape.param("phi", self.phi.clone()),
            w_delta: tape.param("w_delta", self.w_delta.clone()),
            u_delta: tape.param("u_delta", self.u_delta.clone()),
        }
    }
}

/// Records the decision state; returns `(d, delta)` where `delta` is `None`
/// under the conscious-only ablation (gate fixed at one).
pub fn decision_state_on<T: Scalar>(
    tape: &mut Tape<T>,
    p: &DecisionVars,
    c: Var,
    u: Var,
    ablate_conscious_only: bool,
) -> Result<(Var, Option<Var>)> {
    let conscious = tape.matvec(p.phi, c)?;
    if ablate_conscious_only {
        if tape.value(conscious).len() != tape.value(u).len() {
            return Err(FancError::contract("decision_state", "Phi·c and u differ in length"));
        }
        return Ok((conscious, None));
    }
    let a = tape.matvec(p.w_delta, c)?;
    let b = tape.matvec(p.u_delta, u)?;
    let s = tape.add(a, b)?;
    let delta = tape.logistic(s)?;
    let d = tape.lerp(delta, conscious, u)?;
    Ok((d, Some(delta)))
}

/// `δ ⊙ Φ c + (1 − δ) ⊙ u` with `δ = σ(W_δ c + U_δ u)`.
pub fn decision_state<T: Scalar>(
    params: &DecisionParams<T>,
    c: &[T],
    u: &[T],
    ablate_conscious_only: bool,
) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let cv = tape.constant_vec(c.to_vec());
    let uv = tape.constant_vec(u.to_vec());
    let (d, _) = decision_state_on(&mut tape, &vars, cv, uv, ablate_conscious_only)?;
    Ok(tape.values(d).to_vec())
}

/// Recommendation probabilities over the whole catalog.
#[derive(Clone, Debug, PartialEq)]
pub struct RecommendationDistribution<T> {
    pub probs: Vec<T>,
    /// Item indices by descending probability; ties by ascending index.
    pub ranked: Vec<usize>,
}

impl<T: Scalar> RecommendationDistribution<T> {
    /// Builds the distribution from logits `−‖d − e_i‖²`.
    pub fn from_logits(logits: &[T]) -> Self {
        let lse = log_sum_exp(logits);
        let probs = logits.iter().map(|&x| (x - lse).exp()).collect();
        RecommendationDistribution {
            probs,
            ranked: rank_descending(logits),
        }
    }

    pub fn top_k(&self, k: usize) -> &[usize] {
        &self.ranked[..k.min(self.ranked.len())]
    }
}

/// Indices sorted by descending score, ties by ascending index.
pub fn rank_descending<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

fn neg_sq_distances<T: Scalar>(d: &[T], embeddings: &RealArray<T>) -> Result<Vec<T>> {
    if !embeddings.is_matrix() || embeddings.cols() != d.len() || embeddings.rows() == 0 {
        return Err(FancError::contract(
            "score_items",
            format!("embeddings {:?} vs decision state of length {}", embeddings.shape(), d.len()),
        ));
    }
    Ok((0..embeddings.rows())
        .map(|i| -crate::numerics::array::squared_distance(d, embeddings.row(i)))
        .collect())
}

/// `p_i ∝ exp(−‖d − e_i‖²)`, evaluated with max-subtraction.
pub fn score_items<T: Scalar>(
    d: &[T],
    embeddings: &RealArray<T>,
) -> Result<RecommendationDistribution<T>> {
    Ok(RecommendationDistribution::from_logits(&neg_sq_distances(d, embeddings)?))
}

/// The `k` items nearest to `d`, nearest first, ties by ascending index.
pub fn recommend_top_k<T: Scalar>(d: &[T], embeddings: &RealArray<T>, k: usize) -> Result<Vec<usize>> {
    let n = embeddings.rows();
    if k == 0 || k > n {
        return Err(FancError::contract("recommend_top_k", format!("k = {k} outside 1..={n}")));
    }
    let mut ranked = rank_descending(&neg_sq_distances(d, embeddings)?);
    ranked.truncate(k);
    Ok(ranked)
}
