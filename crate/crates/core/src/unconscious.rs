//! Unconscious path: the gravitational field spanned by the item embeddings,
//! the position/velocity ODE the unconscious state floats along, the shift
//! gate through which the conscious state displaces it, and time-padded
//! batch integration.
//!
//! Item `i` sits at `e_i` with mass `m_i = exp(rho_i)`. With `G = 1`, the
//! acceleration at `u` is
//!
//! ```text
//! a(u) = Σ_i m_i (e_i − u) / (‖e_i − u‖² + ε²)^(d_u / 2)
//! ```
//!
//! where `ε` is a softening length (`ε = 0` recovers the unsoftened law).
//! The field has no explicit time dependence, so only interval lengths matter.

use std::sync::Arc;

use rand::Rng;

use crate::error::{FancError, Result};
use crate::model::glorot;
use crate::numerics::rk4::{integrate, integrate_with_step, OdeSystem};
use crate::numerics::{CustomOp, RealArray, Scalar, Tape, Var};

/// Item embeddings and log-masses together with the kernel settings.
#[derive(Clone, Debug, PartialEq)]
pub struct GravityField<T> {
    pub embeddings: RealArray<T>,
    pub log_mass: RealArray<T>,
    pub softening: T,
    /// Optional cap on the acceleration norm.
    pub max_accel: Option<T>,
}

impl<T: Scalar> GravityField<T> {
    pub fn new(
        embeddings: RealArray<T>,
        log_mass: RealArray<T>,
        softening: T,
        max_accel: Option<T>,
    ) -> Result<Self> {
        if !embeddings.is_matrix() || log_mass.len() != embeddings.rows() {
            return Err(FancError::contract(
                "gravity_field",
                format!(
                    "embeddings {:?} and log-masses of length {} disagree",
                    embeddings.shape(),
                    log_mass.len()
                ),
            ));
        }
        if !(softening >= T::zero()) {
            return Err(FancError::contract("gravity_field", "softening must be >= 0"));
        }
        if matches!(max_accel, Some(a) if !(a > T::zero())) {
            return Err(FancError::contract("gravity_field", "max_accel must be positive"));
        }
        Ok(GravityField {
            embeddings,
            log_mass,
            softening,
            max_accel,
        })
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn n_items(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn masses(&self) -> Vec<T> {
        self.log_mass.as_slice().iter().map(|r| r.exp()).collect()
    }

    fn kernel(&self) -> GravityKernel<T> {
        GravityKernel {
            softening: self.softening,
            max_accel: self.max_accel,
        }
    }
}

/// Softened inverse-power attraction, with an optional norm clamp.
#[derive(Clone, Copy, Debug)]
pub struct GravityKernel<T> {
    pub softening: T,
    pub max_accel: Option<T>,
}

impl<T: Scalar> GravityKernel<T> {
    fn check(&self, emb: &RealArray<T>, rho: &RealArray<T>, u: &[T]) -> Result<()> {
        if !emb.is_matrix() || emb.cols() != u.len() || rho.len() != emb.rows() {
            return Err(FancError::contract(
                "acceleration",
                format!(
                    "embeddings {:?}, {} log-masses, position of length {}",
                    emb.shape(),
                    rho.len(),
                    u.len()
                ),
            ));
        }
        Ok(())
    }

    /// Unclamped acceleration.
    fn raw(&self, emb: &RealArray<T>, rho: &[T], u: &[T]) -> Vec<T> {
        let d = u.len();
        let power = T::from_usize_lossy(d) / T::lit(2.0);
        let eps2 = self.softening * self.softening;
        let mut a = vec![T::zero(); d];
        let mut r = vec![T::zero(); d];
        for i in 0..emb.rows() {
            let e = emb.row(i);
            let mut s = eps2;
            for k in 0..d {
                r[k] = e[k] - u[k];
                s += r[k] * r[k];
            }
            let w = rho[i].exp() * s.powf(-power);
            for k in 0..d {
                a[k] += w * r[k];
            }
        }
        a
    }

    /// Scale applied by the clamp, `None` when inactive.
    fn clamp_scale(&self, a: &[T]) -> Option<(T, T)> {
        let cap = self.max_accel?;
        let norm = crate::numerics::array::squared_norm(a).sqrt();
        (norm > cap).then_some((cap / norm, norm))
    }
}

impl<T: Scalar> CustomOp<T> for GravityKernel<T> {
    fn name(&self) -> &'static str {
        "gravity"
    }

    fn forward(&self, inputs: &[&RealArray<T>]) -> Result<RealArray<T>> {
        let (emb, rho, u) = (inputs[0], inputs[1], inputs[2].as_slice());
        self.check(emb, rho, u)?;
        let mut a = self.raw(emb, rho.as_slice(), u);
        if let Some((scale, _)) = self.clamp_scale(&a) {
            a.iter_mut().for_each(|x| *x *= scale);
        }
        Ok(RealArray::vector(a))
    }

    fn backward(
        &self,
        inputs: &[&RealArray<T>],
        output_adjoint: &[T],
        input_adjoints: &mut [Vec<T>],
    ) -> Result<()> {
        let (emb, rho, u) = (inputs[0], inputs[1].as_slice(), inputs[2].as_slice());
        let d = u.len();
        let mut g = output_adjoint.to_vec();
        let raw = self.raw(emb, rho, u);
        if let Some((scale, norm)) = self.clamp_scale(&raw) {
            // d(cap · a/‖a‖) = (cap/‖a‖)(I − â âᵀ)
            let dot = raw.iter().zip(&g).fold(T::zero(), |acc, (&a, &gi)| acc + a * gi);
            let k = dot / (norm * norm);
            for i in 0..d {
                g[i] = scale * (g[i] - raw[i] * k);
            }
        }
        let power = T::from_usize_lossy(d) / T::lit(2.0);
        let two_p = T::lit(2.0) * power;
        let eps2 = self.softening * self.softening;
        let mut r = vec![T::zero(); d];
        let (ge, rest) = input_adjoints.split_at_mut(1);
        let (grho, gu) = rest.split_at_mut(1);
        let (ge, grho, gu) = (&mut ge[0], &mut grho[0], &mut gu[0]);
        for i in 0..emb.rows() {
            let e = emb.row(i);
            let mut s = eps2;
            let mut dot = T::zero();
            for k in 0..d {
                r[k] = e[k] - u[k];
                s += r[k] * r[k];
                dot += g[k] * r[k];
            }
            let w = rho[i].exp() * s.powf(-power);
            grho[i] += w * dot;
            let c = two_p * w / s * dot;
            for k in 0..d {
                let de = w * g[k] - c * r[k];
                ge[i * d + k] += de;
                gu[k] -= de;
            }
        }
        Ok(())
    }
}

/// Acceleration felt by an unconscious position `u`.
pub fn acceleration<T: Scalar>(field: &GravityField<T>, u: &[T]) -> Result<Vec<T>> {
    let k = field.kernel();
    Ok(k.forward(&[&field.embeddings, &field.log_mass, &RealArray::vector(u.to_vec())])?
        .into_vec())
}

/// Potential whose negative gradient is the unclamped acceleration; needs `d_u > 2`.
pub fn potential<T: Scalar>(field: &GravityField<T>, u: &[T]) -> Result<T> {
    let d = field.dim();
    if d <= 2 {
        return Err(FancError::contract("potential", format!("unsupported for d_u = {d}")));
    }
    if u.len() != d {
        return Err(FancError::contract("potential", "position has the wrong length"));
    }
    let q = T::from_usize_lossy(d - 2);
    let eps2 = field.softening * field.softening;
    let mut phi = T::zero();
    for i in 0..field.n_items() {
        let s = crate::numerics::array::squared_distance(field.embeddings.row(i), u) + eps2;
        phi -= field.log_mass.as_slice()[i].exp() / (q * s.powf(q / T::lit(2.0)));
    }
    Ok(phi)
}

/// Specific mechanical energy `½‖v‖² + Φ(u)` of an extended state `[u, v]`.
pub fn specific_energy<T: Scalar>(field: &GravityField<T>, h: &[T]) -> Result<T> {
    let d = field.dim();
    let (u, v) = h.split_at(d);
    Ok(crate::numerics::array::squared_norm(v) / T::lit(2.0) + potential(field, u)?)
}

/// Tape handles for the field. The embedding handle is the same node the
/// model reads item vectors from.
#[derive(Clone, Debug)]
pub struct FieldVars<T> {
    pub embeddings: Var,
    pub log_mass: Var,
    pub kernel: Arc<GravityKernel<T>>,
    pub dim: usize,
}

impl<T: Scalar> FieldVars<T> {
    pub fn new(embeddings: Var, log_mass: Var, dim: usize, softening: T, max_accel: Option<T>) -> Self {
        FieldVars {
            embeddings,
            log_mass,
            kernel: Arc::new(GravityKernel {
                softening,
                max_accel,
            }),
            dim,
        }
    }

    pub fn acceleration_on(&self, tape: &mut Tape<T>, u: Var) -> Result<Var> {
        tape.custom(self.kernel.clone(), &[self.embeddings, self.log_mass, u])
    }
}

/// `d[u, v]/dt = [v, a(u)]` recorded on a tape.
struct GravitySystem<'a, T: Scalar> {
    tape: &'a mut Tape<T>,
    field: &'a FieldVars<T>,
}

impl<T: Scalar> OdeSystem<T> for GravitySystem<'_, T> {
    type State = Var;

    fn derivative(&mut self, h: &Var) -> Result<Var> {
        let d = self.field.dim;
        let u = self.tape.slice(*h, 0, d)?;
        let v = self.tape.slice(*h, d, d)?;
        let a = self.field.acceleration_on(self.tape, u)?;
        self.tape.concat(v, a)
    }

    fn offset(&mut self, y: &Var, scale: T, k: &Var) -> Result<Var> {
        self.tape.axpy(*y, scale, *k)
    }

    fn combine(&mut self, y: &Var, k: [&Var; 4], h: T) -> Result<Var> {
        self.tape.rk4_update(*y, [*k[0], *k[1], *k[2], *k[3]], h)
    }

    fn is_finite(&self, y: &Var) -> bool {
        self.tape.value(*y).all_finite()
    }
}

/// Step count for a free interval: `max(2, ⌈steps_per_unit · Δt⌉)`. Products
/// within `1e-9` of an integer are not rounded up.
pub fn interval_steps<T: Scalar>(delta_t: T, steps_per_unit: T) -> usize {
    let x = (steps_per_unit * delta_t).to_f64_lossy();
    let n = (x - 1e-9 * x.max(1.0)).ceil();
    (n.max(2.0)) as usize
}

/// Records an RK4 trajectory of `n_steps` steps over `delta_t`.
pub fn float_trajectory_on<T: Scalar>(
    tape: &mut Tape<T>,
    field: &FieldVars<T>,
    h: Var,
    delta_t: T,
    n_steps: usize,
) -> Result<Vec<Var>> {
    if tape.value(h).len() != 2 * field.dim {
        return Err(FancError::contract(
            "float_state",
            format!("extended state must have length {}", 2 * field.dim),
        ));
    }
    if !(delta_t >= T::zero()) {
        return Err(FancError::contract("float_state", "delta_t must be non-negative"));
    }
    let mut sys = GravitySystem { tape, field };
    integrate(&mut sys, h, delta_t, n_steps)
}

pub fn float_state_on<T: Scalar>(
    tape: &mut Tape<T>,
    field: &FieldVars<T>,
    h: Var,
    delta_t: T,
    steps_per_unit: T,
) -> Result<Var> {
    if delta_t == T::zero() {
        return Ok(h);
    }
    let n = interval_steps(delta_t, steps_per_unit);
    Ok(*float_trajectory_on(tape, field, h, delta_t, n)?.last().expect("non-empty"))
}

/// Floats every member over the full `pad` on a shared grid of `steps_for_pad`
/// steps and hands each member the grid state nearest its own interval.
pub fn float_batch_padded_on<T: Scalar>(
    tape: &mut Tape<T>,
    field: &FieldVars<T>,
    states: &[Var],
    delta_ts: &[T],
    pad: T,
    steps_for_pad: usize,
) -> Result<Vec<Var>> {
    if states.len() != delta_ts.len() {
        return Err(FancError::contract("float_batch_padded", "one interval per state"));
    }
    if steps_for_pad == 0 || !(pad > T::zero()) {
        return Err(FancError::contract("float_batch_padded", "pad and steps_for_pad must be positive"));
    }
    let grid = pad / T::from_usize_lossy(steps_for_pad);
    let width = 2 * field.dim;
    let mut out = Vec::with_capacity(states.len());
    for (&h, &dt) in states.iter().zip(delta_ts) {
        if !(dt >= T::zero()) || dt > pad {
            return Err(FancError::contract(
                "float_batch_padded",
                format!("interval {dt} outside [0, {pad}]"),
            ));
        }
        if tape.value(h).len() != width {
            return Err(FancError::contract(
                "float_batch_padded",
                format!("extended state must have length {width}"),
            ));
        }
        let k = ((dt / grid).round().to_f64_lossy() as usize).min(steps_for_pad);
        // steps beyond k are never read, so the shared trajectory is cut there
        let mut sys = GravitySystem { tape: &mut *tape, field };
        let traj = integrate_with_step(&mut sys, h, grid, k)?;
        out.push(traj[k]);
    }
    Ok(out)
}

fn field_on_tape<T: Scalar>(tape: &mut Tape<T>, field: &GravityField<T>) -> FieldVars<T> {
    let e = tape.constant(field.embeddings.clone());
    let r = tape.constant(field.log_mass.clone());
    FieldVars::new(e, r, field.dim(), field.softening, field.max_accel)
}

/// Floats an extended state `[u, v]` for `delta_t` time units.
pub fn float_state<T: Scalar>(
    field: &GravityField<T>,
    h_shift: &[T],
    delta_t: T,
    steps_per_unit: T,
) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let fv = field_on_tape(&mut tape, field);
    let h = tape.constant_vec(h_shift.to_vec());
    let out = float_state_on(&mut tape, &fv, h, delta_t, steps_per_unit)?;
    Ok(tape.values(out).to_vec())
}

/// [`float_state`] with an explicit step count.
pub fn float_state_steps<T: Scalar>(
    field: &GravityField<T>,
    h_shift: &[T],
    delta_t: T,
    n_steps: usize,
) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let fv = field_on_tape(&mut tape, field);
    let h = tape.constant_vec(h_shift.to_vec());
    let traj = float_trajectory_on(&mut tape, &fv, h, delta_t, n_steps)?;
    Ok(tape.values(*traj.last().expect("non-empty")).to_vec())
}

pub fn float_batch_padded<T: Scalar>(
    field: &GravityField<T>,
    states: &[Vec<T>],
    delta_ts: &[T],
    pad: T,
    steps_for_pad: usize,
) -> Result<Vec<Vec<T>>> {
    let mut tape = Tape::new();
    let fv = field_on_tape(&mut tape, field);
    let vars: Vec<Var> = states.iter().map(|h| tape.constant_vec(h.clone())).collect();
    let out = float_batch_padded_on(&mut tape, &fv, &vars, delta_ts, pad, steps_for_pad)?;
    Ok(out.iter().map(|v| tape.values(*v).to_vec()).collect())
}

/// Conscious-to-unconscious coupling: `Theta` (the linear map `2d_u × d_c`)
/// and the connection gate weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftParams<T> {
    pub theta: RealArray<T>,
    pub w_gamma: RealArray<T>,
    pub u_gamma: RealArray<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct ShiftVars {
    pub theta: Var,
    pub w_gamma: Var,
    pub u_gamma: Var,
}

impl<T: Scalar> ShiftParams<T> {
    pub fn zeros(d_u: usize, d_c: usize) -> Self {
        ShiftParams {
            theta: RealArray::zeros(&[2 * d_u, d_c]),
            w_gamma: RealArray::zeros(&[2 * d_u, d_c]),
            u_gamma: RealArray::zeros(&[2 * d_u, 2 * d_u]),
        }
    }

    pub fn init(d_u: usize, d_c: usize, rng: &mut impl Rng) -> Self {
        ShiftParams {
            theta: glorot(2 * d_u, d_c, rng),
            w_gamma: glorot(2 * d_u, d_c, rng),
            u_gamma: glorot(2 * d_u, 2 * d_u, rng),
        }
    }

    pub fn register(&self, tape: &mut Tape<T>) -> ShiftVars {
        ShiftVars {
            theta: tape.param("theta", self.theta.clone()),
            w_gamma: tape.param("w_gamma", self.w_gamma.clone()),
            u_gamma: tape.param("u_gamma", self.u_gamma.clone()),
        }
    }
}

/// Records the shift; returns `(h_shift, gamma)`.
pub fn shift_state_on<T: Scalar>(
    tape: &mut Tape<T>,
    p: &ShiftVars,
    c_new: Var,
    h_prev: Var,
) -> Result<(Var, Var)> {
    let a = tape.matvec(p.w_gamma, c_new)?;
    let b = tape.matvec(p.u_gamma, h_prev)?;
    let s = tape.add(a, b)?;
    let gamma = tape.logistic(s)?;
    let target = tape.matvec(p.theta, c_new)?;
    let h = tape.lerp(gamma, target, h_prev)?;
    Ok((h, gamma))
}

/// `γ ⊙ Θ c + (1 − γ) ⊙ h_prev` with `γ = σ(W_γ c + U_γ h_prev)`; moves both
/// position and velocity.
pub fn shift_state<T: Scalar>(params: &ShiftParams<T>, c_new: &[T], h_prev: &[T]) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let c = tape.constant_vec(c_new.to_vec());
    let h = tape.constant_vec(h_prev.to_vec());
    let (out, _) = shift_state_on(&mut tape, &vars, c, h)?;
    Ok(tape.values(out).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn field(emb: Vec<f64>, d: usize, rho: Vec<f64>, eps: f64) -> GravityField<f64> {
        let n = rho.len();
        GravityField::new(
            RealArray::matrix(n, d, emb).unwrap(),
            RealArray::vector(rho),
            eps,
            None,
        )
        .unwrap()
    }

    fn random_field(seed: u64, n: usize, d: usize, eps: f64) -> GravityField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let emb = (0..n * d).map(|_| nd.sample(&mut rng)).collect();
        let rho = (0..n).map(|_| 0.5 * nd.sample(&mut rng)).collect();
        field(emb, d, rho, eps)
    }

    #[test]
    fn massless_field_exerts_no_force() {
        let f = field(vec![1.0, 2.0, -1.0, 0.5], 2, vec![-100.0, -100.0], 0.5);
        let a = acceleration(&f, &[0.3, 0.3]).unwrap();
        assert!(a.iter().all(|x| x.abs() < 1e-30));
        let f3 = field(vec![1.0, 2.0, 0.0, -1.0, 0.5, 0.0], 3, vec![-100.0, -100.0], 0.5);
        assert!(potential(&f3, &[0.3, 0.3, 0.0]).unwrap().abs() < 1e-30);
    }

    #[test]
    fn symmetric_pair_cancels() {
        let f = field(vec![1.0, 0.0, -1.0, 0.0], 2, vec![0.3, 0.3], 0.0);
        assert_eq!(acceleration(&f, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_item_hand_value() {
        // m = 2 at displacement (3, 4): 2 (3, 4) / 25
        let f = field(vec![3.0, 4.0], 2, vec![2.0f64.ln()], 0.0);
        let a = acceleration(&f, &[0.0, 0.0]).unwrap();
        assert!((a[0] - 0.24).abs() < 1e-15 && (a[1] - 0.32).abs() < 1e-15);
    }

    #[test]
    fn clamp_caps_the_norm() {
        let mut f = field(vec![0.1, 0.0], 2, vec![0.0], 0.0);
        f.max_accel = Some(1.0);
        let a = acceleration(&f, &[0.0, 0.0]).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-15 && a[1] == 0.0);
    }

    #[test]
    fn potential_gradient_matches_acceleration() {
        let f = random_field(3, 6, 4, 0.5);
        let u = [0.2, -0.4, 0.9, 0.1];
        let a = acceleration(&f, &u).unwrap();
        let step = 1e-6;
        for k in 0..4 {
            let mut up = u;
            let mut dn = u;
            up[k] += step;
            dn[k] -= step;
            let num = -(potential(&f, &up).unwrap() - potential(&f, &dn).unwrap()) / (2.0 * step);
            assert!(crate::numerics::relative_error(a[k], num) < 1e-6, "{k}: {} vs {num}", a[k]);
        }
    }

    #[test]
    fn potential_is_translation_invariant() {
        let f = random_field(4, 5, 3, 0.5);
        let w = [0.7, -1.3, 2.0];
        let mut moved = f.clone();
        for i in 0..5 {
            for k in 0..3 {
                let v = moved.embeddings.get(i, k) + w[k];
                moved.embeddings.set(i, k, v);
            }
        }
        let u = [0.1, 0.2, 0.3];
        let uw: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + b).collect();
        let p0 = potential(&f, &u).unwrap();
        let p1 = potential(&moved, &uw).unwrap();
        assert!((p0 - p1).abs() < 1e-12 * p0.abs().max(1.0));
    }

    #[test]
    fn potential_needs_three_dimensions() {
        let f = field(vec![1.0, 1.0], 2, vec![0.0], 0.5);
        assert!(potential(&f, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_softening_at_an_item_fails_integration() {
        let f = field(vec![0.0, 0.0], 2, vec![0.0], 0.0);
        let err = float_state(&f, &[0.0, 0.0, 0.0, 0.0], 0.5, 10.0).unwrap_err();
        assert!(matches!(err, FancError::Integration { step: 1 }));
    }

    #[test]
    fn zero_interval_is_identity() {
        let f = random_field(1, 4, 2, 0.5);
        let h = vec![0.3, -0.2, 1.0, 0.5];
        assert_eq!(float_state(&f, &h, 0.0, 10.0).unwrap(), h);
    }

    #[test]
    fn force_free_drift_is_linear() {
        let f = field(vec![1.0, 2.0, -1.0, 0.5], 2, vec![-200.0, -200.0], 0.5);
        let out = float_state(&f, &[0.5, 0.5, 2.0, -1.0], 0.8, 10.0).unwrap();
        let expect = [0.5 + 1.6, 0.5 - 0.8, 2.0, -1.0];
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14, "{out:?}");
        }
    }

    #[test]
    fn short_interval_matches_fine_reference() {
        let f = field(vec![0.0, 0.0], 2, vec![0.0], 0.1);
        let h = [1.0, 0.0, 0.0, 0.0];
        let coarse = float_state(&f, &h, 0.1, 10.0).unwrap();
        let reference = float_state_steps(&f, &h, 0.1, 10_000).unwrap();
        for (a, b) in coarse.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn interval_step_rule() {
        assert_eq!(interval_steps(0.05, 10.0), 2);
        assert_eq!(interval_steps(0.3, 10.0), 3);
        assert_eq!(interval_steps(0.31, 10.0), 4);
        assert_eq!(interval_steps(1.5, 10.0), 15);
    }

    #[test]
    fn padded_batch_of_one_matches_single_float() {
        let f = random_field(2, 5, 2, 0.5);
        let h = vec![0.1, 0.2, -0.3, 0.4];
        let batch = float_batch_padded(&f, std::slice::from_ref(&h), &[1.5], 1.5, 15).unwrap();
        let single = float_state_steps(&f, &h, 1.5, 15).unwrap();
        assert_eq!(batch[0], single);
    }

    #[test]
    fn padded_batch_matches_per_sample_partition() {
        let f = random_field(5, 6, 3, 0.5);
        let h1 = vec![0.1, 0.2, -0.3, 0.4, 0.0, -0.1];
        let h2 = vec![-0.5, 0.2, 0.3, 0.0, 0.2, 0.1];
        let out = float_batch_padded(&f, &[h1.clone(), h2.clone()], &[0.75, 1.5], 1.5, 10).unwrap();
        let r1 = float_state_steps(&f, &h1, 0.75, 5).unwrap();
        let r2 = float_state_steps(&f, &h2, 1.5, 10).unwrap();
        for (a, b) in out[0].iter().zip(&r1).chain(out[1].iter().zip(&r2)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn padded_batch_with_zero_intervals_returns_inputs() {
        let f = random_field(6, 3, 2, 0.5);
        let hs = vec![vec![0.1, 0.2, 0.3, 0.4], vec![1.0, -1.0, 0.0, 0.5]];
        assert_eq!(float_batch_padded(&f, &hs, &[0.0, 0.0], 1.5, 15).unwrap(), hs);
    }

    #[test]
    fn padded_batch_rejects_long_interval() {
        let f = random_field(6, 3, 2, 0.5);
        let hs = vec![vec![0.0; 4]];
        assert!(matches!(
            float_batch_padded(&f, &hs, &[1.6], 1.5, 15),
            Err(FancError::Contract { .. })
        ));
    }

    #[test]
    fn shift_fixed_point_and_hand_value() {
        let p = ShiftParams::<f64>::zeros(2, 1);
        assert_eq!(shift_state(&p, &[0.3], &[2.0, 4.0, 0.0, 0.0]).unwrap(), vec![1.0, 2.0, 0.0, 0.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ShiftParams::<f64>::init(2, 3, &mut rng);
        let c = [0.2, -0.5, 0.9];
        let target = crate::numerics::affine(&p.theta, &c).unwrap();
        let out = shift_state(&p, &c, &target).unwrap();
        for (a, b) in out.iter().zip(&target) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn acceleration_is_translation_equivariant(
            seed in 0u64..200,
            w in proptest::collection::vec(-3.0f64..3.0, 3),
            u in proptest::collection::vec(-2.0f64..2.0, 3),
        ) {
            let f = random_field(seed, 5, 3, 0.5);
            let mut moved = f.clone();
            for i in 0..5 {
                for k in 0..3 {
                    let v = moved.embeddings.get(i, k) + w[k];
                    moved.embeddings.set(i, k, v);
                }
            }
            let uw: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + b).collect();
            let a0 = acceleration(&f, &u).unwrap();
            let a1 = acceleration(&moved, &uw).unwrap();
            for (x, y) in a0.iter().zip(&a1) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }

        #[test]
        fn heavier_item_pulls_harder(
            seed in 0u64..200,
            j in 0usize..5,
            bump in 0.01f64..2.0,
            u in proptest::collection::vec(-2.0f64..2.0, 3),
        ) {
            let f = random_field(seed, 5, 3, 0.5);
            let mut heavier = f.clone();
            heavier.log_mass.as_mut_slice()[j] += bump;
            let dir: Vec<f64> = f.embeddings.row(j).iter().zip(&u).map(|(e, x)| e - x).collect();
            let proj = |a: &[f64]| a.iter().zip(&dir).map(|(x, y)| x * y).sum::<f64>();
            let a0 = proj(&acceleration(&f, &u).unwrap());
            let a1 = proj(&acceleration(&heavier, &u).unwrap());
            prop_assert!(a1 > a0);
        }

        #[test]
        fn shift_is_convex_combination(
            seed in 0u64..200,
            c in proptest::collection::vec(-1.0f64..1.0, 3),
            h in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            let p = ShiftParams::<f64>::init(2, 3, &mut ChaCha8Rng::seed_from_u64(seed));
            let target = crate::numerics::affine(&p.theta, &c).unwrap();
            let out = shift_state(&p, &c, &h).unwrap();
            for i in 0..4 {
                prop_assert!(out[i] >= target[i].min(h[i]) - 1e-12);
                prop_assert!(out[i] <= target[i].max(h[i]) + 1e-12);
            }
        }
    }
}
