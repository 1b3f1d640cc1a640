use crate::error::{FancError, Result};
use crate::numerics::Scalar;

/// A first-order autonomous system `y' = f(y)` that the classical RK4 scheme can
/// step. The state representation is left to the implementor so the same
/// scheme drives both plain vectors and recorded tape nodes.
pub trait OdeSystem<T: Scalar> {
    type State: Clone;

    fn derivative(&mut self, y: &Self::State) -> Result<Self::State>;

    /// `y + scale · k`
    fn offset(&mut self, y: &Self::State, scale: T, k: &Self::State) -> Result<Self::State>;

    /// `y + h/6 (k1 + 2 k2 + 2 k3 + k4)`
    fn combine(&mut self, y: &Self::State, k: [&Self::State; 4], h: T) -> Result<Self::State>;

    fn is_finite(&self, y: &Self::State) -> bool;
}

/// Fixed-step classical RK4. Returns `n_steps + 1` states, the first being `y0`.
pub fn integrate<T: Scalar, S: OdeSystem<T>>(
    system: &mut S,
    y0: S::State,
    duration: T,
    n_steps: usize,
) -> Result<Vec<S::State>> {
    if n_steps == 0 {
        return Err(FancError::contract("rk4", "n_steps must be at least 1"));
    }
    if !(duration >= T::zero()) {
        return Err(FancError::contract("rk4", "duration must be non-negative"));
    }
    let mut traj = Vec::with_capacity(n_steps + 1);
    traj.push(y0);
    if duration == T::zero() {
        let y = traj[0].clone();
        traj.resize(n_steps + 1, y);
        return Ok(traj);
    }
    let h = duration / T::from_usize_lossy(n_steps);
    integrate_with_step(system, traj.pop().expect("initial state"), h, n_steps)
}

/// `n_steps` RK4 steps of fixed size `h`; `n_steps = 0` returns `[y0]`. Shared
/// grids use this so that a shorter run is an exact prefix of a longer one.
pub fn integrate_with_step<T: Scalar, S: OdeSystem<T>>(
    system: &mut S,
    y0: S::State,
    h: T,
    n_steps: usize,
) -> Result<Vec<S::State>> {
    let mut traj = Vec::with_capacity(n_steps + 1);
    traj.push(y0);
    let half = h / T::lit(2.0);
    for step in 1..=n_steps {
        let y = &traj[step - 1];
        let k1 = system.derivative(y)?;
        let y2 = system.offset(y, half, &k1)?;
        let k2 = system.derivative(&y2)?;
        let y3 = system.offset(y, half, &k2)?;
        let k3 = system.derivative(&y3)?;
        let y4 = system.offset(y, h, &k3)?;
        let k4 = system.derivative(&y4)?;
        let next = system.combine(y, [&k1, &k2, &k3, &k4], h)?;
        if !system.is_finite(&next) {
            return Err(FancError::Integration { step });
        }
        traj.push(next);
    }
    Ok(traj)
}

struct VecField<F>(F);

impl<T: Scalar, F: FnMut(&[T]) -> Vec<T>> OdeSystem<T> for VecField<F> {
    type State = Vec<T>;

    fn derivative(&mut self, y: &Vec<T>) -> Result<Vec<T>> {
        let d = (self.0)(y);
        if d.len() != y.len() {
            return Err(FancError::contract("rk4_trajectory", "field changed the state length"));
        }
        Ok(d)
    }

    fn offset(&mut self, y: &Vec<T>, scale: T, k: &Vec<T>) -> Result<Vec<T>> {
        Ok(y.iter().zip(k).map(|(&a, &b)| a + scale * b).collect())
    }

    fn combine(&mut self, y: &Vec<T>, k: [&Vec<T>; 4], h: T) -> Result<Vec<T>> {
        let h6 = h / T::lit(6.0);
        let two = T::lit(2.0);
        Ok((0..y.len())
            .map(|i| y[i] + h6 * (k[0][i] + two * k[1][i] + two * k[2][i] + k[3][i]))
            .collect())
    }

    fn is_finite(&self, y: &Vec<T>) -> bool {
        y.iter().all(|v| v.is_finite())
    }
}

/// RK4 trajectory of an autonomous vector field over `duration` in uniform steps.
pub fn rk4_trajectory<T: Scalar, F>(
    field: F,
    y0: &[T],
    duration: T,
    n_steps: usize,
) -> Result<Vec<Vec<T>>>
where
    F: FnMut(&[T]) -> Vec<T>,
{
    let mut sys = VecField(field);
    integrate(&mut sys, y0.to_vec(), duration, n_steps)
}
