//! Conscious path: a bias-free GRU that updates the conscious state each time
//! an item is consumed.

use rand::Rng;

use crate::error::Result;
use crate::numerics::{RealArray, Scalar, Tape, Var};
use crate::model::glorot;

/// GRU weights. `w_*` map the item embedding (`d_u`) and `u_*` the previous
/// conscious state (`d_c`) into `d_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsciousParams<T> {
    pub w_z: RealArray<T>,
    pub u_z: RealArray<T>,
    pub w_c: RealArray<T>,
    pub u_c: RealArray<T>,
    pub w_g: RealArray<T>,
    pub u_g: RealArray<T>,
}

/// Tape handles for [`ConsciousParams`].
#[derive(Clone, Copy, Debug)]
pub struct ConsciousVars {
    pub w_z: Var,
    pub u_z: Var,
    pub w_c: Var,
    pub u_c: Var,
    pub w_g: Var,
    pub u_g: Var,
}

impl<T: Scalar> ConsciousParams<T> {
    pub fn zeros(d_c: usize, d_u: usize) -> Self {
        let w = || RealArray::zeros(&[d_c, d_u]);
        let u = || RealArray::zeros(&[d_c, d_c]);
        ConsciousParams {
            w_z: w(),
            u_z: u(),
            w_c: w(),
            u_c: u(),
            w_g: w(),
            u_g: u(),
        }
    }

    pub fn init(d_c: usize, d_u: usize, rng: &mut impl Rng) -> Self {
        ConsciousParams {
            w_z: glorot(d_c, d_u, rng),
            u_z: glorot(d_c, d_c, rng),
            w_c: glorot(d_c, d_u, rng),
            u_c: glorot(d_c, d_c, rng),
            w_g: glorot(d_c, d_u, rng),
            u_g: glorot(d_c, d_c, rng),
        }
    }

    pub fn register(&self, tape: &mut Tape<T>) -> ConsciousVars {
        ConsciousVars {
            w_z: tape.param("w_z", self.w_z.clone()),
            u_z: tape.param("u_z", self.u_z.clone()),
            w_c: tape.param("w_c", self.w_c.clone()),
            u_c: tape.param("u_c", self.u_c.clone()),
            w_g: tape.param("w_g", self.w_g.clone()),
            u_g: tape.param("u_g", self.u_g.clone()),
        }
    }
}

/// Records one GRU update on the tape and returns the new conscious state.
pub fn gru_step_on<T: Scalar>(
    tape: &mut Tape<T>,
    p: &ConsciousVars,
    c_prev: Var,
    e: Var,
) -> Result<Var> {
    let gate = |tape: &mut Tape<T>, w: Var, u: Var| -> Result<Var> {
        let a = tape.matvec(w, e)?;
        let b = tape.matvec(u, c_prev)?;
        let s = tape.add(a, b)?;
        tape.logistic(s)
    };
    let z = gate(tape, p.w_z, p.u_z)?;
    let g = gate(tape, p.w_g, p.u_g)?;
    let reset = tape.mul(g, c_prev)?;
    let a = tape.matvec(p.w_c, e)?;
    let b = tape.matvec(p.u_c, reset)?;
    let pre = tape.add(a, b)?;
    let candidate = tape.tanh(pre)?;
    // (1 − z) ⊙ c_prev + z ⊙ ĉ
    tape.lerp(z, candidate, c_prev)
}

/// `c_new = (1 − z) ⊙ c_prev + z ⊙ tanh(W_c e + U_c (g ⊙ c_prev))` with logistic
/// update gate `z` and reset gate `g`.
pub fn gru_step<T: Scalar>(params: &ConsciousParams<T>, c_prev: &[T], e: &[T]) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let c = tape.constant_vec(c_prev.to_vec());
    let x = tape.constant_vec(e.to_vec());
    let out = gru_step_on(&mut tape, &vars, c, x)?;
    Ok(tape.values(out).to_vec())
}
