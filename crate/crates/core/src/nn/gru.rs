use rand::Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::layers::Linear;
use crate::nn::params::ParamStore;
use crate::scalar::Scalar;

/// Gated recurrent unit cell:
///
/// ```text
/// r  = σ(W_xr x + b_xr + W_hr h + b_hr)
/// z  = σ(W_xz x + b_xz + W_hz h + b_hz)
/// n  = tanh(W_xn x + b_xn + r ⊙ (W_hn h + b_hn))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Clone, Debug)]
pub struct Gru {
    input_dim: usize,
    hidden_dim: usize,
    x_r: Linear,
    x_z: Linear,
    x_n: Linear,
    h_r: Linear,
    h_z: Linear,
    h_n: Linear,
}

impl Gru {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut lin =
            |suffix: &str, i: usize| Linear::new(store, &alloc::format!("{name}.{suffix}"), i, hidden_dim, rng);
        Self {
            input_dim,
            hidden_dim,
            x_r: lin("x_r", input_dim),
            x_z: lin("x_z", input_dim),
            x_n: lin("x_n", input_dim),
            h_r: lin("h_r", hidden_dim),
            h_z: lin("h_z", hidden_dim),
            h_n: lin("h_n", hidden_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// One recurrent update; `h_prev` is `1×hidden`, `x` is `1×input`.
    pub fn step<T: Scalar>(&self, tape: &mut Tape<'_, T>, h_prev: Var, x: Var) -> Result<Var> {
        if tape.value(h_prev).cols() != self.hidden_dim {
            return Err(Error::ShapeMismatch(alloc::format!(
                "GRU state width {} (expected {})",
                tape.value(h_prev).cols(),
                self.hidden_dim
            )));
        }
        let xr = self.x_r.forward(tape, x)?;
        let hr = self.h_r.forward(tape, h_prev)?;
        let r = tape.add(xr, hr);
        let r = tape.sigmoid(r);

        let xz = self.x_z.forward(tape, x)?;
        let hz = self.h_z.forward(tape, h_prev)?;
        let z = tape.add(xz, hz);
        let z = tape.sigmoid(z);

        let xn = self.x_n.forward(tape, x)?;
        let hn = self.h_n.forward(tape, h_prev)?;
        let gated = tape.mul(r, hn);
        let n = tape.add(xn, gated);
        let n = tape.tanh(n);

        let keep = tape.one_minus(z);
        let fresh = tape.mul(keep, n);
        let carried = tape.mul(z, h_prev);
        Ok(tape.add(fresh, carried))
    }
}
