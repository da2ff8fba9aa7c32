//! Central finite-difference gradient checking in double precision.

use crate::autograd::{Tape, Var};
use crate::nn::params::ParamStore;

/// Entries whose analytic and numeric gradients are both below this value
/// are compared absolutely rather than relatively.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Maximum relative error between the tape gradient and a central finite
/// difference of `f` (whose output entries are summed), over every scalar
/// parameter in `store`.
///
/// The relative error of one entry is `|a - n| / max(|a|, |n|, floor)`.
pub fn check_param_gradients<F>(store: &mut ParamStore<f64>, step: f64, mut f: F) -> f64
where
    F: FnMut(&mut Tape<'_, f64>) -> Var,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let out = f(&mut tape);
        tape.backward(out).flatten(store)
    };
    let mut eval = |store: &ParamStore<f64>| {
        let mut tape = Tape::new(store);
        let out = f(&mut tape);
        tape.value(out).sum()
    };

    let mut worst: f64 = 0.0;
    let mut flat = 0;
    let ids: alloc::vec::Vec<_> = store.ids().collect();
    for id in ids {
        for k in 0..store.get(id).len() {
            let orig = store.get(id).as_slice()[k];
            store.get_mut(id).as_mut_slice()[k] = orig + step;
            let plus = eval(store);
            store.get_mut(id).as_mut_slice()[k] = orig - step;
            let minus = eval(store);
            store.get_mut(id).as_mut_slice()[k] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[flat];
            let denom = a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
            flat += 1;
        }
    }
    worst
}
