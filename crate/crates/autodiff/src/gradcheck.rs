//! Central finite-difference gradient checks.
//!
//! The numerical side only evaluates the forward pass, so it is independent
//! of the reverse-mode implementation it verifies.

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// ‖a − n‖₂ / max(‖a‖₂, ‖n‖₂); zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Check d loss / d inputs for a function of free input tensors.
///
/// `f` builds a scalar loss from the input variables on a fresh tape.
/// Returns the worst relative error over the inputs.
pub fn check_inputs<F>(inputs: &[Tensor], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let eval = |ins: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = ins.iter().map(|x| t.constant(x.clone())).collect();
        let l = f(&mut t, &vs)?;
        Ok(t.value(l).item())
    };

    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*v)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let mut numeric = Vec::with_capacity(analytic.len());
        let mut work = inputs.to_vec();
        for j in 0..inputs[i].numel() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(worst)
}

/// Check parameter gradients of a model loss at selected coordinates.
///
/// `coords` lists `(parameter, flat index)` pairs to perturb; `loss` builds
/// the scalar loss from the store on a fresh tape. Returns the relative error
/// over the selected coordinates jointly.
pub fn check_params<F>(
    store: &ParamStore,
    coords: &[(ParamId, usize)],
    h: f64,
    loss: F,
) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let l = loss(&mut tape, store)?;
    let grads = tape.backward(l)?;
    let mut analytic = Vec::with_capacity(coords.len());
    let mut numeric = Vec::with_capacity(coords.len());
    let mut work = store.clone();
    for &(id, j) in coords {
        analytic.push(grads.param(id).map_or(0.0, |g| g.data()[j]));
        let orig = store.get(id).value.data()[j];
        let mut eval_at = |v: f64| -> Result<f64> {
            work.get_mut(id).value.data_mut()[j] = v;
            let mut t = Tape::new();
            let l = loss(&mut t, &work)?;
            Ok(t.value(l).item())
        };
        let up = eval_at(orig + h)?;
        let down = eval_at(orig - h)?;
        eval_at(orig)?;
        numeric.push((up - down) / (2.0 * h));
    }
    Ok(relative_error(&analytic, &numeric))
}
