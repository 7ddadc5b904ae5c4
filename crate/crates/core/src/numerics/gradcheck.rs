use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use super::{Matrix, Tape, Var};
use crate::error::{Error, Result};

/// Named parameter values handed to a loss builder.
pub type ParamSet = BTreeMap<String, Matrix>;

/// Leaf handles matching a [`ParamSet`], keyed by the same names.
pub type ParamVars = BTreeMap<String, Var>;

fn evaluate<F>(build: &F, params: &ParamSet) -> Result<(Tape, Var)>
where
    F: Fn(&mut Tape, &ParamVars) -> Result<Var>,
{
    let mut tape = Tape::new();
    let mut vars = ParamVars::new();
    for (name, value) in params {
        vars.insert(name.clone(), tape.param(name, value.clone())?);
    }
    let loss = build(&mut tape, &vars)?;
    tape.value(loss).item()?;
    Ok((tape, loss))
}

/// Compares reverse-mode gradients of `build` against central differences
/// with step `eps`. Returns the maximum over all parameter entries of
/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(build: F, params: &ParamSet, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamVars) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }

    let (tape, loss) = evaluate(&build, params)?;
    let first = tape.value(loss).item()?;
    let (again, again_loss) = evaluate(&build, params)?;
    let second = again.value(again_loss).item()?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Determinism { first, second });
    }
    let analytic = tape.backward(loss)?;

    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for (name, value) in params {
        let grad = analytic
            .get(name)
            .ok_or_else(|| Error::Parameter(format!("no gradient for {name:?}")))?;
        for idx in 0..value.len() {
            let original = value.as_slice()[idx];

            probe.get_mut(name).unwrap().as_mut_slice()[idx] = original + eps;
            let (t, l) = evaluate(&build, &probe)?;
            let plus = t.value(l).item()?;

            probe.get_mut(name).unwrap().as_mut_slice()[idx] = original - eps;
            let (t, l) = evaluate(&build, &probe)?;
            let minus = t.value(l).item()?;

            probe.get_mut(name).unwrap().as_mut_slice()[idx] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let err = libm::fabs(grad.as_slice()[idx] - numeric) / libm::fmax(1.0, libm::fabs(numeric));
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
