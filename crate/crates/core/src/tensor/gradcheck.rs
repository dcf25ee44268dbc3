use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Differences below this are treated as exact agreement.
const ABS_FLOOR: f64 = 1e-8;

/// Worst-case disagreement for one named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_abs: f64,
    pub max_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub step: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.params.iter().map(|p| p.max_abs).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel() <= self.tolerance
    }
}

/// Relative error with an absolute floor: pairs closer than `1e-8` count as equal.
pub(crate) fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= ABS_FLOOR {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

/// Compare tape gradients of `f` against central differences with the given
/// `step`. `f` receives one leaf per entry of `params` (in order) and must
/// return a scalar.
pub fn finite_diff_check<F>(
    f: F,
    params: &[(String, Tensor)],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::contract(format!("finite-difference step must be > 0, got {step}")));
    }
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if !v.is_scalar() {
            return Err(Error::contract("gradient check function must return a scalar"));
        }
        let v = v.item();
        if !v.is_finite() {
            return Err(Error::numeric(format!("gradient check function returned {v}")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|(_, t)| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut values: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let mut report = Vec::with_capacity(params.len());
    for (p, (name, tensor)) in params.iter().enumerate() {
        let analytic = grads
            .get(vars[p])
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; tensor.len()]);
        if analytic.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric(format!("non-finite tape gradient for `{name}`")));
        }
        let mut check = ParamCheck {
            name: name.clone(),
            entries: tensor.len(),
            max_abs: 0.0,
            max_rel: 0.0,
        };
        for i in 0..tensor.len() {
            let orig = values[p].data()[i];
            values[p].data_mut()[i] = orig + step;
            let plus = eval(&values)?;
            values[p].data_mut()[i] = orig - step;
            let minus = eval(&values)?;
            values[p].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            check.max_abs = check.max_abs.max((analytic[i] - numeric).abs());
            check.max_rel = check.max_rel.max(relative_error(analytic[i], numeric));
        }
        report.push(check);
    }
    Ok(GradCheckReport {
        params: report,
        step,
        tolerance,
    })
}
