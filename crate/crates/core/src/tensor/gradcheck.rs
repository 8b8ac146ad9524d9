use super::{ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Outcome of [`grad_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max over all parameter elements of
    /// `|analytic - numeric| / max(1, |numeric|)`.
    pub max_rel_error: f64,
    /// Parameter name and flat element index attaining the maximum.
    pub worst: Option<(String, usize)>,
    pub elements_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares tape gradients of the scalar `f` against central differences
/// over every element of every parameter in `params`.
///
/// Parameters that do not influence `f` are checked against a zero analytic
/// gradient.
pub fn grad_check<S, F>(params: &ParamSet<S>, eps: f64, f: F) -> Result<GradCheckReport>
where
    S: Scalar,
    F: for<'a> Fn(&mut Tape<'a, S>) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Usage(format!("grad_check eps {eps} outside [1e-7, 1e-3]")));
    }
    let grads = {
        let mut tape = Tape::with_params(params);
        let loss = f(&mut tape)?;
        tape.backward(loss)?
    };

    let eval = |p: &ParamSet<S>| -> Result<f64> {
        let mut tape = Tape::with_params(p);
        let loss = f(&mut tape)?;
        Ok(tape.value(loss).data()[0].as_f64())
    };

    let mut work = params.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, elements_checked: 0 };
    let step = S::lit(eps);
    for id in params.ids() {
        let analytic = grads.param(id).map(|g| g.to_f64_vec());
        for i in 0..params.get(id).numel() {
            let orig = params.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + step;
            let plus = eval(&work);
            work.get_mut(id).data_mut()[i] = orig - step;
            let minus = eval(&work);
            work.get_mut(id).data_mut()[i] = orig;
            let (plus, minus) = match (plus, minus) {
                (Ok(p), Ok(m)) if p.is_finite() && m.is_finite() => (p, m),
                (Err(e), _) | (_, Err(e)) if !matches!(e, Error::Numeric(_)) => return Err(e),
                _ => {
                    return Err(Error::Numeric(format!(
                        "non-finite loss perturbing {}[{i}] (parameter #{})",
                        params.name(id),
                        id.index()
                    )))
                }
            };
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.as_ref().map_or(0.0, |g| g[i]);
            let rel = (a - numeric).abs() / numeric.abs().max(1.0);
            report.elements_checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((params.name(id).to_string(), i));
            }
        }
    }
    Ok(report)
}
