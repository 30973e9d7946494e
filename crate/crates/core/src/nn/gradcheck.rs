//! Central finite-difference verification of reverse-mode gradients.

use crate::error::Result;
use crate::nn::{Gradients, ParamStore, Tape, Var};

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Below this magnitude, errors are measured absolutely rather than relative
/// to the gradient size.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn evaluate<F>(store: &ParamStore<f64>, forward: &F) -> Result<f64>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let out = forward(&mut tape)?;
    Ok(tape.scalar(out))
}

/// Reverse-mode gradients of the scalar produced by `forward`.
pub fn analytic_gradients<F>(store: &ParamStore<f64>, forward: &F) -> Result<Gradients<f64>>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let out = forward(&mut tape)?;
    tape.backward(out)
}

/// Compare `analytic` against central differences over every parameter coordinate.
pub fn compare_gradients<F>(
    store: &mut ParamStore<f64>,
    forward: &F,
    analytic: &Gradients<f64>,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, coordinates: 0, tolerance, passed: true };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let len = store.get(id).value.len();
        for k in 0..len {
            let original = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = original + FD_STEP;
            let plus = evaluate(store, forward)?;
            store.get_mut(id).value.data_mut()[k] = original - FD_STEP;
            let minus = evaluate(store, forward)?;
            store.get_mut(id).value.data_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic.get(id).map_or(0.0, |g| g[k]);
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                if err > report.max_rel_error {
                    report.max_rel_error = err;
                }
                report.worst = Some((store.get(id).name.clone(), k));
            }
        }
    }
    report.passed = report.max_rel_error < tolerance;
    Ok(report)
}

/// Check every parameter gradient of a scalar-valued fragment.
pub fn gradient_check<F>(store: &mut ParamStore<f64>, forward: F, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    let analytic = analytic_gradients(store, &forward)?;
    compare_gradients(store, &forward, &analytic, tolerance)
}
