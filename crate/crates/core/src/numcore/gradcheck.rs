use super::graph::{Graph, Var};
use super::params::ParamSet;
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    /// Analytic and central-difference values at the worst coordinate.
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub coordinates: usize,
}

/// Denominator floor for the relative error, per unit of loss magnitude.
/// Keeps near-zero gradients from amplifying round-off.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compare the analytic gradient of `loss_fn` with
/// `(f(θ+ε) − f(θ−ε)) / 2ε` for every coordinate of every parameter.
///
/// The relative error per coordinate is `|a − n| / max(|a|, |n|, floor)` with
/// `floor = GRAD_CHECK_FLOOR · max(1, |f(θ)|)`, so rescaling the loss leaves
/// the report unchanged.
pub fn grad_check<F>(loss_fn: F, params: &ParamSet, epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::Argument(format!("epsilon must lie in (0, 1e-2], got {epsilon}")));
    }
    let eval = |p: &ParamSet| -> Result<f64> {
        let mut g = Graph::new();
        let loss = loss_fn(&mut g, p)?;
        let v = g.scalar(loss);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation(format!("loss is not finite ({v})")))
        }
    };

    let mut g = Graph::new();
    let loss = loss_fn(&mut g, params)?;
    if !g.scalar(loss).is_finite() {
        return Err(Error::Evaluation(format!("loss is not finite ({})", g.scalar(loss))));
    }
    let grads = g.backward(loss)?;
    let floor = GRAD_CHECK_FLOOR * g.scalar(loss).abs().max(1.0);

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        coordinates: 0,
    };
    let mut probe = params.clone();
    for (name, t) in params.iter() {
        let analytic = grads
            .get(name)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; t.len()]);
        for (i, &orig) in t.data().iter().enumerate() {
            probe.get_mut(name).expect("same names").data_mut()[i] = orig + epsilon;
            let up = eval(&probe)?;
            probe.get_mut(name).expect("same names").data_mut()[i] = orig - epsilon;
            let down = eval(&probe)?;
            probe.get_mut(name).expect("same names").data_mut()[i] = orig;

            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic[i];
            let denom = a.abs().max(numeric.abs()).max(floor);
            let rel = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_parameter = name.clone();
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
