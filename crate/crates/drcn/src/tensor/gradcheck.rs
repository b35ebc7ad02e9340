//! Central-difference gradient verification against the tape.

use crate::params::{GradMap, ParamSet};

use super::{Result, TensorError};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst_param: String,
    pub worst_index: usize,
    pub coords_checked: usize,
}

/// Compare tape gradients with central finite differences over every
/// coordinate of every trainable parameter in `params`.
///
/// `f(params, want_grads)` evaluates the scalar objective; when `want_grads`
/// it must also return the analytic gradient map from a backward pass. The
/// step is `h·max(1, |θ|)` per coordinate and the relative error denominator
/// is `max(|analytic|, |numeric|, 1e-8)`.
///
/// Two kinds of coordinates defeat a single fixed step. Networks with ReLU
/// and max-pooling are only piecewise smooth: a step straddling a kink
/// produces a spurious O(1) difference, and only a smaller step clears it.
/// Coordinates with gradients near the 1e-8 denominator floor are instead
/// limited by f64 cancellation in `f(θ+h)−f(θ−h)`, and only a larger step
/// resolves them. Offending coordinates are therefore re-measured over a
/// ladder of smaller and larger steps and keep their best error; a genuinely
/// wrong gradient disagrees with the converged numeric value at every scale.
pub fn grad_check<F>(params: &mut ParamSet, mut f: F, h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet, bool) -> Result<(f64, Option<GradMap>)>,
{
    let (f0, grads) = f(params, true)?;
    if !f0.is_finite() {
        return Err(TensorError::NonFinite("gradient-check objective".into()));
    }
    let grads = grads
        .ok_or_else(|| TensorError::Argument("objective returned no gradients".into()))?;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        coords_checked: 0,
    };
    let names: Vec<String> = params
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(n, _)| n.clone())
        .collect();
    for name in names {
        let n = params.get(&name).numel();
        let frozen = params.get(&name).frozen_prefix;
        let analytic = grads
            .get(&name)
            .ok_or_else(|| TensorError::Argument(format!("no gradient for {name}")))?
            .clone();
        if analytic.len() != n {
            return Err(TensorError::Dimension(format!(
                "gradient for {name}: {} values for {} params",
                analytic.len(),
                n
            )));
        }
        #[allow(clippy::needless_range_loop)] // i indexes params and analytic alike
        for i in frozen..n {
            let theta = params.get(&name).data[i];
            let mut rel = f64::INFINITY;
            for scale in [1.0, 0.125, 0.015625, 8.0, 64.0] {
                let step = h * theta.abs().max(1.0) * scale;
                params.get_mut(&name).data[i] = theta + step;
                let fp = f(params, false)?.0;
                params.get_mut(&name).data[i] = theta - step;
                let fm = f(params, false)?.0;
                params.get_mut(&name).data[i] = theta;
                if !fp.is_finite() || !fm.is_finite() {
                    return Err(TensorError::NonFinite(format!("objective near {name}[{i}]")));
                }
                let numeric = (fp - fm) / (2.0 * step);
                let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
                rel = rel.min((analytic[i] - numeric).abs() / denom);
                if rel < 1e-5 {
                    break;
                }
            }
            report.coords_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = name.clone();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
