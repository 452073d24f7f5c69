//! Finite-difference verification of tape gradients.
//!
//! The check re-runs the full computation in 64-bit and compares analytic
//! gradients against central differences `(f(θ+h) − f(θ−h)) / 2h` for every
//! element of every parameter.

use super::{Result, Tape, Tensor, Var};

/// Outcome of a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error seen across all parameter elements.
    pub max_rel_error: f64,
    /// Name of the parameter holding the worst element.
    pub worst_param: String,
    /// Flat index of the worst element within that parameter.
    pub worst_index: usize,
    /// Total elements compared.
    pub n_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Relative error with a small floor so near-zero gradient pairs compare
/// by absolute difference.
fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Checks the gradient of a scalar-valued function of named parameters.
///
/// `f` rebuilds the computation from scratch on each call: it receives a
/// fresh tape plus the parameters registered as differentiable leaves (in
/// the order given) and returns the scalar loss variable.
pub fn grad_check<F>(params: &[(String, Tensor<f64>)], f: F, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let run = |values: &[(String, Tensor<f64>)]| -> Result<(f64, Vec<Option<Tensor<f64>>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|(_, t)| tape.param(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        let loss_value = tape.value(loss).scalar_value()?;
        let mut grads = tape.backward(loss)?;
        let out = vars.iter().map(|&v| grads.take(v)).collect();
        Ok((loss_value, out))
    };

    let (_, analytic) = run(params)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        n_checked: 0,
    };
    let mut work: Vec<(String, Tensor<f64>)> = params.to_vec();
    for (pi, (name, tensor)) in params.iter().enumerate() {
        for ei in 0..tensor.len() {
            let orig = tensor.data()[ei];
            work[pi].1.data_mut()[ei] = orig + h;
            let (f_plus, _) = run(&work)?;
            work[pi].1.data_mut()[ei] = orig - h;
            let (f_minus, _) = run(&work)?;
            work[pi].1.data_mut()[ei] = orig;

            let numeric = (f_plus - f_minus) / (2.0 * h);
            let a = analytic[pi]
                .as_ref()
                .map(|g| g.data()[ei])
                .unwrap_or(0.0);
            let err = rel_error(a, numeric);
            report.n_checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = ei;
            }
        }
    }
    Ok(report)
}
