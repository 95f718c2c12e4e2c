use super::{Graph, Tensor, Var};
use crate::error::Result;

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// max over coordinates of `|analytic - numeric| / max(1, |numeric|)`,
    /// taken over the finite coordinates only
    pub max_rel_error: f64,
    /// coordinates where either gradient was NaN or infinite
    pub non_finite: usize,
    pub analytic: Tensor,
    pub numeric: Tensor,
}

/// Checks the gradient of a scalar-valued graph function at `point`.
///
/// `f` receives a fresh graph and the input variable and must return a
/// one-element output. It is called once for the analytic gradient and
/// twice per coordinate for the central differences.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.param(point.clone());
    let y = f(&mut g, x)?;
    g.backward(y)?;
    let analytic = g
        .take_grad(x)
        .unwrap_or_else(|| Tensor::zeros(point.shape()));

    let eval = |p: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.param(p);
        let y = f(&mut g, x)?;
        g.value(y).item()
    };

    let mut numeric = Tensor::zeros(point.shape());
    for i in 0..point.numel() {
        let mut plus = point.clone();
        plus.data_mut()[i] += step;
        let mut minus = point.clone();
        minus.data_mut()[i] -= step;
        numeric.data_mut()[i] = (eval(plus)? - eval(minus)?) / (2.0 * step);
    }

    let mut max_rel_error: f64 = 0.0;
    let mut non_finite = 0;
    for (&a, &n) in analytic.data().iter().zip(numeric.data()) {
        if !a.is_finite() || !n.is_finite() {
            non_finite += 1;
            continue;
        }
        max_rel_error = max_rel_error.max((a - n).abs() / n.abs().max(1.0));
    }
    Ok(GradCheckReport {
        max_rel_error,
        non_finite,
        analytic,
        numeric,
    })
}
