use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Compares the tape gradient of a scalar function against central
/// differences and returns the largest
/// `|analytic - numeric| / max(1, |analytic|)` over all coordinates.
///
/// `f` must be built from smooth primitives only; threshold nodes have a
/// surrogate backward that finite differences cannot reproduce.
pub fn finite_diff_check<F>(f: F, point: &Tensor, epsilon: f64) -> Result<f64>
where
    F: Fn(&Graph, Var) -> Result<Var>,
{
    finite_diff_check_many(|g, vars| f(g, vars[0]), std::slice::from_ref(point), epsilon)
}

/// [`finite_diff_check`] over several input tensors at once.
pub fn finite_diff_check_many<F>(f: F, points: &[Tensor], epsilon: f64) -> Result<f64>
where
    F: Fn(&Graph, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::invalid(format!(
            "epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let g = Graph::new();
    let vars: Vec<Var> = points.iter().map(|p| g.param(p.clone())).collect();
    let out = f(&g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| g.grad_or_zeros(v)).collect();

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|p| g.constant(p.clone())).collect();
        let out = f(&g, &vars)?;
        let shape = g.shape(out);
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalar(shape));
        }
        Ok(g.scalar(out))
    };

    let mut worst = 0.0f64;
    let mut probe = points.to_vec();
    for (k, grad) in analytic.iter().enumerate() {
        for i in 0..grad.numel() {
            let orig = probe[k].data()[i];
            probe[k].data_mut()[i] = orig + epsilon;
            let plus = eval(&probe)?;
            probe[k].data_mut()[i] = orig - epsilon;
            let minus = eval(&probe)?;
            probe[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad.data()[i];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}
