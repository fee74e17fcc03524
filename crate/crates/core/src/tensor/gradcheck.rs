use super::{Tape, Tensor, TensorError, Var};

/// Compares reverse-mode gradients against central finite differences.
///
/// `f` builds a scalar from leaves bound to `params` (in order). Returns the
/// largest relative error `|a - n| / max(1e-8, |a| + |n|)` over every
/// coordinate of every parameter.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<f64, TensorError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, TensorError>,
{
    let tape = Tape::new();
    let leaves: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&tape, &leaves)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = leaves
        .iter()
        .zip(params)
        .map(|(l, p)| grads.get(*l).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64, TensorError> {
        let tape = Tape::new();
        let leaves: Vec<Var> = perturbed.iter().map(|p| tape.constant(p.clone())).collect();
        f(&tape, &leaves)?.item()
    };

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for i in 0..p.numel() {
            let orig = p.data()[i];
            work[pi].data_mut()[i] = orig + eps;
            let up = eval(&work)?;
            work[pi].data_mut()[i] = orig - eps;
            let down = eval(&work)?;
            work[pi].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[pi].data()[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
