//! Central-difference gradient checking.

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Largest relative discrepancy between the taped gradient of `f` at `x`
/// and its central-difference estimate, measured per coordinate as
/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, NodeId) -> Result<NodeId>,
{
    grad_check_many(|g, ids| f(g, ids[0]), std::slice::from_ref(x), eps)
}

/// [`grad_check`] over several input tensors at once.
pub fn grad_check_many<F>(f: F, xs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::invalid(format!("grad_check eps must lie in (0, 1e-2], got {eps}")));
    }
    let analytic = analytic_gradients(&f, xs)?;
    let numeric = numeric_gradients(&f, xs, eps)?;
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(&numeric) {
        for (&a, &n) in a.data().iter().zip(n.data()) {
            worst = worst.max((a - n).abs() / n.abs().max(1.0));
        }
    }
    if !worst.is_finite() {
        return Err(Error::NonFinite("grad_check".into()));
    }
    Ok(worst)
}

pub fn analytic_gradients<F>(f: &F, xs: &[Tensor]) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = xs.iter().map(|x| g.parameter(x.clone())).collect();
    let loss = f(&mut g, &ids)?;
    let grads = g.backward(loss)?;
    Ok(ids.iter().map(|&id| grads.wrt(id)).collect())
}

pub fn numeric_gradients<F>(f: &F, xs: &[Tensor], eps: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|x| g.parameter(x.clone())).collect();
        let loss = f(&mut g, &ids)?;
        let v = g.value(loss).item()?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("grad_check evaluation".into()))
        }
    };

    let mut out = Vec::with_capacity(xs.len());
    let mut work: Vec<Tensor> = xs.to_vec();
    for t in 0..xs.len() {
        let base = xs[t].data().to_vec();
        let mut grad = vec![0.0; base.len()];
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += eps;
            work[t] = Tensor::new(xs[t].shape().to_vec(), plus)?;
            let fp = eval(&work)?;
            let mut minus = base.clone();
            minus[i] -= eps;
            work[t] = Tensor::new(xs[t].shape().to_vec(), minus)?;
            let fm = eval(&work)?;
            grad[i] = (fp - fm) / (2.0 * eps);
        }
        work[t] = xs[t].clone();
        out.push(Tensor::new(xs[t].shape().to_vec(), grad)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_has_no_error() {
        let x = Tensor::vector(vec![0.3, -2.0, 5.0]).unwrap();
        let err = grad_check(|g, x| g.sum(x), &x, 1e-6).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn eps_range_enforced() {
        let x = Tensor::vector(vec![1.0]).unwrap();
        assert!(grad_check(|g, x| g.sum(x), &x, 0.0).is_err());
        assert!(grad_check(|g, x| g.sum(x), &x, 0.1).is_err());
    }

    #[test]
    fn non_finite_evaluation_is_an_error() {
        let x = Tensor::vector(vec![1e-7]).unwrap();
        // log(x - eps) is undefined for eps > x.
        let res = grad_check(
            |g, x| {
                let l = g.log(x)?;
                g.sum(l)
            },
            &x,
            1e-6,
        );
        assert!(res.is_err());
    }
}
