use super::graph::{GradMode, Graph, NodeId};
use crate::tensor::{Tensor, TensorError};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Elements that were compared.
    pub checked: usize,
    /// Elements skipped because a perturbation crossed a relu kink or
    /// switched a max-pool winner.
    pub excluded: usize,
}

/// Central-difference check of `d root / d leaf`, element by element.
///
/// Relative error per element is `|analytic - numeric| / max(|analytic|,
/// |numeric|, 1e-8)`. The graph is restored to its original leaf value on
/// return.
pub fn finite_difference_check(
    graph: &mut Graph,
    root: NodeId,
    leaf: NodeId,
    eps: f64,
) -> Result<GradCheck, TensorError> {
    if !(eps > 0.0) {
        return Err(TensorError::InvalidArgument {
            op: "finite_difference_check",
            reason: format!("step {eps} must be positive"),
        });
    }
    let analytic = graph
        .gradient(root, &[leaf], GradMode::Standard)?
        .take(leaf)
        .expect("requested leaf present");
    let original = graph.evaluate(leaf)?;
    let base_sig = graph.activation_signature();
    let shape = original.shape().to_vec();

    let mut report = GradCheck {
        max_relative_error: 0.0,
        checked: 0,
        excluded: 0,
    };
    let probe = |graph: &mut Graph, idx: usize, delta: f64| -> Result<(f64, bool), TensorError> {
        let mut data = original.data().to_vec();
        data[idx] += delta;
        graph.set_leaf(leaf, Tensor::new(shape.clone(), data)?)?;
        graph.recompute()?;
        let same_piece = graph.activation_signature() == base_sig;
        Ok((graph.value(root)?.item(), same_piece))
    };
    for idx in 0..original.len() {
        let (plus, ok_plus) = probe(graph, idx, eps)?;
        let (minus, ok_minus) = probe(graph, idx, -eps)?;
        if !(ok_plus && ok_minus) {
            report.excluded += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.data()[idx];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        report.max_relative_error = report.max_relative_error.max((a - numeric).abs() / denom);
        report.checked += 1;
    }
    graph.set_leaf(leaf, original)?;
    graph.recompute()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_is_exact() {
        let mut g = Graph::new();
        let w = g.constant(Tensor::new(vec![1, 3], vec![0.5, -2.0, 3.0]).unwrap());
        let x = g.leaf(Tensor::new(vec![3, 1], vec![1.0, 2.0, -1.0]).unwrap());
        let y = g.matmul(w, x).unwrap();
        let y = g.reshape(y, &[1]).unwrap();
        let r = finite_difference_check(&mut g, y, x, 1e-5).unwrap();
        assert!(r.max_relative_error <= 1e-10, "{r:?}");
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn cubic_at_one() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(1.0));
        let x2 = g.mul(x, x).unwrap();
        let x3 = g.mul(x2, x).unwrap();
        let r = finite_difference_check(&mut g, x3, x, 1e-4).unwrap();
        // (1+e)^3 - (1-e)^3 = 6e + 2e^3, so numeric = 3 + e^2: rel. error 1e-8/3.
        assert!(r.max_relative_error < 1e-6, "{r:?}");
    }

    #[test]
    fn relu_kink_is_excluded() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(0.0));
        let y = g.relu(x).unwrap();
        let r = finite_difference_check(&mut g, y, x, 1e-5).unwrap();
        assert_eq!(r.excluded, 1);
        assert_eq!(r.checked, 0);
    }

    #[test]
    fn rejects_nonpositive_step() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(1.0));
        assert!(finite_difference_check(&mut g, x, x, 0.0).is_err());
    }
}
