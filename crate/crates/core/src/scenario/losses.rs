use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::micronet::Model;
use crate::tensor::Tensor;

/// Distribution with mass `c` on class `t` and `(1 − c) / (K − 1)` elsewhere.
pub fn soft_target(classes: usize, t: usize, c: f64) -> Vec<f64> {
    let rest = (1.0 - c) / (classes - 1) as f64;
    (0..classes).map(|i| if i == t { c } else { rest }).collect()
}

fn check_target(classes: usize, t: usize) -> Result<()> {
    if t >= classes {
        return Err(Error::Precondition(format!("target {t} out of range for {classes} classes")));
    }
    Ok(())
}

/// `−Φ_t` as a graph node over a logits node.
pub(crate) fn max_target_node(g: &mut Graph, logits: NodeId, t: usize) -> Result<NodeId> {
    let z = g.select(logits, t)?;
    Ok(g.scale(z, -1.0)?)
}

/// Cross-entropy of the logits against [`soft_target`].
pub(crate) fn const_target_node(g: &mut Graph, logits: NodeId, t: usize, c: f64) -> Result<NodeId> {
    let k = g.value(logits)?.len();
    Ok(g.soft_cross_entropy(logits, soft_target(k, t, c))?)
}

/// `−Φ_t(x)`.
pub fn loss_max_target(model: &Model, x: &Tensor, t: usize) -> Result<f64> {
    check_target(model.classes(), t)?;
    Ok(-model.logits(x)?.data()[t])
}

/// Cross-entropy between `softmax(Φ(x))` and the soft target at confidence `c`.
pub fn loss_const_target(model: &Model, x: &Tensor, t: usize, c: f64) -> Result<f64> {
    check_target(model.classes(), t)?;
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Precondition(format!("confidence {c} outside (0, 1)")));
    }
    let mut g = Graph::new();
    let z = g.constant(model.logits(x)?);
    let loss = const_target_node(&mut g, z, t, c)?;
    Ok(g.value(loss)?.item())
}
