use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synthetic::{self, SyntheticConfig};
use super::Model;
use crate::autodiff::GradMode;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 16,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    /// Accuracy on freshly drawn samples with true labels.
    pub holdout_accuracy: f64,
}

fn accuracy(model: &Model, xs: &[Tensor], ys: &[usize]) -> Result<f64> {
    let hits = xs
        .par_iter()
        .zip(ys)
        .map(|(x, &y)| {
            let z = model.logits(x)?;
            let pred = argmax(z.data());
            Ok(usize::from(pred == y))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / xs.len().max(1) as f64)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Loss and per-parameter gradients for one labelled sample.
fn sample_gradient(model: &Model, x: &Tensor, y: usize) -> Result<(f64, Vec<Tensor>)> {
    let mut tr = super::forward(model, x, &[])?;
    let logits = tr.logits_node();
    let loss = tr.graph_mut().cross_entropy(logits, y)?;
    let params = tr.parameter_nodes().to_vec();
    let mut grads = tr.gradient(loss, &params, GradMode::Standard)?;
    let value = tr.graph().value(loss)?.item();
    Ok((value, params.iter().map(|&p| grads.take(p).unwrap()).collect()))
}

/// Mini-batch SGD with momentum on the synthetic texture task.
///
/// Deterministic for a fixed seed: per-sample gradients are computed in
/// parallel but reduced in batch order.
pub fn train_synthetic(
    model: &Model,
    data: &SyntheticConfig,
    train: &TrainConfig,
    epochs: usize,
    seed: u64,
) -> Result<(Model, TrainReport)> {
    data.validate()?;
    if data.classes() != model.classes() {
        return Err(Error::Config(format!(
            "dataset has {} classes but the model has {}",
            data.classes(),
            model.classes()
        )));
    }
    if train.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = model.input_shape();
    let (xs, mut ys) = synthetic::generate(data, data.samples_per_class, &mut rng, shape);
    if data.shuffle_labels {
        ys.shuffle(&mut rng);
    }
    let (hx, hy) = synthetic::generate(data, data.holdout_per_class.max(1), &mut rng, shape);

    let mut model = model.clone();
    let mut velocity: Vec<Tensor> = model.parameters().iter().map(|p| Tensor::zeros(p.shape())).collect();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut last_finite = f64::NAN;
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(train.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| sample_gradient(&model, &xs[i], ys[i]))
                .collect::<Result<Vec<_>>>();
            let results = match results {
                Ok(r) => r,
                Err(Error::Tensor(_)) => {
                    return Err(Error::Diverged {
                        epoch,
                        last_finite_loss: last_finite,
                    })
                }
                Err(e) => return Err(e),
            };
            let n = results.len() as f64;
            let mut params: Vec<Tensor> = model.parameters().into_iter().cloned().collect();
            for (pi, p) in params.iter_mut().enumerate() {
                let v = &mut velocity[pi];
                let pd = p.data_mut();
                let vd = v.data_mut();
                for k in 0..pd.len() {
                    let g = results.iter().map(|(_, gs)| gs[pi].data()[k]).sum::<f64>() / n
                        + train.weight_decay * pd[k];
                    vd[k] = train.momentum * vd[k] + g;
                    pd[k] -= train.learning_rate * vd[k];
                }
            }
            let batch_loss = results.iter().map(|(l, _)| l).sum::<f64>() / n;
            if !batch_loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    last_finite_loss: last_finite,
                });
            }
            last_finite = batch_loss;
            epoch_loss += batch_loss * n;
            model.set_parameters(params);
        }
        last_finite = epoch_loss / xs.len() as f64;
    }
    let report = TrainReport {
        epochs,
        final_loss: last_finite,
        train_accuracy: accuracy(&model, &xs, &ys)?,
        holdout_accuracy: accuracy(&model, &hx, &hy)?,
    };
    Ok((model, report))
}
