use rayon::prelude::*;

use super::{check_target, AttributionMap, MethodConfig};
use crate::error::{Error, Result};
use crate::micronet::Model;
use crate::region::Region;
use crate::tensor::Tensor;

/// Copies `src` pixels inside `region` into `dst`, across all channels.
fn paste(dst: &mut Tensor, src: &Tensor, region: &Region) {
    let s = dst.shape().to_vec();
    let (c, hw, w) = (s[0], s[1] * s[2], s[2]);
    let d = dst.data_mut();
    for ch in 0..c {
        for i in region.pixels(w) {
            d[ch * hw + i] = src.data()[ch * hw + i];
        }
    }
}

/// Sliding-window occlusion: each window's score `Φ_t(x) − Φ_t(x with the
/// window taken from fill)` is averaged into the pixels it covers.
pub fn attr_occlusion(
    model: &Model,
    input: &Tensor,
    t: usize,
    window: usize,
    stride: usize,
    fill: &Tensor,
) -> Result<AttributionMap> {
    check_target(model, input, t)?;
    let [_, h, w] = model.input_shape();
    if window == 0 || window > h.min(w) || stride == 0 {
        return Err(Error::Precondition(format!("window {window}, stride {stride} do not fit {h}x{w}")));
    }
    if fill.shape() != input.shape() {
        return Err(Error::Precondition("fill image differs in shape from the input".into()));
    }
    let base = model.logits(input)?.data()[t];
    let windows: Vec<Region> = (0..=h - window)
        .step_by(stride)
        .flat_map(|r| (0..=w - window).step_by(stride).map(move |c| Region::new(r, c, window, window)))
        .collect();
    let scores = windows
        .par_iter()
        .map(|region| {
            let mut x = input.clone();
            paste(&mut x, fill, region);
            Ok(base - model.logits(&x)?.data()[t])
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut sum = vec![0.0; h * w];
    let mut count = vec![0usize; h * w];
    for (region, s) in windows.iter().zip(&scores) {
        for i in region.pixels(w) {
            sum[i] += s;
            count[i] += 1;
        }
    }
    let map = sum
        .iter()
        .zip(&count)
        .map(|(&s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect();
    AttributionMap::new(
        Tensor::from_parts(vec![h, w], map),
        t,
        MethodConfig::Occlusion {
            window,
            stride,
            fill: super::Fill::Reference,
        },
    )
}

/// Reveal order and stopping state of a greedy extremal search.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtremalTrace {
    pub map: AttributionMap,
    /// Revealed cells in reveal order.
    pub revealed: Vec<Region>,
    /// `Φ_t` after each reveal.
    pub values: Vec<f64>,
    /// True when the search stopped because `Φ_t` came within `tau` of its
    /// full-input value rather than by exhausting the budget.
    pub reached: bool,
}

/// Greedy smallest-preserving-region search over a grid of `cell`-sized
/// squares, starting from the reference image.
///
/// Each round reveals the input cell that maximizes `Φ_t`; ties go to the
/// lowest cell index. The `k`-th of `n` revealed cells scores `(n − k) / n`.
pub fn attr_extremal_greedy(
    model: &Model,
    input: &Tensor,
    t: usize,
    reference: &Tensor,
    cell: usize,
    budget: usize,
    tau: f64,
) -> Result<ExtremalTrace> {
    check_target(model, input, t)?;
    let [_, h, w] = model.input_shape();
    if cell == 0 || h % cell != 0 || w % cell != 0 {
        return Err(Error::Precondition(format!("cell {cell} does not tile {h}x{w}")));
    }
    let cells: Vec<Region> = (0..h / cell)
        .flat_map(|r| (0..w / cell).map(move |c| Region::new(r * cell, c * cell, cell, cell)))
        .collect();
    if budget == 0 || budget > cells.len() {
        return Err(Error::Precondition(format!("budget {budget} outside 1..={}", cells.len())));
    }
    if reference.shape() != input.shape() {
        return Err(Error::Precondition("reference differs in shape from the input".into()));
    }
    let goal = model.logits(input)?.data()[t] - tau;
    let mut current = reference.clone();
    let mut open: Vec<usize> = (0..cells.len()).collect();
    let mut revealed = Vec::new();
    let mut values = Vec::new();
    let mut reached = false;
    while revealed.len() < budget {
        let trials = open
            .par_iter()
            .map(|&i| {
                let mut x = current.clone();
                paste(&mut x, input, &cells[i]);
                Ok(model.logits(&x)?.data()[t])
            })
            .collect::<Result<Vec<f64>>>()?;
        let (best, value) = trials
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        let chosen = open.remove(best);
        paste(&mut current, input, &cells[chosen]);
        revealed.push(cells[chosen]);
        values.push(value);
        if value >= goal {
            reached = true;
            break;
        }
    }
    let n = revealed.len() as f64;
    let mut map = vec![0.0; h * w];
    for (k, region) in revealed.iter().enumerate() {
        for i in region.pixels(w) {
            map[i] = (n - k as f64) / n;
        }
    }
    let map = AttributionMap::new(
        Tensor::from_parts(vec![h, w], map),
        t,
        MethodConfig::ExtremalGreedy {
            cell,
            budget: Some(budget),
            tau,
        },
    )?;
    Ok(ExtremalTrace {
        map,
        revealed,
        values,
        reached,
    })
}
