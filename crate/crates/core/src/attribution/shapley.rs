use rayon::prelude::*;

use super::{check_target, AttributionMap, MethodConfig};
use crate::error::{Error, Result};
use crate::micronet::Model;
use crate::region::{pairwise_disjoint, Region};
use crate::tensor::Tensor;

/// Largest player count accepted by [`attr_shapley_exact`].
pub const MAX_PLAYERS: usize = 12;

/// Exact Shapley values of an `n`-player game given `v` for every coalition,
/// indexed by bitmask (bit `i` set when player `i` is present).
pub fn shapley_values(n: usize, v: &[f64]) -> Result<Vec<f64>> {
    if n > 20 || v.len() != 1 << n {
        return Err(Error::Precondition(format!(
            "expected 2^{n} coalition values, got {}",
            v.len()
        )));
    }
    // w[s] = s! (n - s - 1)! / n!
    let mut fact = vec![1.0f64; n + 1];
    for i in 1..=n {
        fact[i] = fact[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..n).map(|s| fact[s] * fact[n - s - 1] / fact[n]).collect();
    Ok((0..n)
        .map(|i| {
            let bit = 1usize << i;
            (0..v.len())
                .filter(|s| s & bit == 0)
                .map(|s| weight[s.count_ones() as usize] * (v[s | bit] - v[s]))
                .sum()
        })
        .collect())
}

/// Patch-level Shapley values for `Φ_t`, where coalition `S` is the
/// reference image with the input's pixels restored inside the players in
/// `S`. Each player's value is spread evenly over its pixels.
pub fn attr_shapley_exact(
    model: &Model,
    input: &Tensor,
    t: usize,
    reference: &Tensor,
    players: &[Region],
) -> Result<AttributionMap> {
    check_target(model, input, t)?;
    let [c, h, w] = model.input_shape();
    if players.len() > MAX_PLAYERS {
        return Err(Error::Precondition(format!(
            "{} players exceed the exact-enumeration limit of {MAX_PLAYERS}",
            players.len()
        )));
    }
    if reference.shape() != input.shape() {
        return Err(Error::Precondition("reference differs in shape from the input".into()));
    }
    if !players.iter().all(|p| p.fits(h, w)) || !pairwise_disjoint(players) {
        return Err(Error::Precondition("players must be disjoint in-bounds regions".into()));
    }
    let n = players.len();
    let v = (0..1usize << n)
        .into_par_iter()
        .map(|s| {
            let mut x = reference.clone();
            let d = x.data_mut();
            for (i, p) in players.iter().enumerate() {
                if s & (1 << i) != 0 {
                    for ch in 0..c {
                        for px in p.pixels(w) {
                            d[ch * h * w + px] = input.data()[ch * h * w + px];
                        }
                    }
                }
            }
            Ok(model.logits(&x)?.data()[t])
        })
        .collect::<Result<Vec<f64>>>()?;
    let phi = shapley_values(n, &v)?;
    let mut map = vec![0.0; h * w];
    for (p, value) in players.iter().zip(&phi) {
        let share = value / p.area() as f64;
        p.pixels(w).for_each(|i| map[i] = share);
    }
    AttributionMap::new(Tensor::from_parts(vec![h, w], map), t, MethodConfig::ShapleyExact)
}
