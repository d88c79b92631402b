use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Patch decoder with random weights and a fixed random input.
///
/// `seed_tensor` (`[width, h/4, w/4]`) is upsampled twice, each time followed
/// by a 3x3 conv and relu; a final 3x3 conv maps to the patch channels and a
/// `tanh` bounds the output, which is then mapped affinely onto the pixel
/// range. Only the conv parameters are optimized.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorDecoder {
    seed_tensor: Tensor,
    params: Vec<Tensor>,
    patch_shape: [usize; 3],
    pixel_range: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Channel count of the seed tensor and hidden stages.
    pub width: usize,
    pub pixel_range: (f64, f64),
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            width: 8,
            pixel_range: (-1.0, 1.0),
        }
    }
}

const UPSAMPLING: usize = 4;

fn normal(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("finite normal samples")
}

pub fn build_prior_decoder(seed: u64, patch_shape: [usize; 3], config: &PriorConfig) -> Result<PriorDecoder> {
    let [c, h, w] = patch_shape;
    if c == 0 || h == 0 || w == 0 || h % UPSAMPLING != 0 || w % UPSAMPLING != 0 {
        return Err(Error::Precondition(format!(
            "patch shape {patch_shape:?} is not divisible by the decoder upsampling factor {UPSAMPLING}"
        )));
    }
    let (lo, hi) = config.pixel_range;
    if !(lo < hi) || config.width == 0 {
        return Err(Error::Config("prior decoder needs width > 0 and lo < hi".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.width;
    let seed_tensor = normal(&mut rng, &[k, h / UPSAMPLING, w / UPSAMPLING], 1.0);
    let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
    let params = vec![
        normal(&mut rng, &[k, k, 3, 3], he(9 * k)),
        Tensor::zeros(&[k]),
        normal(&mut rng, &[k, k, 3, 3], he(9 * k)),
        Tensor::zeros(&[k]),
        normal(&mut rng, &[c, k, 3, 3], he(9 * k)),
        Tensor::zeros(&[c]),
    ];
    Ok(PriorDecoder {
        seed_tensor,
        params,
        patch_shape,
        pixel_range: config.pixel_range,
    })
}

/// Decoder parameters registered in a graph.
#[derive(Clone, Debug)]
pub struct BoundDecoder {
    seed: NodeId,
    params: Vec<NodeId>,
}

impl BoundDecoder {
    pub fn parameter_ids(&self) -> &[NodeId] {
        &self.params
    }
}

impl PriorDecoder {
    pub fn patch_shape(&self) -> [usize; 3] {
        self.patch_shape
    }

    pub fn seed_tensor(&self) -> &Tensor {
        &self.seed_tensor
    }

    pub fn parameters(&self) -> &[Tensor] {
        &self.params
    }

    pub fn set_parameters(&mut self, params: Vec<Tensor>) -> Result<()> {
        if params.len() != self.params.len()
            || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Precondition("decoder parameter shapes changed".into()));
        }
        self.params = params;
        Ok(())
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundDecoder {
        let seed = g.constant(self.seed_tensor.clone());
        let params = self
            .params
            .iter()
            .map(|p| if trainable { g.leaf(p.clone()) } else { g.constant(p.clone()) })
            .collect();
        BoundDecoder { seed, params }
    }

    /// Patch node for the bound parameters.
    pub fn apply(&self, g: &mut Graph, bound: &BoundDecoder) -> Result<NodeId> {
        let p = &bound.params;
        let mut x = bound.seed;
        for stage in 0..2 {
            x = g.upsample_nearest2(x)?;
            x = g.conv2d(x, p[2 * stage], Some(p[2 * stage + 1]), 1, 1)?;
            x = g.relu(x)?;
        }
        x = g.conv2d(x, p[4], Some(p[5]), 1, 1)?;
        x = g.tanh(x)?;
        let (lo, hi) = self.pixel_range;
        let half = 0.5 * (hi - lo);
        if half != 1.0 {
            x = g.scale(x, half)?;
        }
        let mid = lo + half;
        if mid != 0.0 {
            x = g.offset(x, mid)?;
        }
        Ok(x)
    }

    pub fn decode(&self) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let out = self.apply(&mut g, &bound)?;
        Ok(g.evaluate(out)?)
    }
}
