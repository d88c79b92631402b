//! The classifier under explanation plus the patch decoder prior.
//!
//! Weights are drawn from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with the
//! caller's 64-bit seed; conv and dense weights are He-normal
//! (`N(0, 2 / fan_in)`), biases `N(0, 0.01^2)` unless zero bias is requested.
//! The same `(config, seed)` therefore yields a bit-identical model.

mod prior;
pub mod synthetic;
mod train;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::kernels;
use crate::autodiff::{GradMode, GradientSet, Graph, NodeId};
use crate::container;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use prior::{build_prior_decoder, BoundDecoder, PriorConfig, PriorDecoder};
pub use train::{train_synthetic, TrainConfig, TrainReport};

/// Conv blocks (conv 3x3 same-padding, relu, 2x2 max-pool) followed by a
/// relu hidden dense layer and the logits layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// `[channels, height, width]`.
    pub input_shape: [usize; 3],
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub hidden: usize,
    pub classes: usize,
    pub zero_bias: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            input_shape: [1, 32, 32],
            conv_channels: vec![8, 16],
            kernel: 3,
            hidden: 64,
            classes: 10,
            zero_bias: false,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        let [c, h, w] = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config(format!("input shape {:?} has a zero extent", self.input_shape)));
        }
        if self.conv_channels.len() < 2 {
            return Err(Error::Config("at least two conv blocks are required".into()));
        }
        if self.conv_channels.contains(&0) || self.hidden == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel {} must be odd", self.kernel)));
        }
        let factor = 1usize << self.conv_channels.len();
        if h % factor != 0 || w % factor != 0 {
            return Err(Error::Config(format!(
                "input {h}x{w} is not divisible by the pooling factor {factor}"
            )));
        }
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    /// Conv, relu, 2x2 max-pool. The captured activation is the pooled output.
    ConvBlock,
    /// Dense with relu.
    Hidden,
    /// Final dense layer producing logits.
    Logits,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    /// Conv: `[out, in, k, k]`; dense: `[in, out]`.
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    layers: Vec<Layer>,
    input_shape: [usize; 3],
    classes: usize,
}

/// Model parameters registered in one graph, reusable across several
/// forward applications within that graph.
#[derive(Clone, Debug)]
pub struct BoundModel {
    params: Vec<(NodeId, NodeId)>,
}

/// Node ids produced by one application of a bound model.
#[derive(Clone, Debug)]
pub struct Applied {
    pub logits: NodeId,
    pub activations: Vec<(usize, NodeId)>,
}

fn he_normal(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("finite normal samples")
}

fn small_bias(rng: &mut ChaCha8Rng, n: usize, zero: bool) -> Tensor {
    if zero {
        return Tensor::zeros(&[n]);
    }
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            0.01 * z
        })
        .collect();
    Tensor::new(vec![n], data).expect("finite normal samples")
}

/// Deterministic seeded construction; see the module docs for the PRNG.
pub fn build_classifier(arch: &ArchConfig, seed: u64) -> Result<Model> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [c0, h0, w0] = arch.input_shape;
    let k = arch.kernel;
    let mut layers = Vec::new();
    let mut channels = c0;
    for (i, &oc) in arch.conv_channels.iter().enumerate() {
        let weight = he_normal(&mut rng, &[oc, channels, k, k], channels * k * k);
        let bias = small_bias(&mut rng, oc, arch.zero_bias);
        layers.push(Layer {
            name: format!("conv{}", i + 1),
            kind: LayerKind::ConvBlock,
            weight,
            bias,
        });
        channels = oc;
    }
    let factor = 1usize << arch.conv_channels.len();
    let flat = channels * (h0 / factor) * (w0 / factor);
    layers.push(Layer {
        name: "dense1".into(),
        kind: LayerKind::Hidden,
        weight: he_normal(&mut rng, &[flat, arch.hidden], flat),
        bias: small_bias(&mut rng, arch.hidden, arch.zero_bias),
    });
    layers.push(Layer {
        name: "logits".into(),
        kind: LayerKind::Logits,
        weight: he_normal(&mut rng, &[arch.hidden, arch.classes], arch.hidden),
        bias: small_bias(&mut rng, arch.classes, arch.zero_bias),
    });
    Model::from_layers(layers, arch.input_shape)
}

impl Model {
    /// Assembles a model from explicit layers, validating every shape.
    pub fn from_layers(layers: Vec<Layer>, input_shape: [usize; 3]) -> Result<Self> {
        let mut names = BTreeSet::new();
        let [mut c, mut h, mut w] = input_shape;
        let mut flat: Option<usize> = None;
        let mut classes = None;
        for (i, layer) in layers.iter().enumerate() {
            if !names.insert(layer.name.as_str()) {
                return Err(Error::Config(format!("duplicate layer name '{}'", layer.name)));
            }
            let bad = |what: &str| Error::Config(format!("layer '{}': {what}", layer.name));
            match layer.kind {
                LayerKind::ConvBlock => {
                    if flat.is_some() {
                        return Err(bad("conv block after dense layers"));
                    }
                    let &[oc, ic, kh, kw] = layer.weight.shape() else {
                        return Err(bad("conv weight must be [out, in, k, k]"));
                    };
                    if ic != c || kh != kw || kh % 2 == 0 || layer.bias.shape() != [oc] {
                        return Err(bad("conv weight/bias shape mismatch"));
                    }
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(bad("odd spatial extent before pooling"));
                    }
                    c = oc;
                    h /= 2;
                    w /= 2;
                }
                LayerKind::Hidden | LayerKind::Logits => {
                    let inputs = flat.unwrap_or(c * h * w);
                    let &[fi, fo] = layer.weight.shape() else {
                        return Err(bad("dense weight must be [in, out]"));
                    };
                    if fi != inputs || layer.bias.shape() != [fo] {
                        return Err(bad("dense weight/bias shape mismatch"));
                    }
                    flat = Some(fo);
                    if layer.kind == LayerKind::Logits {
                        if i + 1 != layers.len() {
                            return Err(bad("logits layer must be last"));
                        }
                        classes = Some(fo);
                    }
                }
            }
        }
        let classes = classes.ok_or_else(|| Error::Config("model has no logits layer".into()))?;
        if classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        Ok(Self {
            layers,
            input_shape,
            classes,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_names(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.name.as_str()).collect()
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Names of layers with spatial activations.
    pub fn conv_layers(&self) -> Vec<&str> {
        self.layers
            .iter()
            .filter(|l| l.kind == LayerKind::ConvBlock)
            .map(|l| l.name.as_str())
            .collect()
    }

    /// Shape of the activation captured for `name`.
    pub fn activation_shape(&self, name: &str) -> Result<Vec<usize>> {
        let [_, mut h, mut w] = self.input_shape;
        for layer in &self.layers {
            let shape = match layer.kind {
                LayerKind::ConvBlock => {
                    let c = layer.weight.shape()[0];
                    h /= 2;
                    w /= 2;
                    vec![c, h, w]
                }
                _ => vec![layer.weight.shape()[1]],
            };
            if layer.name == name {
                return Ok(shape);
            }
        }
        Err(Error::UnknownLayer(name.into()))
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub(crate) fn set_parameters(&mut self, params: Vec<Tensor>) {
        assert_eq!(params.len(), 2 * self.layers.len());
        let mut it = params.into_iter();
        for layer in &mut self.layers {
            layer.weight = it.next().unwrap();
            layer.bias = it.next().unwrap();
        }
    }

    /// Registers parameters in `graph`, as leaves when gradients are needed.
    pub fn bind(&self, graph: &mut Graph, trainable: bool) -> BoundModel {
        let mut reg = |t: &Tensor| {
            if trainable {
                graph.leaf(t.clone())
            } else {
                graph.constant(t.clone())
            }
        };
        BoundModel {
            params: self.layers.iter().map(|l| (reg(&l.weight), reg(&l.bias))).collect(),
        }
    }

    pub fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape {
            return Err(Error::Precondition(format!(
                "input shape {:?} does not match model input {:?}",
                input.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Logits for one input without building a persistent trace.
    pub fn logits(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let (x, _) = self.run_layers(0..self.layers.len(), input.data().to_vec(), self.input_shape);
        Ok(Tensor::from_parts(vec![self.classes], x))
    }

    /// Output of layer `name` for `input`, without a graph.
    pub fn activation(&self, input: &Tensor, name: &str) -> Result<Tensor> {
        self.check_input(input)?;
        let end = self.layer_index(name)? + 1;
        let (x, [c, h, w]) = self.run_layers(0..end, input.data().to_vec(), self.input_shape);
        let shape = match self.layers[end - 1].kind {
            LayerKind::ConvBlock => vec![c, h, w],
            _ => vec![x.len()],
        };
        Ok(Tensor::from_parts(shape, x))
    }

    pub(crate) fn layer_index(&self, name: &str) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::UnknownLayer(name.into()))
    }

    /// Direct evaluation of `layers[range]` on a `[c, h, w]` buffer (or a flat
    /// vector once past the conv blocks).
    fn run_layers(&self, range: std::ops::Range<usize>, mut x: Vec<f64>, shape: [usize; 3]) -> (Vec<f64>, [usize; 3]) {
        let [mut c, mut h, mut w] = shape;
        for layer in &self.layers[range] {
            let (wt, b) = (layer.weight.data(), layer.bias.data());
            match layer.kind {
                LayerKind::ConvBlock => {
                    let ws = layer.weight.shape();
                    let geom = kernels::ConvGeom {
                        channels: c,
                        height: h,
                        width: w,
                        out_channels: ws[0],
                        kh: ws[2],
                        kw: ws[3],
                        stride: 1,
                        padding: ws[2] / 2,
                    };
                    let mut y = kernels::conv2d_forward(&geom, &x, wt, Some(b));
                    y.iter_mut().for_each(|v| *v = v.max(0.0));
                    c = ws[0];
                    x = kernels::maxpool2_forward(c, h, w, &y).0;
                    h /= 2;
                    w /= 2;
                }
                LayerKind::Hidden | LayerKind::Logits => {
                    let n = layer.weight.shape()[1];
                    let mut y = kernels::matmul(1, x.len(), n, &x, wt);
                    y.iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
                    if layer.kind == LayerKind::Hidden {
                        y.iter_mut().for_each(|v| *v = v.max(0.0));
                    }
                    x = y;
                }
            }
        }
        (x, [c, h, w])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Container entries: `input_shape`, then `<layer>.weight` / `<layer>.bias`
    /// in layer order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = Tensor::new(vec![3], self.input_shape.iter().map(|&d| d as f64).collect())
            .expect("finite");
        let names: Vec<(String, &Tensor)> = self
            .layers
            .iter()
            .flat_map(|l| [(format!("{}.weight", l.name), &l.weight), (format!("{}.bias", l.name), &l.bias)])
            .collect();
        container::encode(
            std::iter::once(("input_shape", &shape)).chain(names.iter().map(|(n, t)| (n.as_str(), *t))),
        )
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut entries = container::decode(bytes)?.into_iter();
        let (name, shape) = entries
            .next()
            .ok_or_else(|| Error::Format("empty model container".into()))?;
        if name != "input_shape" || shape.len() != 3 {
            return Err(Error::Format("first entry must be input_shape[3]".into()));
        }
        let d = shape.data();
        let input_shape = [d[0] as usize, d[1] as usize, d[2] as usize];
        let rest: Vec<(String, Tensor)> = entries.collect();
        if rest.len() % 2 != 0 {
            return Err(Error::Format("unpaired weight/bias entries".into()));
        }
        let mut layers = Vec::new();
        let count = rest.len() / 2;
        let mut it = rest.into_iter();
        for i in 0..count {
            let (wn, weight) = it.next().unwrap();
            let (bn, bias) = it.next().unwrap();
            let lname = wn
                .strip_suffix(".weight")
                .ok_or_else(|| Error::Format(format!("expected a .weight entry, got '{wn}'")))?;
            if bn != format!("{lname}.bias") {
                return Err(Error::Format(format!("expected '{lname}.bias', got '{bn}'")));
            }
            let kind = match weight.shape().len() {
                4 => LayerKind::ConvBlock,
                2 if i + 1 == count => LayerKind::Logits,
                2 => LayerKind::Hidden,
                r => return Err(Error::Format(format!("'{wn}' has unsupported rank {r}"))),
            };
            layers.push(Layer {
                name: lname.to_string(),
                kind,
                weight,
                bias,
            });
        }
        Self::from_layers(layers, input_shape).map_err(|e| Error::Format(e.to_string()))
    }
}

impl BoundModel {
    /// Leaf/constant ids of every parameter, weight then bias per layer.
    pub fn parameter_ids(&self) -> Vec<NodeId> {
        self.params.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    /// Builds one forward pass over `input` (a `[C, H, W]` node).
    pub fn apply(&self, model: &Model, g: &mut Graph, input: NodeId) -> Result<Applied> {
        self.apply_from(model, g, input, 0)
    }

    /// Applies layers `start..` to `input`, which must have the shape of the
    /// output of layer `start - 1` (or the model input when `start` is 0).
    pub fn apply_from(&self, model: &Model, g: &mut Graph, input: NodeId, start: usize) -> Result<Applied> {
        let mut x = input;
        let mut activations = Vec::with_capacity(model.layers.len());
        let mut flat = false;
        for (i, (layer, &(w, b))) in model.layers.iter().zip(&self.params).enumerate().skip(start) {
            match layer.kind {
                LayerKind::ConvBlock => {
                    let pad = layer.weight.shape()[2] / 2;
                    let y = g.conv2d(x, w, Some(b), 1, pad)?;
                    let y = g.relu(y)?;
                    x = g.max_pool2(y)?;
                }
                LayerKind::Hidden | LayerKind::Logits => {
                    if !flat {
                        let n = g.value(x)?.len();
                        x = g.reshape(x, &[1, n])?;
                        flat = true;
                    }
                    let y = g.matmul(x, w)?;
                    let n = layer.weight.shape()[1];
                    let y = g.reshape(y, &[1, n])?;
                    let bias = g.reshape(b, &[1, n])?;
                    let y = g.add(y, bias)?;
                    x = if layer.kind == LayerKind::Hidden { g.relu(y)? } else { y };
                }
            }
            let captured = if layer.kind == LayerKind::ConvBlock {
                x
            } else {
                let n = layer.weight.shape()[1];
                g.reshape(x, &[n])?
            };
            activations.push((i, captured));
        }
        let logits = activations.last().expect("at least one layer").1;
        Ok(Applied { logits, activations })
    }
}

/// A forward pass with its graph kept alive for gradient queries.
#[derive(Debug)]
pub struct ForwardTrace {
    graph: Graph,
    input: NodeId,
    logits: NodeId,
    params: Vec<NodeId>,
    activations: BTreeMap<String, NodeId>,
}

impl ForwardTrace {
    pub fn logits(&self) -> Tensor {
        self.graph.evaluate(self.logits).expect("node in graph")
    }

    pub fn logits_node(&self) -> NodeId {
        self.logits
    }

    pub fn input_node(&self) -> NodeId {
        self.input
    }

    /// Parameter leaves; empty for traces from [`input_forward`].
    pub fn parameter_nodes(&self) -> &[NodeId] {
        &self.params
    }

    pub fn activation(&self, name: &str) -> Option<Tensor> {
        self.activations.get(name).map(|&id| self.graph.evaluate(id).expect("node in graph"))
    }

    pub fn activation_node(&self, name: &str) -> Option<NodeId> {
        self.activations.get(name).copied()
    }

    pub fn captured(&self) -> impl Iterator<Item = &str> {
        self.activations.keys().map(String::as_str)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut Graph {
        &mut self.graph
    }

    /// Scalar node for logit `t`.
    pub fn target_node(&mut self, t: usize) -> Result<NodeId> {
        Ok(self.graph.select(self.logits, t)?)
    }

    /// Gradient of `root` with respect to the input leaf.
    pub fn input_gradient(&self, root: NodeId, mode: GradMode) -> Result<Tensor> {
        let mut g = self.graph.gradient(root, &[self.input], mode)?;
        Ok(g.take(self.input).expect("input requested"))
    }

    pub fn gradient(&self, root: NodeId, wrt: &[NodeId], mode: GradMode) -> Result<GradientSet> {
        Ok(self.graph.gradient(root, wrt, mode)?)
    }
}

/// Forward pass recording activations for every layer named in `capture`.
///
/// The input and all model parameters are graph leaves.
pub fn forward(model: &Model, input: &Tensor, capture: &[&str]) -> Result<ForwardTrace> {
    trace(model, input, capture, true)
}

/// Like [`forward`] but with the parameters held constant, so only the input
/// (and anything computed from it) carries gradients.
pub fn input_forward(model: &Model, input: &Tensor, capture: &[&str]) -> Result<ForwardTrace> {
    trace(model, input, capture, false)
}

fn trace(model: &Model, input: &Tensor, capture: &[&str], trainable: bool) -> Result<ForwardTrace> {
    model.check_input(input)?;
    for name in capture {
        if model.layer(name).is_none() {
            return Err(Error::UnknownLayer(name.to_string()));
        }
    }
    let mut graph = Graph::new();
    let bound = model.bind(&mut graph, trainable);
    let x = graph.leaf(input.clone());
    let out = bound.apply(model, &mut graph, x)?;
    let activations = out
        .activations
        .iter()
        .filter(|(i, _)| capture.contains(&model.layers[*i].name.as_str()))
        .map(|&(i, id)| (model.layers[i].name.clone(), id))
        .collect();
    Ok(ForwardTrace {
        graph,
        input: x,
        logits: out.logits,
        params: if trainable { bound.parameter_ids() } else { Vec::new() },
        activations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_check;

    fn noise(seed: u64, shape: &[usize]) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.5 * z
            })
            .collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn same_seed_same_model() {
        let a = build_classifier(&ArchConfig::default(), 42).unwrap();
        let b = build_classifier(&ArchConfig::default(), 42).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = build_classifier(&ArchConfig::default(), 43).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn default_layers_are_addressable() {
        let m = build_classifier(&ArchConfig::default(), 0).unwrap();
        assert_eq!(m.layer_names(), vec!["conv1", "conv2", "dense1", "logits"]);
        assert_eq!(m.conv_layers(), vec!["conv1", "conv2"]);
        assert_eq!(m.classes(), 10);
    }

    #[test]
    fn zero_bias_on_zero_input_gives_equal_logits() {
        let arch = ArchConfig {
            zero_bias: true,
            ..ArchConfig::default()
        };
        let m = build_classifier(&arch, 5).unwrap();
        let z = m.logits(&Tensor::zeros(&[1, 32, 32])).unwrap();
        assert!(z.data().iter().all(|&v| v == z.data()[0]));
    }

    #[test]
    fn capture_shapes_and_purity() {
        let m = build_classifier(&ArchConfig::default(), 1).unwrap();
        let x = noise(2, &[1, 32, 32]);
        let empty = forward(&m, &x, &[]).unwrap();
        assert_eq!(empty.captured().count(), 0);
        assert_eq!(empty.logits().shape(), &[10]);
        let tr = forward(&m, &x, &["conv2"]).unwrap();
        assert_eq!(tr.activation("conv2").unwrap().shape(), &[16, 8, 8]);
        assert_eq!(m.activation_shape("conv2").unwrap(), vec![16, 8, 8]);
        assert_eq!(m.activation_shape("conv1").unwrap(), vec![8, 16, 16]);
        assert_eq!(tr.logits(), empty.logits());
        assert_eq!(tr.logits(), m.logits(&x).unwrap());
        assert!(matches!(forward(&m, &x, &["conv9"]), Err(Error::UnknownLayer(_))));
    }

    #[test]
    fn invalid_architectures() {
        let one_block = ArchConfig {
            conv_channels: vec![4],
            ..ArchConfig::default()
        };
        assert!(build_classifier(&one_block, 0).is_err());
        let odd = ArchConfig {
            input_shape: [1, 30, 30],
            ..ArchConfig::default()
        };
        assert!(build_classifier(&odd, 0).is_err());
        let one_class = ArchConfig {
            classes: 1,
            ..ArchConfig::default()
        };
        assert!(build_classifier(&one_class, 0).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let m = build_classifier(&ArchConfig::default(), 9).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"AXBM");
        let back = Model::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn parameter_gradients_pass_gradcheck() {
        let arch = ArchConfig {
            input_shape: [1, 8, 8],
            conv_channels: vec![2, 3],
            hidden: 5,
            classes: 3,
            ..ArchConfig::default()
        };
        let m = build_classifier(&arch, 3).unwrap();
        let x = noise(4, &[1, 8, 8]);
        let mut tr = forward(&m, &x, &[]).unwrap();
        let logits = tr.logits_node();
        let loss = tr.graph_mut().cross_entropy(logits, 1).unwrap();
        let params = tr.parameter_nodes().to_vec();
        for p in params.into_iter().chain([tr.input_node()]) {
            let r = finite_difference_check(tr.graph_mut(), loss, p, 1e-5).unwrap();
            assert!(r.max_relative_error < 1e-4, "{r:?}");
        }
    }
}
