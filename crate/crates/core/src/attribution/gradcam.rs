use super::{check_target, AttributionMap, MethodConfig};
use crate::autodiff::{GradMode, Graph};
use crate::error::{Error, Result};
use crate::micronet::{LayerKind, Model};
use crate::tensor::Tensor;

/// Bilinear resize of an `[h, w]` map to `[height, width]` with half-pixel
/// centers and edge clamping.
pub fn bilinear_upsample(map: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let &[h, w] = map.shape() else {
        return Err(Error::Precondition(format!("expected an [h, w] map, got {:?}", map.shape())));
    };
    let coord = |i: usize, out: usize, src: usize| {
        let p = ((i as f64 + 0.5) * src as f64 / out as f64 - 0.5).clamp(0.0, (src - 1) as f64);
        let lo = p.floor() as usize;
        (lo, (lo + 1).min(src - 1), p - lo as f64)
    };
    let d = map.data();
    let mut out = Vec::with_capacity(height * width);
    for r in 0..height {
        let (r0, r1, fr) = coord(r, height, h);
        for c in 0..width {
            let (c0, c1, fc) = coord(c, width, w);
            let top = d[r0 * w + c0] * (1.0 - fc) + d[r0 * w + c1] * fc;
            let bottom = d[r1 * w + c0] * (1.0 - fc) + d[r1 * w + c1] * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    Ok(Tensor::from_parts(vec![height, width], out))
}

/// `relu(Σ_c w_c A_c)` with `w_c` the spatial mean of `∂Φ_t/∂A_c`, upsampled
/// to the input grid.
pub fn attr_gradcam(model: &Model, input: &Tensor, t: usize, layer: &str) -> Result<AttributionMap> {
    check_target(model, input, t)?;
    let index = model.layer_index(layer)?;
    if model.layers()[index].kind != LayerKind::ConvBlock {
        return Err(Error::Precondition(format!("gradcam needs a spatial layer, '{layer}' is dense")));
    }
    let act = model.activation(input, layer)?;
    let mut g = Graph::new();
    let bound = model.bind(&mut g, false);
    let a = g.leaf(act.clone());
    let out = bound.apply_from(model, &mut g, a, index + 1)?;
    let root = g.select(out.logits, t)?;
    let grad = g.gradient(root, &[a], GradMode::Standard)?.take(a).expect("requested");
    let &[c, h, w] = act.shape() else { unreachable!("conv activations are [C, H, W]") };
    let mut cam = vec![0.0; h * w];
    for ch in 0..c {
        let plane = ch * h * w..(ch + 1) * h * w;
        let weight = grad.data()[plane.clone()].iter().sum::<f64>() / (h * w) as f64;
        cam.iter_mut().zip(&act.data()[plane]).for_each(|(m, v)| *m += weight * v);
    }
    let cam = Tensor::from_parts(vec![h, w], cam.into_iter().map(|v| v.max(0.0)).collect());
    let [_, ih, iw] = model.input_shape();
    AttributionMap::new(
        bilinear_upsample(&cam, ih, iw)?,
        t,
        MethodConfig::Gradcam {
            layer: Some(layer.to_string()),
        },
    )
}
