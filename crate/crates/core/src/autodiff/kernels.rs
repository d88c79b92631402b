//! Raw numeric kernels shared by the forward and backward passes.
//!
//! Layout conventions: images are `[C, H, W]`, conv weights `[O, C, KH, KW]`,
//! matrices `[rows, cols]`, all row-major.

/// Static geometry of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kh) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kw) / self.stride + 1
    }

    /// Output indices `o` along one axis whose tap `k` lands inside `[0, extent)`.
    fn valid_range(&self, k: usize, extent: usize, out: usize) -> std::ops::Range<usize> {
        let s = self.stride;
        let p = self.padding;
        // o * s + k - p >= 0  and  o * s + k - p < extent
        let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
        let hi = if extent + p > k {
            ((extent + p - k - 1) / s + 1).min(out)
        } else {
            0
        };
        lo..hi.max(lo)
    }
}

/// Unfolds `x` into `[C * KH * KW, HO * WO]` patch columns (zero padding).
fn im2col(g: &ConvGeom, x: &[f64]) -> Vec<f64> {
    let (ho, wo) = (g.out_height(), g.out_width());
    let n = ho * wo;
    let mut cols = vec![0.0; g.channels * g.kh * g.kw * n];
    for c in 0..g.channels {
        let xin = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            let rows = g.valid_range(ki, g.height, ho);
            for kj in 0..g.kw {
                let span = g.valid_range(kj, g.width, wo);
                let q = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[q * n..(q + 1) * n];
                for i in rows.clone() {
                    let r = i * g.stride + ki - g.padding;
                    let xrow = &xin[r * g.width..(r + 1) * g.width];
                    let drow = &mut dst[i * wo..(i + 1) * wo];
                    if g.stride == 1 && !span.is_empty() {
                        let c0 = span.start + kj - g.padding;
                        drow[span.clone()].copy_from_slice(&xrow[c0..c0 + span.len()]);
                    } else {
                        for j in span.clone() {
                            drow[j] = xrow[j * g.stride + kj - g.padding];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Folds patch-column gradients back onto the image (inverse of [`im2col`]).
fn col2im(g: &ConvGeom, cols: &[f64]) -> Vec<f64> {
    let (ho, wo) = (g.out_height(), g.out_width());
    let n = ho * wo;
    let mut dx = vec![0.0; g.channels * g.height * g.width];
    for c in 0..g.channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            let rows = g.valid_range(ki, g.height, ho);
            for kj in 0..g.kw {
                let span = g.valid_range(kj, g.width, wo);
                let q = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[q * n..(q + 1) * n];
                for i in rows.clone() {
                    let r = i * g.stride + ki - g.padding;
                    let srow = &src[i * wo..(i + 1) * wo];
                    let xrow = &mut plane[r * g.width..(r + 1) * g.width];
                    if g.stride == 1 && !span.is_empty() {
                        let c0 = span.start + kj - g.padding;
                        xrow[c0..c0 + span.len()]
                            .iter_mut()
                            .zip(&srow[span.clone()])
                            .for_each(|(t, v)| *t += v);
                    } else {
                        for j in span.clone() {
                            xrow[j * g.stride + kj - g.padding] += srow[j];
                        }
                    }
                }
            }
        }
    }
    dx
}

pub(crate) fn conv2d_forward(g: &ConvGeom, x: &[f64], w: &[f64], b: Option<&[f64]>) -> Vec<f64> {
    let n = g.out_height() * g.out_width();
    let q = g.channels * g.kh * g.kw;
    let cols = im2col(g, x);
    let mut out = vec![0.0; g.out_channels * n];
    for o in 0..g.out_channels {
        let orow = &mut out[o * n..(o + 1) * n];
        if let Some(b) = b {
            orow.iter_mut().for_each(|v| *v = b[o]);
        }
        for p in 0..q {
            let wv = w[o * q + p];
            if wv == 0.0 {
                continue;
            }
            orow.iter_mut().zip(&cols[p * n..(p + 1) * n]).for_each(|(t, c)| *t += wv * c);
        }
    }
    out
}

/// Gradients of a convolution for upstream `dout`. `d_input` / `d_weight`
/// are only computed when requested; `d_bias` is always cheap.
pub(crate) fn conv2d_backward(
    g: &ConvGeom,
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    want_input: bool,
    want_weight: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>, Vec<f64>) {
    let n = g.out_height() * g.out_width();
    let q = g.channels * g.kh * g.kw;
    let db = (0..g.out_channels).map(|o| dout[o * n..(o + 1) * n].iter().sum()).collect();
    let dw = want_weight.then(|| matmul_bt(g.out_channels, n, q, dout, &im2col(g, x)));
    let dx = want_input.then(|| col2im(g, &matmul_at(g.out_channels, q, n, w, dout)));
    (dx, dw, db)
}

/// 2x2 max-pool with stride 2. Returns values and the flat input index of
/// each selected element (first maximum wins on ties).
pub(crate) fn maxpool2_forward(c: usize, h: usize, w: usize, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for i in 0..ho {
            for j in 0..wo {
                let mut best = usize::MAX;
                let mut best_v = f64::NEG_INFINITY;
                for di in 0..2 {
                    for dj in 0..2 {
                        let idx = (ch * h + 2 * i + di) * w + 2 * j + dj;
                        if x[idx] > best_v {
                            best_v = x[idx];
                            best = idx;
                        }
                    }
                }
                out.push(best_v);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub(crate) fn upsample2_forward(c: usize, h: usize, w: usize, x: &[f64]) -> Vec<f64> {
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        for i in 0..ho {
            for j in 0..wo {
                out[(ch * ho + i) * wo + j] = x[(ch * h + i / 2) * w + j / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample2_backward(c: usize, h: usize, w: usize, dout: &[f64]) -> Vec<f64> {
    let (ho, wo) = (2 * h, 2 * w);
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        for i in 0..ho {
            for j in 0..wo {
                dx[(ch * h + i / 2) * w + j / 2] += dout[(ch * ho + i) * wo + j];
            }
        }
    }
    dx
}

/// `[m, k] x [k, n] -> [m, n]`.
pub(crate) fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `[m, n] x ([k, n])^T -> [m, k]`.
pub(crate) fn matmul_bt(m: usize, n: usize, k: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `([m, k])^T x [m, n] -> [k, n]`.
pub(crate) fn matmul_at(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            out[p * n..(p + 1) * n].iter_mut().zip(brow).for_each(|(o, bv)| *o += av * bv);
        }
    }
    out
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
