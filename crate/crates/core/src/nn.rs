//! Structured neural primitives on top of the autodiff graph.
//!
//! Feature maps are `[height, width, channels]`, convolution weights are
//! `[kh, kw, c_in, c_out]`, transposed-convolution weights are
//! `[kh, kw, c_out, c_in]`, dense weights are `[d_in, d_out]`. Everything is
//! row-major. All spatial ops use SAME padding: the output extent is
//! `ceil(in / stride)` and the extra pad cell, when the total is odd, goes to
//! the high side.

use rand::Rng;

use crate::graph::{Graph, NodeId, Primitive};
use crate::tensor::{Tensor, TensorError};

/// Probabilities are clamped to `[LOG_CLAMP, 1 - LOG_CLAMP]` before any log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Output extent and low-side padding for one SAME-padded axis.
pub fn same_pad(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

/// Forward/inference switch for dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Activation applied by [`dense_affine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    None,
}

/// Convolution layer attributes. Padding is always SAME.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
}

impl ConvSpec {
    pub fn new(filters: usize, kernel: [usize; 2], stride: [usize; 2]) -> Self {
        ConvSpec {
            filters,
            kernel,
            stride,
        }
    }

    /// Weight tensor shape for an input with `c_in` channels.
    pub fn weight_shape(&self, c_in: usize) -> Vec<usize> {
        vec![self.kernel[0], self.kernel[1], c_in, self.filters]
    }

    /// SAME output shape for an `[h, w, c_in]` input.
    pub fn output_shape(&self, h: usize, w: usize) -> Vec<usize> {
        vec![
            h.div_ceil(self.stride[0]),
            w.div_ceil(self.stride[1]),
            self.filters,
        ]
    }
}

/// Max-pooling attributes. Padding is always SAME with a -inf fill.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSpec {
    pub window: [usize; 2],
    pub stride: [usize; 2],
}

impl PoolSpec {
    pub fn new(window: [usize; 2], stride: [usize; 2]) -> Self {
        PoolSpec { window, stride }
    }

    pub fn output_shape(&self, h: usize, w: usize, c: usize) -> Vec<usize> {
        vec![
            h.div_ceil(self.stride[0]),
            w.div_ceil(self.stride[1]),
            c,
        ]
    }
}

fn positive_strides(primitive: &'static str, stride: [usize; 2]) -> Result<(), TensorError> {
    if stride[0] == 0 || stride[1] == 0 {
        return Err(TensorError::InvalidAttribute {
            primitive,
            detail: format!("strides must be positive, got {stride:?}"),
        });
    }
    Ok(())
}

// ── SAME-padded cross-correlation ───────────────────────────────────────

/// Cross-correlation with zero SAME padding. Inputs: `[h, w, c_in]` map and
/// `[kh, kw, c_in, c_out]` weights.
#[derive(Debug)]
pub struct Conv2dSame {
    pub stride: [usize; 2],
}

impl Primitive for Conv2dSame {
    fn name(&self) -> &'static str {
        "conv2d_same"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        positive_strides(self.name(), self.stride)?;
        if inputs.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: format!("expected input and weights, got {} tensors", inputs.len()),
            });
        }
        let (x, w) = (inputs[0], inputs[1]);
        if x.len() != 3 || w.len() != 4 {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: format!("need input [h,w,c] and weights [kh,kw,cin,cout], got {x:?} and {w:?}"),
            });
        }
        if x[2] != w[2] {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: format!("input has {} channels but weights expect {}", x[2], w[2]),
            });
        }
        Ok(vec![
            x[0].div_ceil(self.stride[0]),
            x[1].div_ceil(self.stride[1]),
            w[3],
        ])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let x = inputs[0];
        let w = inputs[1];
        let (h, wid, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (kh, kw, cout) = (w.shape()[0], w.shape()[1], w.shape()[3]);
        let [sh, sw] = self.stride;
        let (ho, pad_y) = same_pad(h, kh, sh);
        let (wo, pad_x) = same_pad(wid, kw, sw);
        let xd = x.data();
        let wd = w.data();
        let mut out = vec![0.0; ho * wo * cout];
        for oy in 0..ho {
            for ox in 0..wo {
                let out_off = (oy * wo + ox) * cout;
                for ky in 0..kh {
                    let iy = (oy * sh + ky) as isize - pad_y as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * sw + kx) as isize - pad_x as isize;
                        if ix < 0 || ix >= wid as isize {
                            continue;
                        }
                        let in_off = (iy as usize * wid + ix as usize) * cin;
                        let w_off = (ky * kw + kx) * cin * cout;
                        for ci in 0..cin {
                            let a = xd[in_off + ci];
                            if a == 0.0 {
                                continue;
                            }
                            let wrow = &wd[w_off + ci * cout..w_off + (ci + 1) * cout];
                            let orow = &mut out[out_off..out_off + cout];
                            for (o, wv) in orow.iter_mut().zip(wrow) {
                                *o += a * wv;
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(vec![ho, wo, cout], out)
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let w = inputs[1];
        let (h, wid, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (kh, kw, cout) = (w.shape()[0], w.shape()[1], w.shape()[3]);
        let [sh, sw] = self.stride;
        let (ho, pad_y) = same_pad(h, kh, sh);
        let (wo, pad_x) = same_pad(wid, kw, sw);
        let xd = x.data();
        let wd = w.data();
        let gd = grad.data();

        let mut d_input = needs[0].then(|| vec![0.0; x.numel()]);
        let mut d_weights = needs[1].then(|| vec![0.0; w.numel()]);

        for oy in 0..ho {
            for ox in 0..wo {
                let g_off = (oy * wo + ox) * cout;
                let g_row = &gd[g_off..g_off + cout];
                for ky in 0..kh {
                    let iy = (oy * sh + ky) as isize - pad_y as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * sw + kx) as isize - pad_x as isize;
                        if ix < 0 || ix >= wid as isize {
                            continue;
                        }
                        let in_off = (iy as usize * wid + ix as usize) * cin;
                        let w_off = (ky * kw + kx) * cin * cout;
                        for ci in 0..cin {
                            let wrow = &wd[w_off + ci * cout..w_off + (ci + 1) * cout];
                            if let Some(di) = d_input.as_mut() {
                                let mut acc = 0.0;
                                for (gv, wv) in g_row.iter().zip(wrow) {
                                    acc += gv * wv;
                                }
                                di[in_off + ci] += acc;
                            }
                            if let Some(dw) = d_weights.as_mut() {
                                let a = xd[in_off + ci];
                                if a != 0.0 {
                                    let dst = &mut dw[w_off + ci * cout..w_off + (ci + 1) * cout];
                                    for (d, gv) in dst.iter_mut().zip(g_row) {
                                        *d += a * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        vec![
            d_input.map(|d| Tensor::new(x.shape().to_vec(), d)),
            d_weights.map(|d| Tensor::new(w.shape().to_vec(), d)),
        ]
    }
}

// ── Transposed convolution ──────────────────────────────────────────────

/// Adjoint of [`Conv2dSame`]: maps `[h, w, c_in]` up to an explicit
/// `[H, W, c_out]` target, with `[kh, kw, c_out, c_in]` weights. Equivalent
/// to inserting `stride - 1` zeros between input elements, padding,
/// convolving and cropping; here computed directly as the conv input
/// gradient so the adjoint identity holds exactly.
#[derive(Debug)]
pub struct ConvTranspose2d {
    pub stride: [usize; 2],
    pub target: [usize; 2],
}

impl ConvTranspose2d {
    fn padding(&self, kh: usize, kw: usize) -> (usize, usize) {
        let (_, pad_y) = same_pad(self.target[0], kh, self.stride[0]);
        let (_, pad_x) = same_pad(self.target[1], kw, self.stride[1]);
        (pad_y, pad_x)
    }
}

impl Primitive for ConvTranspose2d {
    fn name(&self) -> &'static str {
        "transposed_conv2d"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        positive_strides(self.name(), self.stride)?;
        if inputs.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: format!("expected input and weights, got {} tensors", inputs.len()),
            });
        }
        let (x, w) = (inputs[0], inputs[1]);
        if x.len() != 3 || w.len() != 4 {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: format!("need input [h,w,c] and weights [kh,kw,cout,cin], got {x:?} and {w:?}"),
            });
        }
        if x[2] != w[3] {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: format!("input has {} channels but weights expect {}", x[2], w[3]),
            });
        }
        let [big_h, big_w] = self.target;
        if big_h.div_ceil(self.stride[0]) != x[0] || big_w.div_ceil(self.stride[1]) != x[1] {
            return Err(TensorError::UnreachableTargetShape {
                input: x.to_vec(),
                target: self.target.to_vec(),
            });
        }
        Ok(vec![big_h, big_w, w[2]])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let x = inputs[0];
        let w = inputs[1];
        let (h, wid, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (kh, kw, cout) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        let [big_h, big_w] = self.target;
        let [sh, sw] = self.stride;
        let (pad_y, pad_x) = self.padding(kh, kw);
        let xd = x.data();
        let wd = w.data();
        let mut out = vec![0.0; big_h * big_w * cout];
        for oy in 0..h {
            for ox in 0..wid {
                let in_off = (oy * wid + ox) * cin;
                let in_row = &xd[in_off..in_off + cin];
                for ky in 0..kh {
                    let iy = (oy * sh + ky) as isize - pad_y as isize;
                    if iy < 0 || iy >= big_h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * sw + kx) as isize - pad_x as isize;
                        if ix < 0 || ix >= big_w as isize {
                            continue;
                        }
                        let out_off = (iy as usize * big_w + ix as usize) * cout;
                        for co in 0..cout {
                            let w_off = ((ky * kw + kx) * cout + co) * cin;
                            let wrow = &wd[w_off..w_off + cin];
                            let mut acc = 0.0;
                            for (a, wv) in in_row.iter().zip(wrow) {
                                acc += a * wv;
                            }
                            out[out_off + co] += acc;
                        }
                    }
                }
            }
        }
        Tensor::new(vec![big_h, big_w, cout], out)
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let w = inputs[1];
        let (h, wid, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (kh, kw, cout) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        let [big_h, big_w] = self.target;
        let [sh, sw] = self.stride;
        let (pad_y, pad_x) = self.padding(kh, kw);
        let xd = x.data();
        let wd = w.data();
        let gd = grad.data();

        let mut d_input = needs[0].then(|| vec![0.0; x.numel()]);
        let mut d_weights = needs[1].then(|| vec![0.0; w.numel()]);

        for oy in 0..h {
            for ox in 0..wid {
                let in_off = (oy * wid + ox) * cin;
                for ky in 0..kh {
                    let iy = (oy * sh + ky) as isize - pad_y as isize;
                    if iy < 0 || iy >= big_h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * sw + kx) as isize - pad_x as isize;
                        if ix < 0 || ix >= big_w as isize {
                            continue;
                        }
                        let g_off = (iy as usize * big_w + ix as usize) * cout;
                        for co in 0..cout {
                            let gv = gd[g_off + co];
                            if gv == 0.0 {
                                continue;
                            }
                            let w_off = ((ky * kw + kx) * cout + co) * cin;
                            if let Some(di) = d_input.as_mut() {
                                let wrow = &wd[w_off..w_off + cin];
                                let dst = &mut di[in_off..in_off + cin];
                                for (d, wv) in dst.iter_mut().zip(wrow) {
                                    *d += gv * wv;
                                }
                            }
                            if let Some(dw) = d_weights.as_mut() {
                                let in_row = &xd[in_off..in_off + cin];
                                let dst = &mut dw[w_off..w_off + cin];
                                for (d, a) in dst.iter_mut().zip(in_row) {
                                    *d += gv * a;
                                }
                            }
                        }
                    }
                }
            }
        }
        vec![
            d_input.map(|d| Tensor::new(x.shape().to_vec(), d)),
            d_weights.map(|d| Tensor::new(w.shape().to_vec(), d)),
        ]
    }
}

// ── Max pooling ─────────────────────────────────────────────────────────

/// Per-window maximum with SAME padding and a -inf fill; the gradient
/// routes to the argmax element with a first-index tie-break.
#[derive(Debug)]
pub struct MaxPool2dSame {
    pub window: [usize; 2],
    pub stride: [usize; 2],
}

impl MaxPool2dSame {
    /// Argmax flat index in the input for one output cell, scanning the
    /// window row-major so ties keep the first index.
    #[allow(clippy::too_many_arguments)]
    fn argmax(
        &self,
        xd: &[f64],
        h: usize,
        wid: usize,
        c: usize,
        oy: usize,
        ox: usize,
        ch: usize,
        pad_y: usize,
        pad_x: usize,
    ) -> (usize, f64) {
        let mut best = f64::NEG_INFINITY;
        let mut best_idx = usize::MAX;
        for ky in 0..self.window[0] {
            let iy = (oy * self.stride[0] + ky) as isize - pad_y as isize;
            if iy < 0 || iy >= h as isize {
                continue;
            }
            for kx in 0..self.window[1] {
                let ix = (ox * self.stride[1] + kx) as isize - pad_x as isize;
                if ix < 0 || ix >= wid as isize {
                    continue;
                }
                let idx = (iy as usize * wid + ix as usize) * c + ch;
                if xd[idx] > best {
                    best = xd[idx];
                    best_idx = idx;
                }
            }
        }
        (best_idx, best)
    }
}

impl Primitive for MaxPool2dSame {
    fn name(&self) -> &'static str {
        "maxpool2d_same"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        positive_strides(self.name(), self.stride)?;
        if self.window[0] == 0 || self.window[1] == 0 {
            return Err(TensorError::InvalidAttribute {
                primitive: self.name(),
                detail: format!("window must be positive, got {:?}", self.window),
            });
        }
        if inputs.len() != 1 || inputs[0].len() != 3 {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: format!("need one [h,w,c] input, got {inputs:?}"),
            });
        }
        let x = inputs[0];
        Ok(vec![
            x[0].div_ceil(self.stride[0]),
            x[1].div_ceil(self.stride[1]),
            x[2],
        ])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let x = inputs[0];
        let (h, wid, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (ho, pad_y) = same_pad(h, self.window[0], self.stride[0]);
        let (wo, pad_x) = same_pad(wid, self.window[1], self.stride[1]);
        let xd = x.data();
        let mut out = vec![0.0; ho * wo * c];
        for oy in 0..ho {
            for ox in 0..wo {
                for ch in 0..c {
                    let (_, best) = self.argmax(xd, h, wid, c, oy, ox, ch, pad_y, pad_x);
                    out[(oy * wo + ox) * c + ch] = best;
                }
            }
        }
        Tensor::new(vec![ho, wo, c], out)
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        vec![needs[0].then(|| {
            let x = inputs[0];
            let (h, wid, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let (ho, pad_y) = same_pad(h, self.window[0], self.stride[0]);
            let (wo, pad_x) = same_pad(wid, self.window[1], self.stride[1]);
            let xd = x.data();
            let gd = grad.data();
            let mut d_input = vec![0.0; x.numel()];
            for oy in 0..ho {
                for ox in 0..wo {
                    for ch in 0..c {
                        let (idx, _) = self.argmax(xd, h, wid, c, oy, ox, ch, pad_y, pad_x);
                        if idx != usize::MAX {
                            d_input[idx] += gd[(oy * wo + ox) * c + ch];
                        }
                    }
                }
            }
            Tensor::new(x.shape().to_vec(), d_input)
        })]
    }
}

// ── Un-pooling upsample ─────────────────────────────────────────────────

/// Nearest-neighbor repeat along the row axis, cropped to `target_rows`;
/// the decoder's inverse of a `[k, 1]` pool.
#[derive(Debug)]
pub struct UpsampleRows {
    pub factor: usize,
    pub target_rows: usize,
}

impl Primitive for UpsampleRows {
    fn name(&self) -> &'static str {
        "upsample_rows"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        if self.factor == 0 {
            return Err(TensorError::InvalidAttribute {
                primitive: self.name(),
                detail: "factor must be positive".to_string(),
            });
        }
        if inputs.len() != 1 || inputs[0].len() != 3 {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: format!("need one [h,w,c] input, got {inputs:?}"),
            });
        }
        let x = inputs[0];
        if self.target_rows.div_ceil(self.factor) != x[0] {
            return Err(TensorError::UnreachableTargetShape {
                input: x.to_vec(),
                target: vec![self.target_rows, x[1], x[2]],
            });
        }
        Ok(vec![self.target_rows, x[1], x[2]])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let x = inputs[0];
        let (wid, c) = (x.shape()[1], x.shape()[2]);
        let row = wid * c;
        let xd = x.data();
        let mut out = vec![0.0; self.target_rows * row];
        for y in 0..self.target_rows {
            let src = (y / self.factor) * row;
            out[y * row..(y + 1) * row].copy_from_slice(&xd[src..src + row]);
        }
        Tensor::new(vec![self.target_rows, wid, c], out)
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        vec![needs[0].then(|| {
            let x = inputs[0];
            let (wid, c) = (x.shape()[1], x.shape()[2]);
            let row = wid * c;
            let gd = grad.data();
            let mut d_input = vec![0.0; x.numel()];
            for y in 0..self.target_rows {
                let dst = (y / self.factor) * row;
                for i in 0..row {
                    d_input[dst + i] += gd[y * row + i];
                }
            }
            Tensor::new(x.shape().to_vec(), d_input)
        })]
    }
}

// ── Loss kernels ────────────────────────────────────────────────────────

fn clamp_prob(p: f64) -> f64 {
    p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP)
}

fn inside_clamp(p: f64) -> bool {
    p > LOG_CLAMP && p < 1.0 - LOG_CLAMP
}

/// Mean squared error over all entries of two equal-shape tensors.
#[derive(Debug)]
pub struct MseLoss;

impl Primitive for MseLoss {
    fn name(&self) -> &'static str {
        "mse_loss"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        if inputs.len() != 2 || inputs[0] != inputs[1] {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: format!("need two equal shapes, got {inputs:?}"),
            });
        }
        Ok(vec![1])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let n = inputs[0].numel() as f64;
        let sum: f64 = inputs[0]
            .data()
            .iter()
            .zip(inputs[1].data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Tensor::scalar(sum / n)
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let n = inputs[0].numel() as f64;
        let g = grad.scalar_value();
        let diff: Vec<f64> = inputs[0]
            .data()
            .iter()
            .zip(inputs[1].data())
            .map(|(a, b)| 2.0 * (a - b) * g / n)
            .collect();
        let da = needs[0].then(|| Tensor::new(inputs[0].shape().to_vec(), diff.clone()));
        let db = needs[1].then(|| {
            Tensor::new(
                inputs[1].shape().to_vec(),
                diff.iter().map(|d| -d).collect(),
            )
        });
        vec![da, db]
    }
}

/// Binary cross-entropy from probabilities, averaged over entries, with
/// logs clamped at [`LOG_CLAMP`].
#[derive(Debug)]
pub struct BceLoss;

impl Primitive for BceLoss {
    fn name(&self) -> &'static str {
        "bce_loss"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        if inputs.len() != 2 || inputs[0] != inputs[1] {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: format!("need probabilities and labels of equal shape, got {inputs:?}"),
            });
        }
        Ok(vec![1])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let n = inputs[0].numel() as f64;
        let sum: f64 = inputs[0]
            .data()
            .iter()
            .zip(inputs[1].data())
            .map(|(&p, &y)| {
                let p = clamp_prob(p);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        Tensor::scalar(sum / n)
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let n = inputs[0].numel() as f64;
        let g = grad.scalar_value();
        let dp = needs[0].then(|| {
            Tensor::new(
                inputs[0].shape().to_vec(),
                inputs[0]
                    .data()
                    .iter()
                    .zip(inputs[1].data())
                    .map(|(&p, &y)| {
                        if inside_clamp(p) {
                            let p = clamp_prob(p);
                            g * (-y / p + (1.0 - y) / (1.0 - p)) / n
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            )
        });
        let dy = needs[1].then(|| {
            Tensor::new(
                inputs[1].shape().to_vec(),
                inputs[0]
                    .data()
                    .iter()
                    .map(|&p| {
                        let p = clamp_prob(p);
                        g * (-(p.ln()) + (1.0 - p).ln()) / n
                    })
                    .collect(),
            )
        });
        vec![dp, dy]
    }
}

/// Multi-class cross-entropy from a probability vector and a one-hot
/// target, logs clamped at [`LOG_CLAMP`].
#[derive(Debug)]
pub struct CeLoss;

impl Primitive for CeLoss {
    fn name(&self) -> &'static str {
        "ce_loss"
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
        if inputs.len() != 2 || inputs[0] != inputs[1] || inputs[0].len() != 1 {
            return Err(TensorError::ShapeMismatch {
                primitive: self.name(),
                detail: format!("need probability and one-hot vectors of equal length, got {inputs:?}"),
            });
        }
        Ok(vec![1])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let sum: f64 = inputs[0]
            .data()
            .iter()
            .zip(inputs[1].data())
            .map(|(&p, &y)| -y * clamp_prob(p).ln())
            .sum();
        Tensor::scalar(sum)
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let g = grad.scalar_value();
        let dp = needs[0].then(|| {
            Tensor::new(
                inputs[0].shape().to_vec(),
                inputs[0]
                    .data()
                    .iter()
                    .zip(inputs[1].data())
                    .map(|(&p, &y)| {
                        if inside_clamp(p) {
                            -g * y / clamp_prob(p)
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            )
        });
        let dy = needs[1].then(|| {
            Tensor::new(
                inputs[1].shape().to_vec(),
                inputs[0]
                    .data()
                    .iter()
                    .map(|&p| -g * clamp_prob(p).ln())
                    .collect(),
            )
        });
        vec![dp, dy]
    }
}

// ── Layer-level builders ────────────────────────────────────────────────

/// SAME-padded convolution plus bias. The caller applies the activation.
pub fn conv2d_same(
    graph: &mut Graph,
    input: NodeId,
    spec: &ConvSpec,
    weights: NodeId,
    bias: NodeId,
) -> Result<NodeId, TensorError> {
    let c_in = graph.shape(input)[2];
    let expect = spec.weight_shape(c_in);
    if graph.shape(weights) != expect {
        return Err(TensorError::ShapeMismatch {
            primitive: "conv2d_same",
            detail: format!(
                "weights {:?} inconsistent with spec {:?} (expected {:?})",
                graph.shape(weights),
                spec,
                expect
            ),
        });
    }
    let conv = graph.apply(
        Conv2dSame {
            stride: spec.stride,
        },
        &[input, weights],
    )?;
    graph.add_bias(conv, bias)
}

/// Transposed convolution with an explicit target shape, plus bias.
pub fn transposed_conv2d(
    graph: &mut Graph,
    input: NodeId,
    stride: [usize; 2],
    target: [usize; 2],
    weights: NodeId,
    bias: NodeId,
) -> Result<NodeId, TensorError> {
    let up = graph.apply(ConvTranspose2d { stride, target }, &[input, weights])?;
    graph.add_bias(up, bias)
}

pub fn maxpool2d_same(
    graph: &mut Graph,
    input: NodeId,
    spec: &PoolSpec,
) -> Result<NodeId, TensorError> {
    graph.apply(
        MaxPool2dSame {
            window: spec.window,
            stride: spec.stride,
        },
        &[input],
    )
}

/// `activation(W^T x + b)` for a 1-D input.
pub fn dense_affine(
    graph: &mut Graph,
    input: NodeId,
    weights: NodeId,
    bias: NodeId,
    activation: Activation,
) -> Result<NodeId, TensorError> {
    let d_in = graph.shape(input)[0];
    let row = graph.reshape(input, vec![1, d_in])?;
    let prod = graph.matmul(row, weights)?;
    let d_out = graph.shape(prod)[1];
    let flat = graph.reshape(prod, vec![d_out])?;
    let affine = graph.add_bias(flat, bias)?;
    match activation {
        Activation::Sigmoid => graph.sigmoid(affine),
        Activation::None => Ok(affine),
    }
}

/// Inverted dropout: multiply by `Bernoulli(keep)/keep` in train mode,
/// identity in eval mode. The mask comes from the caller's generator.
pub fn dropout_mask<R: Rng>(
    graph: &mut Graph,
    input: NodeId,
    keep_rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<NodeId, TensorError> {
    if !(keep_rate > 0.0 && keep_rate <= 1.0) {
        return Err(TensorError::InvalidAttribute {
            primitive: "dropout",
            detail: format!("keep rate must be in (0, 1], got {keep_rate}"),
        });
    }
    if mode == Mode::Eval {
        return Ok(input);
    }
    let shape = graph.shape(input).to_vec();
    let numel: usize = shape.iter().product();
    let inv = 1.0 / keep_rate;
    let mask: Vec<f64> = (0..numel)
        .map(|_| {
            if rng.gen::<f64>() < keep_rate {
                inv
            } else {
                0.0
            }
        })
        .collect();
    let mask = graph.constant(Tensor::new(shape, mask));
    graph.mul(input, mask)
}

pub fn mse_loss(graph: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
    graph.apply(MseLoss, &[a, b])
}

pub fn bce_loss(graph: &mut Graph, probs: NodeId, labels: NodeId) -> Result<NodeId, TensorError> {
    graph.apply(BceLoss, &[probs, labels])
}

pub fn ce_loss(graph: &mut Graph, probs: NodeId, one_hot: NodeId) -> Result<NodeId, TensorError> {
    graph.apply(CeLoss, &[probs, one_hot])
}
