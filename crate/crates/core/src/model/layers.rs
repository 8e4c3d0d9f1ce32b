//! Layer primitives: forward passes and their hand-derived reverse passes.
//!
//! Every backward function takes the cached forward inputs it needs and the
//! gradient with respect to its output, and returns the gradient with respect
//! to its input plus per-parameter gradients. Feature tensors are
//! `[channels, frequency, time]` row-major throughout.

use crate::error::{Error, Result};
use crate::numerics::{relu, sigmoid, Tensor};

fn expect_rank3(x: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    if x.rank() != 3 {
        return Err(Error::ShapeMismatch {
            op,
            detail: format!("expected [C, F, T], got {:?}", x.shape()),
        });
    }
    Ok((x.shape()[0], x.shape()[1], x.shape()[2]))
}

// ============================================================================
// Stem: 3x3 2D convolution, stride 1, zero padding 1
// ============================================================================

/// `y[o,f,t] = b[o] + sum_{i,u,v} w[o,i,u,v] * x[i, f+u-1, t+v-1]` (zero pad).
pub fn conv2d_same(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (cin, f_ext, t_ext) = expect_rank3(x, "conv2d_same")?;
    if w.rank() != 4 || w.shape()[1] != cin || w.shape()[2] != 3 || w.shape()[3] != 3 {
        return Err(Error::ShapeMismatch {
            op: "conv2d_same",
            detail: format!("kernel {:?}, expected [Cout, {cin}, 3, 3]", w.shape()),
        });
    }
    let cout = w.shape()[0];
    if b.shape() != [cout] {
        return Err(Error::ShapeMismatch {
            op: "conv2d_same",
            detail: format!("bias {:?}, expected [{cout}]", b.shape()),
        });
    }
    let mut y = Tensor::zeros(&[cout, f_ext, t_ext])?;
    let xd = x.data();
    let wd = w.data();
    let yd = y.data_mut();
    for o in 0..cout {
        let bias = b.data()[o];
        for i in 0..cin {
            let wbase = (o * cin + i) * 9;
            for f in 0..f_ext {
                for t in 0..t_ext {
                    let mut acc = 0.0;
                    for u in 0..3usize {
                        let fi = f as isize + u as isize - 1;
                        if fi < 0 || fi >= f_ext as isize {
                            continue;
                        }
                        for v in 0..3usize {
                            let ti = t as isize + v as isize - 1;
                            if ti < 0 || ti >= t_ext as isize {
                                continue;
                            }
                            acc += wd[wbase + u * 3 + v]
                                * xd[(i * f_ext + fi as usize) * t_ext + ti as usize];
                        }
                    }
                    yd[(o * f_ext + f) * t_ext + t] += acc;
                }
            }
        }
        for f in 0..f_ext {
            for t in 0..t_ext {
                yd[(o * f_ext + f) * t_ext + t] += bias;
            }
        }
    }
    Ok(y)
}

/// Gradients of [`conv2d_same`]: returns `(dx, dw, db)`.
pub fn conv2d_same_backward(x: &Tensor, w: &Tensor, grad: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (cin, f_ext, t_ext) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let cout = w.shape()[0];
    let mut dx = Tensor::zeros(x.shape()).expect("shape");
    let mut dw = Tensor::zeros(w.shape()).expect("shape");
    let mut db = Tensor::zeros(&[cout]).expect("shape");
    let gd = grad.data();
    let xd = x.data();
    let wd = w.data();
    for o in 0..cout {
        let mut bias_acc = 0.0;
        for f in 0..f_ext {
            for t in 0..t_ext {
                bias_acc += gd[(o * f_ext + f) * t_ext + t];
            }
        }
        db.data_mut()[o] = bias_acc;
        for i in 0..cin {
            let wbase = (o * cin + i) * 9;
            for f in 0..f_ext {
                for t in 0..t_ext {
                    let g = gd[(o * f_ext + f) * t_ext + t];
                    if g == 0.0 {
                        continue;
                    }
                    for u in 0..3usize {
                        let fi = f as isize + u as isize - 1;
                        if fi < 0 || fi >= f_ext as isize {
                            continue;
                        }
                        for v in 0..3usize {
                            let ti = t as isize + v as isize - 1;
                            if ti < 0 || ti >= t_ext as isize {
                                continue;
                            }
                            let xoff = (i * f_ext + fi as usize) * t_ext + ti as usize;
                            dw.data_mut()[wbase + u * 3 + v] += g * xd[xoff];
                            dx.data_mut()[xoff] += g * wd[wbase + u * 3 + v];
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

// ============================================================================
// Pointwise (kernel-1) convolution
// ============================================================================

/// Per-position channel mixing: `y[o,f,t] = b[o] + sum_i w[o,i] * x[i,f,t]`.
pub fn pointwise_conv(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let (cin, f_ext, t_ext) = expect_rank3(x, "pointwise_conv")?;
    if w.rank() != 2 || w.shape()[1] != cin {
        return Err(Error::ShapeMismatch {
            op: "pointwise_conv",
            detail: format!("weight {:?}, expected [Cout, {cin}]", w.shape()),
        });
    }
    let cout = w.shape()[0];
    if let Some(bias) = b {
        if bias.shape() != [cout] {
            return Err(Error::ShapeMismatch {
                op: "pointwise_conv",
                detail: format!("bias {:?}, expected [{cout}]", bias.shape()),
            });
        }
    }
    let spatial = f_ext * t_ext;
    let mut y = Tensor::zeros(&[cout, f_ext, t_ext])?;
    let xd = x.data();
    let wd = w.data();
    let yd = y.data_mut();
    for o in 0..cout {
        let ybase = o * spatial;
        for i in 0..cin {
            let wv = wd[o * cin + i];
            if wv == 0.0 {
                continue;
            }
            let xbase = i * spatial;
            for p in 0..spatial {
                yd[ybase + p] += wv * xd[xbase + p];
            }
        }
        if let Some(bias) = b {
            let bv = bias.data()[o];
            for p in 0..spatial {
                yd[ybase + p] += bv;
            }
        }
    }
    Ok(y)
}

/// Gradients of [`pointwise_conv`]: returns `(dx, dw, db)`.
pub fn pointwise_conv_backward(x: &Tensor, w: &Tensor, grad: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (cin, f_ext, t_ext) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let cout = w.shape()[0];
    let spatial = f_ext * t_ext;
    let mut dx = Tensor::zeros(x.shape()).expect("shape");
    let mut dw = Tensor::zeros(w.shape()).expect("shape");
    let mut db = Tensor::zeros(&[cout]).expect("shape");
    let gd = grad.data();
    let xd = x.data();
    let wd = w.data();
    for o in 0..cout {
        let gbase = o * spatial;
        db.data_mut()[o] = gd[gbase..gbase + spatial].iter().sum();
        for i in 0..cin {
            let xbase = i * spatial;
            let mut wacc = 0.0;
            let wv = wd[o * cin + i];
            for p in 0..spatial {
                let g = gd[gbase + p];
                wacc += g * xd[xbase + p];
                dx.data_mut()[xbase + p] += g * wv;
            }
            dw.data_mut()[o * cin + i] = wacc;
        }
    }
    (dx, dw, db)
}

// ============================================================================
// Depthwise 1D convolutions
// ============================================================================

/// Per-channel convolution along the time axis, stride 1, zero padding.
pub fn depthwise_conv1d_time(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (c_ext, f_ext, t_ext) = expect_rank3(x, "depthwise_conv1d_time")?;
    if w.rank() != 2 || w.shape()[0] != c_ext {
        return Err(Error::ShapeMismatch {
            op: "depthwise_conv1d_time",
            detail: format!("weight {:?}, expected [{c_ext}, k]", w.shape()),
        });
    }
    let k = w.shape()[1];
    if k % 2 == 0 {
        return Err(Error::Config(format!("time kernel must be odd, got {k}")));
    }
    let pad = (k - 1) / 2;
    let mut y = Tensor::zeros(x.shape())?;
    let xd = x.data();
    let wd = w.data();
    let yd = y.data_mut();
    for c in 0..c_ext {
        let kern = &wd[c * k..(c + 1) * k];
        for f in 0..f_ext {
            let base = (c * f_ext + f) * t_ext;
            for t in 0..t_ext {
                let mut acc = 0.0;
                for (u, &kv) in kern.iter().enumerate() {
                    let ti = t as isize + u as isize - pad as isize;
                    if ti >= 0 && (ti as usize) < t_ext {
                        acc += kv * xd[base + ti as usize];
                    }
                }
                yd[base + t] = acc;
            }
        }
    }
    Ok(y)
}

/// Gradients of [`depthwise_conv1d_time`]: returns `(dx, dw)`.
pub fn depthwise_conv1d_time_backward(x: &Tensor, w: &Tensor, grad: &Tensor) -> (Tensor, Tensor) {
    let (c_ext, f_ext, t_ext) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let k = w.shape()[1];
    let pad = (k - 1) / 2;
    let mut dx = Tensor::zeros(x.shape()).expect("shape");
    let mut dw = Tensor::zeros(w.shape()).expect("shape");
    let xd = x.data();
    let wd = w.data();
    let gd = grad.data();
    for c in 0..c_ext {
        for f in 0..f_ext {
            let base = (c * f_ext + f) * t_ext;
            for t in 0..t_ext {
                let g = gd[base + t];
                if g == 0.0 {
                    continue;
                }
                for u in 0..k {
                    let ti = t as isize + u as isize - pad as isize;
                    if ti >= 0 && (ti as usize) < t_ext {
                        dw.data_mut()[c * k + u] += g * xd[base + ti as usize];
                        dx.data_mut()[base + ti as usize] += g * wd[c * k + u];
                    }
                }
            }
        }
    }
    (dx, dw)
}

/// Per-channel convolution along frequency with stride and a channel
/// multiplier: output channel `c * m + j` reads only input channel `c`.
/// Output frequency extent is `ceil(F / stride)`.
pub fn depthwise_conv1d_freq(
    x: &Tensor,
    w: &Tensor,
    multiplier: usize,
    stride: usize,
) -> Result<Tensor> {
    let (c_ext, f_ext, t_ext) = expect_rank3(x, "depthwise_conv1d_freq")?;
    if multiplier < 1 {
        return Err(Error::Config("dw multiplier must be >= 1".into()));
    }
    if stride < 1 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    let cout = c_ext * multiplier;
    if w.rank() != 2 || w.shape()[0] != cout {
        return Err(Error::ShapeMismatch {
            op: "depthwise_conv1d_freq",
            detail: format!("weight {:?}, expected [{cout}, k]", w.shape()),
        });
    }
    let k = w.shape()[1];
    if k % 2 == 0 {
        return Err(Error::Config(format!("freq kernel must be odd, got {k}")));
    }
    let pad = (k - 1) / 2;
    let f_out = f_ext.div_ceil(stride);
    let mut y = Tensor::zeros(&[cout, f_out, t_ext])?;
    let xd = x.data();
    let wd = w.data();
    let yd = y.data_mut();
    for c in 0..c_ext {
        for j in 0..multiplier {
            let oc = c * multiplier + j;
            let kern = &wd[oc * k..(oc + 1) * k];
            for fo in 0..f_out {
                for (u, &kv) in kern.iter().enumerate() {
                    let fi = (fo * stride) as isize + u as isize - pad as isize;
                    if fi < 0 || fi >= f_ext as isize {
                        continue;
                    }
                    if kv == 0.0 {
                        continue;
                    }
                    let xbase = (c * f_ext + fi as usize) * t_ext;
                    let ybase = (oc * f_out + fo) * t_ext;
                    for t in 0..t_ext {
                        yd[ybase + t] += kv * xd[xbase + t];
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Gradients of [`depthwise_conv1d_freq`]: returns `(dx, dw)`.
pub fn depthwise_conv1d_freq_backward(
    x: &Tensor,
    w: &Tensor,
    multiplier: usize,
    stride: usize,
    grad: &Tensor,
) -> (Tensor, Tensor) {
    let (c_ext, f_ext, t_ext) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let k = w.shape()[1];
    let pad = (k - 1) / 2;
    let f_out = f_ext.div_ceil(stride);
    let mut dx = Tensor::zeros(x.shape()).expect("shape");
    let mut dw = Tensor::zeros(w.shape()).expect("shape");
    let xd = x.data();
    let wd = w.data();
    let gd = grad.data();
    for c in 0..c_ext {
        for j in 0..multiplier {
            let oc = c * multiplier + j;
            for fo in 0..f_out {
                for u in 0..k {
                    let fi = (fo * stride) as isize + u as isize - pad as isize;
                    if fi < 0 || fi >= f_ext as isize {
                        continue;
                    }
                    let xbase = (c * f_ext + fi as usize) * t_ext;
                    let gbase = (oc * f_out + fo) * t_ext;
                    let mut wacc = 0.0;
                    for t in 0..t_ext {
                        let g = gd[gbase + t];
                        wacc += g * xd[xbase + t];
                        dx.data_mut()[xbase + t] += g * wd[oc * k + u];
                    }
                    dw.data_mut()[oc * k + u] += wacc;
                }
            }
        }
    }
    (dx, dw)
}

// ============================================================================
// Channel shuffle
// ============================================================================

/// Fixed group-transpose permutation of channels: view `[g, C/g]`, transpose,
/// flatten. Values are untouched.
pub fn channel_shuffle(x: &Tensor, groups: usize) -> Result<Tensor> {
    let (c_ext, f_ext, t_ext) = expect_rank3(x, "channel_shuffle")?;
    if groups == 0 || c_ext % groups != 0 {
        return Err(Error::Config(format!(
            "shuffle groups {groups} must divide {c_ext} channels"
        )));
    }
    let per = c_ext / groups;
    let spatial = f_ext * t_ext;
    let mut y = Tensor::zeros(x.shape())?;
    for c in 0..c_ext {
        let (a, b) = (c / per, c % per);
        let dest = b * groups + a;
        let src = &x.data()[c * spatial..(c + 1) * spatial];
        y.data_mut()[dest * spatial..(dest + 1) * spatial].copy_from_slice(src);
    }
    Ok(y)
}

/// Inverse permutation: shuffling with `C / groups` undoes `groups`.
pub fn channel_shuffle_backward(grad: &Tensor, groups: usize) -> Result<Tensor> {
    let c_ext = grad.shape()[0];
    channel_shuffle(grad, c_ext / groups)
}

// ============================================================================
// Channel attention (squeeze and excite)
// ============================================================================

/// Weights of one attention gate.
#[derive(Debug, Clone, Copy)]
pub struct SeWeights<'a> {
    pub w1: &'a Tensor,
    pub b1: &'a Tensor,
    pub w2: &'a Tensor,
    pub b2: &'a Tensor,
}

/// Forward intermediates needed by the reverse pass.
#[derive(Debug, Clone)]
pub struct SeCache {
    pub mean: Vec<f64>,
    pub pre1: Vec<f64>,
    pub hidden: Vec<f64>,
    pub gate: Vec<f64>,
}

/// Gate each channel by a two-layer MLP of its spatial mean:
/// `y[c] = sigmoid(w2 . relu(w1 . mean(x) + b1) + b2)[c] * x[c]`.
pub fn se_block(x: &Tensor, se: &SeWeights) -> Result<(Tensor, SeCache)> {
    let (c_ext, f_ext, t_ext) = expect_rank3(x, "se_block")?;
    let mid = se.w1.shape()[0];
    if se.w1.shape() != [mid, c_ext]
        || se.b1.shape() != [mid]
        || se.w2.shape() != [c_ext, mid]
        || se.b2.shape() != [c_ext]
    {
        return Err(Error::ShapeMismatch {
            op: "se_block",
            detail: format!(
                "gate tensors {:?}/{:?}/{:?}/{:?} inconsistent with {c_ext} channels",
                se.w1.shape(),
                se.b1.shape(),
                se.w2.shape(),
                se.b2.shape()
            ),
        });
    }
    let spatial = (f_ext * t_ext) as f64;
    let mean: Vec<f64> = (0..c_ext)
        .map(|c| {
            x.data()[c * f_ext * t_ext..(c + 1) * f_ext * t_ext]
                .iter()
                .sum::<f64>()
                / spatial
        })
        .collect();
    let pre1: Vec<f64> = (0..mid)
        .map(|i| {
            se.b1.data()[i]
                + (0..c_ext)
                    .map(|c| se.w1.data()[i * c_ext + c] * mean[c])
                    .sum::<f64>()
        })
        .collect();
    let hidden: Vec<f64> = pre1.iter().map(|&v| relu(v)).collect();
    let gate: Vec<f64> = (0..c_ext)
        .map(|c| {
            sigmoid(
                se.b2.data()[c]
                    + (0..mid)
                        .map(|i| se.w2.data()[c * mid + i] * hidden[i])
                        .sum::<f64>(),
            )
        })
        .collect();
    let mut y = x.clone();
    for c in 0..c_ext {
        let g = gate[c];
        for v in &mut y.data_mut()[c * f_ext * t_ext..(c + 1) * f_ext * t_ext] {
            *v *= g;
        }
    }
    Ok((
        y,
        SeCache {
            mean,
            pre1,
            hidden,
            gate,
        },
    ))
}

/// Gradients of [`se_block`]: returns `(dx, dw1, db1, dw2, db2)`.
pub fn se_block_backward(
    x: &Tensor,
    se: &SeWeights,
    cache: &SeCache,
    grad: &Tensor,
) -> (Tensor, Tensor, Tensor, Tensor, Tensor) {
    let (c_ext, f_ext, t_ext) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mid = se.w1.shape()[0];
    let spatial = f_ext * t_ext;

    // dgate[c] = sum_{f,t} grad * x ; direct dx = grad * gate
    let mut dgate = vec![0.0; c_ext];
    let mut dx = Tensor::zeros(x.shape()).expect("shape");
    for c in 0..c_ext {
        let g = cache.gate[c];
        let mut acc = 0.0;
        for p in 0..spatial {
            let off = c * spatial + p;
            acc += grad.data()[off] * x.data()[off];
            dx.data_mut()[off] = grad.data()[off] * g;
        }
        dgate[c] = acc;
    }
    // through sigmoid
    let dpre2: Vec<f64> = (0..c_ext)
        .map(|c| dgate[c] * cache.gate[c] * (1.0 - cache.gate[c]))
        .collect();
    let mut dw2 = Tensor::zeros(se.w2.shape()).expect("shape");
    let mut db2 = Tensor::zeros(se.b2.shape()).expect("shape");
    let mut dhidden = vec![0.0; mid];
    for c in 0..c_ext {
        db2.data_mut()[c] = dpre2[c];
        for i in 0..mid {
            dw2.data_mut()[c * mid + i] = dpre2[c] * cache.hidden[i];
            dhidden[i] += dpre2[c] * se.w2.data()[c * mid + i];
        }
    }
    // through relu
    let dpre1: Vec<f64> = (0..mid)
        .map(|i| if cache.pre1[i] > 0.0 { dhidden[i] } else { 0.0 })
        .collect();
    let mut dw1 = Tensor::zeros(se.w1.shape()).expect("shape");
    let mut db1 = Tensor::zeros(se.b1.shape()).expect("shape");
    let mut dmean = vec![0.0; c_ext];
    for i in 0..mid {
        db1.data_mut()[i] = dpre1[i];
        for c in 0..c_ext {
            dw1.data_mut()[i * c_ext + c] = dpre1[i] * cache.mean[c];
            dmean[c] += dpre1[i] * se.w1.data()[i * c_ext + c];
        }
    }
    // mean broadcast
    for c in 0..c_ext {
        let spread = dmean[c] / spatial as f64;
        for p in 0..spatial {
            dx.data_mut()[c * spatial + p] += spread;
        }
    }
    (dx, dw1, db1, dw2, db2)
}

// ============================================================================
// Hybrid pooling
// ============================================================================

/// 2x2 window, stride 2: `y = 0.5 * (maxpool(x) + avgpool(x))`. Odd trailing
/// rows/columns are dropped (floor division). Also returns the flat input
/// index of each window maximum for the reverse pass (first wins on ties).
pub fn hybrid_pool(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (c_ext, f_ext, t_ext) = expect_rank3(x, "hybrid_pool")?;
    if f_ext < 2 || t_ext < 2 {
        return Err(Error::ShapeMismatch {
            op: "hybrid_pool",
            detail: format!("spatial extents [{f_ext} x {t_ext}] must be >= 2"),
        });
    }
    let (fo, to) = (f_ext / 2, t_ext / 2);
    let mut y = Tensor::zeros(&[c_ext, fo, to])?;
    let mut argmax = vec![0usize; c_ext * fo * to];
    let xd = x.data();
    for c in 0..c_ext {
        for f in 0..fo {
            for t in 0..to {
                let mut best_v = f64::NEG_INFINITY;
                let mut best_i = 0usize;
                let mut sum = 0.0;
                for df in 0..2 {
                    for dt in 0..2 {
                        let off = (c * f_ext + 2 * f + df) * t_ext + 2 * t + dt;
                        let v = xd[off];
                        sum += v;
                        if v > best_v {
                            best_v = v;
                            best_i = off;
                        }
                    }
                }
                let yoff = (c * fo + f) * to + t;
                y.data_mut()[yoff] = 0.5 * (best_v + 0.25 * sum);
                argmax[yoff] = best_i;
            }
        }
    }
    Ok((y, argmax))
}

/// Gradient of [`hybrid_pool`]: the max branch routes to the stored argmax,
/// the average branch spreads evenly.
pub fn hybrid_pool_backward(input_shape: &[usize], argmax: &[usize], grad: &Tensor) -> Tensor {
    let (c_ext, f_ext, t_ext) = (input_shape[0], input_shape[1], input_shape[2]);
    let (fo, to) = (f_ext / 2, t_ext / 2);
    let mut dx = Tensor::zeros(input_shape).expect("shape");
    for c in 0..c_ext {
        for f in 0..fo {
            for t in 0..to {
                let yoff = (c * fo + f) * to + t;
                let g = grad.data()[yoff];
                dx.data_mut()[argmax[yoff]] += 0.5 * g;
                let spread = 0.5 * 0.25 * g;
                for df in 0..2 {
                    for dt in 0..2 {
                        dx.data_mut()[(c * f_ext + 2 * f + df) * t_ext + 2 * t + dt] += spread;
                    }
                }
            }
        }
    }
    dx
}

// ============================================================================
// ReLU
// ============================================================================

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(relu)
}

/// `dx = grad` where the pre-activation was positive, else 0.
pub fn relu_backward(pre: &Tensor, grad: &Tensor) -> Tensor {
    let data = pre
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(pre.shape(), data).expect("same shape")
}

// ============================================================================
// GRU over the channel sequence
// ============================================================================

/// Gate matrices of the recurrent stage.
#[derive(Debug, Clone, Copy)]
pub struct GruWeights<'a> {
    pub w_z: &'a Tensor,
    pub u_z: &'a Tensor,
    pub b_z: &'a Tensor,
    pub w_r: &'a Tensor,
    pub u_r: &'a Tensor,
    pub b_r: &'a Tensor,
    pub w_h: &'a Tensor,
    pub u_h: &'a Tensor,
    pub b_h: &'a Tensor,
}

/// Per-step activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub z: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub candidate: Vec<Vec<f64>>,
    /// Hidden state after each step; `hidden[t]` is h_t.
    pub hidden: Vec<Vec<f64>>,
}

fn mat_vec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    debug_assert_eq!(cols, x.len());
    let wd = w.data();
    (0..rows)
        .map(|i| {
            let row = &wd[i * cols..(i + 1) * cols];
            row.iter().zip(x).map(|(&a, &b)| a * b).sum()
        })
        .collect()
}

/// `dw += g (outer) x`, `dx += w^T g`, accumulated in place.
fn mat_vec_backward(w: &Tensor, x: &[f64], g: &[f64], dw: &mut Tensor, dx: &mut [f64]) {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    let wd = w.data();
    let dwd = dw.data_mut();
    for i in 0..rows {
        let gi = g[i];
        if gi == 0.0 {
            continue;
        }
        for j in 0..cols {
            dwd[i * cols + j] += gi * x[j];
            dx[j] += gi * wd[i * cols + j];
        }
    }
}

/// Run the GRU along the channel axis: the sequence has one step per channel
/// and each step consumes that channel's frequency profile. Update rule per
/// step with `h_0 = 0`:
///
/// ```text
/// z = sigmoid(W_z x + U_z h + b_z)
/// r = sigmoid(W_r x + U_r h + b_r)
/// c = tanh(W_h x + U_h (r . h) + b_h)
/// h <- (1 - z) . h + z . c
/// ```
///
/// The update gate multiplies the candidate. Output stacks h after every
/// step: `[steps, hidden]`.
pub fn gru_over_frequency(x: &Tensor, w: &GruWeights) -> Result<(Tensor, GruCache)> {
    if x.rank() != 2 {
        return Err(Error::ShapeMismatch {
            op: "gru",
            detail: format!("expected [steps, features], got {:?}", x.shape()),
        });
    }
    let (steps, feat) = (x.shape()[0], x.shape()[1]);
    let hidden = w.w_z.shape()[0];
    for (name, t, want) in [
        ("w_z", w.w_z, [hidden, feat]),
        ("w_r", w.w_r, [hidden, feat]),
        ("w_h", w.w_h, [hidden, feat]),
        ("u_z", w.u_z, [hidden, hidden]),
        ("u_r", w.u_r, [hidden, hidden]),
        ("u_h", w.u_h, [hidden, hidden]),
    ] {
        if t.shape() != want {
            return Err(Error::ShapeMismatch {
                op: "gru",
                detail: format!("{name} is {:?}, expected {want:?}", t.shape()),
            });
        }
    }
    for (name, t) in [("b_z", w.b_z), ("b_r", w.b_r), ("b_h", w.b_h)] {
        if t.shape() != [hidden] {
            return Err(Error::ShapeMismatch {
                op: "gru",
                detail: format!("{name} is {:?}, expected [{hidden}]", t.shape()),
            });
        }
    }

    let mut cache = GruCache {
        z: Vec::with_capacity(steps),
        r: Vec::with_capacity(steps),
        candidate: Vec::with_capacity(steps),
        hidden: Vec::with_capacity(steps),
    };
    let mut out = Tensor::zeros(&[steps, hidden])?;
    let mut h = vec![0.0; hidden];
    for step in 0..steps {
        let xt = &x.data()[step * feat..(step + 1) * feat];
        let mut z = mat_vec(w.w_z, xt);
        let uzh = mat_vec(w.u_z, &h);
        let mut r = mat_vec(w.w_r, xt);
        let urh = mat_vec(w.u_r, &h);
        for i in 0..hidden {
            z[i] = sigmoid(z[i] + uzh[i] + w.b_z.data()[i]);
            r[i] = sigmoid(r[i] + urh[i] + w.b_r.data()[i]);
        }
        let rh: Vec<f64> = (0..hidden).map(|i| r[i] * h[i]).collect();
        let mut cand = mat_vec(w.w_h, xt);
        let uhrh = mat_vec(w.u_h, &rh);
        for i in 0..hidden {
            cand[i] = (cand[i] + uhrh[i] + w.b_h.data()[i]).tanh();
        }
        for i in 0..hidden {
            h[i] = (1.0 - z[i]) * h[i] + z[i] * cand[i];
        }
        out.data_mut()[step * hidden..(step + 1) * hidden].copy_from_slice(&h);
        cache.z.push(z);
        cache.r.push(r);
        cache.candidate.push(cand);
        cache.hidden.push(h.clone());
    }
    Ok((out, cache))
}

/// Per-parameter gradients of the GRU.
#[derive(Debug, Clone)]
pub struct GruGrads {
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
    pub w_h: Tensor,
    pub u_h: Tensor,
    pub b_h: Tensor,
}

/// Backpropagation through time. `grad` is d loss / d output, `[steps, hidden]`.
/// Returns the input gradient `[steps, features]` and all weight gradients.
pub fn gru_backward(
    x: &Tensor,
    w: &GruWeights,
    cache: &GruCache,
    grad: &Tensor,
) -> (Tensor, GruGrads) {
    let (steps, feat) = (x.shape()[0], x.shape()[1]);
    let hidden = w.w_z.shape()[0];
    let mut grads = GruGrads {
        w_z: Tensor::zeros(w.w_z.shape()).expect("shape"),
        u_z: Tensor::zeros(w.u_z.shape()).expect("shape"),
        b_z: Tensor::zeros(w.b_z.shape()).expect("shape"),
        w_r: Tensor::zeros(w.w_r.shape()).expect("shape"),
        u_r: Tensor::zeros(w.u_r.shape()).expect("shape"),
        b_r: Tensor::zeros(w.b_r.shape()).expect("shape"),
        w_h: Tensor::zeros(w.w_h.shape()).expect("shape"),
        u_h: Tensor::zeros(w.u_h.shape()).expect("shape"),
        b_h: Tensor::zeros(w.b_h.shape()).expect("shape"),
    };
    let mut dx = Tensor::zeros(x.shape()).expect("shape");
    let zero = vec![0.0; hidden];
    let mut dh_next = vec![0.0; hidden];
    for step in (0..steps).rev() {
        let xt = &x.data()[step * feat..(step + 1) * feat];
        let h_prev = if step == 0 { &zero } else { &cache.hidden[step - 1] };
        let z = &cache.z[step];
        let r = &cache.r[step];
        let cand = &cache.candidate[step];

        // output grad for this step plus the carry from step + 1
        let mut dh: Vec<f64> = (0..hidden)
            .map(|i| grad.data()[step * hidden + i] + dh_next[i])
            .collect();

        let dcand: Vec<f64> = (0..hidden).map(|i| dh[i] * z[i]).collect();
        let dz: Vec<f64> = (0..hidden).map(|i| dh[i] * (cand[i] - h_prev[i])).collect();
        for (i, dhi) in dh.iter_mut().enumerate() {
            *dhi *= 1.0 - z[i]; // contribution flowing straight to h_prev
        }

        // candidate: c = tanh(a_h), a_h = W_h x + U_h (r . h_prev) + b_h
        let da_h: Vec<f64> = (0..hidden).map(|i| dcand[i] * (1.0 - cand[i] * cand[i])).collect();
        let rh: Vec<f64> = (0..hidden).map(|i| r[i] * h_prev[i]).collect();
        let mut drh = vec![0.0; hidden];
        let mut dxt = vec![0.0; feat];
        mat_vec_backward(w.w_h, xt, &da_h, &mut grads.w_h, &mut dxt);
        mat_vec_backward(w.u_h, &rh, &da_h, &mut grads.u_h, &mut drh);
        for i in 0..hidden {
            grads.b_h.data_mut()[i] += da_h[i];
        }
        let dr: Vec<f64> = (0..hidden).map(|i| drh[i] * h_prev[i]).collect();
        for i in 0..hidden {
            dh[i] += drh[i] * r[i];
        }

        // gates: z = sigma(a_z), r = sigma(a_r)
        let da_z: Vec<f64> = (0..hidden).map(|i| dz[i] * z[i] * (1.0 - z[i])).collect();
        let da_r: Vec<f64> = (0..hidden).map(|i| dr[i] * r[i] * (1.0 - r[i])).collect();
        mat_vec_backward(w.w_z, xt, &da_z, &mut grads.w_z, &mut dxt);
        mat_vec_backward(w.u_z, h_prev, &da_z, &mut grads.u_z, &mut dh);
        mat_vec_backward(w.w_r, xt, &da_r, &mut grads.w_r, &mut dxt);
        mat_vec_backward(w.u_r, h_prev, &da_r, &mut grads.u_r, &mut dh);
        for i in 0..hidden {
            grads.b_z.data_mut()[i] += da_z[i];
            grads.b_r.data_mut()[i] += da_r[i];
        }

        dx.data_mut()[step * feat..(step + 1) * feat].copy_from_slice(&dxt);
        dh_next = dh;
    }
    (dx, grads)
}

// ============================================================================
// Fusion head
// ============================================================================

/// Project each sequence step with the parallel pointwise branch:
/// `p[t] = conv_w . seq[t]`, giving `[steps, hidden]`.
pub fn parallel_projection(seq: &Tensor, conv_w: &Tensor) -> Result<Tensor> {
    if seq.rank() != 2 || conv_w.rank() != 2 || conv_w.shape()[1] != seq.shape()[1] {
        return Err(Error::ShapeMismatch {
            op: "parallel_projection",
            detail: format!("seq {:?} vs weight {:?}", seq.shape(), conv_w.shape()),
        });
    }
    let (steps, feat) = (seq.shape()[0], seq.shape()[1]);
    let hidden = conv_w.shape()[0];
    let mut out = Tensor::zeros(&[steps, hidden])?;
    for t in 0..steps {
        let row = mat_vec(conv_w, &seq.data()[t * feat..(t + 1) * feat]);
        out.data_mut()[t * hidden..(t + 1) * hidden].copy_from_slice(&row);
    }
    Ok(out)
}

/// Gradients of [`parallel_projection`]: returns `(dseq, dconv_w)`.
pub fn parallel_projection_backward(seq: &Tensor, conv_w: &Tensor, grad: &Tensor) -> (Tensor, Tensor) {
    let (steps, feat) = (seq.shape()[0], seq.shape()[1]);
    let hidden = conv_w.shape()[0];
    let mut dseq = Tensor::zeros(seq.shape()).expect("shape");
    let mut dw = Tensor::zeros(conv_w.shape()).expect("shape");
    for t in 0..steps {
        let xt = &seq.data()[t * feat..(t + 1) * feat];
        let gt = &grad.data()[t * hidden..(t + 1) * hidden];
        let dxt = &mut dseq.data_mut()[t * feat..(t + 1) * feat];
        mat_vec_backward(conv_w, xt, gt, &mut dw, dxt);
    }
    (dseq, dw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t3(c: usize, f: usize, t: usize, fill: impl Fn(usize, usize, usize) -> f64) -> Tensor {
        let mut out = Tensor::zeros(&[c, f, t]).unwrap();
        for ci in 0..c {
            for fi in 0..f {
                for ti in 0..t {
                    out.set(&[ci, fi, ti], fill(ci, fi, ti));
                }
            }
        }
        out
    }

    #[test]
    fn conv2d_zero_weights_and_identity_kernel() {
        let x = t3(1, 4, 5, |_, f, t| (f * 5 + t) as f64);
        let wz = Tensor::zeros(&[2, 1, 3, 3]).unwrap();
        let bz = Tensor::zeros(&[2]).unwrap();
        let y = conv2d_same(&x, &wz, &bz).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));

        let mut delta = Tensor::zeros(&[2, 1, 3, 3]).unwrap();
        delta.set(&[0, 0, 1, 1], 1.0);
        delta.set(&[1, 0, 1, 1], 1.0);
        let y = conv2d_same(&x, &delta, &bz).unwrap();
        for o in 0..2 {
            for f in 0..4 {
                for t in 0..5 {
                    assert_eq!(y.get(&[o, f, t]), x.get(&[0, f, t]));
                }
            }
        }
    }

    #[test]
    fn conv2d_ones_tap_count() {
        let x = t3(1, 3, 3, |_, _, _| 1.0);
        let w = Tensor::full(&[1, 1, 3, 3], 1.0).unwrap();
        let b = Tensor::zeros(&[1]).unwrap();
        let y = conv2d_same(&x, &w, &b).unwrap();
        assert_eq!(y.get(&[0, 1, 1]), 9.0);
        assert_eq!(y.get(&[0, 0, 0]), 4.0);
        assert_eq!(y.get(&[0, 0, 2]), 4.0);
        assert_eq!(y.get(&[0, 2, 0]), 4.0);
        assert_eq!(y.get(&[0, 2, 2]), 4.0);
        assert_eq!(y.get(&[0, 0, 1]), 6.0);
    }

    #[test]
    fn pointwise_identity_and_sum() {
        let x = t3(2, 3, 2, |c, f, t| (c * 100 + f * 10 + t) as f64);
        let id = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = pointwise_conv(&x, &id, None).unwrap();
        assert_eq!(y, x);

        let sum = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        let y = pointwise_conv(&x, &sum, None).unwrap();
        for f in 0..3 {
            for t in 0..2 {
                assert_eq!(y.get(&[0, f, t]), x.get(&[0, f, t]) + x.get(&[1, f, t]));
            }
        }

        let zero_in = Tensor::zeros(&[2, 3, 2]).unwrap();
        let y = pointwise_conv(&zero_in, &sum, None).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn depthwise_time_hand_case() {
        let x = t3(1, 1, 3, |_, _, t| (t + 1) as f64); // [1,2,3]
        let w = Tensor::from_vec(&[1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        let y = depthwise_conv1d_time(&x, &w).unwrap();
        assert_eq!(y.data(), &[3.0, 6.0, 5.0]);

        let delta = Tensor::from_vec(&[1, 3], vec![0.0, 1.0, 0.0]).unwrap();
        let y = depthwise_conv1d_time(&x, &delta).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn depthwise_freq_stride_and_multiplier() {
        let x = t3(1, 4, 1, |_, f, _| (f + 1) as f64); // column [1,2,3,4]
        let w = Tensor::from_vec(&[1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        let y = depthwise_conv1d_freq(&x, &w, 1, 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 1]);
        assert_eq!(y.data(), &[3.0, 9.0]);

        // multiplier 2 with kernels (delta, 2*delta)
        let w2 = Tensor::from_vec(&[2, 3], vec![0.0, 1.0, 0.0, 0.0, 2.0, 0.0]).unwrap();
        let y = depthwise_conv1d_freq(&x, &w2, 2, 1).unwrap();
        assert_eq!(y.shape(), &[2, 4, 1]);
        for f in 0..4 {
            assert_eq!(y.get(&[0, f, 0]), x.get(&[0, f, 0]));
            assert_eq!(y.get(&[1, f, 0]), 2.0 * x.get(&[0, f, 0]));
        }
    }

    #[test]
    fn depthwise_rejects_even_kernel() {
        let x = t3(1, 4, 4, |_, _, _| 1.0);
        let w = Tensor::zeros(&[1, 2]).unwrap();
        assert!(depthwise_conv1d_time(&x, &w).is_err());
        assert!(depthwise_conv1d_freq(&x, &w, 1, 1).is_err());
    }

    #[test]
    fn channels_never_mix_in_depthwise() {
        let base = t3(3, 4, 4, |c, f, t| ((c * 17 + f * 3 + t) as f64 * 0.1).sin());
        let w = Tensor::from_vec(
            &[3, 3],
            vec![0.3, -0.2, 0.5, 1.0, 0.1, -0.4, 0.2, 0.9, 0.7],
        )
        .unwrap();
        let y0 = depthwise_conv1d_time(&base, &w).unwrap();
        let mut bumped = base.clone();
        bumped.set(&[1, 2, 2], 42.0);
        let y1 = depthwise_conv1d_time(&bumped, &w).unwrap();
        for c in [0usize, 2] {
            for f in 0..4 {
                for t in 0..4 {
                    assert_eq!(y0.get(&[c, f, t]), y1.get(&[c, f, t]));
                }
            }
        }
    }

    #[test]
    fn shuffle_permutation_and_inverse() {
        let x = t3(4, 1, 1, |c, _, _| c as f64); // channels 0,1,2,3
        let y = channel_shuffle(&x, 2).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0, 1.0, 3.0]);

        assert_eq!(channel_shuffle(&x, 1).unwrap(), x);
        assert_eq!(channel_shuffle(&x, 4).unwrap(), x);

        // inverse restores for all divisor groupings
        let x = t3(12, 2, 2, |c, f, t| (c * 31 + f * 7 + t) as f64);
        for g in [1, 2, 3, 4, 6, 12] {
            let y = channel_shuffle(&x, g).unwrap();
            let back = channel_shuffle(&y, 12 / g).unwrap();
            assert_eq!(back, x, "groups {g}");
        }
    }

    #[test]
    fn shuffle_rejects_non_divisor() {
        let x = t3(4, 1, 1, |_, _, _| 0.0);
        assert!(channel_shuffle(&x, 3).is_err());
    }

    #[test]
    fn se_neutral_gates_halve() {
        let x = t3(2, 3, 3, |c, f, t| (c + f + t) as f64);
        let w1 = Tensor::zeros(&[1, 2]).unwrap();
        let b1 = Tensor::zeros(&[1]).unwrap();
        let w2 = Tensor::zeros(&[2, 1]).unwrap();
        let b2 = Tensor::zeros(&[2]).unwrap();
        let (y, cache) = se_block(&x, &SeWeights { w1: &w1, b1: &b1, w2: &w2, b2: &b2 }).unwrap();
        assert!(cache.gate.iter().all(|&g| g == 0.5));
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn se_hand_evaluated_gates() {
        // channel means (1, -1); w1 = [[1, 1]], w2 = [[1], [-1]]
        let x = t3(2, 1, 1, |c, _, _| if c == 0 { 1.0 } else { -1.0 });
        let w1 = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        let b1 = Tensor::zeros(&[1]).unwrap();
        let w2 = Tensor::from_vec(&[2, 1], vec![1.0, -1.0]).unwrap();
        let b2 = Tensor::zeros(&[2]).unwrap();
        let (_, cache) = se_block(&x, &SeWeights { w1: &w1, b1: &b1, w2: &w2, b2: &b2 }).unwrap();
        assert_eq!(cache.gate, vec![0.5, 0.5]); // relu(1 - 1) = 0 on both paths
    }

    #[test]
    fn se_zero_input_stays_zero_and_gates_shrink() {
        let zero = Tensor::zeros(&[4, 2, 2]).unwrap();
        let w1 = Tensor::full(&[2, 4], 0.3).unwrap();
        let b1 = Tensor::full(&[2], 0.1).unwrap();
        let w2 = Tensor::full(&[4, 2], -0.2).unwrap();
        let b2 = Tensor::full(&[4], 0.4).unwrap();
        let se = SeWeights { w1: &w1, b1: &b1, w2: &w2, b2: &b2 };
        let (y, _) = se_block(&zero, &se).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));

        let x = t3(4, 2, 2, |c, f, t| ((c * 5 + f * 2 + t) as f64 * 0.7).sin());
        let (y, _) = se_block(&x, &se).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!(a.abs() <= b.abs());
        }
    }

    #[test]
    fn hybrid_pool_hand_windows() {
        let c = t3(1, 2, 2, |_, _, _| 3.0);
        let (y, _) = hybrid_pool(&c).unwrap();
        assert_eq!(y.data(), &[3.0]);

        let mut x = Tensor::zeros(&[1, 2, 2]).unwrap();
        x.set(&[0, 1, 1], 4.0);
        let (y, _) = hybrid_pool(&x).unwrap();
        assert_eq!(y.data(), &[2.5]); // 0.5 * (4 + 1)

        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = hybrid_pool(&x).unwrap();
        assert_eq!(y.data(), &[3.25]); // 0.5 * (4 + 2.5)
    }

    #[test]
    fn hybrid_pool_between_mean_and_max() {
        let x = t3(2, 6, 4, |c, f, t| ((c * 29 + f * 5 + t) as f64 * 0.37).sin());
        let (y, _) = hybrid_pool(&x).unwrap();
        for c in 0..2 {
            for f in 0..3 {
                for t in 0..2 {
                    let mut vals = Vec::new();
                    for df in 0..2 {
                        for dt in 0..2 {
                            vals.push(x.get(&[c, 2 * f + df, 2 * t + dt]));
                        }
                    }
                    let mx = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mean = vals.iter().sum::<f64>() / 4.0;
                    let v = y.get(&[c, f, t]);
                    assert!(v >= mean - 1e-12 && v <= mx + 1e-12);
                }
            }
        }
    }

    #[test]
    fn hybrid_pool_rejects_tiny_extents() {
        let x = t3(1, 1, 4, |_, _, _| 0.0);
        assert!(hybrid_pool(&x).is_err());
    }

    #[test]
    fn gru_zero_weights_fixed_point() {
        let x = Tensor::from_vec(&[3, 2], vec![1.0, -0.5, 0.2, 0.7, -1.0, 0.3]).unwrap();
        let z = Tensor::zeros(&[4, 2]).unwrap();
        let u = Tensor::zeros(&[4, 4]).unwrap();
        let b = Tensor::zeros(&[4]).unwrap();
        let w = GruWeights {
            w_z: &z, u_z: &u, b_z: &b,
            w_r: &z, u_r: &u, b_r: &b,
            w_h: &z, u_h: &u, b_h: &b,
        };
        let (y, _) = gru_over_frequency(&x, &w).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gru_scalar_oracle() {
        // H = 1, F = 1, all weights 1, biases 0, x = 1:
        // z = r = sigmoid(1), c = tanh(1), h = z * c
        let x = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let one = Tensor::full(&[1, 1], 1.0).unwrap();
        let b = Tensor::zeros(&[1]).unwrap();
        let w = GruWeights {
            w_z: &one, u_z: &one, b_z: &b,
            w_r: &one, u_r: &one, b_r: &b,
            w_h: &one, u_h: &one, b_h: &b,
        };
        let (y, _) = gru_over_frequency(&x, &w).unwrap();
        let z = 1.0 / (1.0 + (-1.0f64).exp());
        let want = z * 1.0f64.tanh();
        assert!((y.data()[0] - want).abs() < 1e-15);
        assert!((y.data()[0] - 0.5568).abs() < 1e-4);
    }

    #[test]
    fn gru_state_is_convex_combination() {
        let mut rng = crate::rng::RngStream::new(17);
        let steps = 6;
        let feat = 3;
        let hidden = 4;
        let rand_t = |rng: &mut crate::rng::RngStream, shape: &[usize]| {
            let len: usize = shape.iter().product();
            Tensor::from_vec(shape, (0..len).map(|_| rng.normal()).collect()).unwrap()
        };
        let x = rand_t(&mut rng, &[steps, feat]);
        let w_z = rand_t(&mut rng, &[hidden, feat]);
        let u_z = rand_t(&mut rng, &[hidden, hidden]);
        let b_z = rand_t(&mut rng, &[hidden]);
        let w_r = rand_t(&mut rng, &[hidden, feat]);
        let u_r = rand_t(&mut rng, &[hidden, hidden]);
        let b_r = rand_t(&mut rng, &[hidden]);
        let w_h = rand_t(&mut rng, &[hidden, feat]);
        let u_h = rand_t(&mut rng, &[hidden, hidden]);
        let b_h = rand_t(&mut rng, &[hidden]);
        let w = GruWeights {
            w_z: &w_z, u_z: &u_z, b_z: &b_z,
            w_r: &w_r, u_r: &u_r, b_r: &b_r,
            w_h: &w_h, u_h: &u_h, b_h: &b_h,
        };
        let (_, cache) = gru_over_frequency(&x, &w).unwrap();
        for step in 0..steps {
            let prev = if step == 0 {
                vec![0.0; hidden]
            } else {
                cache.hidden[step - 1].clone()
            };
            for i in 0..hidden {
                let (lo, hi) = (
                    prev[i].min(cache.candidate[step][i]),
                    prev[i].max(cache.candidate[step][i]),
                );
                let h = cache.hidden[step][i];
                assert!(h >= lo - 1e-12 && h <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn parallel_projection_matches_mat_vec() {
        let seq = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
        let w = Tensor::from_vec(&[2, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        let p = parallel_projection(&seq, &w).unwrap();
        assert_eq!(p.data(), &[1.0, 5.0, -1.0, 1.0]);
    }
}
