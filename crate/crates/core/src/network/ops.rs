//! Dense layer primitives: convolutions, batch norm (inference mode),
//! activations, pooling, and channel concatenation. All operate on
//! channel-last [`FeatureTensor`]s with plain sequential f32 arithmetic, so
//! results are bit-stable.

use super::tensor::FeatureTensor;
use super::weights::Tensor;
use super::NetworkError;

pub const BN_EPSILON: f32 = 1e-5;

fn kernel_dims(kernel: &Tensor, path: &str) -> Result<(usize, usize, usize, usize), NetworkError> {
    match kernel.dims[..] {
        [kh, kw, cin, cout] => Ok((kh, kw, cin, cout)),
        _ => Err(NetworkError::ShapeMismatch {
            path: path.to_string(),
            expected: vec![0, 0, 0, 0],
            actual: kernel.dims.clone(),
        }),
    }
}

/// 2D convolution with zero padding `(kh-1)/2` so spatial size is preserved
/// for odd kernels.
pub fn conv2d(
    input: &FeatureTensor,
    kernel: &Tensor,
    bias: &Tensor,
    path: &str,
) -> Result<FeatureTensor, NetworkError> {
    let (kh, kw, cin, cout) = kernel_dims(kernel, path)?;
    if cin != input.channels {
        return Err(NetworkError::ShapeMismatch {
            path: path.to_string(),
            expected: vec![kh, kw, input.channels, cout],
            actual: kernel.dims.clone(),
        });
    }
    if bias.data.len() != cout {
        return Err(NetworkError::ShapeMismatch {
            path: format!("{path} (bias)"),
            expected: vec![cout],
            actual: bias.dims.clone(),
        });
    }
    let (h, w) = (input.height, input.width);
    let pad_y = (kh - 1) / 2;
    let pad_x = (kw - 1) / 2;
    let mut out = FeatureTensor::zeros(h, w, cout);
    for y in 0..h {
        for x in 0..w {
            let out_base = (y * w + x) * cout;
            for o in 0..cout {
                out.data[out_base + o] = bias.data[o];
            }
            for ky in 0..kh {
                let sy = y as isize + ky as isize - pad_y as isize;
                if sy < 0 || sy as usize >= h {
                    continue;
                }
                for kx in 0..kw {
                    let sx = x as isize + kx as isize - pad_x as isize;
                    if sx < 0 || sx as usize >= w {
                        continue;
                    }
                    let in_base = (sy as usize * w + sx as usize) * cin;
                    let k_base = (ky * kw + kx) * cin * cout;
                    for i in 0..cin {
                        let v = input.data[in_base + i];
                        let k_row = k_base + i * cout;
                        for o in 0..cout {
                            out.data[out_base + o] += v * kernel.data[k_row + o];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// 2x2 stride-2 transposed convolution; doubles the spatial size.
pub fn transposed_conv2(
    input: &FeatureTensor,
    kernel: &Tensor,
    bias: &Tensor,
    path: &str,
) -> Result<FeatureTensor, NetworkError> {
    let (kh, kw, cin, cout) = kernel_dims(kernel, path)?;
    if kh != 2 || kw != 2 || cin != input.channels {
        return Err(NetworkError::ShapeMismatch {
            path: path.to_string(),
            expected: vec![2, 2, input.channels, cout],
            actual: kernel.dims.clone(),
        });
    }
    if bias.data.len() != cout {
        return Err(NetworkError::ShapeMismatch {
            path: format!("{path} (bias)"),
            expected: vec![cout],
            actual: bias.dims.clone(),
        });
    }
    let (h, w) = (input.height, input.width);
    let mut out = FeatureTensor::zeros(h * 2, w * 2, cout);
    for y in 0..h {
        for x in 0..w {
            let in_base = (y * w + x) * cin;
            for ky in 0..2 {
                for kx in 0..2 {
                    let out_base = ((y * 2 + ky) * w * 2 + (x * 2 + kx)) * cout;
                    let k_base = (ky * 2 + kx) * cin * cout;
                    for o in 0..cout {
                        let mut acc = bias.data[o];
                        for i in 0..cin {
                            acc += input.data[in_base + i] * kernel.data[k_base + i * cout + o];
                        }
                        out.data[out_base + o] = acc;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inference-mode batch norm from stored statistics.
pub fn batch_norm(
    input: &FeatureTensor,
    scale: &Tensor,
    shift: &Tensor,
    mean: &Tensor,
    variance: &Tensor,
    path: &str,
) -> Result<FeatureTensor, NetworkError> {
    let c = input.channels;
    for (t, name) in [(scale, "scale"), (shift, "shift"), (mean, "mean"), (variance, "var")] {
        if t.data.len() != c {
            return Err(NetworkError::ShapeMismatch {
                path: format!("{path}/{name}"),
                expected: vec![c],
                actual: t.dims.clone(),
            });
        }
    }
    let inv_std: Vec<f32> = variance
        .data
        .iter()
        .map(|&v| 1.0 / (v + BN_EPSILON).sqrt())
        .collect();
    let mut out = input.clone();
    for px in out.data.chunks_exact_mut(c) {
        for (ch, v) in px.iter_mut().enumerate() {
            *v = scale.data[ch] * (*v - mean.data[ch]) * inv_std[ch] + shift.data[ch];
        }
    }
    Ok(out)
}

pub fn relu(mut t: FeatureTensor) -> FeatureTensor {
    for v in &mut t.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    t
}

pub fn sigmoid(mut t: FeatureTensor) -> FeatureTensor {
    for v in &mut t.data {
        *v = 1.0 / (1.0 + (-*v).exp());
    }
    t
}

/// Channel-wise softmax per pixel.
pub fn softmax_channels(mut t: FeatureTensor) -> FeatureTensor {
    let c = t.channels;
    for px in t.data.chunks_exact_mut(c) {
        let max = px.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for v in px.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in px.iter_mut() {
            *v /= sum;
        }
    }
    t
}

/// 2x2 max pooling, stride 2. Requires even spatial dims.
pub fn max_pool2(input: &FeatureTensor) -> FeatureTensor {
    let (h, w, c) = (input.height / 2, input.width / 2, input.channels);
    let mut out = FeatureTensor::zeros(h, w, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let a = input.get(2 * y, 2 * x, ch);
                let b = input.get(2 * y, 2 * x + 1, ch);
                let d = input.get(2 * y + 1, 2 * x, ch);
                let e = input.get(2 * y + 1, 2 * x + 1, ch);
                out.set(y, x, ch, a.max(b).max(d).max(e));
            }
        }
    }
    out
}

/// Global spatial average pooling: one descriptor per channel (1 x 1 x C).
pub fn global_avg_pool(input: &FeatureTensor) -> FeatureTensor {
    let c = input.channels;
    let n = (input.height * input.width) as f32;
    let mut out = FeatureTensor::zeros(1, 1, c);
    for px in input.data.chunks_exact(c) {
        for (ch, &v) in px.iter().enumerate() {
            out.data[ch] += v;
        }
    }
    for v in &mut out.data {
        *v /= n;
    }
    out
}

/// Global spatial max pooling: one descriptor per channel (1 x 1 x C).
pub fn global_max_pool(input: &FeatureTensor) -> FeatureTensor {
    let c = input.channels;
    let mut out = FeatureTensor {
        height: 1,
        width: 1,
        channels: c,
        data: vec![f32::NEG_INFINITY; c],
    };
    for px in input.data.chunks_exact(c) {
        for (ch, &v) in px.iter().enumerate() {
            if v > out.data[ch] {
                out.data[ch] = v;
            }
        }
    }
    out
}

/// Per-pixel channel statistics: a 2-channel map of [mean, max] over the
/// channel axis.
pub fn channel_pool(input: &FeatureTensor) -> FeatureTensor {
    let c = input.channels as f32;
    let mut out = FeatureTensor::zeros(input.height, input.width, 2);
    for (px, chans) in input.data.chunks_exact(input.channels).enumerate() {
        let mut sum = 0.0f32;
        let mut max = f32::NEG_INFINITY;
        for &v in chans {
            sum += v;
            if v > max {
                max = v;
            }
        }
        out.data[px * 2] = sum / c;
        out.data[px * 2 + 1] = max;
    }
    out
}

/// Channel concatenation of two equal-size tensors.
pub fn concat_channels(a: &FeatureTensor, b: &FeatureTensor) -> FeatureTensor {
    assert_eq!((a.height, a.width), (b.height, b.width));
    let c = a.channels + b.channels;
    let mut out = FeatureTensor::zeros(a.height, a.width, c);
    for px in 0..a.height * a.width {
        let dst = px * c;
        out.data[dst..dst + a.channels]
            .copy_from_slice(&a.data[px * a.channels..(px + 1) * a.channels]);
        out.data[dst + a.channels..dst + c]
            .copy_from_slice(&b.data[px * b.channels..(px + 1) * b.channels]);
    }
    out
}

/// Elementwise product with broadcasting: `gate` may be 1 x 1 x C (channel
/// gate) or H x W x 1 (spatial gate) or the full shape.
pub fn broadcast_mul(input: &FeatureTensor, gate: &FeatureTensor) -> Result<FeatureTensor, NetworkError> {
    let mut out = input.clone();
    if gate.height == 1 && gate.width == 1 && gate.channels == input.channels {
        for px in out.data.chunks_exact_mut(input.channels) {
            for (ch, v) in px.iter_mut().enumerate() {
                *v *= gate.data[ch];
            }
        }
    } else if gate.height == input.height && gate.width == input.width && gate.channels == 1 {
        for (px, chans) in out.data.chunks_exact_mut(input.channels).enumerate() {
            let g = gate.data[px];
            for v in chans {
                *v *= g;
            }
        }
    } else if gate.height == input.height
        && gate.width == input.width
        && gate.channels == input.channels
    {
        for (v, &g) in out.data.iter_mut().zip(&gate.data) {
            *v *= g;
        }
    } else {
        return Err(NetworkError::Broadcast {
            input: (input.height, input.width, input.channels),
            gate: (gate.height, gate.width, gate.channels),
        });
    }
    Ok(out)
}
