//! Independent straight-line re-evaluation of the forward pass on a tiny
//! configuration (4x4 input, 8 filters, one stage).
//!
//! Everything here is written as plain nested-Vec f64 arithmetic with its
//! own layout and loop structure, deliberately sharing no code with the
//! library's flat-buffer f32 implementation.
// index-style loops are the point of a straight-line reference
#![allow(clippy::needless_range_loop)]

use nucleopipe::maps::RGBImage;
use nucleopipe::network::{forward, init_weights, NetworkConfig, WeightBundle};

/// `grid[y][x][c]`
type Grid = Vec<Vec<Vec<f64>>>;
/// `kernel[ky][kx][ci][co]`
type Kernel4 = Vec<Vec<Vec<Vec<f64>>>>;

fn vec1(bundle: &WeightBundle, path: &str) -> Vec<f64> {
    bundle
        .get(path)
        .unwrap_or_else(|| panic!("missing {path}"))
        .data
        .iter()
        .map(|&v| f64::from(v))
        .collect()
}

fn kernel4(bundle: &WeightBundle, path: &str) -> Kernel4 {
    let t = bundle
        .get(path)
        .unwrap_or_else(|| panic!("missing {path}"));
    let [kh, kw, ci, co] = t.dims[..] else {
        panic!("{path} is not a rank-4 kernel");
    };
    let mut out = vec![vec![vec![vec![0.0; co]; ci]; kw]; kh];
    let mut i = 0;
    for ky in 0..kh {
        for kx in 0..kw {
            for c in 0..ci {
                for o in 0..co {
                    out[ky][kx][c][o] = f64::from(t.data[i]);
                    i += 1;
                }
            }
        }
    }
    out
}

fn grid_shape(g: &Grid) -> (usize, usize, usize) {
    (g.len(), g[0].len(), g[0][0].len())
}

fn conv(input: &Grid, kernel: &Kernel4, bias: &[f64]) -> Grid {
    let (h, w, ci) = grid_shape(input);
    let (kh, kw) = (kernel.len(), kernel[0].len());
    let co = bias.len();
    let (pad_y, pad_x) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut out = vec![vec![vec![0.0; co]; w]; h];
    for y in 0..h {
        for x in 0..w {
            for o in 0..co {
                let mut acc = bias[o];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let sy = y as isize + ky as isize - pad_y as isize;
                        let sx = x as isize + kx as isize - pad_x as isize;
                        if sy < 0 || sx < 0 || sy as usize >= h || sx as usize >= w {
                            continue;
                        }
                        for c in 0..ci {
                            acc += input[sy as usize][sx as usize][c] * kernel[ky][kx][c][o];
                        }
                    }
                }
                out[y][x][o] = acc;
            }
        }
    }
    out
}

fn transposed_conv(input: &Grid, kernel: &Kernel4, bias: &[f64]) -> Grid {
    let (h, w, ci) = grid_shape(input);
    let co = bias.len();
    let mut out = vec![vec![vec![0.0; co]; w * 2]; h * 2];
    for y in 0..h {
        for x in 0..w {
            for ky in 0..2 {
                for kx in 0..2 {
                    for o in 0..co {
                        let mut acc = bias[o];
                        for c in 0..ci {
                            acc += input[y][x][c] * kernel[ky][kx][c][o];
                        }
                        out[y * 2 + ky][x * 2 + kx][o] = acc;
                    }
                }
            }
        }
    }
    out
}

fn batch_norm(input: &Grid, scale: &[f64], shift: &[f64], mean: &[f64], var: &[f64]) -> Grid {
    let eps = 1e-5f64;
    map_values_channelwise(input, |c, v| {
        scale[c] * (v - mean[c]) / (var[c] + eps).sqrt() + shift[c]
    })
}

fn map_values_channelwise(input: &Grid, f: impl Fn(usize, f64) -> f64) -> Grid {
    input
        .iter()
        .map(|row| {
            row.iter()
                .map(|px| px.iter().enumerate().map(|(c, &v)| f(c, v)).collect())
                .collect()
        })
        .collect()
}

fn relu(input: &Grid) -> Grid {
    map_values_channelwise(input, |_, v| v.max(0.0))
}

fn sigmoid(input: &Grid) -> Grid {
    map_values_channelwise(input, |_, v| 1.0 / (1.0 + (-v).exp()))
}

fn softmax(input: &Grid) -> Grid {
    input
        .iter()
        .map(|row| {
            row.iter()
                .map(|px| {
                    let max = px.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = px.iter().map(|&v| (v - max).exp()).collect();
                    let sum: f64 = exps.iter().sum();
                    exps.iter().map(|&e| e / sum).collect()
                })
                .collect()
        })
        .collect()
}

fn concat(a: &Grid, b: &Grid) -> Grid {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| {
            ra.iter()
                .zip(rb)
                .map(|(pa, pb)| pa.iter().chain(pb).copied().collect())
                .collect()
        })
        .collect()
}

fn max_pool2(input: &Grid) -> Grid {
    let (h, w, c) = grid_shape(input);
    let mut out = vec![vec![vec![f64::NEG_INFINITY; c]; w / 2]; h / 2];
    for y in 0..h / 2 {
        for x in 0..w / 2 {
            for ch in 0..c {
                for dy in 0..2 {
                    for dx in 0..2 {
                        let v = input[y * 2 + dy][x * 2 + dx][ch];
                        if v > out[y][x][ch] {
                            out[y][x][ch] = v;
                        }
                    }
                }
            }
        }
    }
    out
}

fn descriptor(input: &Grid, use_max: bool) -> Vec<f64> {
    let (h, w, c) = grid_shape(input);
    (0..c)
        .map(|ch| {
            let mut acc = if use_max { f64::NEG_INFINITY } else { 0.0 };
            for row in input {
                for px in row {
                    if use_max {
                        acc = acc.max(px[ch]);
                    } else {
                        acc += px[ch];
                    }
                }
            }
            if use_max {
                acc
            } else {
                acc / (h * w) as f64
            }
        })
        .collect()
}

/// 1x1 convolution applied to a flat channel descriptor.
fn dense(desc: &[f64], kernel: &Kernel4, bias: &[f64]) -> Vec<f64> {
    let co = bias.len();
    (0..co)
        .map(|o| {
            let mut acc = bias[o];
            for (c, &v) in desc.iter().enumerate() {
                acc += v * kernel[0][0][c][o];
            }
            acc
        })
        .collect()
}

fn relu_vec(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

fn resnet(input: &Grid, bundle: &WeightBundle, prefix: &str) -> Grid {
    let t0 = relu(&conv(
        input,
        &kernel4(bundle, &format!("{prefix}/conv1/kernel")),
        &vec1(bundle, &format!("{prefix}/conv1/bias")),
    ));
    let t1 = batch_norm(
        &relu(&conv(
            &t0,
            &kernel4(bundle, &format!("{prefix}/conv2/kernel")),
            &vec1(bundle, &format!("{prefix}/conv2/bias")),
        )),
        &vec1(bundle, &format!("{prefix}/bn1/scale")),
        &vec1(bundle, &format!("{prefix}/bn1/shift")),
        &vec1(bundle, &format!("{prefix}/bn1/mean")),
        &vec1(bundle, &format!("{prefix}/bn1/var")),
    );
    batch_norm(
        &relu(&conv(
            &concat(&t0, &t1),
            &kernel4(bundle, &format!("{prefix}/conv3/kernel")),
            &vec1(bundle, &format!("{prefix}/conv3/bias")),
        )),
        &vec1(bundle, &format!("{prefix}/bn2/scale")),
        &vec1(bundle, &format!("{prefix}/bn2/shift")),
        &vec1(bundle, &format!("{prefix}/bn2/mean")),
        &vec1(bundle, &format!("{prefix}/bn2/var")),
    )
}

fn attention_gates(
    f_enc: &Grid,
    f_dec: &Grid,
    bundle: &WeightBundle,
    prefix: &str,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    // channel gate
    let branch = |g: &Grid, pool_max: bool, name: &str| -> Vec<f64> {
        relu_vec(dense(
            &descriptor(g, pool_max),
            &kernel4(bundle, &format!("{prefix}/cha/{name}/kernel")),
            &vec1(bundle, &format!("{prefix}/cha/{name}/bias")),
        ))
    };
    let mut stacked = branch(f_enc, false, "enc_avg");
    stacked.extend(branch(f_enc, true, "enc_max"));
    stacked.extend(branch(f_dec, false, "dec_avg"));
    stacked.extend(branch(f_dec, true, "dec_max"));
    let fused = relu_vec(dense(
        &stacked,
        &kernel4(bundle, &format!("{prefix}/cha/fuse/kernel")),
        &vec1(bundle, &format!("{prefix}/cha/fuse/bias")),
    ));
    let cha: Vec<f64> = dense(
        &fused,
        &kernel4(bundle, &format!("{prefix}/cha/proj/kernel")),
        &vec1(bundle, &format!("{prefix}/cha/proj/bias")),
    )
    .into_iter()
    .map(|z| 1.0 / (1.0 + (-z).exp()))
    .collect();

    // spatial gate
    let (h, w, c) = grid_shape(f_enc);
    let pixel_stats = |g: &Grid, y: usize, x: usize| -> (f64, f64) {
        let px = &g[y][x];
        let mean = px.iter().sum::<f64>() / px.len() as f64;
        let max = px.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (mean, max)
    };
    let k_k = kernel4(bundle, &format!("{prefix}/spa/enc/kernel"));
    let k_b = vec1(bundle, &format!("{prefix}/spa/enc/bias"));
    let l_k = kernel4(bundle, &format!("{prefix}/spa/dec/kernel"));
    let l_b = vec1(bundle, &format!("{prefix}/spa/dec/bias"));
    let f_k = kernel4(bundle, &format!("{prefix}/spa/fuse/kernel"));
    let f_b = vec1(bundle, &format!("{prefix}/spa/fuse/bias"));
    let mut spa = vec![vec![0.0f64; w]; h];
    for y in 0..h {
        for x in 0..w {
            let (e_mean, e_max) = pixel_stats(f_enc, y, x);
            let (d_mean, d_max) = pixel_stats(f_dec, y, x);
            let k = (e_mean * k_k[0][0][0][0] + e_max * k_k[0][0][1][0] + k_b[0]).max(0.0);
            let l = (d_mean * l_k[0][0][0][0] + d_max * l_k[0][0][1][0] + l_b[0]).max(0.0);
            let z = k * f_k[0][0][0][0] + l * f_k[0][0][1][0] + f_b[0];
            spa[y][x] = 1.0 / (1.0 + (-z).exp());
        }
    }
    let _ = c;
    (cha, spa)
}

fn head(
    name: &str,
    bottleneck_in: &Grid,
    bottleneck_out: &Grid,
    bundle: &WeightBundle,
) -> Grid {
    // one decoder stage: f_enc is the pooled encoder output
    let prefix = format!("head/{name}/dec/0");
    let (cha, spa) = attention_gates(bottleneck_in, bottleneck_out, bundle, &format!("{prefix}/att"));
    let (h, w, c) = grid_shape(bottleneck_in);
    let mut refined = vec![vec![vec![0.0; c]; w]; h];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                refined[y][x][ch] = bottleneck_in[y][x][ch] * cha[ch] * spa[y][x];
            }
        }
    }
    let gated = concat(&refined, bottleneck_out);
    let up = transposed_conv(
        &gated,
        &kernel4(bundle, &format!("{prefix}/up/kernel")),
        &vec1(bundle, &format!("{prefix}/up/bias")),
    );
    conv(
        &up,
        &kernel4(bundle, &format!("head/{name}/out/kernel")),
        &vec1(bundle, &format!("head/{name}/out/bias")),
    )
}

/// Runs the library forward pass and the reference side by side; panics on
/// any output disagreeing beyond 1e-5.
pub fn check_against_reference() {
    let cfg = NetworkConfig {
        base_filters: 8,
        stages: 1,
        class_channels: 6,
        input_height: 4,
        input_width: 4,
    };
    let bundle = init_weights(&cfg, 5).unwrap();
    let image = RGBImage::new(
        4,
        4,
        (0..48).map(|i| (i * 5 + 13) as u8).collect(),
    )
    .unwrap();

    let (sem, edge, cls) = forward(&image, &bundle, &cfg).unwrap();

    // reference path
    let input: Grid = (0..4)
        .map(|y| {
            (0..4)
                .map(|x| {
                    let px = image.pixel(y, x);
                    px.iter().map(|&b| f64::from(b) / 255.0).collect()
                })
                .collect()
        })
        .collect();
    let enc0 = resnet(&input, &bundle, "enc/0/res");
    let pooled = max_pool2(&enc0);
    let bott = resnet(&pooled, &bundle, "bottleneck/res");

    let expect_sem = sigmoid(&head("semantic", &pooled, &bott, &bundle));
    let expect_edge = sigmoid(&head("edge", &pooled, &bott, &bundle));
    let expect_cls = softmax(&head("class", &pooled, &bott, &bundle));

    for y in 0..4 {
        for x in 0..4 {
            let a = f64::from(sem.get(y, x));
            assert!(
                (a - expect_sem[y][x][0]).abs() < 1e-5,
                "semantic ({y},{x}): {a} vs {}",
                expect_sem[y][x][0]
            );
            let a = f64::from(edge.get(y, x));
            assert!(
                (a - expect_edge[y][x][0]).abs() < 1e-5,
                "edge ({y},{x}): {a} vs {}",
                expect_edge[y][x][0]
            );
            for c in 0..6 {
                let a = f64::from(cls.pixel(y, x)[c]);
                assert!(
                    (a - expect_cls[y][x][c]).abs() < 1e-5,
                    "class ({y},{x},{c}): {a} vs {}",
                    expect_cls[y][x][c]
                );
            }
        }
    }
}
