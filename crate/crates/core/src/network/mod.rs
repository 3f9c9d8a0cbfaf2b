//! Deterministic forward pass of the three-head attention encoder-decoder.
//!
//! The encoder stacks ResNet blocks with 2x2 max pooling, doubling filters
//! each stage; a bottleneck ResNet block sits underneath. Three independent
//! decoder heads (semantic, edge, class) each stack attention decoder blocks
//! followed by 2x2 stride-2 transposed convolutions, halving filters each
//! stage. The first attention block consumes the bottleneck output as its
//! decoder features; later blocks consume the previous stage's upsampling
//! result. Semantic and edge heads end in a 1-channel 1x1 convolution and
//! sigmoid, the class head in a C-channel 1x1 convolution and softmax.
//!
//! # Layer path grammar
//!
//! ```text
//! enc/{stage}/res/{conv1|conv2|conv3}/{kernel|bias}
//! enc/{stage}/res/{bn1|bn2}/{scale|shift|mean|var}
//! bottleneck/res/...                  same shape as an encoder block
//! head/{semantic|edge|class}/dec/{stage}/att/cha/{enc_avg|enc_max|dec_avg|dec_max|fuse|proj}/{kernel|bias}
//! head/{semantic|edge|class}/dec/{stage}/att/spa/{enc|dec|fuse}/{kernel|bias}
//! head/{semantic|edge|class}/dec/{stage}/up/{kernel|bias}
//! head/{semantic|edge|class}/out/{kernel|bias}
//! ```
//!
//! Convolution kernels are `[kh, kw, c_in, c_out]`, channel-last like the
//! activations.

pub mod blocks;
pub mod ops;
pub mod tensor;
pub mod weights;

use crate::maps::{ClassProbMap, MapError, ProbMap, RGBImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use blocks::{attention_decoder, attention_fuse, channel_attention, resnet_block, spatial_attention};
pub use tensor::FeatureTensor;
pub use weights::{Tensor, WeightBundle};

pub const HEAD_NAMES: [&str; 3] = ["semantic", "edge", "class"];

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("weight bundle is missing layer {path}")]
    MissingLayer { path: String },
    #[error("layer {path} has shape {actual:?}, expected {expected:?}")]
    ShapeMismatch {
        path: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("weight bundle has unexpected layer {path}")]
    UnexpectedLayer { path: String },
    #[error("cannot broadcast gate {gate:?} over activations {input:?}")]
    Broadcast {
        input: (usize, usize, usize),
        gate: (usize, usize, usize),
    },
    #[error("input is {actual_h}x{actual_w}, config expects {expected_h}x{expected_w}")]
    InputShape {
        expected_h: usize,
        expected_w: usize,
        actual_h: usize,
        actual_w: usize,
    },
    #[error("non-finite activation after {context}")]
    NonFinite { context: String },
    #[error("invalid network config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    /// Filters at the first encoder stage; doubled per stage down.
    pub base_filters: usize,
    /// Encoder downsamplings (and decoder upsamplings per head).
    pub stages: usize,
    /// Class head channels, background included.
    pub class_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            base_filters: 16,
            stages: 4,
            class_channels: 6,
            input_height: 256,
            input_width: 256,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.base_filters == 0 || !self.base_filters.is_multiple_of(8) {
            return Err(NetworkError::BadConfig(format!(
                "base_filters {} must be a positive multiple of 8",
                self.base_filters
            )));
        }
        if self.stages == 0 || self.stages > 8 {
            return Err(NetworkError::BadConfig(format!(
                "stages {} out of range",
                self.stages
            )));
        }
        if !(2..=crate::maps::NUM_CLASSES).contains(&self.class_channels) {
            return Err(NetworkError::BadConfig(format!(
                "class head channels {} outside 2..={}",
                self.class_channels,
                crate::maps::NUM_CLASSES
            )));
        }
        let div = 1usize << self.stages;
        if self.input_height == 0
            || self.input_width == 0
            || !self.input_height.is_multiple_of(div)
            || !self.input_width.is_multiple_of(div)
        {
            return Err(NetworkError::BadConfig(format!(
                "input {}x{} must be divisible by 2^stages = {div}",
                self.input_height, self.input_width
            )));
        }
        Ok(())
    }

    /// Encoder skip channels seen by decoder stage `j`.
    fn enc_channels(&self, j: usize) -> usize {
        if j == 0 {
            self.base_filters << (self.stages - 1)
        } else {
            self.base_filters << (self.stages - j)
        }
    }

    /// Decoder feature channels entering stage `j`.
    fn dec_channels(&self, j: usize) -> usize {
        if j == 0 {
            self.base_filters << self.stages
        } else {
            self.up_filters(j - 1)
        }
    }

    /// Transposed-convolution output filters of stage `j` (halving per stage).
    fn up_filters(&self, j: usize) -> usize {
        self.base_filters << (self.stages - 1 - j)
    }
}

/// One required tensor: canonical path and shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub path: String,
    pub dims: Vec<usize>,
}

fn push_resnet(out: &mut Vec<LayerSpec>, prefix: &str, c_in: usize, filters: usize) {
    let spec = |path: String, dims: Vec<usize>| LayerSpec { path, dims };
    out.push(spec(format!("{prefix}/conv1/kernel"), vec![1, 1, c_in, filters]));
    out.push(spec(format!("{prefix}/conv1/bias"), vec![filters]));
    out.push(spec(format!("{prefix}/conv2/kernel"), vec![3, 3, filters, filters]));
    out.push(spec(format!("{prefix}/conv2/bias"), vec![filters]));
    for field in ["scale", "shift", "mean", "var"] {
        out.push(spec(format!("{prefix}/bn1/{field}"), vec![filters]));
    }
    out.push(spec(
        format!("{prefix}/conv3/kernel"),
        vec![3, 3, 2 * filters, filters],
    ));
    out.push(spec(format!("{prefix}/conv3/bias"), vec![filters]));
    for field in ["scale", "shift", "mean", "var"] {
        out.push(spec(format!("{prefix}/bn2/{field}"), vec![filters]));
    }
}

fn push_attention(out: &mut Vec<LayerSpec>, prefix: &str, c_enc: usize, c_dec: usize) {
    let spec = |path: String, dims: Vec<usize>| LayerSpec { path, dims };
    let reduced = (c_enc / 8).max(1);
    for (name, c_in) in [
        ("enc_avg", c_enc),
        ("enc_max", c_enc),
        ("dec_avg", c_dec),
        ("dec_max", c_dec),
    ] {
        out.push(spec(
            format!("{prefix}/cha/{name}/kernel"),
            vec![1, 1, c_in, reduced],
        ));
        out.push(spec(format!("{prefix}/cha/{name}/bias"), vec![reduced]));
    }
    out.push(spec(
        format!("{prefix}/cha/fuse/kernel"),
        vec![1, 1, 4 * reduced, reduced],
    ));
    out.push(spec(format!("{prefix}/cha/fuse/bias"), vec![reduced]));
    out.push(spec(
        format!("{prefix}/cha/proj/kernel"),
        vec![1, 1, reduced, c_enc],
    ));
    out.push(spec(format!("{prefix}/cha/proj/bias"), vec![c_enc]));
    for name in ["enc", "dec", "fuse"] {
        out.push(spec(format!("{prefix}/spa/{name}/kernel"), vec![1, 1, 2, 1]));
        out.push(spec(format!("{prefix}/spa/{name}/bias"), vec![1]));
    }
}

/// The complete tensor inventory for a config, in canonical order. This
/// order defines which missing layer a validation error reports first.
pub fn required_layers(cfg: &NetworkConfig) -> Vec<LayerSpec> {
    let mut out = Vec::new();
    let f = cfg.base_filters;
    for i in 0..cfg.stages {
        let c_in = if i == 0 { 3 } else { f << (i - 1) };
        push_resnet(&mut out, &format!("enc/{i}/res"), c_in, f << i);
    }
    push_resnet(
        &mut out,
        "bottleneck/res",
        f << (cfg.stages - 1),
        f << cfg.stages,
    );
    for head in HEAD_NAMES {
        for j in 0..cfg.stages {
            let c_enc = cfg.enc_channels(j);
            let c_dec = cfg.dec_channels(j);
            push_attention(
                &mut out,
                &format!("head/{head}/dec/{j}/att"),
                c_enc,
                c_dec,
            );
            out.push(LayerSpec {
                path: format!("head/{head}/dec/{j}/up/kernel"),
                dims: vec![2, 2, c_enc + c_dec, cfg.up_filters(j)],
            });
            out.push(LayerSpec {
                path: format!("head/{head}/dec/{j}/up/bias"),
                dims: vec![cfg.up_filters(j)],
            });
        }
        let out_channels = if head == "class" { cfg.class_channels } else { 1 };
        out.push(LayerSpec {
            path: format!("head/{head}/out/kernel"),
            dims: vec![1, 1, f, out_channels],
        });
        out.push(LayerSpec {
            path: format!("head/{head}/out/bias"),
            dims: vec![out_channels],
        });
    }
    out
}

/// Total learnable parameter count for a config.
pub fn param_count(cfg: &NetworkConfig) -> u64 {
    required_layers(cfg)
        .iter()
        .map(|l| l.dims.iter().product::<usize>() as u64)
        .sum()
}

/// Checks that the bundle carries exactly the required tensors with exact
/// shapes. Reports the first missing path in canonical order.
pub fn validate_bundle(bundle: &WeightBundle, cfg: &NetworkConfig) -> Result<(), NetworkError> {
    cfg.validate()?;
    let required = required_layers(cfg);
    for layer in &required {
        match bundle.get(&layer.path) {
            None => {
                return Err(NetworkError::MissingLayer {
                    path: layer.path.clone(),
                })
            }
            Some(t) if t.dims != layer.dims => {
                return Err(NetworkError::ShapeMismatch {
                    path: layer.path.clone(),
                    expected: layer.dims.clone(),
                    actual: t.dims.clone(),
                })
            }
            Some(_) => {}
        }
    }
    if bundle.len() != required.len() {
        let known: std::collections::BTreeSet<&str> =
            required.iter().map(|l| l.path.as_str()).collect();
        for path in bundle.paths() {
            if !known.contains(path) {
                return Err(NetworkError::UnexpectedLayer {
                    path: path.to_string(),
                });
            }
        }
    }
    Ok(())
}

/// All-zero bundle: the analytic fixture (every head emits sigmoid(0) or a
/// uniform softmax).
pub fn zero_weights(cfg: &NetworkConfig) -> Result<WeightBundle, NetworkError> {
    cfg.validate()?;
    let mut bundle = WeightBundle::new();
    for layer in required_layers(cfg) {
        bundle.insert(layer.path, Tensor::zeros(layer.dims));
    }
    Ok(bundle)
}

/// Seeded pseudo-random bundle.
///
/// Kernels draw from a He-style uniform `(-sqrt(6/fan_in), sqrt(6/fan_in))`
/// via a ChaCha8 stream, biases start at zero, and batch norms start as the
/// identity (unit scale and variance). Same seed, bit-identical bundle.
pub fn init_weights(cfg: &NetworkConfig, seed: u64) -> Result<WeightBundle, NetworkError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bundle = WeightBundle::new();
    for layer in required_layers(cfg) {
        let tensor = if layer.path.ends_with("/kernel") {
            let fan_in: usize = layer.dims[..layer.dims.len() - 1].iter().product();
            let bound = (6.0 / fan_in as f64).sqrt() as f32;
            let data = (0..layer.dims.iter().product::<usize>())
                .map(|_| {
                    let u: f32 = rng.random();
                    bound * (2.0 * u - 1.0)
                })
                .collect();
            Tensor {
                dims: layer.dims,
                data,
            }
        } else if layer.path.ends_with("/scale") || layer.path.ends_with("/var") {
            Tensor::filled(layer.dims, 1.0)
        } else {
            Tensor::zeros(layer.dims)
        };
        bundle.insert(layer.path, tensor);
    }
    Ok(bundle)
}

fn ensure_finite(t: &FeatureTensor, context: &str) -> Result<(), NetworkError> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(NetworkError::NonFinite {
            context: context.to_string(),
        })
    }
}

fn image_to_tensor(image: &RGBImage) -> FeatureTensor {
    FeatureTensor {
        height: image.height(),
        width: image.width(),
        channels: 3,
        data: image.data().iter().map(|&b| f32::from(b) / 255.0).collect(),
    }
}

/// Runs one decoder head from the bottleneck down to its activation map.
fn run_head(
    head: &str,
    bottleneck_in: &FeatureTensor,
    bottleneck_out: &FeatureTensor,
    skips: &[FeatureTensor],
    bundle: &WeightBundle,
    cfg: &NetworkConfig,
) -> Result<FeatureTensor, NetworkError> {
    let mut dec = bottleneck_out.clone();
    for j in 0..cfg.stages {
        let f_enc = if j == 0 {
            bottleneck_in
        } else {
            &skips[cfg.stages - j]
        };
        let prefix = format!("head/{head}/dec/{j}");
        let gated = attention_decoder(f_enc, &dec, bundle, &format!("{prefix}/att"))?;
        dec = ops::transposed_conv2(
            &gated,
            blocks::lookup(bundle, &format!("{prefix}/up/kernel"))?,
            blocks::lookup(bundle, &format!("{prefix}/up/bias"))?,
            &format!("{prefix}/up"),
        )?;
        ensure_finite(&dec, &prefix)?;
    }
    let logits = ops::conv2d(
        &dec,
        blocks::lookup(bundle, &format!("head/{head}/out/kernel"))?,
        blocks::lookup(bundle, &format!("head/{head}/out/bias"))?,
        &format!("head/{head}/out"),
    )?;
    ensure_finite(&logits, &format!("head/{head}/out"))?;
    Ok(logits)
}

/// Deterministic forward pass: semantic probabilities, edge probabilities,
/// and per-pixel class probabilities, all at the input's spatial size.
pub fn forward(
    image: &RGBImage,
    bundle: &WeightBundle,
    cfg: &NetworkConfig,
) -> Result<(ProbMap, ProbMap, ClassProbMap), NetworkError> {
    validate_bundle(bundle, cfg)?;
    if image.height() != cfg.input_height || image.width() != cfg.input_width {
        return Err(NetworkError::InputShape {
            expected_h: cfg.input_height,
            expected_w: cfg.input_width,
            actual_h: image.height(),
            actual_w: image.width(),
        });
    }

    let mut t = image_to_tensor(image);
    let mut skips = Vec::with_capacity(cfg.stages);
    for i in 0..cfg.stages {
        t = resnet_block(&t, bundle, &format!("enc/{i}/res"))?;
        ensure_finite(&t, &format!("enc/{i}"))?;
        skips.push(t.clone());
        t = ops::max_pool2(&t);
    }
    let bottleneck_in = t;
    let bottleneck_out = resnet_block(&bottleneck_in, bundle, "bottleneck/res")?;
    ensure_finite(&bottleneck_out, "bottleneck")?;

    let semantic = ops::sigmoid(run_head(
        "semantic",
        &bottleneck_in,
        &bottleneck_out,
        &skips,
        bundle,
        cfg,
    )?);
    let edges = ops::sigmoid(run_head(
        "edge",
        &bottleneck_in,
        &bottleneck_out,
        &skips,
        bundle,
        cfg,
    )?);
    let classes = ops::softmax_channels(run_head(
        "class",
        &bottleneck_in,
        &bottleneck_out,
        &skips,
        bundle,
        cfg,
    )?);

    let semantic = ProbMap::new(image.height(), image.width(), semantic.data)?;
    let edges = ProbMap::new(image.height(), image.width(), edges.data)?;
    let classes = ClassProbMap::new(
        image.height(),
        image.width(),
        cfg.class_channels,
        classes.data,
    )?;
    Ok((semantic, edges, classes))
}
