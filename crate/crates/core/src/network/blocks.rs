//! Composite blocks: the encoder ResNet block and the spatial-channel
//! attention decoder.

use super::ops::{
    batch_norm, broadcast_mul, channel_pool, concat_channels, conv2d, global_avg_pool,
    global_max_pool, relu, sigmoid,
};
use super::tensor::FeatureTensor;
use super::weights::{Tensor, WeightBundle};
use super::NetworkError;

pub(super) fn lookup<'a>(
    bundle: &'a WeightBundle,
    path: &str,
) -> Result<&'a Tensor, NetworkError> {
    bundle.get(path).ok_or_else(|| NetworkError::MissingLayer {
        path: path.to_string(),
    })
}

fn conv(
    bundle: &WeightBundle,
    prefix: &str,
    input: &FeatureTensor,
) -> Result<FeatureTensor, NetworkError> {
    let kernel = lookup(bundle, &format!("{prefix}/kernel"))?;
    let bias = lookup(bundle, &format!("{prefix}/bias"))?;
    conv2d(input, kernel, bias, prefix)
}

fn bn(
    bundle: &WeightBundle,
    prefix: &str,
    input: &FeatureTensor,
) -> Result<FeatureTensor, NetworkError> {
    batch_norm(
        input,
        lookup(bundle, &format!("{prefix}/scale"))?,
        lookup(bundle, &format!("{prefix}/shift"))?,
        lookup(bundle, &format!("{prefix}/mean"))?,
        lookup(bundle, &format!("{prefix}/var"))?,
        prefix,
    )
}

/// Encoder ResNet block under `{prefix}`:
/// `t0 = relu(conv1x1(in))`, `t1 = bn1(relu(conv3x3(t0)))`,
/// `out = bn2(relu(conv3x3(t0 ++ t1)))`. Output has the block's filter
/// count regardless of the input channels; spatial size is preserved.
pub fn resnet_block(
    input: &FeatureTensor,
    bundle: &WeightBundle,
    prefix: &str,
) -> Result<FeatureTensor, NetworkError> {
    let t0 = relu(conv(bundle, &format!("{prefix}/conv1"), input)?);
    let t1 = bn(
        bundle,
        &format!("{prefix}/bn1"),
        &relu(conv(bundle, &format!("{prefix}/conv2"), &t0)?),
    )?;
    let fused = concat_channels(&t0, &t1);
    bn(
        bundle,
        &format!("{prefix}/bn2"),
        &relu(conv(bundle, &format!("{prefix}/conv3"), &fused)?),
    )
}

/// Channel attention gate under `{prefix}/cha`.
///
/// Global average and max descriptors of both inputs pass through their own
/// reduced 1x1 convolutions with ReLU, the four results concatenate, a
/// fused 1x1 ReLU convolution reduces them, and a final 1x1 projection
/// restores the encoder channel count before the sigmoid. Output is
/// 1 x 1 x C_enc with values strictly inside (0, 1).
pub fn channel_attention(
    f_enc: &FeatureTensor,
    f_dec: &FeatureTensor,
    bundle: &WeightBundle,
    prefix: &str,
) -> Result<FeatureTensor, NetworkError> {
    let i_avg = relu(conv(
        bundle,
        &format!("{prefix}/cha/enc_avg"),
        &global_avg_pool(f_enc),
    )?);
    let i_max = relu(conv(
        bundle,
        &format!("{prefix}/cha/enc_max"),
        &global_max_pool(f_enc),
    )?);
    let j_avg = relu(conv(
        bundle,
        &format!("{prefix}/cha/dec_avg"),
        &global_avg_pool(f_dec),
    )?);
    let j_max = relu(conv(
        bundle,
        &format!("{prefix}/cha/dec_max"),
        &global_max_pool(f_dec),
    )?);
    let i = concat_channels(&i_avg, &i_max);
    let j = concat_channels(&j_avg, &j_max);
    let fused = relu(conv(
        bundle,
        &format!("{prefix}/cha/fuse"),
        &concat_channels(&i, &j),
    )?);
    Ok(sigmoid(conv(bundle, &format!("{prefix}/cha/proj"), &fused)?))
}

/// Spatial attention gate under `{prefix}/spa`.
///
/// Each input collapses to a per-pixel [channel-mean, channel-max]
/// descriptor followed by a 1-channel 1x1 ReLU convolution; the two
/// 1-channel maps concatenate and a 1-channel fusion convolution feeds the
/// sigmoid. Output is H x W x 1.
pub fn spatial_attention(
    f_enc: &FeatureTensor,
    f_dec: &FeatureTensor,
    bundle: &WeightBundle,
    prefix: &str,
) -> Result<FeatureTensor, NetworkError> {
    if (f_enc.height, f_enc.width) != (f_dec.height, f_dec.width) {
        return Err(NetworkError::Broadcast {
            input: (f_enc.height, f_enc.width, f_enc.channels),
            gate: (f_dec.height, f_dec.width, f_dec.channels),
        });
    }
    let k = relu(conv(bundle, &format!("{prefix}/spa/enc"), &channel_pool(f_enc))?);
    let l = relu(conv(bundle, &format!("{prefix}/spa/dec"), &channel_pool(f_dec))?);
    let pair = concat_channels(&k, &l);
    Ok(sigmoid(conv(bundle, &format!("{prefix}/spa/fuse"), &pair)?))
}

/// Gated encoder features: `f_enc * a_cha * a_spa` with broadcasting.
pub fn attention_fuse(
    f_enc: &FeatureTensor,
    a_cha: &FeatureTensor,
    a_spa: &FeatureTensor,
) -> Result<FeatureTensor, NetworkError> {
    broadcast_mul(&broadcast_mul(f_enc, a_cha)?, a_spa)
}

/// Full attention decoder block: gates the skip features and concatenates
/// them with the decoder features, ready for the stage's upsampling.
pub fn attention_decoder(
    f_enc: &FeatureTensor,
    f_dec: &FeatureTensor,
    bundle: &WeightBundle,
    prefix: &str,
) -> Result<FeatureTensor, NetworkError> {
    let a_cha = channel_attention(f_enc, f_dec, bundle, prefix)?;
    let a_spa = spatial_attention(f_enc, f_dec, bundle, prefix)?;
    let refined = attention_fuse(f_enc, &a_cha, &a_spa)?;
    Ok(concat_channels(&refined, f_dec))
}
