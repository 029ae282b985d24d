//! Constructors for the four network families.

use crate::error::{Error, Result};

use super::{LayerBlock, NetworkSpec};

const CLASSES: usize = 10;

fn check_depth(depth: usize) -> Result<()> {
    if depth == 3 || depth == 4 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("depth {depth} is not supported, expected 3 or 4")))
    }
}

fn check_channels(in_channels: usize) -> Result<()> {
    if in_channels == 1 || in_channels == 3 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "{in_channels} input channels not supported, expected 1 (greyscale) or 3 (RGB)"
        )))
    }
}

/// Wide padded architecture: 96 -> 384 -> 1536 (-> 6144) channels with
/// Triangle powers 0.7 / 1.4 / 1.0 (/ 1.0) and overlapping max pooling.
pub fn build_journe(depth: usize, in_channels: usize) -> Result<NetworkSpec> {
    check_depth(depth)?;
    check_channels(in_channels)?;
    let mut blocks = vec![
        LayerBlock::BatchNorm { channels: in_channels },
        LayerBlock::HebbianConv {
            in_channels,
            out_channels: 96,
            kernel: 5,
            stride: 1,
            padding: 2,
            cosine: false,
            stage: 0,
        },
        LayerBlock::Triangle { power: 0.7 },
        LayerBlock::MaxPool { kernel: 4, stride: 2, padding: 1 },
        LayerBlock::BatchNorm { channels: 96 },
        LayerBlock::HebbianConv {
            in_channels: 96,
            out_channels: 384,
            kernel: 3,
            stride: 1,
            padding: 1,
            cosine: false,
            stage: 1,
        },
        LayerBlock::Triangle { power: 1.4 },
        LayerBlock::MaxPool { kernel: 4, stride: 2, padding: 1 },
        LayerBlock::BatchNorm { channels: 384 },
        LayerBlock::HebbianConv {
            in_channels: 384,
            out_channels: 1536,
            kernel: 3,
            stride: 1,
            padding: 1,
            cosine: false,
            stage: 2,
        },
        LayerBlock::Triangle { power: 1.0 },
        LayerBlock::AvgPool { kernel: 2, stride: 2, padding: 0 },
    ];
    if depth == 4 {
        blocks.extend([
            LayerBlock::BatchNorm { channels: 1536 },
            LayerBlock::HebbianConv {
                in_channels: 1536,
                out_channels: 6144,
                kernel: 3,
                stride: 1,
                padding: 1,
                cosine: false,
                stage: 3,
            },
            LayerBlock::Triangle { power: 1.0 },
            LayerBlock::AvgPool { kernel: 2, stride: 2, padding: 0 },
        ]);
    }
    Ok(NetworkSpec {
        name: format!("journe-{depth}"),
        input_channels: in_channels,
        input_size: if in_channels == 1 { 28 } else { 32 },
        blocks,
        num_classes: CLASSES,
    })
}

/// Padding-free narrow architecture with cosine responses throughout:
/// 96 -> 128 -> 192 (-> 256) channels, Triangle power 1.0.
pub fn build_lagani(depth: usize) -> Result<NetworkSpec> {
    check_depth(depth)?;
    let conv = |ic: usize, oc: usize, kernel: usize, stage: usize| LayerBlock::HebbianConv {
        in_channels: ic,
        out_channels: oc,
        kernel,
        stride: 1,
        padding: 0,
        cosine: true,
        stage,
    };
    let mut blocks = vec![
        LayerBlock::BatchNorm { channels: 3 },
        conv(3, 96, 5, 0),
        LayerBlock::Triangle { power: 1.0 },
        LayerBlock::MaxPool { kernel: 2, stride: 2, padding: 0 },
        LayerBlock::BatchNorm { channels: 96 },
        conv(96, 128, 3, 1),
        LayerBlock::Triangle { power: 1.0 },
        LayerBlock::BatchNorm { channels: 128 },
        conv(128, 192, 3, 2),
        LayerBlock::Triangle { power: 1.0 },
        LayerBlock::AvgPool { kernel: 2, stride: 2, padding: 0 },
    ];
    if depth == 4 {
        blocks.extend([
            LayerBlock::BatchNorm { channels: 192 },
            conv(192, 256, 3, 3),
            LayerBlock::Triangle { power: 1.0 },
        ]);
    }
    Ok(NetworkSpec {
        name: format!("lagani-{depth}"),
        input_channels: 3,
        input_size: 32,
        blocks,
        num_classes: CLASSES,
    })
}

/// Journe variant whose second and third stages factor the 3x3 conv into
/// a per-channel spatial filter followed by a pointwise mixing conv.
pub fn build_depthwise_journe() -> Result<NetworkSpec> {
    let blocks = vec![
        LayerBlock::BatchNorm { channels: 3 },
        LayerBlock::HebbianConv {
            in_channels: 3,
            out_channels: 96,
            kernel: 5,
            stride: 1,
            padding: 2,
            cosine: false,
            stage: 0,
        },
        LayerBlock::Triangle { power: 0.7 },
        LayerBlock::MaxPool { kernel: 4, stride: 2, padding: 1 },
        LayerBlock::BatchNorm { channels: 96 },
        LayerBlock::HebbianDepthwiseConv {
            channels: 96,
            kernel: 3,
            stride: 1,
            padding: 1,
            cosine: false,
            stage: 1,
        },
        LayerBlock::BatchNorm { channels: 96 },
        LayerBlock::HebbianConv {
            in_channels: 96,
            out_channels: 384,
            kernel: 1,
            stride: 1,
            padding: 0,
            cosine: false,
            stage: 1,
        },
        LayerBlock::Triangle { power: 1.4 },
        LayerBlock::MaxPool { kernel: 4, stride: 2, padding: 1 },
        LayerBlock::BatchNorm { channels: 384 },
        LayerBlock::HebbianDepthwiseConv {
            channels: 384,
            kernel: 3,
            stride: 1,
            padding: 1,
            cosine: false,
            stage: 2,
        },
        LayerBlock::BatchNorm { channels: 384 },
        LayerBlock::HebbianConv {
            in_channels: 384,
            out_channels: 1536,
            kernel: 1,
            stride: 1,
            padding: 0,
            cosine: false,
            stage: 2,
        },
        LayerBlock::Triangle { power: 1.0 },
        LayerBlock::AvgPool { kernel: 2, stride: 2, padding: 0 },
    ];
    Ok(NetworkSpec {
        name: "journe-depthwise".into(),
        input_channels: 3,
        input_size: 32,
        blocks,
        num_classes: CLASSES,
    })
}

/// Journe variant whose second and third stages are inverted-bottleneck
/// residual blocks with a x4 channel expansion.
pub fn build_residual_journe() -> Result<NetworkSpec> {
    let blocks = vec![
        LayerBlock::BatchNorm { channels: 3 },
        LayerBlock::HebbianConv {
            in_channels: 3,
            out_channels: 96,
            kernel: 5,
            stride: 1,
            padding: 2,
            cosine: true,
            stage: 0,
        },
        LayerBlock::Triangle { power: 0.7 },
        LayerBlock::MaxPool { kernel: 4, stride: 2, padding: 1 },
        LayerBlock::Residual {
            in_channels: 96,
            out_channels: 384,
            hidden: 96 * 4,
            power: 1.4,
            stage: 1,
        },
        LayerBlock::MaxPool { kernel: 4, stride: 2, padding: 1 },
        LayerBlock::Residual {
            in_channels: 384,
            out_channels: 1536,
            hidden: 384 * 4,
            power: 1.0,
            stage: 2,
        },
        LayerBlock::AvgPool { kernel: 2, stride: 2, padding: 0 },
    ];
    Ok(NetworkSpec {
        name: "journe-residual".into(),
        input_channels: 3,
        input_size: 32,
        blocks,
        num_classes: CLASSES,
    })
}
