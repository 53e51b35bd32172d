//! Layer-table builders for reduced-scale MBConv backbones.

use crate::nn::{Activation, LayerSpec};

const SWISH: LayerSpec = LayerSpec::Activation(Activation::Swish);

/// One row of a backbone table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub out_ch: usize,
    pub expand: usize,
    pub kernel: usize,
    pub stride: usize,
    pub se_reduction: usize,
}

/// 3×3 strided convolution, batch norm, swish.
pub fn stem(in_ch: usize, out_ch: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel: 3,
            stride: 2,
            padding: 1,
        },
        LayerSpec::batch_norm(out_ch),
        SWISH,
    ]
}

/// Inverted bottleneck: expand → depthwise → squeeze-excite → project.
pub fn mbconv(in_ch: usize, block: &BlockSpec) -> Vec<LayerSpec> {
    let mid = in_ch * block.expand;
    let mut layers = Vec::with_capacity(10);
    if block.expand != 1 {
        layers.extend([
            LayerSpec::PointwiseConv2d {
                in_ch,
                out_ch: mid,
            },
            LayerSpec::batch_norm(mid),
            SWISH,
        ]);
    }
    layers.extend([
        LayerSpec::DepthwiseConv2d {
            ch: mid,
            kernel: block.kernel,
            stride: block.stride,
            padding: block.kernel / 2,
        },
        LayerSpec::batch_norm(mid),
        SWISH,
        LayerSpec::SqueezeExcite {
            ch: mid,
            reduction: block.se_reduction,
        },
        LayerSpec::PointwiseConv2d {
            in_ch: mid,
            out_ch: block.out_ch,
        },
        LayerSpec::batch_norm(block.out_ch),
    ]);
    layers
}

/// Stem, MBConv stack and a 1×1 head convolution with batch norm and swish.
pub fn backbone(stem_ch: usize, blocks: &[BlockSpec], head_ch: usize) -> Vec<LayerSpec> {
    let mut layers = stem(3, stem_ch);
    let mut ch = stem_ch;
    for b in blocks {
        layers.extend(mbconv(ch, b));
        ch = b.out_ch;
    }
    layers.extend([
        LayerSpec::PointwiseConv2d {
            in_ch: ch,
            out_ch: head_ch,
        },
        LayerSpec::batch_norm(head_ch),
        SWISH,
    ]);
    layers
}
