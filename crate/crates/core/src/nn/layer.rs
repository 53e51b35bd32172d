use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Swish,
    Relu,
    Sigmoid,
}

/// One stage of a feed-forward network. Image tensors are `N×C×H×W`,
/// feature tensors after global pooling are `N×D`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    DepthwiseConv2d {
        ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    PointwiseConv2d {
        in_ch: usize,
        out_ch: usize,
    },
    BatchNorm {
        ch: usize,
        epsilon: f32,
        momentum: f32,
    },
    Activation(Activation),
    SqueezeExcite {
        ch: usize,
        reduction: usize,
    },
    GlobalMaxPool,
    GlobalAvgPool,
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Dropout {
        p: f32,
    },
    Softmax,
}

pub const BN_EPSILON: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.9;

impl LayerSpec {
    pub fn batch_norm(ch: usize) -> Self {
        LayerSpec::BatchNorm {
            ch,
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::DepthwiseConv2d { .. } => "depthwise_conv2d",
            LayerSpec::PointwiseConv2d { .. } => "pointwise_conv2d",
            LayerSpec::BatchNorm { .. } => "batch_norm",
            LayerSpec::Activation(Activation::Swish) => "swish",
            LayerSpec::Activation(Activation::Relu) => "relu",
            LayerSpec::Activation(Activation::Sigmoid) => "sigmoid",
            LayerSpec::SqueezeExcite { .. } => "squeeze_excite",
            LayerSpec::GlobalMaxPool => "global_max_pool",
            LayerSpec::GlobalAvgPool => "global_avg_pool",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Softmax => "softmax",
        }
    }

    /// Hidden width of a squeeze-excite bottleneck.
    pub fn se_reduced(ch: usize, reduction: usize) -> usize {
        (ch / reduction).max(1)
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::layer(index, self.kind(), msg));
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                ..
            } if in_ch == 0 || out_ch == 0 || kernel == 0 || stride == 0 => {
                bad("channels, kernel and stride must be positive")
            }
            LayerSpec::DepthwiseConv2d {
                ch, kernel, stride, ..
            } if ch == 0 || kernel == 0 || stride == 0 => {
                bad("channels, kernel and stride must be positive")
            }
            LayerSpec::PointwiseConv2d { in_ch, out_ch } if in_ch == 0 || out_ch == 0 => {
                bad("channels must be positive")
            }
            LayerSpec::BatchNorm {
                ch,
                epsilon,
                momentum,
            } if ch == 0 || epsilon <= 0.0 || !(0.0..1.0).contains(&momentum) => {
                bad("need ch > 0, epsilon > 0 and 0 <= momentum < 1")
            }
            LayerSpec::SqueezeExcite { ch, reduction } if ch == 0 || reduction == 0 => {
                bad("need ch > 0 and reduction >= 1")
            }
            LayerSpec::Dense { in_dim, out_dim } if in_dim == 0 || out_dim == 0 => {
                bad("dimensions must be positive")
            }
            LayerSpec::Dropout { p } if !(0.0..1.0).contains(&p) => bad("need 0 <= p < 1"),
            _ => Ok(()),
        }
    }

    /// Shapes of the trainable parameter tensors, weights before biases.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => vec![vec![out_ch, in_ch, kernel, kernel], vec![out_ch]],
            LayerSpec::DepthwiseConv2d { ch, kernel, .. } => {
                vec![vec![ch, 1, kernel, kernel], vec![ch]]
            }
            LayerSpec::PointwiseConv2d { in_ch, out_ch } => vec![vec![out_ch, in_ch], vec![out_ch]],
            LayerSpec::BatchNorm { ch, .. } => vec![vec![ch], vec![ch]],
            LayerSpec::SqueezeExcite { ch, reduction } => {
                let r = Self::se_reduced(ch, reduction);
                vec![vec![r, ch], vec![r], vec![ch, r], vec![ch]]
            }
            LayerSpec::Dense { in_dim, out_dim } => vec![vec![out_dim, in_dim], vec![out_dim]],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state (batch-norm running mean and variance).
    pub fn buffer_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::BatchNorm { ch, .. } => vec![vec![ch], vec![ch]],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let err = |msg: String| Error::layer(index, self.kind(), msg);
        let image = |expect_ch: usize| -> Result<(usize, usize)> {
            match *input {
                [c, h, w] if c == expect_ch => Ok((h, w)),
                [c, _, _] => Err(err(format!("expected {expect_ch} channels, got {c}"))),
                _ => Err(err(format!("expected C×H×W input, got {input:?}"))),
            }
        };
        let conv_extent = |n: usize, k: usize, s: usize, p: usize| -> Result<usize> {
            if n + 2 * p < k {
                return Err(err(format!(
                    "kernel {k} larger than padded extent {}",
                    n + 2 * p
                )));
            }
            Ok((n + 2 * p - k) / s + 1)
        };
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => {
                let (h, w) = image(in_ch)?;
                Ok(vec![
                    out_ch,
                    conv_extent(h, kernel, stride, padding)?,
                    conv_extent(w, kernel, stride, padding)?,
                ])
            }
            LayerSpec::DepthwiseConv2d {
                ch,
                kernel,
                stride,
                padding,
            } => {
                let (h, w) = image(ch)?;
                Ok(vec![
                    ch,
                    conv_extent(h, kernel, stride, padding)?,
                    conv_extent(w, kernel, stride, padding)?,
                ])
            }
            LayerSpec::PointwiseConv2d { in_ch, out_ch } => {
                let (h, w) = image(in_ch)?;
                Ok(vec![out_ch, h, w])
            }
            LayerSpec::SqueezeExcite { ch, .. } => {
                image(ch)?;
                Ok(input.to_vec())
            }
            LayerSpec::BatchNorm { ch, .. } => match input.first() {
                Some(&c) if c == ch && (input.len() == 1 || input.len() == 3) => Ok(input.to_vec()),
                _ => Err(err(format!(
                    "expected {ch} channels/features, got {input:?}"
                ))),
            },
            LayerSpec::GlobalMaxPool | LayerSpec::GlobalAvgPool => match *input {
                [c, _, _] => Ok(vec![c]),
                _ => Err(err(format!("expected C×H×W input, got {input:?}"))),
            },
            LayerSpec::Dense { in_dim, out_dim } => {
                let flat = input.iter().try_fold(1usize, |n, &d| n.checked_mul(d));
                if flat != Some(in_dim) {
                    return Err(err(format!(
                        "expected {in_dim} input features, got {input:?}"
                    )));
                }
                Ok(vec![out_dim])
            }
            LayerSpec::Softmax => match *input {
                [_] => Ok(input.to_vec()),
                _ => Err(err(format!("expected a feature vector, got {input:?}"))),
            },
            LayerSpec::Activation(_) | LayerSpec::Dropout { .. } => Ok(input.to_vec()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_extent() {
        let l = LayerSpec::Conv2d {
            in_ch: 3,
            out_ch: 8,
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        assert_eq!(l.output_shape(0, &[3, 64, 64]).unwrap(), vec![8, 32, 32]);
        let err = l.output_shape(4, &[2, 64, 64]).unwrap_err();
        assert!(err.to_string().contains("layer 4"), "{err}");
    }

    #[test]
    fn validate_rejects_bad_specs() {
        assert!(LayerSpec::Dropout { p: 1.0 }.validate(0).is_err());
        assert!(LayerSpec::Dropout { p: 0.0 }.validate(0).is_ok());
        assert!(LayerSpec::SqueezeExcite {
            ch: 4,
            reduction: 0
        }
        .validate(0)
        .is_err());
    }

    #[test]
    fn squeeze_excite_param_shapes() {
        let l = LayerSpec::SqueezeExcite {
            ch: 16,
            reduction: 4,
        };
        assert_eq!(l.param_count(), 4 * 16 + 4 + 16 * 4 + 16);
    }
}
