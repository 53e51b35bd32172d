use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::{Activation, LayerSpec};
use super::ops::{self, BnGeom, ConvGeom};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

/// Ordered layer chain with its parameters and batch-norm running statistics.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar = f32> {
    layers: Vec<LayerSpec>,
    input_shape: Vec<usize>,
    shapes: Vec<Vec<usize>>,
    params: Vec<Vec<Tensor<T>>>,
    buffers: Vec<Vec<Tensor<T>>>,
    mode: Mode,
    dropout_rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
enum LayerCache<T: Scalar> {
    Input(Tensor<T>),
    BatchNorm {
        xhat: Vec<T>,
        inv_std: Vec<T>,
        training: bool,
    },
    SqueezeExcite {
        input: Tensor<T>,
        pooled: Vec<T>,
        hidden_pre: Vec<T>,
        hidden: Vec<T>,
        gate: Vec<T>,
    },
    MaxPool {
        argmax: Vec<usize>,
        input_shape: Vec<usize>,
    },
    AvgPool {
        input_shape: Vec<usize>,
    },
    Dropout {
        mask: Vec<T>,
    },
    Softmax {
        probs: Vec<T>,
    },
}

/// Per-layer activations recorded by [`Network::forward`] for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache<T: Scalar = f32> {
    layers: Vec<LayerCache<T>>,
    batch: usize,
}

#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar = f32> {
    /// One tensor per parameter tensor, same nesting and shapes as [`Network::params`].
    pub params: Vec<Vec<Tensor<T>>>,
    pub input: Tensor<T>,
}

impl<T: Scalar> Network<T> {
    /// Builds a network for per-sample inputs of `input_shape` (`[C, H, W]` or `[D]`),
    /// validating the full shape chain. Weights are He-uniform from `seed`.
    pub fn new(layers: Vec<LayerSpec>, input_shape: &[usize], seed: u64) -> Result<Self> {
        let shapes = Self::shape_chain(&layers, input_shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layers.len());
        let mut buffers = Vec::with_capacity(layers.len());
        for layer in &layers {
            params.push(init_params(layer, &mut rng));
            buffers.push(
                layer
                    .buffer_shapes()
                    .iter()
                    .enumerate()
                    .map(|(i, s)| Tensor::full(s, if i == 0 { T::zero() } else { T::one() }))
                    .collect(),
            );
        }
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed);
        dropout_rng.set_stream(1);
        Ok(Self {
            layers,
            input_shape: input_shape.to_vec(),
            shapes,
            params,
            buffers,
            mode: Mode::Training,
            dropout_rng,
        })
    }

    /// Reassembles a network from stored parameters and buffers.
    pub fn from_parts(
        layers: Vec<LayerSpec>,
        input_shape: &[usize],
        params: Vec<Vec<Tensor<T>>>,
        buffers: Vec<Vec<Tensor<T>>>,
    ) -> Result<Self> {
        let mut net = Self::new(layers, input_shape, 0)?;
        for (i, layer) in net.layers.iter().enumerate() {
            let ps = params.get(i).map(Vec::as_slice).unwrap_or(&[]);
            let bs = buffers.get(i).map(Vec::as_slice).unwrap_or(&[]);
            let want_p = layer.param_shapes();
            let want_b = layer.buffer_shapes();
            let ok = ps.len() == want_p.len()
                && bs.len() == want_b.len()
                && ps.iter().zip(&want_p).all(|(t, s)| t.shape() == s.as_slice())
                && bs.iter().zip(&want_b).all(|(t, s)| t.shape() == s.as_slice());
            if !ok {
                return Err(Error::layer(i, layer.kind(), "parameter shapes do not match the layer table"));
            }
        }
        if params.len() != net.layers.len() || buffers.len() != net.layers.len() {
            return Err(Error::Shape("parameter list length differs from layer count".into()));
        }
        net.params = params;
        net.buffers = buffers;
        net.mode = Mode::Inference;
        Ok(net)
    }

    /// Per-sample output shape after every layer.
    pub fn shape_chain(layers: &[LayerSpec], input_shape: &[usize]) -> Result<Vec<Vec<usize>>> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut cur = input_shape.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            layer.validate(i)?;
            cur = layer.output_shape(i, &cur)?;
            shapes.push(cur.clone());
        }
        Ok(shapes)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape of the whole chain.
    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map(Vec::as_slice).unwrap_or(&self.input_shape)
    }

    pub fn params(&self) -> &[Vec<Tensor<T>>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<Tensor<T>>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Vec<Tensor<T>>] {
        &self.buffers
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Tensor::len).sum()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Casts parameters and buffers to another element type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self.layers.clone(),
            input_shape: self.input_shape.clone(),
            shapes: self.shapes.clone(),
            params: cast_nested(&self.params),
            buffers: cast_nested(&self.buffers),
            mode: self.mode,
            dropout_rng: self.dropout_rng.clone(),
        }
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<()> {
        if batch.shape().len() != self.input_shape.len() + 1
            || batch.shape()[1..] != self.input_shape[..]
        {
            let kind = self.layers.first().map(LayerSpec::kind).unwrap_or("input");
            return Err(Error::layer(
                0,
                kind,
                format!(
                    "batch shape {:?} does not match network input N×{:?}",
                    batch.shape(),
                    self.input_shape
                ),
            ));
        }
        Ok(())
    }

    /// Inference-mode forward pass; never mutates the network.
    pub fn infer(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_batch(batch)?;
        let mut rng = self.dropout_rng.clone();
        let mut x = batch.clone();
        for i in 0..self.layers.len() {
            x = self.layer_forward(i, x, false, &mut rng, false)?.0;
        }
        Ok(x)
    }

    /// Forward pass in the current mode, recording activations for [`Network::backward`].
    /// Training mode uses batch statistics, updates running statistics and applies dropout.
    pub fn forward(&mut self, batch: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_batch(batch)?;
        let training = self.mode == Mode::Training;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut rng = self.dropout_rng.clone();
        let mut x = batch.clone();
        for i in 0..self.layers.len() {
            let (y, cache, stats) = self.layer_forward(i, x, training, &mut rng, true)?;
            if let (Some((mean, var)), LayerSpec::BatchNorm { momentum, .. }) =
                (stats, &self.layers[i])
            {
                let m = T::from_f64_lossy(*momentum as f64);
                let bufs = &mut self.buffers[i];
                for (r, b) in bufs[0].data_mut().iter_mut().zip(&mean) {
                    *r = m * *r + (T::one() - m) * *b;
                }
                for (r, b) in bufs[1].data_mut().iter_mut().zip(&var) {
                    *r = m * *r + (T::one() - m) * *b;
                }
            }
            caches.push(cache.expect("cache requested"));
            x = y;
        }
        self.dropout_rng = rng;
        Ok((
            x,
            ForwardCache {
                layers: caches,
                batch: batch.shape()[0],
            },
        ))
    }

    /// Returns the output, the cache when requested, and the batch statistics
    /// of a training-mode batch norm.
    #[allow(clippy::type_complexity)]
    fn layer_forward(
        &self,
        i: usize,
        x: Tensor<T>,
        training: bool,
        rng: &mut ChaCha8Rng,
        want_cache: bool,
    ) -> Result<(Tensor<T>, Option<LayerCache<T>>, Option<(Vec<T>, Vec<T>)>)> {
        let mut stats = None;
        let layer = &self.layers[i];
        let p = &self.params[i];
        let n = x.shape()[0];
        let out_shape = batch_shape(n, &self.shapes[i]);
        let (y, cache): (Vec<T>, Option<LayerCache<T>>) = match *layer {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => {
                let g = conv_geom(&x, in_ch, out_ch, &out_shape, kernel, stride, padding);
                let y = ops::conv_forward(&g, false, x.data(), p[0].data(), p[1].data());
                (y, want_cache.then_some(LayerCache::Input(x)))
            }
            LayerSpec::DepthwiseConv2d {
                ch,
                kernel,
                stride,
                padding,
            } => {
                let g = conv_geom(&x, ch, ch, &out_shape, kernel, stride, padding);
                let y = ops::conv_forward(&g, true, x.data(), p[0].data(), p[1].data());
                (y, want_cache.then_some(LayerCache::Input(x)))
            }
            LayerSpec::PointwiseConv2d { in_ch, out_ch } => {
                let plane = x.shape()[2] * x.shape()[3];
                let y = ops::pointwise_forward(
                    n,
                    in_ch,
                    out_ch,
                    plane,
                    x.data(),
                    p[0].data(),
                    p[1].data(),
                );
                (y, want_cache.then_some(LayerCache::Input(x)))
            }
            LayerSpec::Dense { in_dim, out_dim } => {
                let y = ops::dense_forward(n, in_dim, out_dim, x.data(), p[0].data(), p[1].data());
                (y, want_cache.then_some(LayerCache::Input(x)))
            }
            LayerSpec::BatchNorm { ch, epsilon, .. } => {
                let geom = bn_geom(&x, ch);
                let eps = T::from_f64_lossy(epsilon as f64);
                let (mean, var) = if training {
                    ops::channel_stats(&geom, x.data())
                } else {
                    let b = &self.buffers[i];
                    (b[0].data().to_vec(), b[1].data().to_vec())
                };
                let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                let (gamma, beta) = (p[0].data(), p[1].data());
                let mut xhat = vec![T::zero(); x.len()];
                let mut y = vec![T::zero(); x.len()];
                let xd = x.data();
                for c in 0..ch {
                    geom.for_each_in_channel(c, |j| {
                        let h = (xd[j] - mean[c]) * inv_std[c];
                        xhat[j] = h;
                        y[j] = gamma[c] * h + beta[c];
                    });
                }
                if training {
                    stats = Some((mean, var));
                }
                (
                    y,
                    want_cache.then_some(LayerCache::BatchNorm {
                        xhat,
                        inv_std,
                        training,
                    }),
                )
            }
            LayerSpec::Activation(kind) => {
                let f: fn(T) -> T = match kind {
                    Activation::Swish => ops::swish,
                    Activation::Relu => |v: T| v.max(T::zero()),
                    Activation::Sigmoid => ops::sigmoid,
                };
                let y = x.data().iter().map(|&v| f(v)).collect();
                (y, want_cache.then_some(LayerCache::Input(x)))
            }
            LayerSpec::SqueezeExcite { ch, reduction } => {
                let r = LayerSpec::se_reduced(ch, reduction);
                let plane = x.shape()[2] * x.shape()[3];
                let inv_plane = T::one() / T::from_usize(plane).unwrap();
                let xd = x.data();
                let pooled: Vec<T> = (0..n * ch)
                    .map(|j| xd[j * plane..][..plane].iter().copied().sum::<T>() * inv_plane)
                    .collect();
                let hidden_pre = ops::dense_forward(n, ch, r, &pooled, p[0].data(), p[1].data());
                let hidden: Vec<T> = hidden_pre.iter().map(|&v| ops::swish(v)).collect();
                let excite = ops::dense_forward(n, r, ch, &hidden, p[2].data(), p[3].data());
                let gate: Vec<T> = excite.iter().map(|&v| ops::sigmoid(v)).collect();
                let mut y = xd.to_vec();
                for (j, &gv) in gate.iter().enumerate() {
                    y[j * plane..][..plane].iter_mut().for_each(|v| *v = *v * gv);
                }
                (
                    y,
                    want_cache.then_some(LayerCache::SqueezeExcite {
                        input: x,
                        pooled,
                        hidden_pre,
                        hidden,
                        gate,
                    }),
                )
            }
            LayerSpec::GlobalMaxPool => {
                let plane = x.shape()[2] * x.shape()[3];
                let rows = n * x.shape()[1];
                let mut argmax = Vec::with_capacity(rows);
                let y = (0..rows)
                    .map(|j| {
                        let seg = &x.data()[j * plane..][..plane];
                        let mut best = 0;
                        for (k, &v) in seg.iter().enumerate() {
                            if v > seg[best] {
                                best = k;
                            }
                        }
                        argmax.push(j * plane + best);
                        seg[best]
                    })
                    .collect();
                (
                    y,
                    want_cache.then(|| LayerCache::MaxPool {
                        argmax,
                        input_shape: x.shape().to_vec(),
                    }),
                )
            }
            LayerSpec::GlobalAvgPool => {
                let plane = x.shape()[2] * x.shape()[3];
                let inv = T::one() / T::from_usize(plane).unwrap();
                let y = x
                    .data()
                    .chunks(plane)
                    .map(|seg| seg.iter().copied().sum::<T>() * inv)
                    .collect();
                (
                    y,
                    want_cache.then(|| LayerCache::AvgPool {
                        input_shape: x.shape().to_vec(),
                    }),
                )
            }
            LayerSpec::Dropout { p: rate } => {
                if training && rate > 0.0 {
                    let keep = 1.0 - rate as f64;
                    let scale = T::from_f64_lossy(1.0 / keep);
                    let mask: Vec<T> = (0..x.len())
                        .map(|_| {
                            if rng.gen::<f64>() < keep {
                                scale
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    let y = x.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
                    (y, want_cache.then_some(LayerCache::Dropout { mask }))
                } else {
                    let len = x.len();
                    (
                        x.into_data(),
                        want_cache.then(|| LayerCache::Dropout {
                            mask: vec![T::one(); len],
                        }),
                    )
                }
            }
            LayerSpec::Softmax => {
                let k = x.shape()[1];
                let y = ops::softmax_rows(n, k, x.data());
                let cache = want_cache.then(|| LayerCache::Softmax { probs: y.clone() });
                (y, cache)
            }
        };
        Ok((Tensor::new(out_shape, y)?, cache, stats))
    }

    /// Backpropagates `output_grad` through the activations recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache<T>, output_grad: &Tensor<T>) -> Result<Gradients<T>> {
        if cache.layers.len() != self.layers.len() || cache.layers.is_empty() {
            return Err(Error::Usage(
                "backward needs the activation cache of a forward pass on this network".into(),
            ));
        }
        let expected = batch_shape(cache.batch, self.output_shape());
        if output_grad.shape() != expected.as_slice() {
            return Err(Error::Shape(format!(
                "output gradient shape {:?} does not match forward output {expected:?}",
                output_grad.shape()
            )));
        }
        let mut grads: Vec<Vec<Tensor<T>>> = Vec::with_capacity(self.layers.len());
        let mut g = output_grad.clone();
        for i in (0..self.layers.len()).rev() {
            let in_shape = if i == 0 {
                batch_shape(cache.batch, &self.input_shape)
            } else {
                batch_shape(cache.batch, &self.shapes[i - 1])
            };
            let (gin, pg) = self.layer_backward(i, &cache.layers[i], &g, &in_shape)?;
            grads.push(pg);
            g = Tensor::new(in_shape, gin)?;
        }
        grads.reverse();
        Ok(Gradients {
            params: grads,
            input: g,
        })
    }

    fn layer_backward(
        &self,
        i: usize,
        cache: &LayerCache<T>,
        g: &Tensor<T>,
        in_shape: &[usize],
    ) -> Result<(Vec<T>, Vec<Tensor<T>>)> {
        let layer = &self.layers[i];
        let p = &self.params[i];
        let n = in_shape[0];
        let mismatch = || Error::Usage(format!("activation cache does not match layer {i}"));
        let wrap = |gw: Vec<T>, gb: Vec<T>| -> Result<Vec<Tensor<T>>> {
            Ok(vec![
                Tensor::new(p[0].shape().to_vec(), gw)?,
                Tensor::new(p[1].shape().to_vec(), gb)?,
            ])
        };
        match (layer, cache) {
            (
                LayerSpec::Conv2d {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    padding,
                },
                LayerCache::Input(x),
            ) => {
                let g4 = conv_geom(x, *in_ch, *out_ch, g.shape(), *kernel, *stride, *padding);
                let (gin, gw, gb) = ops::conv_backward(&g4, false, x.data(), p[0].data(), g.data());
                Ok((gin, wrap(gw, gb)?))
            }
            (
                LayerSpec::DepthwiseConv2d {
                    ch,
                    kernel,
                    stride,
                    padding,
                },
                LayerCache::Input(x),
            ) => {
                let g4 = conv_geom(x, *ch, *ch, g.shape(), *kernel, *stride, *padding);
                let (gin, gw, gb) = ops::conv_backward(&g4, true, x.data(), p[0].data(), g.data());
                Ok((gin, wrap(gw, gb)?))
            }
            (LayerSpec::PointwiseConv2d { in_ch, out_ch }, LayerCache::Input(x)) => {
                let plane = x.shape()[2] * x.shape()[3];
                let (gin, gw, gb) = ops::pointwise_backward(
                    n,
                    *in_ch,
                    *out_ch,
                    plane,
                    x.data(),
                    p[0].data(),
                    g.data(),
                );
                Ok((gin, wrap(gw, gb)?))
            }
            (LayerSpec::Dense { in_dim, out_dim }, LayerCache::Input(x)) => {
                let (gin, gw, gb) =
                    ops::dense_backward(n, *in_dim, *out_dim, x.data(), p[0].data(), g.data());
                Ok((gin, wrap(gw, gb)?))
            }
            (
                LayerSpec::BatchNorm { ch, .. },
                LayerCache::BatchNorm {
                    xhat,
                    inv_std,
                    training,
                },
            ) => {
                let geom = bn_geom(g, *ch);
                if *training {
                    let (gin, gg, gb) =
                        ops::batch_norm_backward(&geom, xhat, inv_std, p[0].data(), g.data());
                    Ok((gin, wrap(gg, gb)?))
                } else {
                    let gamma = p[0].data();
                    let gd = g.data();
                    let mut gin = vec![T::zero(); gd.len()];
                    let mut gg = vec![T::zero(); *ch];
                    let mut gb = vec![T::zero(); *ch];
                    for c in 0..*ch {
                        geom.for_each_in_channel(c, |j| {
                            gin[j] = gd[j] * gamma[c] * inv_std[c];
                            gg[c] = gg[c] + gd[j] * xhat[j];
                            gb[c] = gb[c] + gd[j];
                        });
                    }
                    Ok((gin, wrap(gg, gb)?))
                }
            }
            (LayerSpec::Activation(kind), LayerCache::Input(x)) => {
                let gin = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gv)| {
                        gv * match kind {
                            Activation::Swish => ops::swish_grad(v),
                            Activation::Relu => {
                                if v > T::zero() {
                                    T::one()
                                } else {
                                    T::zero()
                                }
                            }
                            Activation::Sigmoid => {
                                let s = ops::sigmoid(v);
                                s * (T::one() - s)
                            }
                        }
                    })
                    .collect();
                Ok((gin, Vec::new()))
            }
            (
                LayerSpec::SqueezeExcite { ch, reduction },
                LayerCache::SqueezeExcite {
                    input,
                    pooled,
                    hidden_pre,
                    hidden,
                    gate,
                },
            ) => {
                let ch = *ch;
                let r = LayerSpec::se_reduced(ch, *reduction);
                let plane = input.shape()[2] * input.shape()[3];
                let (xd, gd) = (input.data(), g.data());
                let mut gin = vec![T::zero(); xd.len()];
                let mut d_excite = vec![T::zero(); n * ch];
                for j in 0..n * ch {
                    let seg = j * plane..(j + 1) * plane;
                    let dgate: T = xd[seg.clone()]
                        .iter()
                        .zip(&gd[seg.clone()])
                        .map(|(&a, &b)| a * b)
                        .sum();
                    d_excite[j] = dgate * gate[j] * (T::one() - gate[j]);
                    for k in seg {
                        gin[k] = gd[k] * gate[j];
                    }
                }
                let (d_hidden, gw2, gb2) =
                    ops::dense_backward(n, r, ch, hidden, p[2].data(), &d_excite);
                let d_pre: Vec<T> = d_hidden
                    .iter()
                    .zip(hidden_pre)
                    .map(|(&d, &z)| d * ops::swish_grad(z))
                    .collect();
                let (d_pooled, gw1, gb1) = ops::dense_backward(n, ch, r, pooled, p[0].data(), &d_pre);
                let inv_plane = T::one() / T::from_usize(plane).unwrap();
                for (j, &dp) in d_pooled.iter().enumerate() {
                    let add = dp * inv_plane;
                    gin[j * plane..][..plane].iter_mut().for_each(|v| *v = *v + add);
                }
                Ok((
                    gin,
                    vec![
                        Tensor::new(p[0].shape().to_vec(), gw1)?,
                        Tensor::new(p[1].shape().to_vec(), gb1)?,
                        Tensor::new(p[2].shape().to_vec(), gw2)?,
                        Tensor::new(p[3].shape().to_vec(), gb2)?,
                    ],
                ))
            }
            (LayerSpec::GlobalMaxPool, LayerCache::MaxPool { argmax, input_shape }) => {
                let mut gin = vec![T::zero(); input_shape.iter().product()];
                for (&src, &gv) in argmax.iter().zip(g.data()) {
                    gin[src] = gv;
                }
                Ok((gin, Vec::new()))
            }
            (LayerSpec::GlobalAvgPool, LayerCache::AvgPool { input_shape }) => {
                let plane = input_shape[2] * input_shape[3];
                let inv = T::one() / T::from_usize(plane).unwrap();
                let mut gin = Vec::with_capacity(input_shape.iter().product());
                for &gv in g.data() {
                    gin.extend(std::iter::repeat_n(gv * inv, plane));
                }
                Ok((gin, Vec::new()))
            }
            (LayerSpec::Dropout { .. }, LayerCache::Dropout { mask }) => Ok((
                g.data().iter().zip(mask).map(|(&a, &m)| a * m).collect(),
                Vec::new(),
            )),
            (LayerSpec::Softmax, LayerCache::Softmax { probs }) => {
                let k = g.shape()[1];
                Ok((ops::softmax_backward(n, k, probs, g.data()), Vec::new()))
            }
            _ => Err(mismatch()),
        }
    }
}

fn cast_nested<T: Scalar, U: Scalar>(v: &[Vec<Tensor<T>>]) -> Vec<Vec<Tensor<U>>> {
    v.iter()
        .map(|l| l.iter().map(Tensor::cast).collect())
        .collect()
}

fn batch_shape(n: usize, per_sample: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(per_sample.len() + 1);
    s.push(n);
    s.extend_from_slice(per_sample);
    s
}

fn conv_geom<T: Scalar>(
    x: &Tensor<T>,
    cin: usize,
    cout: usize,
    out_shape: &[usize],
    k: usize,
    stride: usize,
    pad: usize,
) -> ConvGeom {
    ConvGeom {
        n: x.shape()[0],
        cin,
        cout,
        h: x.shape()[2],
        w: x.shape()[3],
        oh: out_shape[2],
        ow: out_shape[3],
        k,
        stride,
        pad,
    }
}

fn bn_geom<T: Scalar>(x: &Tensor<T>, ch: usize) -> BnGeom {
    let inner = x.shape()[2..].iter().product();
    BnGeom {
        groups: x.shape()[0],
        ch,
        inner,
    }
}

fn init_params<T: Scalar>(layer: &LayerSpec, rng: &mut ChaCha8Rng) -> Vec<Tensor<T>> {
    let he = |shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng| -> Tensor<T> {
        let limit = (6.0 / fan_in as f64).sqrt();
        let len = shape.iter().product();
        let data = (0..len)
            .map(|_| T::from_f64_lossy(rng.gen_range(-limit..limit)))
            .collect();
        Tensor::new(shape.to_vec(), data).expect("param shape")
    };
    let shapes = layer.param_shapes();
    match *layer {
        LayerSpec::Conv2d { in_ch, kernel, .. } => vec![
            he(&shapes[0], in_ch * kernel * kernel, rng),
            Tensor::zeros(&shapes[1]),
        ],
        LayerSpec::DepthwiseConv2d { kernel, .. } => vec![
            he(&shapes[0], kernel * kernel, rng),
            Tensor::zeros(&shapes[1]),
        ],
        LayerSpec::PointwiseConv2d { in_ch, .. } => {
            vec![he(&shapes[0], in_ch, rng), Tensor::zeros(&shapes[1])]
        }
        LayerSpec::Dense { in_dim, .. } => {
            vec![he(&shapes[0], in_dim, rng), Tensor::zeros(&shapes[1])]
        }
        LayerSpec::SqueezeExcite { ch, reduction } => {
            let r = LayerSpec::se_reduced(ch, reduction);
            vec![
                he(&shapes[0], ch, rng),
                Tensor::zeros(&shapes[1]),
                he(&shapes[2], r, rng),
                Tensor::zeros(&shapes[3]),
            ]
        }
        LayerSpec::BatchNorm { .. } => {
            vec![Tensor::full(&shapes[0], T::one()), Tensor::zeros(&shapes[1])]
        }
        _ => Vec::new(),
    }
}
