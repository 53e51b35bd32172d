//! Finite-difference gradient checks shared by the per-layer tests and the acceptance runner.

use agropath::nn::{cross_entropy_loss, mse_loss, Activation, LayerSpec, Network};
use agropath::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-3;
pub const CONFIGS: usize = 20;

#[derive(Clone, Copy)]
pub enum Loss {
    /// Random linear functional of the output.
    Linear,
    CrossEntropy,
    MeanSquared,
}

pub struct Case {
    pub layers: Vec<LayerSpec>,
    pub input_shape: Vec<usize>,
    pub batch: usize,
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

struct Objective {
    loss: Loss,
    weights: Tensor<f64>,
    labels: Vec<usize>,
    targets: Tensor<f64>,
}

impl Objective {
    fn value_and_grad(&self, out: &Tensor<f64>) -> (f64, Tensor<f64>) {
        match self.loss {
            Loss::Linear => {
                let v = out.data().iter().zip(self.weights.data()).map(|(a, b)| a * b).sum();
                (v, self.weights.clone())
            }
            Loss::CrossEntropy => cross_entropy_loss(out, &self.labels).unwrap(),
            Loss::MeanSquared => mse_loss(out, &self.targets).unwrap(),
        }
    }
}

fn value(net: &Network<f64>, x: &Tensor<f64>, obj: &Objective) -> f64 {
    let mut probe = net.clone();
    let (out, _) = probe.forward(x).unwrap();
    obj.value_and_grad(&out).0
}

/// Relative error per entry; entries where both gradients are tiny are
/// compared absolutely instead.
fn entry_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-6 {
        (analytic - numeric).abs() / 1e-6 * 1e-3
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Returns the worst error over every input and parameter entry.
fn check_case(case: &Case, loss: Loss, rng: &mut ChaCha8Rng, prepare: fn(&mut Tensor<f64>)) -> f64 {
    let net = Network::<f64>::new(case.layers.clone(), &case.input_shape, rng.gen()).unwrap();
    let mut net = net;
    // Nonzero biases and non-trivial affine parameters.
    for layer in net.params_mut() {
        for t in layer {
            for v in t.data_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
    }
    let mut in_shape = vec![case.batch];
    in_shape.extend_from_slice(&case.input_shape);
    let mut x = random_tensor(rng, &in_shape);
    prepare(&mut x);

    let out_shape = {
        let mut probe = net.clone();
        probe.forward(&x).unwrap().0.shape().to_vec()
    };
    let k = *out_shape.last().unwrap();
    let obj = Objective {
        loss,
        weights: random_tensor(rng, &out_shape),
        labels: (0..case.batch).map(|_| rng.gen_range(0..k)).collect(),
        targets: random_tensor(rng, &out_shape),
    };

    let mut probe = net.clone();
    let (out, cache) = probe.forward(&x).unwrap();
    let (_, grad_out) = obj.value_and_grad(&out);
    let grads = net.backward(&cache, &grad_out).unwrap();

    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += H;
        let mut xm = x.clone();
        xm.data_mut()[i] -= H;
        let numeric = (value(&net, &xp, &obj) - value(&net, &xm, &obj)) / (2.0 * H);
        worst = worst.max(entry_error(grads.input.data()[i], numeric));
    }
    for l in 0..net.params().len() {
        for p in 0..net.params()[l].len() {
            for i in 0..net.params()[l][p].len() {
                let mut plus = net.clone();
                plus.params_mut()[l][p].data_mut()[i] += H;
                let mut minus = net.clone();
                minus.params_mut()[l][p].data_mut()[i] -= H;
                let numeric = (value(&plus, &x, &obj) - value(&minus, &x, &obj)) / (2.0 * H);
                worst = worst.max(entry_error(grads.params[l][p].data()[i], numeric));
            }
        }
    }
    worst
}

/// Worst error of one variant over [`CONFIGS`] random configurations.
pub fn worst_error(v: &Variant) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(v.name.len() as u64 * 7919);
    let mut worst: f64 = 0.0;
    for _ in 0..CONFIGS {
        let case = (v.make)(&mut rng);
        worst = worst.max(check_case(&case, v.loss, &mut rng, v.prepare));
    }
    worst
}

pub struct Variant {
    pub name: &'static str,
    pub loss: Loss,
    pub make: fn(&mut ChaCha8Rng) -> Case,
    pub prepare: fn(&mut Tensor<f64>),
}

fn no_prepare(_: &mut Tensor<f64>) {}

pub fn image_shape(rng: &mut ChaCha8Rng, ch: usize) -> Vec<usize> {
    vec![ch, rng.gen_range(3..7), rng.gen_range(3..7)]
}

fn conv2d(rng: &mut ChaCha8Rng) -> Case {
    let in_ch = rng.gen_range(1..4);
    let kernel = [1, 3][rng.gen_range(0..2)];
    Case {
        layers: vec![LayerSpec::Conv2d {
            in_ch,
            out_ch: rng.gen_range(1..4),
            kernel,
            stride: rng.gen_range(1..3),
            padding: rng.gen_range(0..=kernel / 2),
        }],
        input_shape: image_shape(rng, in_ch),
        batch: rng.gen_range(1..3),
    }
}

fn depthwise(rng: &mut ChaCha8Rng) -> Case {
    let ch = rng.gen_range(1..4);
    let kernel = [1, 3][rng.gen_range(0..2)];
    Case {
        layers: vec![LayerSpec::DepthwiseConv2d {
            ch,
            kernel,
            stride: rng.gen_range(1..3),
            padding: rng.gen_range(0..=kernel / 2),
        }],
        input_shape: image_shape(rng, ch),
        batch: rng.gen_range(1..3),
    }
}

fn pointwise(rng: &mut ChaCha8Rng) -> Case {
    let in_ch = rng.gen_range(1..5);
    Case {
        layers: vec![LayerSpec::PointwiseConv2d {
            in_ch,
            out_ch: rng.gen_range(1..5),
        }],
        input_shape: image_shape(rng, in_ch),
        batch: rng.gen_range(1..3),
    }
}

/// Spatial or flat input, chosen at random.
fn batch_norm(rng: &mut ChaCha8Rng) -> Case {
    let ch = rng.gen_range(1..4);
    let flat = rng.gen_bool(0.3);
    Case {
        layers: vec![LayerSpec::batch_norm(ch)],
        input_shape: if flat { vec![ch] } else { image_shape(rng, ch) },
        batch: if flat { rng.gen_range(2..6) } else { rng.gen_range(1..3) },
    }
}

fn single_image_layer(rng: &mut ChaCha8Rng, layer: LayerSpec) -> Case {
    let ch = rng.gen_range(1..4);
    Case {
        layers: vec![layer],
        input_shape: image_shape(rng, ch),
        batch: rng.gen_range(1..3),
    }
}

fn swish(rng: &mut ChaCha8Rng) -> Case {
    single_image_layer(rng, LayerSpec::Activation(Activation::Swish))
}

fn sigmoid(rng: &mut ChaCha8Rng) -> Case {
    Case {
        layers: vec![LayerSpec::Activation(Activation::Sigmoid)],
        input_shape: vec![rng.gen_range(1..8)],
        batch: rng.gen_range(1..3),
    }
}

fn squeeze_excite(rng: &mut ChaCha8Rng) -> Case {
    let ch = rng.gen_range(1..9);
    Case {
        layers: vec![LayerSpec::SqueezeExcite {
            ch,
            reduction: rng.gen_range(1..5),
        }],
        input_shape: image_shape(rng, ch),
        batch: rng.gen_range(1..3),
    }
}

/// Spreads values so each channel's maximum leads the runner-up by a margin
/// far larger than the finite-difference step.
fn separate_maxima(x: &mut Tensor<f64>) {
    let shape = x.shape().to_vec();
    let plane = shape[2] * shape[3];
    for chunk in x.data_mut().chunks_mut(plane) {
        let mut order: Vec<usize> = (0..chunk.len()).collect();
        order.sort_by(|&a, &b| chunk[a].total_cmp(&chunk[b]));
        for (rank, &i) in order.iter().enumerate() {
            chunk[i] = rank as f64 * 0.05 - 0.5 + chunk[i] * 1e-3;
        }
    }
}

fn global_max_pool(rng: &mut ChaCha8Rng) -> Case {
    single_image_layer(rng, LayerSpec::GlobalMaxPool)
}

fn global_avg_pool(rng: &mut ChaCha8Rng) -> Case {
    single_image_layer(rng, LayerSpec::GlobalAvgPool)
}

fn dense(rng: &mut ChaCha8Rng) -> Case {
    let in_dim = rng.gen_range(1..7);
    Case {
        layers: vec![LayerSpec::Dense {
            in_dim,
            out_dim: rng.gen_range(1..6),
        }],
        input_shape: vec![in_dim],
        batch: rng.gen_range(1..4),
    }
}

fn softmax_cross_entropy(rng: &mut ChaCha8Rng) -> Case {
    let in_dim = rng.gen_range(1..6);
    Case {
        layers: vec![
            LayerSpec::Dense {
                in_dim,
                out_dim: rng.gen_range(2..6),
            },
            LayerSpec::Softmax,
        ],
        input_shape: vec![in_dim],
        batch: rng.gen_range(1..4),
    }
}

fn regression_mse(rng: &mut ChaCha8Rng) -> Case {
    let in_dim = rng.gen_range(1..6);
    let hidden = rng.gen_range(1..4);
    Case {
        layers: vec![
            LayerSpec::Dense {
                in_dim,
                out_dim: hidden,
            },
            LayerSpec::Activation(Activation::Swish),
            LayerSpec::Dense {
                in_dim: hidden,
                out_dim: 1,
            },
        ],
        input_shape: vec![in_dim],
        batch: rng.gen_range(1..4),
    }
}

/// A full MBConv-style stack end to end.
fn composed_block(rng: &mut ChaCha8Rng) -> Case {
    Case {
        layers: vec![
            LayerSpec::Conv2d {
                in_ch: 2,
                out_ch: 3,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::batch_norm(3),
            LayerSpec::Activation(Activation::Swish),
            LayerSpec::PointwiseConv2d { in_ch: 3, out_ch: 4 },
            LayerSpec::DepthwiseConv2d {
                ch: 4,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            LayerSpec::SqueezeExcite { ch: 4, reduction: 2 },
            LayerSpec::GlobalAvgPool,
            LayerSpec::Dense { in_dim: 4, out_dim: 3 },
            LayerSpec::Softmax,
        ],
        input_shape: vec![2, 4, 4],
        batch: rng.gen_range(2..4),
    }
}

pub fn variants() -> Vec<Variant> {
    let v = |name, loss, make: fn(&mut ChaCha8Rng) -> Case| Variant {
        name,
        loss,
        make,
        prepare: no_prepare,
    };
    vec![
        v("conv2d", Loss::Linear, conv2d),
        v("depthwise", Loss::Linear, depthwise),
        v("pointwise", Loss::Linear, pointwise),
        v("batch_norm", Loss::Linear, batch_norm),
        v("swish", Loss::Linear, swish),
        v("sigmoid", Loss::Linear, sigmoid),
        v("squeeze_excite", Loss::Linear, squeeze_excite),
        Variant {
            prepare: separate_maxima,
            ..v("global_max_pool", Loss::Linear, global_max_pool)
        },
        v("global_avg_pool", Loss::Linear, global_avg_pool),
        v("dense", Loss::Linear, dense),
        v("softmax_cross_entropy", Loss::CrossEntropy, softmax_cross_entropy),
        v("regression_mse", Loss::MeanSquared, regression_mse),
        v("composed_block", Loss::CrossEntropy, composed_block),
    ]
}
