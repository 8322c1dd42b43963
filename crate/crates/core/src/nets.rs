//! Network architecture descriptions and their runtime form.
//!
//! A [`NetworkSpec`] is a serializable layer list; [`init_weights`] turns it
//! into a [`Network`] holding parameters and batch-norm running statistics.
//! Builders cover the image classifier, the CycleGAN generator and
//! discriminator, and the small MLPs used on 2-D point data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stage_rng, stage_seed};
use crate::tensor::{Activation, BnForward, Padding, Tape, Tensor, Value};

const BN_EPS: f64 = 1e-5;
const BN_DECAY: f64 = 0.9;
const INIT_STD: f64 = 0.02;

/// One layer of a network. Convolutions use `Same` padding throughout, which
/// for stride 1 preserves spatial extents and for stride s divides them by s
/// (rounding up).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        kernel: usize,
        out_channels: usize,
        stride: usize,
        batch_norm: bool,
        activation: Activation,
        bias: bool,
    },
    Deconv2d {
        kernel: usize,
        out_channels: usize,
        up_factor: usize,
        batch_norm: bool,
        activation: Activation,
    },
    MaxPool2d {
        kernel: usize,
        stride: usize,
        batch_norm: bool,
    },
    /// `blocks` residual units, each two same-channel convolutions with an
    /// additive skip.
    Residual { kernel: usize, blocks: usize },
    Flatten,
    Dense { width: usize, activation: Activation },
    /// Mean over spatial positions, (h,w,c) → (c).
    SpatialMean,
}

/// Ordered layer list with declared per-sample input and output shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Walk the layer list from `input_shape`, returning each layer's
    /// per-sample output shape.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.clone();
        let mut chain = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer_output_shape(layer, &shape)
                .map_err(|e| Error::dimension(format!("layer {i}: {e}")))?;
            chain.push(shape.clone());
        }
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        let chain = self.shape_chain()?;
        let last = chain.last().unwrap_or(&self.input_shape);
        if *last != self.output_shape {
            return Err(Error::dimension(format!(
                "declared output shape {:?} does not match computed {:?}",
                self.output_shape, last
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: NetworkSpec =
            serde_json::from_str(s).map_err(|e| Error::config(format!("network spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn spatial(shape: &[usize]) -> std::result::Result<(usize, usize, usize), String> {
    match *shape {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(format!("expected (h,w,c) input, got {shape:?}")),
    }
}

fn layer_output_shape(
    layer: &LayerSpec,
    input: &[usize],
) -> std::result::Result<Vec<usize>, String> {
    match layer {
        LayerSpec::Conv2d { out_channels, stride, .. } => {
            let (h, w, _) = spatial(input)?;
            Ok(vec![h.div_ceil(*stride), w.div_ceil(*stride), *out_channels])
        }
        LayerSpec::Deconv2d { out_channels, up_factor, .. } => {
            let (h, w, _) = spatial(input)?;
            Ok(vec![h * up_factor, w * up_factor, *out_channels])
        }
        LayerSpec::MaxPool2d { stride, .. } => {
            let (h, w, c) = spatial(input)?;
            Ok(vec![h.div_ceil(*stride), w.div_ceil(*stride), c])
        }
        LayerSpec::Residual { .. } => {
            let (h, w, c) = spatial(input)?;
            Ok(vec![h, w, c])
        }
        LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        LayerSpec::Dense { width, .. } => {
            if input.len() != 1 {
                return Err(format!("dense layer needs a flat input, got {input:?}"));
            }
            Ok(vec![*width])
        }
        LayerSpec::SpatialMean => {
            let (_, _, c) = spatial(input)?;
            Ok(vec![c])
        }
    }
}

/// Image CNN classifier: 48×48×1 → two conv/pool/norm stages → two
/// width-256 dense layers → 7 logits.
pub fn build_cnn_classifier() -> NetworkSpec {
    NetworkSpec {
        input_shape: vec![48, 48, 1],
        output_shape: vec![7],
        layers: vec![
            LayerSpec::Conv2d {
                kernel: 3,
                out_channels: 64,
                stride: 1,
                batch_norm: false,
                activation: Activation::Relu,
                bias: true,
            },
            LayerSpec::MaxPool2d { kernel: 3, stride: 2, batch_norm: true },
            LayerSpec::Conv2d {
                kernel: 3,
                out_channels: 128,
                stride: 1,
                batch_norm: false,
                activation: Activation::Relu,
                bias: true,
            },
            LayerSpec::MaxPool2d { kernel: 3, stride: 2, batch_norm: true },
            LayerSpec::Flatten,
            LayerSpec::Dense { width: 256, activation: Activation::Relu },
            LayerSpec::Dense { width: 256, activation: Activation::Relu },
            LayerSpec::Dense { width: 7, activation: Activation::Identity },
        ],
    }
}

/// CycleGAN generator: 7×7/64 entry, two stride-2 downsamplers, six residual
/// blocks, two ×2 deconvolutions, 7×7/1 exit; Conv-BN-ReLU at every
/// non-residual stage. 48×48×1 in, 48×48×1 out.
pub fn build_cyclegan_generator() -> NetworkSpec {
    let conv = |kernel, out_channels, stride| LayerSpec::Conv2d {
        kernel,
        out_channels,
        stride,
        batch_norm: true,
        activation: Activation::Relu,
        bias: false,
    };
    NetworkSpec {
        input_shape: vec![48, 48, 1],
        output_shape: vec![48, 48, 1],
        layers: vec![
            conv(7, 64, 1),
            conv(3, 128, 2),
            conv(3, 256, 2),
            LayerSpec::Residual { kernel: 3, blocks: 6 },
            LayerSpec::Deconv2d {
                kernel: 3,
                out_channels: 128,
                up_factor: 2,
                batch_norm: true,
                activation: Activation::Relu,
            },
            LayerSpec::Deconv2d {
                kernel: 3,
                out_channels: 64,
                up_factor: 2,
                batch_norm: true,
                activation: Activation::Relu,
            },
            conv(7, 1, 1),
        ],
    }
}

/// CycleGAN discriminator: four 4×4 stride-2 Conv-BN-ReLU stages
/// (64,128,256,512), a final 4×4 stride-1 convolution to one channel, then
/// the mean over the remaining spatial positions as the scalar score.
pub fn build_cyclegan_discriminator() -> NetworkSpec {
    let stage = |out_channels| LayerSpec::Conv2d {
        kernel: 4,
        out_channels,
        stride: 2,
        batch_norm: true,
        activation: Activation::Relu,
        bias: false,
    };
    NetworkSpec {
        input_shape: vec![48, 48, 1],
        output_shape: vec![1],
        layers: vec![
            stage(64),
            stage(128),
            stage(256),
            stage(512),
            LayerSpec::Conv2d {
                kernel: 4,
                out_channels: 1,
                stride: 1,
                batch_norm: false,
                activation: Activation::Identity,
                bias: true,
            },
            LayerSpec::SpatialMean,
        ],
    }
}

/// 2 → hidden (relu) → hidden (relu) → 2 MLP for translating 2-D points.
pub fn build_toy_generator(hidden: usize) -> NetworkSpec {
    assert!(hidden >= 1);
    NetworkSpec {
        input_shape: vec![2],
        output_shape: vec![2],
        layers: vec![
            LayerSpec::Dense { width: hidden, activation: Activation::Relu },
            LayerSpec::Dense { width: hidden, activation: Activation::Relu },
            LayerSpec::Dense { width: 2, activation: Activation::Identity },
        ],
    }
}

/// 2 → hidden (relu) → hidden (relu) → 1 MLP producing a raw, unbounded score.
pub fn build_toy_discriminator(hidden: usize) -> NetworkSpec {
    assert!(hidden >= 1);
    NetworkSpec {
        input_shape: vec![2],
        output_shape: vec![1],
        layers: vec![
            LayerSpec::Dense { width: hidden, activation: Activation::Relu },
            LayerSpec::Dense { width: hidden, activation: Activation::Relu },
            LayerSpec::Dense { width: 1, activation: Activation::Identity },
        ],
    }
}

/// One named parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub name: String,
    pub value: Value,
}

#[derive(Debug, Clone)]
struct BnRunning {
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// Forward mode: training normalizes by batch statistics and folds them into
/// the running averages; evaluation normalizes by the running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A spec plus its parameters and batch-norm running statistics.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<ParamTensor>,
    bn_running: Vec<BnRunning>,
}

/// Gaussian(0, 0.02) weights, zero biases, batch-norm gamma 1 / beta 0,
/// deterministic per seed.
pub fn init_weights(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = stage_rng(seed, "init");
    let mut params: Vec<ParamTensor> = Vec::new();
    let mut bn_running = Vec::new();
    let mut shape = spec.input_shape.clone();

    fn weight<R: rand::Rng>(rng: &mut R, name: String, s: &[usize]) -> ParamTensor {
        ParamTensor {
            name,
            value: Value::randn(s, 0.0, INIT_STD, rng),
        }
    }
    fn zeros(name: String, n: usize) -> ParamTensor {
        ParamTensor {
            name,
            value: Value::zeros(&[n]),
        }
    }

    let push_bn = |params: &mut Vec<ParamTensor>, bn: &mut Vec<BnRunning>, i: usize, c: usize| {
        params.push(ParamTensor {
            name: format!("layer{i}.gamma"),
            value: Value::full(&[c], 1.0),
        });
        params.push(zeros(format!("layer{i}.beta"), c));
        bn.push(BnRunning {
            mean: vec![0.0; c],
            var: vec![1.0; c],
        });
    };

    for (i, layer) in spec.layers.iter().enumerate() {
        match layer {
            LayerSpec::Conv2d { kernel, out_channels, batch_norm, bias, .. } => {
                let cin = *shape.last().expect("spatial input");
                params.push(weight(
                    &mut rng,
                    format!("layer{i}.weight"),
                    &[*kernel, *kernel, cin, *out_channels],
                ));
                if *bias {
                    params.push(zeros(format!("layer{i}.bias"), *out_channels));
                }
                if *batch_norm {
                    push_bn(&mut params, &mut bn_running, i, *out_channels);
                }
            }
            LayerSpec::Deconv2d { kernel, out_channels, batch_norm, .. } => {
                let cin = *shape.last().expect("spatial input");
                params.push(weight(
                    &mut rng,
                    format!("layer{i}.weight"),
                    &[*kernel, *kernel, *out_channels, cin],
                ));
                if *batch_norm {
                    push_bn(&mut params, &mut bn_running, i, *out_channels);
                }
            }
            LayerSpec::MaxPool2d { batch_norm, .. } => {
                if *batch_norm {
                    let c = *shape.last().expect("spatial input");
                    push_bn(&mut params, &mut bn_running, i, c);
                }
            }
            LayerSpec::Residual { kernel, blocks } => {
                let c = *shape.last().expect("spatial input");
                for b in 0..*blocks {
                    for conv in 1..=2 {
                        params.push(weight(
                            &mut rng,
                            format!("layer{i}.res{b}.conv{conv}.weight"),
                            &[*kernel, *kernel, c, c],
                        ));
                        params.push(zeros(format!("layer{i}.res{b}.conv{conv}.bias"), c));
                    }
                }
            }
            LayerSpec::Flatten | LayerSpec::SpatialMean => {}
            LayerSpec::Dense { width, .. } => {
                let d = shape[0];
                params.push(weight(&mut rng, format!("layer{i}.weight"), &[d, *width]));
                params.push(zeros(format!("layer{i}.bias"), *width));
            }
        }
        shape = layer_output_shape(layer, &shape).map_err(Error::dimension)?;
    }

    Ok(Network {
        spec: spec.clone(),
        params,
        bn_running,
    })
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[ParamTensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// One leaf per parameter tensor, aligned with `params()`. Reusing the
    /// same leaves across several `forward_with` calls on one tape makes
    /// gradients from every call accumulate on the same nodes.
    pub fn make_leaves(&self, tape: &Tape, trainable: bool) -> Vec<Tensor> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), trainable))
            .collect()
    }

    /// Run the network on a batched input of shape `[n] + input_shape`.
    ///
    /// Returns the output and one leaf handle per parameter tensor (aligned
    /// with `params()`), so callers can look up gradients after `backward`.
    /// With `trainable = false` the parameter leaves are constants and the
    /// backward sweep skips their subtrees.
    pub fn forward(
        &mut self,
        tape: &Tape,
        input: &Tensor,
        mode: Mode,
        trainable: bool,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        let leaves = self.make_leaves(tape, trainable);
        let out = self.forward_with(tape, input, mode, &leaves)?;
        Ok((out, leaves))
    }

    /// `forward` against an existing set of parameter leaves.
    pub fn forward_with(
        &mut self,
        tape: &Tape,
        input: &Tensor,
        mode: Mode,
        leaves: &[Tensor],
    ) -> Result<Tensor> {
        let _ = tape;
        if leaves.len() != self.params.len() {
            return Err(Error::contract(format!(
                "{} leaves for {} parameter tensors",
                leaves.len(),
                self.params.len()
            )));
        }
        let expected: Vec<usize> = std::iter::once(input.shape()[0])
            .chain(self.spec.input_shape.iter().copied())
            .collect();
        if input.shape() != expected {
            return Err(Error::dimension(format!(
                "network expects input {:?} (batch + {:?}), got {:?}",
                expected,
                self.spec.input_shape,
                input.shape()
            )));
        }

        let mut cursor = 0usize;
        let mut bn_site = 0usize;
        let mut x = input.clone();
        let layers = self.spec.layers.clone();
        for layer in layers {
            let mut next = || {
                let t = leaves[cursor].clone();
                cursor += 1;
                t
            };
            match layer {
                LayerSpec::Conv2d { stride, batch_norm, activation, bias, .. } => {
                    let w = next();
                    x = x.conv2d(&w, stride, Padding::Same)?;
                    if bias {
                        let b = next();
                        x = x.add_channels(&b)?;
                    }
                    if batch_norm {
                        let gamma = next();
                        let beta = next();
                        x = self.apply_bn(&x, gamma, beta, &mut bn_site, mode)?;
                    }
                    x = x.activation(activation);
                }
                LayerSpec::Deconv2d { up_factor, batch_norm, activation, .. } => {
                    let w = next();
                    x = x.deconv2d(&w, up_factor)?;
                    if batch_norm {
                        let gamma = next();
                        let beta = next();
                        x = self.apply_bn(&x, gamma, beta, &mut bn_site, mode)?;
                    }
                    x = x.activation(activation);
                }
                LayerSpec::MaxPool2d { kernel, stride, batch_norm } => {
                    x = x.max_pool2d(kernel, stride, Padding::Same)?;
                    if batch_norm {
                        let gamma = next();
                        let beta = next();
                        x = self.apply_bn(&x, gamma, beta, &mut bn_site, mode)?;
                    }
                }
                LayerSpec::Residual { blocks, .. } => {
                    for _ in 0..blocks {
                        let w1 = next();
                        let b1 = next();
                        let w2 = next();
                        let b2 = next();
                        let h = x
                            .conv2d(&w1, 1, Padding::Same)?
                            .add_channels(&b1)?
                            .relu()
                            .conv2d(&w2, 1, Padding::Same)?
                            .add_channels(&b2)?;
                        x = h.add(&x)?;
                    }
                }
                LayerSpec::Flatten => {
                    let n = x.shape()[0];
                    let rest: usize = x.shape()[1..].iter().product();
                    x = x.reshape(&[n, rest])?;
                }
                LayerSpec::Dense { activation, .. } => {
                    let w = next();
                    let b = next();
                    x = x.matmul(&w)?.add_rows(&b)?.activation(activation);
                }
                LayerSpec::SpatialMean => {
                    x = x.spatial_mean()?;
                }
            }
        }
        Ok(x)
    }

    fn apply_bn(
        &mut self,
        x: &Tensor,
        gamma: Tensor,
        beta: Tensor,
        bn_site: &mut usize,
        mode: Mode,
    ) -> Result<Tensor> {
        let running = &mut self.bn_running[*bn_site];
        *bn_site += 1;
        match mode {
            Mode::Train => x.batch_norm(
                &gamma,
                &beta,
                BN_EPS,
                BnForward::Train {
                    running: Some((&mut running.mean, &mut running.var)),
                    decay: BN_DECAY,
                },
            ),
            Mode::Eval => x.batch_norm(
                &gamma,
                &beta,
                BN_EPS,
                BnForward::Eval {
                    mean: &running.mean,
                    var: &running.var,
                },
            ),
        }
    }
}

/// Generators G (R→T), F (T→R) and discriminators for both domains.
/// G/F share a spec with independently seeded parameters; likewise D_R/D_T.
#[derive(Debug, Clone)]
pub struct CycleGanModel {
    pub g: Network,
    pub f: Network,
    pub d_r: Network,
    pub d_t: Network,
}

impl CycleGanModel {
    pub fn new(generator: &NetworkSpec, discriminator: &NetworkSpec, seed: u64) -> Result<Self> {
        Ok(Self {
            g: init_weights(generator, stage_seed(seed, "g"))?,
            f: init_weights(generator, stage_seed(seed, "f"))?,
            d_r: init_weights(discriminator, stage_seed(seed, "d_r"))?,
            d_t: init_weights(discriminator, stage_seed(seed, "d_t"))?,
        })
    }

    /// MLP model for 2-D point domains.
    pub fn toy(hidden: usize, seed: u64) -> Result<Self> {
        Self::new(
            &build_toy_generator(hidden),
            &build_toy_discriminator(hidden),
            seed,
        )
    }

    /// Full 48×48 image model.
    pub fn image(seed: u64) -> Result<Self> {
        Self::new(
            &build_cyclegan_generator(),
            &build_cyclegan_discriminator(),
            seed,
        )
    }
}

/// Row-wise softmax of plain logits (inference-side helper).
pub fn softmax(logits: &Value) -> Result<Value> {
    let s = logits.shape();
    if s.len() != 2 {
        return Err(Error::dimension(format!(
            "softmax expects (n,k) logits, got {s:?}"
        )));
    }
    let probs = crate::tensor::softmax_rows(logits.data(), s[0], s[1]);
    Value::new(s.to_vec(), probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stage_rng;

    #[test]
    fn classifier_shape_chain() {
        let spec = build_cnn_classifier();
        spec.validate().unwrap();
        let chain = spec.shape_chain().unwrap();
        // 48 → 24 → 12 under same-padded stride-2 pooling
        assert_eq!(chain[1], vec![24, 24, 64]);
        assert_eq!(chain[3], vec![12, 12, 128]);
        assert_eq!(chain[4], vec![18432]);
        assert_eq!(chain.last().unwrap(), &vec![7]);
    }

    #[test]
    fn classifier_forward_gives_seven_logits_and_softmax_normalizes() {
        let mut rng = stage_rng(31, "cnn");
        let mut net = init_weights(&build_cnn_classifier(), 5).unwrap();
        let tape = Tape::new();
        let x = tape.constant(Value::randn(&[2, 48, 48, 1], 0.0, 1.0, &mut rng));
        let (out, _) = net.forward(&tape, &x, Mode::Train, false).unwrap();
        assert_eq!(out.shape(), &[2, 7]);
        let probs = softmax(out.value()).unwrap();
        for row in probs.data().chunks_exact(7) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_shape_and_param_determinism() {
        let spec = build_cyclegan_generator();
        spec.validate().unwrap();
        assert_eq!(spec.output_shape, vec![48, 48, 1]);
        let a = init_weights(&spec, 9).unwrap();
        let b = init_weights(&spec, 9).unwrap();
        assert_eq!(a.param_count(), b.param_count());
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.value.data(), pb.value.data(), "{}", pa.name);
        }
    }

    #[test]
    fn generator_forward_roundtrip_shape() {
        let mut rng = stage_rng(32, "gen");
        let mut net = init_weights(&build_cyclegan_generator(), 3).unwrap();
        let tape = Tape::new();
        let x = tape.constant(Value::randn(&[1, 48, 48, 1], 0.0, 1.0, &mut rng));
        let (out, _) = net.forward(&tape, &x, Mode::Train, false).unwrap();
        assert_eq!(out.shape(), &[1, 48, 48, 1]);
        assert!(out.value().all_finite());
    }

    #[test]
    fn discriminator_spatial_chain_and_scalar_score() {
        let spec = build_cyclegan_discriminator();
        spec.validate().unwrap();
        let chain = spec.shape_chain().unwrap();
        assert_eq!(chain[0][0], 24);
        assert_eq!(chain[1][0], 12);
        assert_eq!(chain[2][0], 6);
        assert_eq!(chain[3][0], 3);
        assert_eq!(chain.last().unwrap(), &vec![1]);

        let mut rng = stage_rng(33, "disc");
        let mut net = init_weights(&spec, 4).unwrap();
        let tape = Tape::new();
        let x = tape.constant(Value::randn(&[3, 48, 48, 1], 0.0, 1.0, &mut rng));
        let (out, _) = net.forward(&tape, &x, Mode::Train, false).unwrap();
        assert_eq!(out.shape(), &[3, 1]);
    }

    #[test]
    fn discriminator_with_zero_params_scores_final_bias() {
        let mut rng = stage_rng(34, "discbias");
        let mut net = init_weights(&build_cyclegan_discriminator(), 4).unwrap();
        for p in net.params_mut() {
            let fill = if p.name == "layer4.bias" { 0.7 } else { 0.0 };
            for v in p.value.data_mut() {
                *v = fill;
            }
        }
        let tape = Tape::new();
        let x = tape.constant(Value::randn(&[2, 48, 48, 1], 0.0, 1.0, &mut rng));
        let (out, _) = net.forward(&tape, &x, Mode::Train, false).unwrap();
        for s in out.data() {
            assert!((s - 0.7).abs() < 1e-12, "score {s}");
        }
    }

    #[test]
    fn residual_blocks_with_zero_convs_are_identity() {
        let spec = NetworkSpec {
            input_shape: vec![6, 6, 3],
            output_shape: vec![6, 6, 3],
            layers: vec![LayerSpec::Residual { kernel: 3, blocks: 2 }],
        };
        let mut net = init_weights(&spec, 7).unwrap();
        for p in net.params_mut() {
            for v in p.value.data_mut() {
                *v = 0.0;
            }
        }
        let mut rng = stage_rng(35, "resid");
        let tape = Tape::new();
        let x = tape.constant(Value::randn(&[1, 6, 6, 3], 0.0, 1.0, &mut rng));
        let (out, _) = net.forward(&tape, &x, Mode::Train, false).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn toy_networks_shapes_and_zero_case() {
        let g = build_toy_generator(64);
        let d = build_toy_discriminator(64);
        g.validate().unwrap();
        d.validate().unwrap();

        let mut net = init_weights(&g, 11).unwrap();
        for p in net.params_mut() {
            for v in p.value.data_mut() {
                *v = 0.0;
            }
        }
        let tape = Tape::new();
        let x = tape.constant(Value::from_rows(&[vec![1.5, -2.0]]).unwrap());
        let (out, _) = net.forward(&tape, &x, Mode::Train, false).unwrap();
        assert_eq!(out.shape(), &[1, 2]);
        assert_eq!(out.data(), &[0.0, 0.0]);
    }

    #[test]
    fn toy_discriminator_score_is_unbounded() {
        let mut net = init_weights(&build_toy_discriminator(8), 13).unwrap();
        for p in net.params_mut() {
            for v in p.value.data_mut() {
                *v = 3.0;
            }
        }
        let tape = Tape::new();
        let x = tape.constant(Value::from_rows(&[vec![5.0, 5.0]]).unwrap());
        let (out, _) = net.forward(&tape, &x, Mode::Train, false).unwrap();
        assert_eq!(out.shape(), &[1, 1]);
        assert!(out.data()[0] > 1.0, "raw score {}", out.data()[0]);
    }

    #[test]
    fn toy_generator_gradient_reaches_first_layer() {
        let mut rng = stage_rng(36, "toygrad");
        let mut net = init_weights(&build_toy_generator(16), 17).unwrap();
        let tape = Tape::new();
        let x = tape.constant(Value::randn(&[4, 2], 0.0, 3.0, &mut rng));
        let (out, leaves) = net.forward(&tape, &x, Mode::Train, true).unwrap();
        let loss = out.square().mean();
        let grads = loss.backward().unwrap();
        let g0 = grads.get(&leaves[0]);
        assert!(g0.data().iter().any(|v| *v != 0.0), "first-layer grad all zero");
    }

    #[test]
    fn init_statistics_and_zero_biases() {
        let spec = NetworkSpec {
            input_shape: vec![400],
            output_shape: vec![300],
            layers: vec![LayerSpec::Dense { width: 300, activation: Activation::Identity }],
        };
        let net = init_weights(&spec, 21).unwrap();
        let w = &net.params()[0].value;
        assert_eq!(w.numel(), 120_000);
        let mean = w.data().iter().sum::<f64>() / w.numel() as f64;
        let sd = (w.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / w.numel() as f64)
            .sqrt();
        assert!((sd - 0.02).abs() < 0.001, "sd {sd}");
        assert!(net.params()[1].value.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = build_cyclegan_generator();
        let json = spec.to_json();
        let back = NetworkSpec::from_json(&json).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn every_builder_forward_matches_declared_output_shape() {
        let mut rng = stage_rng(37, "allspecs");
        for spec in [
            build_cnn_classifier(),
            build_cyclegan_generator(),
            build_cyclegan_discriminator(),
            build_toy_generator(8),
            build_toy_discriminator(8),
        ] {
            let mut net = init_weights(&spec, 23).unwrap();
            let mut in_shape = vec![2];
            in_shape.extend_from_slice(&spec.input_shape);
            let tape = Tape::new();
            let x = tape.constant(Value::randn(&in_shape, 0.0, 1.0, &mut rng));
            let (out, _) = net.forward(&tape, &x, Mode::Train, false).unwrap();
            let mut want = vec![2];
            want.extend_from_slice(&spec.output_shape);
            assert_eq!(out.shape(), want, "spec {:?}", spec.output_shape);
        }
    }

    #[test]
    fn full_forward_backward_is_finite_for_each_image_architecture() {
        let mut rng = stage_rng(38, "finite");
        for (spec, classification) in [
            (build_cnn_classifier(), true),
            (build_cyclegan_generator(), false),
            (build_cyclegan_discriminator(), false),
        ] {
            let mut net = init_weights(&spec, 29).unwrap();
            let tape = Tape::new();
            let mut in_shape = vec![2];
            in_shape.extend_from_slice(&spec.input_shape);
            let x = tape.constant(Value::randn(&in_shape, 0.0, 1.0, &mut rng));
            let (out, leaves) = net.forward(&tape, &x, Mode::Train, true).unwrap();
            let loss = if classification {
                out.softmax_cross_entropy(&[0, 3]).unwrap()
            } else {
                out.square().mean()
            };
            assert!(loss.item().unwrap().is_finite());
            let grads = loss.backward().unwrap();
            for leaf in &leaves {
                assert!(grads.get(leaf).all_finite(), "non-finite gradient");
            }
        }
    }
}
