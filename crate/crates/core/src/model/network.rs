//! The encoder-decoder network: assembly, forward passes in training and
//! inference mode, and the full backward pass.
//!
//! Level `l` of the encoder runs two 3x3 convolution units with
//! `base_features * 2^l` output channels. With residual learning enabled the
//! output of the first unit is added to the output of the second before the
//! 2x2 max pooling. The decoder mirrors this: nearest-neighbour upsampling, a
//! 2x2 "up-convolution" (plus ReLU) that halves the channels, concatenation
//! with the encoder output of the same level (encoder channels first), and a
//! residual two-unit block. A final 1x1 convolution maps to two logits per
//! pixel; channel 0 is myocardium, channel 1 background.

use super::config::{BlockOrder, NetworkConfig};
use super::maps::ProbMap;
use super::ModelError;
use crate::layers::{
    batchnorm_grad, batchnorm_infer, batchnorm_train, concat_channels, concat_channels_grad,
    conv2d, conv2d_grad, maxpool2, maxpool2_grad, relu, relu_grad, residual_add,
    softmax_channels, softmax_channels_grad, upsample_nn, upsample_nn_grad, BatchNormCache,
    BatchNormParams, ConvParams, Padding, PoolCache,
};
use crate::rng::RngStream;
use crate::tensor::{random_normal, Real, Tensor};

/// One convolution followed by ReLU and (optionally) batch normalization, in
/// the configured order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvUnit<T: Real> {
    pub conv: ConvParams<T>,
    pub bn: Option<BatchNormParams<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<T: Real> {
    pub first: ConvUnit<T>,
    pub second: ConvUnit<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Real = f32> {
    config: NetworkConfig,
    encoder: Vec<ConvBlock<T>>,
    /// `up[l]` maps level `l + 1` channels to level `l` channels.
    up: Vec<ConvParams<T>>,
    decoder: Vec<ConvBlock<T>>,
    head: ConvParams<T>,
}

/// Parameter gradients, laid out exactly like the network they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T: Real = f32>(Network<T>);

impl<T: Real> Gradients<T> {
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.0.parameters()
    }

    pub fn names(&self) -> Vec<String> {
        self.0.parameter_names()
    }

    pub fn into_tensors(self) -> Vec<Tensor<T>> {
        self.0.parameters().into_iter().cloned().collect()
    }
}

#[derive(Debug, Clone)]
struct UnitCache<T: Real> {
    input: Tensor<T>,
    relu_input: Tensor<T>,
    bn: Option<BatchNormCache<T>>,
}

#[derive(Debug, Clone)]
struct BlockCache<T: Real> {
    first: UnitCache<T>,
    second: UnitCache<T>,
}

#[derive(Debug, Clone)]
struct UpCache<T: Real> {
    upsampled: Tensor<T>,
    relu_input: Tensor<T>,
}

/// Activations recorded by [`Network::forward_train`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Real> {
    levels: usize,
    batch: [usize; 4],
    encoder: Vec<BlockCache<T>>,
    pools: Vec<PoolCache>,
    up: Vec<UpCache<T>>,
    decoder: Vec<BlockCache<T>>,
    head_input: Tensor<T>,
    probs: Tensor<T>,
}

fn he_conv<T: Real>(rng: &mut RngStream, cout: usize, cin: usize, k: usize) -> Result<ConvParams<T>, ModelError> {
    let std = (2.0 / (cin * k * k) as f64).sqrt();
    let w = random_normal(rng, &[cout, cin, k, k], 0.0, std)?;
    Ok(ConvParams::new(w, Tensor::zeros(&[cout])?)?)
}

impl<T: Real> ConvUnit<T> {
    fn build(rng: &mut RngStream, cin: usize, cout: usize, batchnorm: bool) -> Result<Self, ModelError> {
        Ok(Self {
            conv: he_conv(rng, cout, cin, 3)?,
            bn: batchnorm.then(|| BatchNormParams::new(cout)),
        })
    }

    fn forward_train(&mut self, x: &Tensor<T>, order: BlockOrder) -> Result<(Tensor<T>, UnitCache<T>), ModelError> {
        let z = conv2d(x, &self.conv, Padding::same(3))?;
        let mut bn_cache = None;
        let mut normalize = |t: Tensor<T>| -> Result<Tensor<T>, ModelError> {
            match self.bn.as_mut() {
                Some(bn) => {
                    let (y, cache, stats) = batchnorm_train(&t, bn)?;
                    bn.apply_running_stats(stats);
                    bn_cache = Some(cache);
                    Ok(y)
                }
                None => Ok(t),
            }
        };
        let (out, relu_input) = match order {
            BlockOrder::ConvBnRelu => {
                let b = normalize(z)?;
                (relu(&b), b)
            }
            BlockOrder::ConvReluBn => {
                let r = relu(&z);
                (normalize(r)?, z)
            }
        };
        Ok((
            out,
            UnitCache {
                input: x.clone(),
                relu_input,
                bn: bn_cache,
            },
        ))
    }

    fn forward_infer(&self, x: &Tensor<T>, order: BlockOrder) -> Result<Tensor<T>, ModelError> {
        let z = conv2d(x, &self.conv, Padding::same(3))?;
        let normalize = |t: Tensor<T>| -> Result<Tensor<T>, ModelError> {
            match &self.bn {
                Some(bn) => Ok(batchnorm_infer(&t, bn)?),
                None => Ok(t),
            }
        };
        Ok(match order {
            BlockOrder::ConvBnRelu => relu(&normalize(z)?),
            BlockOrder::ConvReluBn => normalize(relu(&z))?,
        })
    }

    /// Returns the gradient with respect to the unit input and writes
    /// parameter gradients into `grad`.
    fn backward(
        &self,
        cache: &UnitCache<T>,
        upstream: &Tensor<T>,
        order: BlockOrder,
        grad: &mut ConvUnit<T>,
    ) -> Result<Tensor<T>, ModelError> {
        let mut denormalize = |u: &Tensor<T>| -> Result<Tensor<T>, ModelError> {
            match (&cache.bn, grad.bn.as_mut()) {
                (Some(c), Some(g)) => {
                    let bg = batchnorm_grad(c, u)?;
                    g.gamma = bg.d_gamma;
                    g.beta = bg.d_beta;
                    Ok(bg.d_input)
                }
                (None, None) => Ok(u.clone()),
                _ => Err(ModelError::Cache("batch-norm presence differs between cache and network".into())),
            }
        };
        let dz = match order {
            BlockOrder::ConvBnRelu => {
                let db = relu_grad(&cache.relu_input, upstream)?;
                denormalize(&db)?
            }
            BlockOrder::ConvReluBn => {
                let dr = denormalize(upstream)?;
                relu_grad(&cache.relu_input, &dr)?
            }
        };
        let cg = conv2d_grad(&cache.input, &self.conv, Padding::same(3), &dz)?;
        grad.conv.weights = cg.d_weights;
        grad.conv.bias = cg.d_bias;
        Ok(cg.d_input)
    }
}

impl<T: Real> ConvBlock<T> {
    fn build(rng: &mut RngStream, cin: usize, cout: usize, batchnorm: bool) -> Result<Self, ModelError> {
        Ok(Self {
            first: ConvUnit::build(rng, cin, cout, batchnorm)?,
            second: ConvUnit::build(rng, cout, cout, batchnorm)?,
        })
    }

    fn forward_train(
        &mut self,
        x: &Tensor<T>,
        cfg: &NetworkConfig,
    ) -> Result<(Tensor<T>, BlockCache<T>), ModelError> {
        let (a1, c1) = self.first.forward_train(x, cfg.block_order)?;
        let (a2, c2) = self.second.forward_train(&a1, cfg.block_order)?;
        let out = if cfg.use_residual { residual_add(&a1, &a2)? } else { a2 };
        Ok((out, BlockCache { first: c1, second: c2 }))
    }

    fn forward_infer(&self, x: &Tensor<T>, cfg: &NetworkConfig) -> Result<Tensor<T>, ModelError> {
        let a1 = self.first.forward_infer(x, cfg.block_order)?;
        let a2 = self.second.forward_infer(&a1, cfg.block_order)?;
        Ok(if cfg.use_residual { residual_add(&a1, &a2)? } else { a2 })
    }

    fn backward(
        &self,
        cache: &BlockCache<T>,
        upstream: &Tensor<T>,
        cfg: &NetworkConfig,
        grad: &mut ConvBlock<T>,
    ) -> Result<Tensor<T>, ModelError> {
        let mut d_a1 = self
            .second
            .backward(&cache.second, upstream, cfg.block_order, &mut grad.second)?;
        if cfg.use_residual {
            d_a1 = residual_add(&d_a1, upstream)?;
        }
        self.first.backward(&cache.first, &d_a1, cfg.block_order, &mut grad.first)
    }
}

impl<T: Real> Network<T> {
    /// He-initialized network (`std = sqrt(2 / fan_in)`, zero bias, identity
    /// batch normalization). Deterministic in `rng`.
    pub fn build(config: &NetworkConfig, rng: &mut RngStream) -> Result<Self, ModelError> {
        config.validate()?;
        let bn = config.use_batchnorm;
        let mut encoder = Vec::with_capacity(config.levels);
        let mut cin = 1;
        for level in 0..config.levels {
            let c = config.channels(level);
            encoder.push(ConvBlock::build(rng, cin, c, bn)?);
            cin = c;
        }
        let mut up = Vec::with_capacity(config.levels - 1);
        let mut decoder = Vec::with_capacity(config.levels - 1);
        for level in 0..config.levels - 1 {
            let c = config.channels(level);
            up.push(he_conv(rng, c, 2 * c, 2)?);
            decoder.push(ConvBlock::build(rng, 2 * c, c, bn)?);
        }
        let head = he_conv(rng, 2, config.base_features, 1)?;
        Ok(Self {
            config: config.clone(),
            encoder,
            up,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Same architecture with every tensor set to zero.
    pub fn zeros_like(&self) -> Self {
        let mut net = self.clone();
        for t in net.all_tensors_mut() {
            t.data_mut().fill(T::zero());
        }
        net
    }

    /// Element type conversion of every tensor.
    pub fn cast<U: Real>(&self) -> Network<U> {
        let unit = |u: &ConvUnit<T>| ConvUnit {
            conv: ConvParams {
                weights: u.conv.weights.cast(),
                bias: u.conv.bias.cast(),
            },
            bn: u.bn.as_ref().map(|b| BatchNormParams {
                gamma: b.gamma.cast(),
                beta: b.beta.cast(),
                running_mean: b.running_mean.cast(),
                running_var: b.running_var.cast(),
                momentum: b.momentum,
                eps: b.eps,
            }),
        };
        let block = |b: &ConvBlock<T>| ConvBlock {
            first: unit(&b.first),
            second: unit(&b.second),
        };
        let conv = |c: &ConvParams<T>| ConvParams {
            weights: c.weights.cast(),
            bias: c.bias.cast(),
        };
        Network {
            config: self.config.clone(),
            encoder: self.encoder.iter().map(block).collect(),
            up: self.up.iter().map(conv).collect(),
            decoder: self.decoder.iter().map(block).collect(),
            head: conv(&self.head),
        }
    }

    /// Every unit in canonical order with its name prefix.
    fn units(&self) -> Vec<(String, &ConvUnit<T>)> {
        let mut v = Vec::new();
        for (l, b) in self.encoder.iter().enumerate() {
            v.push((format!("enc{l}.unit1"), &b.first));
            v.push((format!("enc{l}.unit2"), &b.second));
        }
        for (l, b) in self.decoder.iter().enumerate() {
            v.push((format!("dec{l}.unit1"), &b.first));
            v.push((format!("dec{l}.unit2"), &b.second));
        }
        v
    }

    fn visit<'a>(&'a self, with_buffers: bool, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        let unit = |name: &str, u: &'a ConvUnit<T>, f: &mut dyn FnMut(String, &'a Tensor<T>)| {
            f(format!("{name}.conv.weight"), &u.conv.weights);
            f(format!("{name}.conv.bias"), &u.conv.bias);
            if let Some(bn) = &u.bn {
                f(format!("{name}.bn.gamma"), &bn.gamma);
                f(format!("{name}.bn.beta"), &bn.beta);
                if with_buffers {
                    f(format!("{name}.bn.running_mean"), &bn.running_mean);
                    f(format!("{name}.bn.running_var"), &bn.running_var);
                }
            }
        };
        for (l, b) in self.encoder.iter().enumerate() {
            unit(&format!("enc{l}.unit1"), &b.first, f);
            unit(&format!("enc{l}.unit2"), &b.second, f);
        }
        for l in 0..self.up.len() {
            f(format!("up{l}.conv.weight"), &self.up[l].weights);
            f(format!("up{l}.conv.bias"), &self.up[l].bias);
            unit(&format!("dec{l}.unit1"), &self.decoder[l].first, f);
            unit(&format!("dec{l}.unit2"), &self.decoder[l].second, f);
        }
        f("head.conv.weight".into(), &self.head.weights);
        f("head.conv.bias".into(), &self.head.bias);
    }

    fn collect_mut(&mut self, with_buffers: bool) -> Vec<&mut Tensor<T>> {
        fn unit<'a, T: Real>(u: &'a mut ConvUnit<T>, with_buffers: bool, out: &mut Vec<&'a mut Tensor<T>>) {
            out.push(&mut u.conv.weights);
            out.push(&mut u.conv.bias);
            if let Some(bn) = u.bn.as_mut() {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
                if with_buffers {
                    out.push(&mut bn.running_mean);
                    out.push(&mut bn.running_var);
                }
            }
        }
        let mut out = Vec::new();
        for b in &mut self.encoder {
            unit(&mut b.first, with_buffers, &mut out);
            unit(&mut b.second, with_buffers, &mut out);
        }
        for (up, dec) in self.up.iter_mut().zip(self.decoder.iter_mut()) {
            out.push(&mut up.weights);
            out.push(&mut up.bias);
            unit(&mut dec.first, with_buffers, &mut out);
            unit(&mut dec.second, with_buffers, &mut out);
        }
        out.push(&mut self.head.weights);
        out.push(&mut self.head.bias);
        out
    }

    /// Trainable tensors in canonical order.
    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        let mut v = Vec::new();
        self.visit(false, &mut |_, t| v.push(t));
        v
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.collect_mut(false)
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        self.visit(false, &mut |n, _| v.push(n));
        v
    }

    /// Parameters plus batch-norm running statistics, with names.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = Vec::new();
        self.visit(true, &mut |n, t| v.push((n, t)));
        v
    }

    /// Parameters and running statistics, in the order of [`Network::named_tensors`].
    pub fn all_tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.collect_mut(true)
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Running statistics of every batch-norm layer, in canonical order.
    pub fn batchnorm_layers(&self) -> Vec<(String, &BatchNormParams<T>)> {
        self.units()
            .into_iter()
            .filter_map(|(n, u)| u.bn.as_ref().map(|b| (n, b)))
            .collect()
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<[usize; 4], ModelError> {
        let (h, w) = self.config.network_size();
        match *batch.shape() {
            [n, 1, bh, bw] if bh == h && bw == w => Ok([n, 1, h, w]),
            _ => Err(ModelError::Shape(format!(
                "network expects [N, 1, {h}, {w}] input, got {:?}",
                batch.shape()
            ))),
        }
    }

    fn foreground(probs: &Tensor<T>) -> Result<ProbMap<T>, ModelError> {
        let [n, _, h, w] = match *probs.shape() {
            [n, c, h, w] => [n, c, h, w],
            _ => unreachable!("softmax output is rank 4"),
        };
        let plane = h * w;
        let mut fg = Vec::with_capacity(n * plane);
        for b in 0..n {
            fg.extend_from_slice(&probs.data()[b * 2 * plane..b * 2 * plane + plane]);
        }
        Ok(ProbMap::new(Tensor::from_vec(&[n, h, w], fg)?)?)
    }

    /// Training-mode forward pass: batch statistics, running statistics
    /// updated in place, activations recorded for [`Network::backward`].
    pub fn forward_train(&mut self, batch: &Tensor<T>) -> Result<(ProbMap<T>, ForwardCache<T>), ModelError> {
        let dims = self.check_batch(batch)?;
        let cfg = self.config.clone();
        let levels = cfg.levels;
        let mut enc_caches = Vec::with_capacity(levels);
        let mut pools = Vec::with_capacity(levels - 1);
        let mut skips = Vec::with_capacity(levels - 1);
        let mut x = batch.clone();
        for l in 0..levels {
            let (e, cache) = self.encoder[l].forward_train(&x, &cfg)?;
            enc_caches.push(cache);
            if l + 1 < levels {
                let (pooled, pc) = maxpool2(&e)?;
                pools.push(pc);
                skips.push(e);
                x = pooled;
            } else {
                x = e;
            }
        }
        let mut up_caches: Vec<Option<UpCache<T>>> = vec![None; levels - 1];
        let mut dec_caches: Vec<Option<BlockCache<T>>> = vec![None; levels - 1];
        for l in (0..levels - 1).rev() {
            let upsampled = upsample_nn(&x)?;
            let z = conv2d(&upsampled, &self.up[l], Padding::same(2))?;
            let u = relu(&z);
            let cat = concat_channels(&skips[l], &u)?;
            let (d, cache) = self.decoder[l].forward_train(&cat, &cfg)?;
            up_caches[l] = Some(UpCache {
                upsampled,
                relu_input: z,
            });
            dec_caches[l] = Some(cache);
            x = d;
        }
        let logits = conv2d(&x, &self.head, Padding::NONE)?;
        let probs = softmax_channels(&logits)?;
        let map = Self::foreground(&probs)?;
        let cache = ForwardCache {
            levels,
            batch: dims,
            encoder: enc_caches,
            pools,
            up: up_caches.into_iter().map(|c| c.expect("filled")).collect(),
            decoder: dec_caches.into_iter().map(|c| c.expect("filled")).collect(),
            head_input: x,
            probs,
        };
        Ok((map, cache))
    }

    /// Inference-mode forward pass using running statistics; no state changes.
    pub fn forward_infer(&self, batch: &Tensor<T>) -> Result<ProbMap<T>, ModelError> {
        self.check_batch(batch)?;
        let cfg = &self.config;
        let levels = cfg.levels;
        let mut skips = Vec::with_capacity(levels - 1);
        let mut x = batch.clone();
        for l in 0..levels {
            let e = self.encoder[l].forward_infer(&x, cfg)?;
            if l + 1 < levels {
                x = maxpool2(&e)?.0;
                skips.push(e);
            } else {
                x = e;
            }
        }
        for l in (0..levels - 1).rev() {
            let z = conv2d(&upsample_nn(&x)?, &self.up[l], Padding::same(2))?;
            let cat = concat_channels(&skips[l], &relu(&z))?;
            x = self.decoder[l].forward_infer(&cat, cfg)?;
        }
        let logits = conv2d(&x, &self.head, Padding::NONE)?;
        Self::foreground(&softmax_channels(&logits)?)
    }

    /// Gradients of `sum(d_prob * prob)` with respect to every parameter,
    /// where `prob` is the foreground map of the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache<T>, d_prob: &Tensor<T>) -> Result<Gradients<T>, ModelError> {
        Ok(self.backward_with_input(cache, d_prob)?.0)
    }

    /// As [`Network::backward`], also returning the gradient with respect to
    /// the input batch.
    pub fn backward_with_input(
        &self,
        cache: &ForwardCache<T>,
        d_prob: &Tensor<T>,
    ) -> Result<(Gradients<T>, Tensor<T>), ModelError> {
        let cfg = &self.config;
        let levels = cfg.levels;
        let [n, _, h, w] = cache.batch;
        if cache.levels != levels || cache.encoder.len() != self.encoder.len() {
            return Err(ModelError::Cache(format!(
                "cache recorded for {} levels, network has {levels}",
                cache.levels
            )));
        }
        if d_prob.shape() != [n, h, w] {
            return Err(ModelError::Cache(format!(
                "cache recorded for batch [{n}, {h}, {w}], gradient is {:?}",
                d_prob.shape()
            )));
        }
        let mut grad = self.zeros_like();
        let plane = h * w;
        let mut d_probs = cache.probs.zeros_like();
        for b in 0..n {
            d_probs.data_mut()[b * 2 * plane..b * 2 * plane + plane]
                .copy_from_slice(&d_prob.data()[b * plane..(b + 1) * plane]);
        }
        let d_logits = softmax_channels_grad(&cache.probs, &d_probs)?;
        let hg = conv2d_grad(&cache.head_input, &self.head, Padding::NONE, &d_logits)?;
        grad.head.weights = hg.d_weights;
        grad.head.bias = hg.d_bias;
        let mut d = hg.d_input;

        let mut d_skips = Vec::with_capacity(levels - 1);
        for l in 0..levels - 1 {
            let d_cat = self.decoder[l].backward(&cache.decoder[l], &d, cfg, &mut grad.decoder[l])?;
            let (d_skip, d_u) = concat_channels_grad(&d_cat, cfg.channels(l))?;
            d_skips.push(d_skip);
            let uc = &cache.up[l];
            let d_z = relu_grad(&uc.relu_input, &d_u)?;
            let cg = conv2d_grad(&uc.upsampled, &self.up[l], Padding::same(2), &d_z)?;
            grad.up[l].weights = cg.d_weights;
            grad.up[l].bias = cg.d_bias;
            d = upsample_nn_grad(&cg.d_input)?;
        }

        for l in (0..levels).rev() {
            let d_e = if l + 1 < levels {
                let from_pool = maxpool2_grad(&cache.pools[l], &d)?;
                residual_add(&from_pool, &d_skips[l])?
            } else {
                d
            };
            d = self.encoder[l].backward(&cache.encoder[l], &d_e, cfg, &mut grad.encoder[l])?;
        }
        Ok((Gradients(grad), d))
    }
}
