//! Finite-difference verification of every hand-written backward pass, in
//! f64.
//!
//! Each check builds a scalar `L = sum(u * f(inputs))` (or a loss value) and
//! compares the analytic gradient of every input tensor with central
//! differences. The reported error for a tensor is
//! `max_i |analytic_i - numeric_i| / scale`, where `scale` is the largest
//! numeric magnitude in that tensor, floored at 1% of the largest magnitude
//! across the whole check so that structurally zero gradients (a conv bias
//! feeding batch norm) are not judged against round-off.

use serde::Serialize;

use crate::layers::{
    batchnorm_grad, batchnorm_train, concat_channels, concat_channels_grad, conv2d, conv2d_grad,
    maxpool2, maxpool2_grad, relu, relu_grad, residual_add, softmax_channels,
    softmax_channels_grad, upsample_nn, upsample_nn_grad, BatchNormParams, ConvParams, Padding,
};
use crate::model::{LabelMask, LossKind, Network, NetworkConfig, ProbMap};
use crate::objective::{loss, DEFAULT_SMOOTH};
use crate::rng::RngStream;
use crate::tensor::{random_normal, random_uniform, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const LAYER_TOLERANCE: f64 = 1e-6;
pub const NETWORK_TOLERANCE: f64 = 1e-4;
const SCALE_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradcheckSize {
    /// Small layer shapes and a levels=2 / base=2 / 8x8 network.
    #[default]
    Tiny,
    /// Larger layer shapes and a levels=3 / base=4 / 16x16 network.
    Small,
}

#[derive(Debug, Clone, Default)]
pub struct GradcheckOptions {
    pub size: GradcheckSize,
    pub seed: u64,
    /// Name of a check whose analytic gradient is deliberately perturbed.
    pub corrupt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Number of scalar inputs perturbed.
    pub evaluated: usize,
    /// Input tensor with the largest error.
    pub worst_input: String,
}

type Inputs = Vec<Tensor<f64>>;

struct Check<'a> {
    name: &'static str,
    tolerance: f64,
    labels: Vec<String>,
    inputs: Inputs,
    value: Box<dyn Fn(&Inputs) -> f64 + 'a>,
    grad: Box<dyn Fn(&Inputs) -> Inputs + 'a>,
}

fn weighted_sum(u: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    u.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

fn run_check(check: Check<'_>, corrupt: bool) -> CheckReport {
    let mut analytic = (check.grad)(&check.inputs);
    if corrupt {
        if let Some(v) = analytic.first_mut().and_then(|t| t.data_mut().first_mut()) {
            *v = *v * 1.5 + 1e-3;
        }
    }
    let mut inputs = check.inputs.clone();
    let mut numeric = Vec::with_capacity(inputs.len());
    let mut evaluated = 0;
    for t in 0..inputs.len() {
        let mut g = inputs[t].zeros_like();
        for i in 0..inputs[t].len() {
            let orig = inputs[t].data()[i];
            inputs[t].data_mut()[i] = orig + FD_STEP;
            let plus = (check.value)(&inputs);
            inputs[t].data_mut()[i] = orig - FD_STEP;
            let minus = (check.value)(&inputs);
            inputs[t].data_mut()[i] = orig;
            g.data_mut()[i] = (plus - minus) / (2.0 * FD_STEP);
            evaluated += 1;
        }
        numeric.push(g);
    }
    let max_abs = |t: &Tensor<f64>| t.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let global = numeric.iter().map(max_abs).fold(0.0, f64::max);
    let mut worst = 0.0;
    let mut worst_input = String::new();
    for ((a, n), label) in analytic.iter().zip(&numeric).zip(&check.labels) {
        let scale = max_abs(n).max(SCALE_FLOOR * global).max(f64::MIN_POSITIVE);
        let err = a
            .data()
            .iter()
            .zip(n.data())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            / scale;
        if err > worst || worst_input.is_empty() {
            worst = err;
            worst_input = label.clone();
        }
    }
    if analytic.len() != numeric.len() || analytic.iter().zip(&numeric).any(|(a, n)| a.shape() != n.shape()) {
        worst = f64::INFINITY;
    }
    CheckReport {
        name: check.name.to_string(),
        max_rel_error: worst,
        tolerance: check.tolerance,
        passed: worst <= check.tolerance,
        evaluated,
        worst_input,
    }
}

fn normal(rng: &mut RngStream, shape: &[usize]) -> Tensor<f64> {
    random_normal(rng, shape, 0.0, 1.0).expect("valid shape")
}

/// Values bounded away from zero so no perturbation crosses a ReLU kink.
fn away_from_zero(rng: &mut RngStream, shape: &[usize]) -> Tensor<f64> {
    let t: Tensor<f64> = random_uniform(rng, shape, 0.1, 1.0).expect("valid shape");
    let signs: Tensor<f64> = random_uniform(rng, shape, -1.0, 1.0).expect("valid shape");
    let data = t.data().iter().zip(signs.data()).map(|(v, s)| v.copysign(*s)).collect();
    Tensor::from_vec(shape, data).expect("valid shape")
}

/// Distinct values spaced far beyond the finite-difference step, shuffled.
fn distinct(rng: &mut RngStream, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.3).collect();
    rng.shuffle(&mut v);
    Tensor::from_vec(shape, v).expect("valid shape")
}

fn binary(rng: &mut RngStream, shape: &[usize]) -> LabelMask<f64> {
    let data = (0..shape.iter().product::<usize>())
        .map(|_| if rng.uniform(0.0, 1.0) < 0.4 { 1.0 } else { 0.0 })
        .collect();
    LabelMask::new(Tensor::from_vec(shape, data).expect("valid shape")).expect("binary")
}

fn conv_check(rng: &mut RngStream, k: usize, dims: [usize; 4], cout: usize) -> Check<'static> {
    let [n, cin, h, w] = dims;
    let x = normal(rng, &dims);
    let wt = normal(rng, &[cout, cin, k, k]);
    let b = normal(rng, &[cout]);
    let u = normal(rng, &[n, cout, h, w]);
    let pad = Padding::same(k);
    let name = match k {
        1 => "conv2d_1x1",
        2 => "conv2d_2x2",
        _ => "conv2d_3x3",
    };
    let params = |i: &Inputs| ConvParams::new(i[1].clone(), i[2].clone()).expect("valid conv");
    let u2 = u.clone();
    Check {
        name,
        tolerance: LAYER_TOLERANCE,
        labels: vec!["input".into(), "weights".into(), "bias".into()],
        inputs: vec![x, wt, b],
        value: Box::new(move |i| weighted_sum(&u, &conv2d(&i[0], &params(i), pad).expect("conv"))),
        grad: Box::new(move |i| {
            let g = conv2d_grad(&i[0], &params(i), pad, &u2).expect("conv grad");
            vec![g.d_input, g.d_weights, g.d_bias]
        }),
    }
}

fn batchnorm_check(rng: &mut RngStream, dims: [usize; 4]) -> Check<'static> {
    let c = dims[1];
    let x = normal(rng, &dims).map(|v| 2.0 * v + 0.5);
    let gamma = random_uniform(rng, &[c], 0.5, 1.5).expect("valid shape");
    let beta = normal(rng, &[c]);
    let u = normal(rng, &dims);
    let params = move |i: &Inputs| BatchNormParams {
        gamma: i[1].clone(),
        beta: i[2].clone(),
        ..BatchNormParams::new(c)
    };
    let u2 = u.clone();
    Check {
        name: "batchnorm",
        tolerance: LAYER_TOLERANCE,
        labels: vec!["input".into(), "gamma".into(), "beta".into()],
        inputs: vec![x, gamma, beta],
        value: Box::new(move |i| weighted_sum(&u, &batchnorm_train(&i[0], &params(i)).expect("bn").0)),
        grad: Box::new(move |i| {
            let (_, cache, _) = batchnorm_train(&i[0], &params(i)).expect("bn");
            let g = batchnorm_grad(&cache, &u2).expect("bn grad");
            vec![g.d_input, g.d_gamma, g.d_beta]
        }),
    }
}

fn unary_check(
    name: &'static str,
    x: Tensor<f64>,
    u: Tensor<f64>,
    forward: fn(&Tensor<f64>) -> Tensor<f64>,
    backward: fn(&Tensor<f64>, &Tensor<f64>) -> Tensor<f64>,
) -> Check<'static> {
    let u2 = u.clone();
    Check {
        name,
        tolerance: LAYER_TOLERANCE,
        labels: vec!["input".into()],
        inputs: vec![x],
        value: Box::new(move |i| weighted_sum(&u, &forward(&i[0]))),
        grad: Box::new(move |i| vec![backward(&i[0], &u2)]),
    }
}

fn merge_check(name: &'static str, rng: &mut RngStream, dims: [usize; 4]) -> Check<'static> {
    let [n, c, h, w] = dims;
    let a = normal(rng, &dims);
    let concat = name == "concat";
    let b = if concat {
        normal(rng, &[n, c + 1, h, w])
    } else {
        normal(rng, &dims)
    };
    let out_c = if concat { 2 * c + 1 } else { c };
    let u = normal(rng, &[n, out_c, h, w]);
    let u2 = u.clone();
    Check {
        name,
        tolerance: LAYER_TOLERANCE,
        labels: vec!["first".into(), "second".into()],
        inputs: vec![a, b],
        value: Box::new(move |i| {
            let y = if concat {
                concat_channels(&i[0], &i[1])
            } else {
                residual_add(&i[0], &i[1])
            };
            weighted_sum(&u, &y.expect("merge"))
        }),
        grad: Box::new(move |_| {
            if concat {
                let (da, db) = concat_channels_grad(&u2, c).expect("split");
                vec![da, db]
            } else {
                vec![u2.clone(), u2.clone()]
            }
        }),
    }
}

fn foreground(probs: &Tensor<f64>) -> ProbMap<f64> {
    let [n, _, h, w] = <[usize; 4]>::try_from(probs.shape()).expect("rank 4");
    let plane = h * w;
    let mut fg = Vec::with_capacity(n * plane);
    for b in 0..n {
        fg.extend_from_slice(&probs.data()[b * 2 * plane..b * 2 * plane + plane]);
    }
    ProbMap::new(Tensor::from_vec(&[n, h, w], fg).expect("shape")).expect("probabilities")
}

fn softmax_loss_check(kind: LossKind, rng: &mut RngStream, n: usize, hw: usize) -> Check<'static> {
    let logits = normal(rng, &[n, 2, hw, hw]);
    let truth = binary(rng, &[n, hw, hw]);
    let truth2 = truth.clone();
    let name = match kind {
        LossKind::Jaccard => "softmax_jaccard",
        LossKind::Dice => "softmax_dice",
    };
    Check {
        name,
        tolerance: LAYER_TOLERANCE,
        labels: vec!["logits".into()],
        inputs: vec![logits],
        value: Box::new(move |i| {
            let p = softmax_channels(&i[0]).expect("softmax");
            loss(kind, &foreground(&p), &truth, DEFAULT_SMOOTH).expect("loss").value
        }),
        grad: Box::new(move |i| {
            let p = softmax_channels(&i[0]).expect("softmax");
            let l = loss(kind, &foreground(&p), &truth2, DEFAULT_SMOOTH).expect("loss");
            let mut up = p.zeros_like();
            let plane = hw * hw;
            for b in 0..n {
                up.data_mut()[b * 2 * plane..b * 2 * plane + plane]
                    .copy_from_slice(&l.d_prob.data()[b * plane..(b + 1) * plane]);
            }
            vec![softmax_channels_grad(&p, &up).expect("softmax grad")]
        }),
    }
}

fn network_check(rng: &mut RngStream, config: NetworkConfig, n: usize) -> Check<'static> {
    let mut net = Network::<f64>::build(&config, rng).expect("valid config");
    // Zero biases put dead regions exactly on the ReLU kink; jitter them off it.
    let names = net.parameter_names();
    for (name, p) in names.iter().zip(net.parameters_mut()) {
        if name.ends_with("bias") || name.ends_with("beta") {
            *p = random_normal(rng, p.shape(), 0.0, 0.1).expect("shape");
        }
    }
    let (h, w) = config.network_size();
    let x = normal(rng, &[n, 1, h, w]);
    let truth = binary(rng, &[n, h, w]);
    let names: Vec<String> = net.parameter_names();
    let mut inputs: Inputs = net.parameters().into_iter().cloned().collect();
    inputs.push(x);
    let mut labels = names;
    labels.push("input".into());
    let with = move |i: &Inputs| {
        let mut net = net.clone();
        for (p, t) in net.parameters_mut().into_iter().zip(i) {
            *p = t.clone();
        }
        net
    };
    let with2 = with.clone();
    let truth2 = truth.clone();
    let kind = config.loss;
    Check {
        name: "network",
        tolerance: NETWORK_TOLERANCE,
        labels,
        inputs,
        value: Box::new(move |i| {
            let mut net = with(i);
            let (p, _) = net.forward_train(i.last().expect("input")).expect("forward");
            loss(kind, &p, &truth, DEFAULT_SMOOTH).expect("loss").value
        }),
        grad: Box::new(move |i| {
            let mut net = with2(i);
            let x = i.last().expect("input");
            let (p, cache) = net.forward_train(x).expect("forward");
            let l = loss(kind, &p, &truth2, DEFAULT_SMOOTH).expect("loss");
            let (g, dx) = net.backward_with_input(&cache, &l.d_prob).expect("backward");
            let mut out: Inputs = g.into_tensors();
            out.push(dx);
            out
        }),
    }
}

/// Whole-network check for an arbitrary configuration (batch of `n`).
pub fn check_network(config: NetworkConfig, n: usize, seed: u64) -> CheckReport {
    let mut rng = RngStream::new(seed);
    run_check(network_check(&mut rng, config, n), false)
}

/// Run every check for `options.size`.
pub fn run_gradchecks(options: &GradcheckOptions) -> Vec<CheckReport> {
    let mut rng = RngStream::new(options.seed);
    let small = options.size == GradcheckSize::Small;
    let (n, c, hw) = if small { (2, 3, 6) } else { (2, 2, 4) };
    let dims = [n, c, hw, hw];

    let relu_x = away_from_zero(&mut rng, &dims);
    let relu_u = normal(&mut rng, &dims);
    let pool_x = distinct(&mut rng, &dims);
    let pool_u = normal(&mut rng, &[n, c, hw / 2, hw / 2]);
    let up_x = normal(&mut rng, &dims);
    let up_u = normal(&mut rng, &[n, c, 2 * hw, 2 * hw]);

    let mut checks = vec![
        conv_check(&mut rng, 1, [n, c, hw, hw + 1], 3),
        conv_check(&mut rng, 2, [n, c, hw, hw + 1], 3),
        conv_check(&mut rng, 3, [n, c, hw, hw + 1], 3),
        batchnorm_check(&mut rng, dims),
        unary_check("relu", relu_x, relu_u, relu, |x, u| relu_grad(x, u).expect("relu grad")),
        unary_check(
            "maxpool2",
            pool_x,
            pool_u,
            |x| maxpool2(x).expect("pool").0,
            |x, u| maxpool2_grad(&maxpool2(x).expect("pool").1, u).expect("pool grad"),
        ),
        unary_check(
            "upsample_nn",
            up_x,
            up_u,
            |x| upsample_nn(x).expect("upsample"),
            |_, u| upsample_nn_grad(u).expect("upsample grad"),
        ),
        merge_check("concat", &mut rng, dims),
        merge_check("residual_add", &mut rng, dims),
        softmax_loss_check(LossKind::Jaccard, &mut rng, n, hw),
        softmax_loss_check(LossKind::Dice, &mut rng, n, hw),
    ];
    let net_config = if small {
        NetworkConfig {
            levels: 3,
            base_features: 4,
            input_size: (16, 16),
            ..Default::default()
        }
    } else {
        NetworkConfig {
            levels: 2,
            base_features: 2,
            input_size: (8, 8),
            ..Default::default()
        }
    };
    checks.push(network_check(&mut rng, net_config, 2));

    checks
        .into_iter()
        .map(|c| {
            let corrupt = options.corrupt.as_deref() == Some(c.name);
            run_check(c, corrupt)
        })
        .collect()
}
