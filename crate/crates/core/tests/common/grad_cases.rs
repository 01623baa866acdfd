//! One randomized finite-difference case per differentiable primitive and
//! per composite block of the model.

use harforge_core::config::{ModelConfig, Toggles};
use harforge_core::model::{age_forward, cie_forward, gru_layer, ModelParams};
use harforge_core::objective::{center_loss, cross_entropy, joint_loss};
use harforge_core::rng::seeded;
use harforge_core::tensor::{Tape, Tensor, Var};
use rand::Rng;

use super::{away_from_zero, fd_check, fd_check_params, jitter, simplex_rows, uniform, FdStats};

pub const PRIMITIVES: &[&str] = &[
    "matmul",
    "bmm",
    "conv1d_valid",
    "add",
    "sub",
    "mul",
    "add_bias",
    "scale",
    "relu",
    "sigmoid",
    "tanh",
    "softmax",
    "log_softmax",
    "dropout",
    "sum",
    "mean",
    "sum_axis",
    "reshape",
    "permute",
    "concat",
    "stack",
    "slice",
    "expand",
    "cross_entropy",
    "center_loss",
    "joint_loss",
    "gru_layer",
    "cie_forward",
    "age_forward",
];

fn dims(rng: &mut impl Rng, rank: usize, max: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.random_range(1..=max)).collect()
}

fn small_model(seed: u64, toggles: Toggles) -> ModelParams {
    let mut cfg = ModelConfig::new(3, 17, 3, toggles);
    cfg.feature_maps = 3;
    cfg.hidden = 4;
    let mut p = ModelParams::init(&cfg, seed).unwrap();
    jitter(&mut p, 0.3, seed ^ 0xa5a5);
    p
}

/// Runs the named case with random shapes and values drawn from `seed`.
pub fn check(name: &str, seed: u64) -> FdStats {
    let mut rng = seeded(seed);
    let r = &mut rng;
    match name {
        "matmul" => {
            let (m, k, n) = (r.random_range(1..5), r.random_range(1..5), r.random_range(1..5));
            let a = uniform(&[m, k], -1.0, 1.0, r);
            let b = uniform(&[k, n], -1.0, 1.0, r);
            fd_check(&[a, b], |t, v| t.matmul(v[0], v[1]).unwrap())
        }
        "bmm" => {
            let d = dims(r, 4, 4);
            let a = uniform(&[d[0], d[1], d[2]], -1.0, 1.0, r);
            let b = uniform(&[d[0], d[2], d[3]], -1.0, 1.0, r);
            fd_check(&[a, b], |t, v| t.bmm(v[0], v[1]).unwrap())
        }
        "conv1d_valid" => {
            let (n, c_in, c_out) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4));
            let k = r.random_range(1..5);
            let len = k + r.random_range(0..6);
            let x = uniform(&[n, c_in, len], -1.0, 1.0, r);
            let w = uniform(&[c_out, c_in, k], -1.0, 1.0, r);
            let b = uniform(&[c_out], -1.0, 1.0, r);
            fd_check(&[x, w, b], |t, v| t.conv1d_valid(v[0], v[1], v[2]).unwrap())
        }
        "add" | "sub" | "mul" => {
            let rank = r.random_range(1..4);
            let s = dims(r, rank, 4);
            let a = uniform(&s, -1.0, 1.0, r);
            let b = uniform(&s, -1.0, 1.0, r);
            let op = name.to_string();
            fd_check(&[a, b], move |t, v| match op.as_str() {
                "add" => t.add(v[0], v[1]).unwrap(),
                "sub" => t.sub(v[0], v[1]).unwrap(),
                _ => t.mul(v[0], v[1]).unwrap(),
            })
        }
        "add_bias" => {
            let rank = r.random_range(1..4);
            let s = dims(r, rank, 4);
            let x = uniform(&s, -1.0, 1.0, r);
            let b = uniform(&[*s.last().unwrap()], -1.0, 1.0, r);
            fd_check(&[x, b], |t, v| t.add_bias(v[0], v[1]).unwrap())
        }
        "scale" => {
            let f = r.random_range(-3.0..3.0);
            let x = uniform(&dims(r, 2, 4), -1.0, 1.0, r);
            fd_check(&[x], move |t, v| t.scale(v[0], f))
        }
        "relu" => {
            let x = away_from_zero(&dims(r, 2, 5), 1e-2, r);
            fd_check(&[x], |t, v| t.relu(v[0]))
        }
        "sigmoid" | "tanh" => {
            let x = uniform(&dims(r, 2, 5), -4.0, 4.0, r);
            let tanh = name == "tanh";
            fd_check(&[x], move |t, v| if tanh { t.tanh(v[0]) } else { t.sigmoid(v[0]) })
        }
        "softmax" | "log_softmax" => {
            let rank = r.random_range(1..4);
            let s = dims(r, rank, 4);
            let axis = r.random_range(0..rank);
            let x = uniform(&s, -3.0, 3.0, r);
            let log = name == "log_softmax";
            fd_check(&[x], move |t, v| {
                if log {
                    t.log_softmax(v[0], axis).unwrap()
                } else {
                    t.softmax(v[0], axis).unwrap()
                }
            })
        }
        "dropout" => {
            let x = uniform(&dims(r, 2, 5), -1.0, 1.0, r);
            let mask_seed = r.random::<u64>();
            // the same generator state on every evaluation fixes the mask
            fd_check(&[x], move |t, v| t.dropout(v[0], 0.4, true, &mut seeded(mask_seed)).unwrap())
        }
        "sum" | "mean" => {
            let x = uniform(&dims(r, 3, 3), -1.0, 1.0, r);
            let mean = name == "mean";
            fd_check(&[x], move |t, v| if mean { t.mean(v[0]) } else { t.sum(v[0]) })
        }
        "sum_axis" => {
            let rank = r.random_range(1..4);
            let axis = r.random_range(0..rank);
            let x = uniform(&dims(r, rank, 4), -1.0, 1.0, r);
            fd_check(&[x], move |t, v| t.sum_axis(v[0], axis).unwrap())
        }
        "reshape" => {
            let (a, b) = (r.random_range(1..5), r.random_range(1..5));
            let x = uniform(&[a, b], -1.0, 1.0, r);
            fd_check(&[x], move |t, v| t.reshape(v[0], &[b, a]).unwrap())
        }
        "permute" => {
            let x = uniform(&dims(r, 4, 3), -1.0, 1.0, r);
            let mut axes = vec![0, 1, 2, 3];
            for i in (1..4).rev() {
                axes.swap(i, r.random_range(0..=i));
            }
            fd_check(&[x], move |t, v| t.permute(v[0], &axes).unwrap())
        }
        "concat" => {
            let axis = r.random_range(0..3);
            let base = dims(r, 3, 3);
            let inputs: Vec<Tensor> = (0..3)
                .map(|_| {
                    let mut s = base.clone();
                    s[axis] = r.random_range(1..4);
                    uniform(&s, -1.0, 1.0, r)
                })
                .collect();
            fd_check(&inputs, move |t, v| t.concat(v, axis).unwrap())
        }
        "stack" => {
            let s = dims(r, 2, 3);
            let axis = r.random_range(0..3);
            let inputs: Vec<Tensor> = (0..3).map(|_| uniform(&s, -1.0, 1.0, r)).collect();
            fd_check(&inputs, move |t, v| t.stack(v, axis).unwrap())
        }
        "slice" => {
            let s = dims(r, 3, 5);
            let axis = r.random_range(0..3);
            let start = r.random_range(0..s[axis]);
            let len = r.random_range(1..=s[axis] - start);
            let x = uniform(&s, -1.0, 1.0, r);
            fd_check(&[x], move |t, v| t.slice(v[0], axis, start, len).unwrap())
        }
        "expand" => {
            let target = dims(r, 3, 4);
            let src: Vec<usize> = target.iter().map(|&d| if r.random::<bool>() { 1 } else { d }).collect();
            let x = uniform(&src, -1.0, 1.0, r);
            fd_check(&[x], move |t, v| t.expand(v[0], &target).unwrap())
        }
        "cross_entropy" => {
            let (b, c) = (r.random_range(1..5), r.random_range(2..5));
            let logits = uniform(&[b, c], -3.0, 3.0, r);
            let y = simplex_rows(b, c, r);
            fd_check(&[logits], move |t, v| cross_entropy(t, v[0], &y).unwrap())
        }
        "center_loss" => {
            let (b, c, h) = (r.random_range(1..5), r.random_range(2..4), r.random_range(1..5));
            let z = uniform(&[b, h], -1.0, 1.0, r);
            let centers = uniform(&[c, h], -1.0, 1.0, r);
            let y = simplex_rows(b, c, r);
            fd_check(&[z, centers], move |t, v| center_loss(t, v[0], &y, v[1]).unwrap())
        }
        "joint_loss" => {
            let (b, c, h) = (r.random_range(1..4), r.random_range(2..4), r.random_range(1..4));
            let logits = uniform(&[b, c], -2.0, 2.0, r);
            let z = uniform(&[b, h], -1.0, 1.0, r);
            let centers = uniform(&[c, h], -1.0, 1.0, r);
            let y = simplex_rows(b, c, r);
            let gamma = r.random_range(0.0..1.0);
            fd_check(&[logits, z, centers], move |t, v| {
                let ce = cross_entropy(t, v[0], &y).unwrap();
                let cl = center_loss(t, v[1], &y, v[2]).unwrap();
                joint_loss(t, ce, Some(cl), gamma).unwrap().0
            })
        }
        "gru_layer" => {
            let p = small_model(r.random(), Toggles::all_off());
            let input = p.config().feature_maps * p.config().channels;
            let (b, steps) = (r.random_range(1..3), r.random_range(1..4));
            let x = uniform(&[b, steps, input], -1.0, 1.0, r);
            let mut out = fd_check_params(&p, |t, bound| {
                let xv = t.constant(x.clone());
                let states = gru_layer(t, bound, 0, xv).unwrap();
                let all = t.stack(&states, 1).unwrap();
                project_sum(t, all)
            });
            let p2 = p.clone();
            out.merge(&fd_check(std::slice::from_ref(&x), move |t, v| {
                let bound = p2.bind(t);
                let states = gru_layer(t, &bound, 0, v[0]).unwrap();
                t.stack(&states, 1).unwrap()
            }));
            out
        }
        "cie_forward" => {
            let p = small_model(r.random(), Toggles::all_on());
            let (d, c) = (p.config().channels, p.config().feature_maps);
            let (b, steps) = (r.random_range(1..3), r.random_range(1..3));
            let fm = uniform(&[b, steps, d, c], -1.0, 1.0, r);
            let cie_only = |t: &mut Tape, bound: &harforge_core::model::Bound, x: Var| {
                let (refined, attention) = cie_forward(t, bound, x).unwrap();
                let a = t.reshape(attention, &[b * steps * d * d]).unwrap();
                let rr = t.reshape(refined, &[b * steps * d * c]).unwrap();
                t.concat(&[rr, a], 0).unwrap()
            };
            let fm2 = fm.clone();
            let mut out = fd_check_params(&p, move |t, bound| {
                let x = t.constant(fm2.clone());
                let y = cie_only(t, bound, x);
                project_sum(t, y)
            });
            let p2 = p.clone();
            out.merge(&fd_check(&[fm], move |t, v| {
                let bound = p2.bind(t);
                cie_only(t, &bound, v[0])
            }));
            out
        }
        "age_forward" => {
            let p = small_model(r.random(), Toggles::all_on());
            let input = p.config().feature_maps * p.config().channels;
            let (b, steps) = (r.random_range(1..3), r.random_range(1..4));
            let x = uniform(&[b, steps, input], -1.0, 1.0, r);
            let x2 = x.clone();
            let mut out = fd_check_params(&p, move |t, bound| {
                let xv = t.constant(x2.clone());
                let (z, _) = age_forward(t, bound, xv, true).unwrap();
                project_sum(t, z)
            });
            let p2 = p.clone();
            out.merge(&fd_check(&[x], move |t, v| {
                let bound = p2.bind(t);
                let (z, beta) = age_forward(t, &bound, v[0], true).unwrap();
                let beta = beta.unwrap();
                let n = t.shape(beta).iter().product::<usize>();
                let flat_beta = t.reshape(beta, &[n]).unwrap();
                let m = t.shape(z).iter().product::<usize>();
                let flat_z = t.reshape(z, &[m]).unwrap();
                t.concat(&[flat_z, flat_beta], 0).unwrap()
            }));
            out
        }
        other => panic!("no gradient case named `{other}`"),
    }
}

/// Scalar contraction with fixed weights, for losses built on parameters.
fn project_sum(t: &mut Tape, x: Var) -> Var {
    let shape = t.shape(x).to_vec();
    let w = t.constant(uniform(&shape, -1.0, 1.0, &mut seeded(0xc0de)));
    let m = t.mul(x, w).unwrap();
    t.sum(m)
}

/// The whole network with every block switched on: 4 channels, window 24,
/// 3 classes, hidden 16. Dropout masks are replayed from a fixed seed and
/// targets are mixed soft labels, so the loss is the training loss.
pub fn full_model(seed: u64) -> FdStats {
    use harforge_core::model::{model_forward, ForwardOptions};

    let mut r = seeded(seed);
    let mut cfg = ModelConfig::new(4, 24, 3, Toggles::all_on());
    cfg.feature_maps = 8;
    cfg.hidden = 16;
    let mut params = ModelParams::init(&cfg, seed).unwrap();
    jitter(&mut params, 0.3, seed ^ 0x77);
    let windows = uniform(&[3, 4, 24], -1.0, 1.0, &mut r);
    let targets = simplex_rows(3, 3, &mut r);
    let opts = ForwardOptions {
        p_feat: 0.3,
        p_cls: 0.3,
        training: true,
    };
    let mask_seed = r.random::<u64>();
    let loss = |p: &ModelParams| {
        let mut f = model_forward(p, &windows, &opts, &mut seeded(mask_seed)).unwrap();
        let ce = cross_entropy(&mut f.tape, f.logits, &targets).unwrap();
        let centers = f.params.try_get("centers").unwrap();
        let cl = center_loss(&mut f.tape, f.z, &targets, centers).unwrap();
        let (total, _) = joint_loss(&mut f.tape, ce, Some(cl), 0.3).unwrap();
        (f, total)
    };
    super::fd_check_model(&params, loss)
}
