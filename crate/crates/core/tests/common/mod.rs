//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod criteria;
pub mod grad_cases;
pub mod oracles;

use harforge_core::model::{Bound, ModelParams};
use harforge_core::rng::seeded;
use harforge_core::tensor::{Tape, Tensor, Var};
use rand::Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Largest accepted `|analytic − numeric| / (|numeric| + 1e-8)`.
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, Default)]
pub struct FdStats {
    pub checked: usize,
    pub worst: f64,
    pub worst_at: String,
    pub analytic: f64,
    pub numeric: f64,
}

impl FdStats {
    fn record(&mut self, at: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > self.worst || err.is_nan() {
            self.worst = err;
            self.worst_at = at();
            self.analytic = analytic;
            self.numeric = numeric;
        }
    }

    pub fn merge(&mut self, other: &FdStats) {
        self.checked += other.checked;
        if other.worst > self.worst || other.worst.is_nan() {
            self.worst = other.worst;
            self.worst_at = other.worst_at.clone();
            self.analytic = other.analytic;
            self.numeric = other.numeric;
        }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.worst < FD_TOLERANCE
    }

    pub fn describe(&self) -> String {
        format!(
            "{} checks, worst {:.2e} at {} (analytic {:.6e}, numeric {:.6e})",
            self.checked, self.worst, self.worst_at, self.analytic, self.numeric
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + 1e-8)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Uniform values in `±[gap, 1]`, away from the kink of a ReLU.
pub fn away_from_zero(shape: &[usize], gap: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(gap..1.0);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

/// A random point on the probability simplex for each row.
pub fn simplex_rows(rows: usize, classes: usize, rng: &mut impl Rng) -> Tensor {
    let mut data = Vec::with_capacity(rows * classes);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        data.extend(raw.iter().map(|v| v / s));
    }
    Tensor::new(vec![rows, classes], data).unwrap()
}

/// Contracts any output with fixed random weights into a scalar, so that
/// every output element contributes to the checked derivative.
fn project(tape: &mut Tape, out: Var) -> Var {
    let shape = tape.shape(out).to_vec();
    let mut rng = seeded(0x5eed);
    let w = tape.constant(uniform(&shape, -1.0, 1.0, &mut rng));
    let m = tape.mul(out, w).expect("same shape");
    tape.sum(m)
}

/// Compares reverse-mode gradients of `f` with respect to every element of
/// every input against central differences.
pub fn fd_check(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) -> FdStats {
    let eval = |values: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.constant(v.clone())).collect();
        let out = f(&mut tape, &vars);
        let l = project(&mut tape, out);
        tape.value(l).item().unwrap()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.parameter(v.clone())).collect();
    let out = f(&mut tape, &vars);
    let l = project(&mut tape, out);
    tape.backward(l).unwrap();
    let grads: Vec<Tensor> = vars
        .iter()
        .map(|&v| tape.grad(v).expect("inputs are parameters"))
        .collect();

    let mut stats = FdStats::default();
    let mut values = inputs.to_vec();
    for (i, g) in grads.iter().enumerate() {
        for j in 0..values[i].len() {
            let x = values[i].data()[j];
            values[i].data_mut()[j] = x + FD_STEP;
            let up = eval(&values);
            values[i].data_mut()[j] = x - FD_STEP;
            let down = eval(&values);
            values[i].data_mut()[j] = x;
            let numeric = (up - down) / (2.0 * FD_STEP);
            stats.record(|| format!("input {i}[{j}]"), g.data()[j], numeric);
        }
    }
    stats
}

/// Same comparison for every element of every block of `params`, with the
/// loss built on a bound copy of the parameters.
pub fn fd_check_params(params: &ModelParams, loss: impl Fn(&mut Tape, &Bound) -> Var) -> FdStats {
    let eval = |p: &ModelParams| -> f64 {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let l = loss(&mut tape, &bound);
        tape.value(l).item().unwrap()
    };
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let l = loss(&mut tape, &bound);
    tape.backward(l).unwrap();
    let grads: Vec<(String, Tensor)> = bound
        .vars()
        .zip(params.blocks())
        .map(|(v, b)| (b.name.clone(), tape.grad(v).expect("bound parameters")))
        .collect();

    compare_blocks(params, &grads, eval)
}

/// Blocks whose exact gradient is zero: the temporal scorer bias shifts
/// every score equally and the softmax over time-steps cancels it. A
/// central difference only returns rounding noise there, so these blocks
/// are held to `|analytic| ≤ INERT_LIMIT` instead.
pub const INERT_BLOCKS: &[&str] = &["age.scorer.bias"];
pub const INERT_LIMIT: f64 = 1e-15;

fn compare_blocks(params: &ModelParams, grads: &[(String, Tensor)], eval: impl Fn(&ModelParams) -> f64) -> FdStats {
    let mut stats = FdStats::default();
    let mut p = params.clone();
    for (k, (name, g)) in grads.iter().enumerate() {
        if INERT_BLOCKS.contains(&name.as_str()) {
            for (j, &a) in g.data().iter().enumerate() {
                stats.checked += 1;
                if a.abs() > INERT_LIMIT || a.is_nan() {
                    stats.worst = f64::INFINITY;
                    stats.worst_at = format!("{name}[{j}] should have zero gradient");
                    stats.analytic = a;
                    stats.numeric = 0.0;
                }
            }
            continue;
        }
        for j in 0..g.len() {
            let x = p.blocks()[k].value.data()[j];
            p.blocks_mut()[k].value.data_mut()[j] = x + FD_STEP;
            let up = eval(&p);
            p.blocks_mut()[k].value.data_mut()[j] = x - FD_STEP;
            let down = eval(&p);
            p.blocks_mut()[k].value.data_mut()[j] = x;
            let numeric = (up - down) / (2.0 * FD_STEP);
            stats.record(|| format!("{name}[{j}]"), g.data()[j], numeric);
        }
    }
    stats
}

/// Adds `U(−scale, scale)` noise to every parameter, so that zero-initialized
/// blocks take part in the check.
pub fn jitter(params: &mut ModelParams, scale: f64, seed: u64) {
    let mut rng = seeded(seed);
    for b in params.blocks_mut() {
        for v in b.value.data_mut() {
            *v += rng.random_range(-scale..scale);
        }
    }
}

/// Parameter check for a loss that records its own forward pass.
pub fn fd_check_model(
    params: &ModelParams,
    loss: impl Fn(&ModelParams) -> (harforge_core::model::Forward, Var),
) -> FdStats {
    let eval = |p: &ModelParams| -> f64 {
        let (f, l) = loss(p);
        f.tape.value(l).item().unwrap()
    };
    let (mut f, l) = loss(params);
    f.tape.backward(l).unwrap();
    let grads: Vec<(String, Tensor)> = f
        .params
        .vars()
        .zip(params.blocks())
        .map(|(v, b)| (b.name.clone(), f.tape.grad(v).expect("bound parameters")))
        .collect();

    compare_blocks(params, &grads, eval)
}
