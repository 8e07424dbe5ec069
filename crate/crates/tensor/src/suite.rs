//! Randomized gradient checks for every differentiable tape operation.

use rand::Rng;

use crate::error::Result;
use crate::gradcheck::{grad_check_many, DEFAULT_EPS};
use crate::rng::stream;
use crate::shape::Pool;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Worst relative error seen for one operation across its instances.
#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub op: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
}

type Builder = fn(&mut Tape<f64>, &[Var], &Case) -> Result<Var>;

/// Non-differentiated data for one instance.
struct Case {
    labels: Vec<usize>,
    indices: Vec<usize>,
    targets: Option<Tensor<f64>>,
    stride: usize,
    pad: usize,
    axis: usize,
    start: usize,
    len: usize,
    window: usize,
}

fn randn(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0)).expect("valid shape")
}

/// Values with magnitude in `[0.1, 1]`, keeping relu away from its kink.
fn away_from_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.1..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
    .expect("valid shape")
}

/// Reduces an output to a scalar through a fixed random weighting.
fn weighted_sum(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = stream(seed, "suite.weights");
    let w = randn(&mut rng, tape.shape(y));
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

fn default_case() -> Case {
    Case {
        labels: Vec::new(),
        indices: Vec::new(),
        targets: None,
        stride: 1,
        pad: 0,
        axis: 0,
        start: 0,
        len: 1,
        window: 1,
    }
}

fn instance(op: &str, rng: &mut impl Rng) -> (Vec<Tensor<f64>>, Case) {
    let mut case = default_case();
    let n = rng.gen_range(1..=2);
    let c = rng.gen_range(1..=3);
    let h = rng.gen_range(3..=5);
    let w = rng.gen_range(3..=5);
    let inputs = match op {
        "conv2d" => {
            let k = rng.gen_range(1..=3);
            case.stride = rng.gen_range(1..=2);
            case.pad = rng.gen_range(0..=1);
            let o = rng.gen_range(1..=3);
            vec![randn(rng, &[n, c, h, w]), randn(rng, &[o, c, k, k]), randn(rng, &[o])]
        }
        "linear" => {
            let d = rng.gen_range(1..=5);
            let k = rng.gen_range(1..=4);
            vec![randn(rng, &[n, d]), randn(rng, &[d, k]), randn(rng, &[k])]
        }
        "relu" => vec![away_from_zero(rng, &[n, c, h])],
        "sigmoid" | "tanh" | "softmax" | "reshape" | "flatten" | "scale" | "sum" => {
            vec![randn(rng, &[n, c, h])]
        }
        "avg_pool2d" => {
            case.window = rng.gen_range(1..=3);
            vec![randn(rng, &[n, c, h, w])]
        }
        "avg_pool2d_global" => vec![randn(rng, &[n, c, h, w])],
        "concat" => {
            case.axis = rng.gen_range(0..3);
            let mut a = vec![n, c, h];
            let mut b = a.clone();
            b[case.axis] = rng.gen_range(1..=3);
            a[case.axis] = rng.gen_range(1..=3);
            vec![randn(rng, &a), randn(rng, &b)]
        }
        "slice" => {
            case.axis = rng.gen_range(0..3);
            let shape = [n + 1, c + 1, h];
            let extent = shape[case.axis];
            case.start = rng.gen_range(0..extent);
            case.len = rng.gen_range(1..=extent - case.start);
            vec![randn(rng, &shape)]
        }
        "select_rows" => {
            let rows = rng.gen_range(2..=4);
            case.indices = (0..rng.gen_range(1..=5)).map(|_| rng.gen_range(0..rows)).collect();
            vec![randn(rng, &[rows, c, h])]
        }
        "select_channel" => {
            case.indices = (0..n).map(|_| rng.gen_range(0..c)).collect();
            vec![randn(rng, &[n, c, h, w])]
        }
        "channel_mul" => vec![randn(rng, &[n, c, h, w]), randn(rng, &[n, 1, h, w])],
        "add" | "mul" => vec![randn(rng, &[n, c, h]), randn(rng, &[n, c, h])],
        "cross_entropy" => {
            let k = rng.gen_range(2..=5);
            case.labels = (0..n).map(|_| rng.gen_range(0..k)).collect();
            vec![Tensor::from_fn(&[n, k], |_| rng.gen_range(-3.0..3.0)).expect("shape")]
        }
        "soft_nll" | "binary_ce" => {
            let k = rng.gen_range(2..=9);
            let t = Tensor::from_fn(&[n, k], |_| rng.gen_range(0.0..1.0)).expect("shape");
            case.targets = Some(t);
            vec![randn(rng, &[n, k])]
        }
        other => unreachable!("no generator for {other}"),
    };
    (inputs, case)
}

fn build(op: &'static str) -> Builder {
    match op {
        "conv2d" => |t, v, c| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), c.stride, c.pad)?;
            weighted_sum(t, y, 1)
        },
        "linear" => |t, v, _| {
            let y = t.linear(v[0], v[1], Some(v[2]))?;
            weighted_sum(t, y, 2)
        },
        "relu" => |t, v, _| {
            let y = t.relu(v[0])?;
            weighted_sum(t, y, 3)
        },
        "sigmoid" => |t, v, _| {
            let y = t.sigmoid(v[0])?;
            weighted_sum(t, y, 4)
        },
        "tanh" => |t, v, _| {
            let y = t.tanh(v[0])?;
            weighted_sum(t, y, 5)
        },
        "softmax" => |t, v, _| {
            let y = t.softmax(v[0])?;
            weighted_sum(t, y, 6)
        },
        "avg_pool2d" => |t, v, c| {
            let y = t.avg_pool2d(v[0], Pool::Window(c.window))?;
            weighted_sum(t, y, 7)
        },
        "avg_pool2d_global" => |t, v, _| {
            let y = t.avg_pool2d(v[0], Pool::Global)?;
            weighted_sum(t, y, 8)
        },
        "reshape" => |t, v, _| {
            let n: usize = t.shape(v[0]).iter().product();
            let y = t.reshape(v[0], &[n, 1])?;
            weighted_sum(t, y, 9)
        },
        "flatten" => |t, v, _| {
            let y = t.flatten(v[0])?;
            weighted_sum(t, y, 10)
        },
        "concat" => |t, v, c| {
            let y = t.concat(&[v[0], v[1]], c.axis)?;
            weighted_sum(t, y, 11)
        },
        "slice" => |t, v, c| {
            let y = t.slice(v[0], c.axis, c.start, c.len)?;
            weighted_sum(t, y, 12)
        },
        "select_rows" => |t, v, c| {
            let y = t.select_rows(v[0], &c.indices)?;
            weighted_sum(t, y, 13)
        },
        "select_channel" => |t, v, c| {
            let y = t.select_channel(v[0], &c.indices)?;
            weighted_sum(t, y, 14)
        },
        "channel_mul" => |t, v, _| {
            let y = t.channel_mul(v[0], v[1])?;
            weighted_sum(t, y, 15)
        },
        "add" => |t, v, _| {
            let y = t.add(v[0], v[1])?;
            weighted_sum(t, y, 16)
        },
        "mul" => |t, v, _| {
            let y = t.mul(v[0], v[1])?;
            weighted_sum(t, y, 17)
        },
        "scale" => |t, v, _| {
            let y = t.scale(v[0], -1.7)?;
            weighted_sum(t, y, 18)
        },
        "sum" => |t, v, _| {
            let sq = t.mul(v[0], v[0])?;
            t.sum(sq)
        },
        "cross_entropy" => |t, v, c| t.cross_entropy(v[0], &c.labels),
        "soft_nll" => |t, v, c| {
            let p = t.softmax(v[0])?;
            let targets = c.targets.as_ref().expect("targets");
            t.soft_nll(p, targets, 3.0)
        },
        "binary_ce" => |t, v, c| {
            let p = t.sigmoid(v[0])?;
            let targets = c.targets.as_ref().expect("targets");
            t.binary_ce(p, targets, 3.0)
        },
        other => unreachable!("no builder for {other}"),
    }
}

/// Every differentiable operation on the tape, in check order.
pub const OPS: &[&str] = &[
    "conv2d",
    "linear",
    "relu",
    "sigmoid",
    "tanh",
    "softmax",
    "avg_pool2d",
    "avg_pool2d_global",
    "reshape",
    "flatten",
    "concat",
    "slice",
    "select_rows",
    "select_channel",
    "channel_mul",
    "add",
    "mul",
    "scale",
    "sum",
    "cross_entropy",
    "soft_nll",
    "binary_ce",
];

/// Runs `instances` random checks per operation.
pub fn gradient_suite(instances: usize, seed: u64) -> Result<Vec<OpCheck>> {
    let mut out = Vec::with_capacity(OPS.len());
    for &op in OPS {
        let mut rng = stream(seed, &format!("suite.{op}"));
        let f = build(op);
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let (inputs, case) = instance(op, &mut rng);
            let report = grad_check_many(|t, v| f(t, v, &case), &inputs, DEFAULT_EPS)?;
            // f64::max would drop a NaN error, so propagate it explicitly.
            worst = if worst.is_nan() || report.max_rel_error.is_nan() {
                f64::NAN
            } else {
                worst.max(report.max_rel_error)
            };
        }
        out.push(OpCheck {
            op,
            instances,
            max_rel_error: worst,
        });
    }
    Ok(out)
}
