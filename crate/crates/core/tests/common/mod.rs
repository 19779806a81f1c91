//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use mrnet::ndsignal::*;
use mrnet::network::{Model, ModelConfig};
use mrnet::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(shape: Shape, rng: &mut impl Rng) -> Grid<f64> {
    Grid::from_parts(shape, (0..shape.numel()).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Values in ±[0.1, 1], keeping finite differences away from the ReLU kink.
pub fn away_from_zero(shape: Shape, rng: &mut impl Rng) -> Grid<f64> {
    Grid::from_parts(
        shape,
        (0..shape.numel())
            .map(|_| {
                let m = rng.random_range(0.1..1.0);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect(),
    )
}

/// `‖a − n‖∞ / max(‖a‖∞, ‖n‖∞)`, 0 when both vanish.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|v| v.abs()).fold(0.0, f64::max);
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `Σ r ⊙ forward(inputs)` for every input element.
pub fn numeric_grads(
    inputs: &[Grid<f64>],
    r: &[f64],
    forward: &dyn Fn(&[Grid<f64>]) -> Result<Grid<f64>>,
) -> Vec<Vec<f64>> {
    let loss = |xs: &[Grid<f64>]| -> f64 {
        let y = forward(xs).expect("forward");
        y.data().iter().zip(r).map(|(a, b)| a * b).sum()
    };
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = Vec::with_capacity(inputs[i].numel());
        for j in 0..inputs[i].numel() {
            let x0 = work[i].data()[j];
            work[i].data_mut()[j] = x0 + FD_STEP;
            let up = loss(&work);
            work[i].data_mut()[j] = x0 - FD_STEP;
            let down = loss(&work);
            work[i].data_mut()[j] = x0;
            g.push((up - down) / (2.0 * FD_STEP));
        }
        out.push(g);
    }
    out
}

type Record = dyn for<'p> Fn(&mut Tape<'p, f64>, &[Var]) -> Result<Var>;

/// Worst relative error between tape gradients and central differences over
/// all inputs of one op.
pub fn check_op(
    inputs: &[Grid<f64>],
    forward: &dyn Fn(&[Grid<f64>]) -> Result<Grid<f64>>,
    record: &Record,
    seed: u64,
) -> Result<f64> {
    let out_shape = forward(inputs)?.shape();
    let r: Vec<f64> = random_grid(out_shape, &mut rng(seed ^ 0xABCD)).into_data();

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|g| tape.leaf(g.clone())).collect();
    let y = record(&mut tape, &vars)?;
    let s = tape.weighted_sum(y, Grid::from_parts(out_shape, r.clone()))?;
    tape.backward(s)?;

    let numeric = numeric_grads(inputs, &r, forward);
    let mut worst: f64 = 0.0;
    for (v, n) in vars.iter().zip(&numeric) {
        let a = tape.grad_or_zeros(*v)?;
        worst = worst.max(rel_error(a.data(), n));
    }
    Ok(worst)
}

pub struct OpResult {
    pub op: &'static str,
    pub error: f64,
}

/// One randomized trial over every differentiable op.
pub fn gradient_trial(seed: u64) -> Result<Vec<OpResult>> {
    let mut g = rng(seed);
    let n = g.random_range(1..=3usize);
    let len = g.random_range(3..=64usize);
    let c = g.random_range(1..=8usize);
    let shape = Shape::new(n, len, c);
    let mut out = Vec::new();
    let mut push = |op, error| out.push(OpResult { op, error });

    // convolution, stride 1 and 2
    for stride in [1, 2] {
        let k = g.random_range(1..=len.min(9));
        let cout = g.random_range(1..=8);
        let spec = ConvSpec::new(k, c, cout, stride)?;
        let inputs = [
            random_grid(shape, &mut g),
            random_grid(spec.weight_shape(), &mut g),
            random_grid(spec.bias_shape(), &mut g),
        ];
        let e = check_op(
            &inputs,
            &move |x| conv1d(&x[0], &x[1], &x[2], &spec),
            &move |t, v| t.conv1d(v[0], v[1], v[2], spec),
            seed,
        )?;
        push(if stride == 1 { "conv1d" } else { "conv1d/stride2" }, e);
    }

    // fully connected
    {
        let d_in = len;
        let d_out = g.random_range(1..=8);
        let inputs = [
            random_grid(Shape::new(n, 1, d_in), &mut g),
            random_grid(Shape::new(1, d_out, d_in), &mut g),
            random_grid(Shape::new(1, 1, d_out), &mut g),
        ];
        let e = check_op(
            &inputs,
            &|x| fully_connected(&x[0], &x[1], &x[2]),
            &|t, v| t.fully_connected(v[0], v[1], v[2]),
            seed,
        )?;
        push("fully_connected", e);
    }

    let x = [away_from_zero(shape, &mut g)];
    push("relu", check_op(&x, &|x| Ok(relu(&x[0])), &|t, v| Ok(t.relu(v[0])), seed)?);
    let x = [random_grid(shape, &mut g)];
    push("sigmoid", check_op(&x, &|x| Ok(sigmoid(&x[0])), &|t, v| Ok(t.sigmoid(v[0])), seed)?);

    // batch norm needs at least two samples in training mode
    {
        let bshape = Shape::new(n.max(2), len, c);
        let p = Shape::new(1, 1, c);
        let inputs = [random_grid(bshape, &mut g), random_grid(p, &mut g), random_grid(p, &mut g)];
        let e = check_op(
            &inputs,
            &|x| Ok(batch_norm1d(&x[0], &x[1], &x[2], BnMode::Train)?.0),
            &|t, v| t.batch_norm(v[0], v[1], v[2], BnMode::Train),
            seed,
        )?;
        push("batch_norm/train", e);

        let mean: Vec<f64> = (0..c).map(|_| g.random_range(-0.5..0.5)).collect();
        let var: Vec<f64> = (0..c).map(|_| g.random_range(0.2..2.0)).collect();
        let inputs = [random_grid(shape, &mut g), random_grid(p, &mut g), random_grid(p, &mut g)];
        let (m1, v1) = (mean.clone(), var.clone());
        let e = check_op(
            &inputs,
            &move |x| Ok(batch_norm1d(&x[0], &x[1], &x[2], BnMode::Eval { mean: &m1, var: &v1 })?.0),
            &move |t, v| t.batch_norm(v[0], v[1], v[2], BnMode::Eval { mean: &mean, var: &var }),
            seed,
        )?;
        push("batch_norm/eval", e);
    }

    let xs = [random_grid(shape, &mut g), random_grid(shape, &mut g)];
    push("add", check_op(&xs, &|x| add(&x[0], &x[1]), &|t, v| t.add(v[0], v[1]), seed)?);

    let target = g.random_range(1..=len);
    let x = [random_grid(shape, &mut g)];
    push(
        "adaptive_avg_pool",
        check_op(
            &x,
            &move |x| adaptive_avg_pool(&x[0], target),
            &move |t, v| t.adaptive_avg_pool(v[0], target),
            seed,
        )?,
    );

    let x = [random_grid(shape, &mut g)];
    push("upsample2x", check_op(&x, &|x| Ok(upsample2x(&x[0])), &|t, v| Ok(t.upsample2x(v[0])), seed)?);

    let c2 = g.random_range(1..=8);
    let xs = [random_grid(shape, &mut g), random_grid(Shape::new(n, len, c2), &mut g)];
    push(
        "concat_channels",
        check_op(&xs, &|x| concat_channels(&x[0], &x[1]), &|t, v| t.concat_channels(v[0], v[1]), seed)?,
    );

    let xs = [random_grid(shape, &mut g), random_grid(Shape::new(n, 1, c), &mut g)];
    push(
        "scale_channels",
        check_op(&xs, &|x| scale_channels(&x[0], &x[1]), &|t, v| t.scale_channels(v[0], v[1]), seed)?,
    );

    let dseed: u64 = g.random();
    let x = [random_grid(shape, &mut g)];
    push(
        "dropout",
        check_op(
            &x,
            &move |x| Ok(dropout(&x[0], 0.3, dseed, Mode::Train)?.0),
            &move |t, v| t.dropout(v[0], 0.3, dseed, Mode::Train),
            seed,
        )?,
    );

    let x = [random_grid(shape, &mut g)];
    push("flatten", check_op(&x, &|x| Ok(flatten(x[0].clone())), &|t, v| Ok(t.flatten(v[0])), seed)?);

    // softmax cross-entropy: scalar loss, checked directly
    {
        let k = c + 1;
        let labels: Vec<usize> = (0..n).map(|_| g.random_range(0..k)).collect();
        let logits = [random_grid(Shape::new(n, 1, k), &mut g)];
        let l2 = labels.clone();
        let e = check_op(
            &logits,
            &move |x| Ok(Grid::from_parts(Shape::new(1, 1, 1), vec![softmax_xent(&x[0], &l2)?.loss])),
            &move |t, v| Ok(t.softmax_xent(v[0], &labels)?.0),
            seed,
        )?;
        push("softmax_xent", e);
    }
    Ok(out)
}

/// Whole-model check on the tiny configuration: gradients of the mean
/// cross-entropy w.r.t. every trainable parameter and the input, in training
/// mode (batch statistics, no dropout).
pub fn model_gradient_error(seed: u64) -> Result<f64> {
    let cfg = ModelConfig::tiny();
    let model = Model::<f64>::new(cfg.clone(), seed)?;
    let mut g = rng(seed);
    let n = 2;
    let x = random_grid(Shape::new(n, cfg.backbone.input_length, 1), &mut g);
    let labels: Vec<usize> = (0..n).map(|_| g.random_range(0..5)).collect();

    let loss_of = |m: &Model<f64>, x: &Grid<f64>| -> f64 {
        let mut pass = m.forward(x, Mode::Train, 0).expect("forward");
        pass.tape.softmax_xent(pass.logits, &labels).expect("loss").1.loss
    };

    let mut pass = model.forward(&x, Mode::Train, 0)?;
    let (loss, _) = pass.tape.softmax_xent(pass.logits, &labels)?;
    pass.tape.backward(loss)?;
    let grads = pass.param_grads()?;
    let input_grad = pass.tape.grad_or_zeros(pass.input)?;

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut probe = model.clone();
    for (id, grad) in grads.iter().enumerate() {
        let Some(grad) = grad else { continue };
        let pid = probe.params().id(&model.params().iter().nth(id).unwrap().name).unwrap();
        if !probe.params().get(pid).trainable {
            continue;
        }
        for j in 0..grad.numel() {
            let x0 = probe.params().get(pid).value.data()[j];
            probe.params_mut().get_mut(pid).value.data_mut()[j] = x0 + FD_STEP;
            let up = loss_of(&probe, &x);
            probe.params_mut().get_mut(pid).value.data_mut()[j] = x0 - FD_STEP;
            let down = loss_of(&probe, &x);
            probe.params_mut().get_mut(pid).value.data_mut()[j] = x0;
            analytic.push(grad.data()[j]);
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
    }
    let mut xw = x.clone();
    for j in 0..x.numel() {
        let x0 = xw.data()[j];
        xw.data_mut()[j] = x0 + FD_STEP;
        let up = loss_of(&model, &xw);
        xw.data_mut()[j] = x0 - FD_STEP;
        let down = loss_of(&model, &xw);
        xw.data_mut()[j] = x0;
        analytic.push(input_grad.data()[j]);
        numeric.push((up - down) / (2.0 * FD_STEP));
    }
    Ok(rel_error(&analytic, &numeric))
}

/// Straight transcription of the correction loop: scan the raw labels, and at
/// every change build the reweighted confidence vector by hand.
pub fn reference_msc(probs: &[[f64; 5]], m: &[[f64; 5]; 5], a: f64, n: usize) -> Vec<usize> {
    let c: Vec<usize> = probs.iter().map(|p| first_max(p)).collect();
    let mut out = c.clone();
    let mut i = 1;
    while i < c.len() {
        if c[i] != c[i - 1] {
            let mut w = 0.0;
            let mut decay = 1.0;
            for j in 1..=n {
                decay /= a;
                if i + j >= c.len() {
                    break;
                }
                if c[i + j] == c[i - 1] {
                    w += decay;
                } else if c[i + j] == c[i] {
                    w -= decay;
                }
            }
            let mut r = m[c[i - 1]].to_vec();
            r[c[i - 1]] = r[c[i - 1]] * w;
            let mut p2 = [0.0; 5];
            for k in 0..5 {
                p2[k] = probs[i][k] * r[k];
            }
            out[i] = first_max(&p2);
        }
        i += 1;
    }
    out
}

fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..v.len() {
        if v[k] > v[best] {
            best = k;
        }
    }
    best
}

pub struct BruteMetrics {
    pub acc: f64,
    pub f1: [f64; 5],
    pub mf1: f64,
}

/// Precision/recall per class by direct counting over the pairs.
pub fn brute_metrics(truth: &[usize], pred: &[usize]) -> BruteMetrics {
    let hits = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    let mut f1 = [0.0; 5];
    for (c, f) in f1.iter_mut().enumerate() {
        let mut tp = 0.0;
        let mut predicted = 0.0;
        let mut actual = 0.0;
        for (&t, &p) in truth.iter().zip(pred) {
            if p == c {
                predicted += 1.0;
            }
            if t == c {
                actual += 1.0;
            }
            if p == c && t == c {
                tp += 1.0;
            }
        }
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        *f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
    }
    BruteMetrics {
        acc: hits as f64 / truth.len() as f64,
        mf1: f1.iter().sum::<f64>() / 5.0,
        f1,
    }
}

/// Random row-stochastic 5×5 matrix with occasional zero entries.
pub fn random_stochastic(rng: &mut impl Rng) -> [[f64; 5]; 5] {
    let mut m = [[0.0; 5]; 5];
    for row in &mut m {
        for v in row.iter_mut() {
            *v = if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.0..1.0) };
        }
        if row.iter().all(|&v| v == 0.0) {
            row[0] = 1.0;
        }
        let s: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    m
}

/// Random confidence vectors whose argmax follows a sticky random walk, so
/// runs and change points both occur.
pub fn random_predictions(len: usize, rng: &mut impl Rng) -> Vec<[f64; 5]> {
    let mut s = rng.random_range(0..5);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.3) {
                s = rng.random_range(0..5);
            }
            let mut p = [0.0; 5];
            for v in &mut p {
                *v = rng.random_range(0.0..1.0);
            }
            p[s] += 1.0;
            let t: f64 = p.iter().sum();
            p.map(|v| v / t)
        })
        .collect()
}
