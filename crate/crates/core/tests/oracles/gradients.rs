//! Central finite differences against backward() for every op and for the
//! full two-stream model, all in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strokenet::gradcheck::{grad_check, relative_error};
use strokenet::model::{fuse_outputs, Fusion, ModelConfig, Streams, TwoStreamNet};
use strokenet::{Result, Tape, Tensor, Var};

const OP_TOL: f64 = 1e-4;
const MODEL_TOL: f64 = 1e-3;
const H: f64 = 1e-6;
/// Input gradients of the full model are tiny (softmax feeds softmax), so
/// a larger step keeps roundoff below the tolerance.
const MODEL_H: f64 = 1e-4;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Values bounded away from zero so ReLU kinks are never crossed.
fn away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    random(shape, seed).map(|v| if v >= 0.0 { v + 0.1 } else { v - 0.1 })
}

/// Reduces any output to a scalar through a fixed random projection, so
/// every output element gets a distinct upstream gradient.
fn project<'t>(tape: &'t Tape<f64>, y: Var<'t, f64>) -> Result<Var<'t, f64>> {
    let r = tape.constant(random(&y.shape(), 99));
    Ok(y.mul(r)?.sum())
}

fn check<G>(name: &str, f: G, x: &Tensor<f64>, tol: f64)
where
    G: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let err = grad_check(f, x, H).unwrap();
    assert!(err < tol, "{name}: relative error {err:e}");
}

pub fn conv3d_gradients() {
    let (xs, ws) = ([2, 2, 3, 4, 5], [3, 2, 3, 3, 3]);
    let (x, w, b) = (random(&xs, 1), random(&ws, 2), random(&[3], 3));
    for pad in [[1, 1, 1], [0, 1, 0]] {
        let (w1, b1) = (w.clone(), b.clone());
        check(
            "conv3d/x",
            move |t, x| project(t, x.conv3d(t.constant(w1.clone()), t.constant(b1.clone()), pad)?),
            &x,
            OP_TOL,
        );
        let (x1, b1) = (x.clone(), b.clone());
        check(
            "conv3d/w",
            move |t, w| project(t, t.constant(x1.clone()).conv3d(w, t.constant(b1.clone()), pad)?),
            &w,
            OP_TOL,
        );
        let (x1, w1) = (x.clone(), w.clone());
        check(
            "conv3d/b",
            move |t, b| project(t, t.constant(x1.clone()).conv3d(t.constant(w1.clone()), b, pad)?),
            &b,
            OP_TOL,
        );
    }
}

pub fn maxpool3d_gradient() {
    // distinct values, so no perturbation changes the selected maximum
    let x = Tensor::from_fn(&[2, 2, 3, 5, 4], |i| ((i * 37) % 241) as f64 * 0.01);
    for pool in [[2, 2, 2], [1, 3, 2], [3, 2, 4]] {
        check("maxpool3d", move |t, x| project(t, x.maxpool3d(pool)?), &x, OP_TOL);
    }
}

pub fn elementwise_gradients() {
    let x = away_from_zero(&[3, 7], 4);
    check("relu", |t, x| project(t, x.relu()), &x, OP_TOL);
    check("sigmoid", |t, x| project(t, x.sigmoid()), &x, OP_TOL);
    check("scale", |t, x| project(t, x.scale(-2.5)), &x, OP_TOL);
    check("sum", |_, x| Ok(x.sum()), &x, OP_TOL);
    let other = random(&[3, 7], 5);
    let o1 = other.clone();
    check("add", move |t, x| project(t, x.add(t.constant(o1.clone()))?), &x, OP_TOL);
    check("mul", move |t, x| project(t, x.mul(t.constant(other.clone()))?), &x, OP_TOL);
    check("mul/self", |t, x| project(t, x.mul(x)?), &x, OP_TOL);
}

pub fn shape_op_gradients() {
    let x = random(&[2, 3, 4], 6);
    check("reshape", |t, x| project(t, x.reshape(&[4, 6])?), &x, OP_TOL);
    check("flatten", |t, x| project(t, x.flatten()?), &x, OP_TOL);
    let m = random(&[3, 4], 7);
    let other = random(&[3, 2], 8);
    check("concat", move |t, x| project(t, x.concat(t.constant(other.clone()))?), &m, OP_TOL);
}

pub fn linear_gradients() {
    let (x, w, b) = (random(&[4, 6], 9), random(&[5, 6], 10), random(&[5], 11));
    let (w1, b1) = (w.clone(), b.clone());
    check("linear/x", move |t, x| project(t, x.linear(t.constant(w1.clone()), t.constant(b1.clone()))?), &x, OP_TOL);
    let (x1, b1) = (x.clone(), b.clone());
    check("linear/w", move |t, w| project(t, t.constant(x1.clone()).linear(w, t.constant(b1.clone()))?), &w, OP_TOL);
    check("linear/b", move |t, b| project(t, t.constant(x.clone()).linear(t.constant(w.clone()), b)?), &b, OP_TOL);
}

pub fn softmax_and_cross_entropy_gradients() {
    let x = random(&[4, 5], 12).map(|v| 3.0 * v);
    check("softmax", |t, x| project(t, x.softmax()?), &x, OP_TOL);
    check("softmax+ce", |_, x| x.softmax()?.cross_entropy(&[0, 4, 2, 2]), &x, OP_TOL);
    // cross entropy on its own, away from the probability floor
    let p = random(&[3, 4], 13).map(|v| 0.2 + 0.15 * v);
    check("ce", |_, p| p.cross_entropy(&[1, 3, 0]), &p, OP_TOL);
}

pub fn fusion_gradients() {
    let pa = random(&[3, 4], 14).softmax_rows();
    let pb = random(&[3, 4], 15).softmax_rows();
    for mode in [Fusion::Summed, Fusion::Weighted { w1: 0.3, w2: 1.7 }] {
        let b = pb.clone();
        check(
            "fusion/a",
            move |t, a| fuse_outputs(a, t.constant(b.clone()), mode, None)?.cross_entropy(&[0, 1, 3]),
            &pa,
            OP_TOL,
        );
    }
    let (w, bias) = (random(&[4, 8], 16), random(&[4], 17));
    let (b1, w1, bias1) = (pb.clone(), w.clone(), bias.clone());
    check(
        "fusion/concat/a",
        move |t, a| {
            let head = Some((t.constant(w1.clone()), t.constant(bias1.clone())));
            fuse_outputs(a, t.constant(b1.clone()), Fusion::Concat, head)?.cross_entropy(&[2, 0, 1])
        },
        &pa,
        OP_TOL,
    );
    check(
        "fusion/concat/w",
        move |t, w| {
            let head = Some((w, t.constant(bias.clone())));
            fuse_outputs(t.constant(pa.clone()), t.constant(pb.clone()), Fusion::Concat, head)?.cross_entropy(&[2, 0, 1])
        },
        &w,
        OP_TOL,
    );
}

pub fn attention_block_gradient() {
    let cfg = ModelConfig {
        filters: vec![9, 2, 2, 2, 2],
        ..ModelConfig::tiny(3)
    };
    let net = TwoStreamNet::<f64>::init(&cfg, 4).unwrap();
    let x = random(&[2, 9, 2, 3, 3], 18);
    check(
        "attention",
        |t, x| {
            let bound = net.bind_frozen(t);
            project(t, net.attention_forward(&bound, net.attention_block(0, 0), x)?)
        },
        &x,
        OP_TOL,
    );
}

trait SoftmaxRows {
    fn softmax_rows(&self) -> Self;
}

impl SoftmaxRows for Tensor<f64> {
    fn softmax_rows(&self) -> Self {
        let k = self.shape()[1];
        Tensor::new(self.shape().to_vec(), strokenet::autodiff::softmax_rows(self.data(), k)).unwrap()
    }
}

fn model_loss(net: &TwoStreamNet<f64>, a: &Tensor<f64>, b: &Tensor<f64>, targets: &[usize]) -> f64 {
    let tape = Tape::new();
    let bound = net.bind_frozen(&tape);
    let out = net.forward(&bound, tape.constant(a.clone()), Some(tape.constant(b.clone()))).unwrap();
    let loss = out.cross_entropy(targets).unwrap();
    let v = loss.value().item().unwrap();
    v
}

/// Checks every parameter coordinate and both input clips of the tiny
/// two-stream model under each fusion rule.
pub fn full_model_gradients() {
    let targets = [0, 2];
    for (i, fusion) in [Fusion::Summed, Fusion::Weighted { w1: 0.7, w2: 1.3 }, Fusion::Concat]
        .into_iter()
        .enumerate()
    {
        let cfg = ModelConfig {
            fusion,
            streams: Streams::Two,
            ..ModelConfig::tiny(3)
        };
        let mut net = TwoStreamNet::<f64>::init(&cfg, 20 + i as u64).unwrap();
        let shape = cfg.clip_shape(2).to_vec();
        let (a, b) = (random(&shape, 30), random(&shape, 31));

        let tape = Tape::new();
        let bound = net.bind(&tape);
        let (av, bv) = (tape.param(a.clone()), tape.param(b.clone()));
        let loss = net.forward(&bound, av, Some(bv)).unwrap().cross_entropy(&targets).unwrap();
        tape.backward(loss).unwrap();
        let analytic: Vec<Tensor<f64>> = bound
            .vars()
            .iter()
            .map(|&v| tape.grad(v).unwrap())
            .collect();

        let mut worst = 0.0f64;
        for p in 0..net.params().len() {
            for j in 0..net.params()[p].value.numel() {
                let orig = net.params()[p].value.data()[j];
                net.params_mut()[p].value.data_mut()[j] = orig + MODEL_H;
                let up = model_loss(&net, &a, &b, &targets);
                net.params_mut()[p].value.data_mut()[j] = orig - MODEL_H;
                let down = model_loss(&net, &a, &b, &targets);
                net.params_mut()[p].value.data_mut()[j] = orig;
                let numeric = (up - down) / (2.0 * MODEL_H);
                worst = worst.max(relative_error(analytic[p].data()[j], numeric));
            }
        }
        let clip_err = |clip: &Tensor<f64>, grad: &Tensor<f64>, first: bool| {
            let mut probe = clip.clone();
            let mut worst = 0.0f64;
            for j in 0..clip.numel() {
                let orig = probe.data()[j];
                let eval = |probe: &Tensor<f64>| if first { model_loss(&net, probe, &b, &targets) } else { model_loss(&net, &a, probe, &targets) };
                probe.data_mut()[j] = orig + MODEL_H;
                let up = eval(&probe);
                probe.data_mut()[j] = orig - MODEL_H;
                let down = eval(&probe);
                probe.data_mut()[j] = orig;
                worst = worst.max(relative_error(grad.data()[j], (up - down) / (2.0 * MODEL_H)));
            }
            worst
        };
        worst = worst.max(clip_err(&a, &tape.grad(av).unwrap(), true));
        worst = worst.max(clip_err(&b, &tape.grad(bv).unwrap(), false));
        assert!(worst < MODEL_TOL, "{fusion:?}: relative error {worst:e}");
    }
}
