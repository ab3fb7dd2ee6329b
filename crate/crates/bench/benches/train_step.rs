use criterion::{criterion_group, criterion_main, Criterion};
use strokenet::model::{ModelConfig, TwoStreamNet};
use strokenet::{sgd_step, OptimizerConfig, Tape, Tensor};
use strokenet_bench::values;

/// One SGD step of the desk model on a batch of 8 two-stream clips.
fn desk_step(c: &mut Criterion) {
    let cfg = ModelConfig::desk(4);
    let mut net = TwoStreamNet::<f32>::init(&cfg, 0).unwrap();
    let shape = cfg.clip_shape(8);
    let n = shape.iter().product();
    let a = Tensor::new(shape.to_vec(), values(n, 1)).unwrap();
    let b = Tensor::new(shape.to_vec(), values(n, 2)).unwrap();
    let targets = [0, 1, 2, 3, 0, 1, 2, 3];
    let opt = OptimizerConfig::default();
    let mut group = c.benchmark_group("train_step");
    group.sample_size(10);
    group.bench_function("desk_batch8", |bench| {
        bench.iter(|| {
            let tape = Tape::new();
            let bound = net.bind(&tape);
            let out = net.forward(&bound, tape.constant(a.clone()), Some(tape.constant(b.clone()))).unwrap();
            let loss = out.cross_entropy(&targets).unwrap();
            net.zero_grad();
            tape.backward(loss).unwrap();
            net.accumulate_grads(&tape, &bound).unwrap();
            sgd_step(net.params_mut(), &opt);
        })
    });
    group.finish();
}

criterion_group!(benches, desk_step);
criterion_main!(benches);
