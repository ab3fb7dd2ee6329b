use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strokenet::model::{fuse_outputs, Fusion};
use strokenet::{Element, Tape, Tensor};

fn distributions<F: Element>(rng: &mut ChaCha8Rng, rows: usize, k: usize) -> Tensor<F> {
    let mut data = Vec::with_capacity(rows * k);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(1e-6..1.0)).collect();
        let total: f64 = raw.iter().sum();
        data.extend(raw.iter().map(|v| F::from_f64(v / total)));
    }
    Tensor::new(vec![rows, k], data).unwrap()
}

fn fuse<F: Element>(a: &Tensor<F>, b: &Tensor<F>, mode: Fusion, head: Option<(&Tensor<F>, &Tensor<F>)>) -> Vec<F> {
    let tape = Tape::new();
    let head = head.map(|(w, c)| (tape.constant(w.clone()), tape.constant(c.clone())));
    let out = fuse_outputs(tape.constant(a.clone()), tape.constant(b.clone()), mode, head).unwrap();
    let v = out.value().data().to_vec();
    v
}

/// Weighted(1, 1) equals Summed bit for bit, Summed is symmetric in its
/// streams and every fusion yields rows summing to 1 within 1e-6, over
/// `cases` random inputs.
pub fn fusion_algebra<F: Element>(cases: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let (rows, k) = (rng.random_range(1..5), rng.random_range(2..9));
        let (a, b) = (distributions::<F>(&mut rng, rows, k), distributions::<F>(&mut rng, rows, k));
        let summed = fuse(&a, &b, Fusion::Summed, None);
        let one_one = fuse(&a, &b, Fusion::Weighted { w1: 1.0, w2: 1.0 }, None);
        assert!(
            summed.iter().zip(&one_one).all(|(x, y)| x.to_f64().to_bits() == y.to_f64().to_bits()),
            "case {case}: weighted(1,1) differs from summed"
        );
        assert_eq!(summed, fuse(&b, &a, Fusion::Summed, None), "case {case}: summed is not symmetric");

        let (w1, w2) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let w = Tensor::from_fn(&[k, 2 * k], |_| F::from_f64(rng.random_range(-3.0..3.0)));
        let c = Tensor::from_fn(&[k], |_| F::from_f64(rng.random_range(-3.0..3.0)));
        for (mode, head) in [
            (Fusion::Summed, None),
            (Fusion::Weighted { w1, w2 }, None),
            (Fusion::Concat, Some((&w, &c))),
        ] {
            let out = fuse(&a, &b, mode, head);
            for row in out.chunks(k) {
                let total: f64 = row.iter().map(|p| p.to_f64()).sum();
                assert!((total - 1.0).abs() <= 1e-6, "case {case}: {mode:?} row sums to {total}");
                assert!(row.iter().all(|p| (0.0..=1.0).contains(&p.to_f64())));
            }
        }
    }
}
