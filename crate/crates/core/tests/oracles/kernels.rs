//! Kernels against straightforward nested-loop references on random shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strokenet::kernels::*;
use strokenet::Element;

pub const SHAPES: usize = 60;

fn random_geometry(rng: &mut ChaCha8Rng) -> ConvGeometry {
    let kernel = [0, 0, 0].map(|_: usize| [1, 3, 5][rng.random_range(0..3)]);
    let padding = kernel.map(|k| rng.random_range(0..=k / 2));
    let input = [0, 0, 0].map(|_: usize| rng.random_range(1..8));
    ConvGeometry {
        batch: rng.random_range(1..4),
        in_channels: rng.random_range(1..5),
        out_channels: rng.random_range(1..10),
        input,
        kernel,
        padding,
    }
}

pub fn random_vec<F: Element>(rng: &mut ChaCha8Rng, n: usize) -> Vec<F> {
    (0..n).map(|_| F::from_f64(rng.random_range(-1.0..1.0))).collect()
}

pub fn sizes(g: &ConvGeometry) -> (usize, usize, usize) {
    let [t, h, w] = g.input;
    let [kt, kh, kw] = g.kernel;
    let [ot, oh, ow] = g.output();
    (
        g.batch * g.in_channels * t * h * w,
        g.out_channels * g.in_channels * kt * kh * kw,
        g.batch * g.out_channels * ot * oh * ow,
    )
}

/// Calls `f(out_index, in_index, weight_index)` for every multiply of the
/// convolution, with padding taps skipped.
fn for_each_tap(g: &ConvGeometry, mut f: impl FnMut(usize, usize, usize)) {
    let [t, h, w] = g.input;
    let [kt, kh, kw] = g.kernel;
    let [ot, oh, ow] = g.output();
    for n in 0..g.batch {
        for co in 0..g.out_channels {
            for a in 0..ot {
                for b in 0..oh {
                    for c in 0..ow {
                        let o = (((n * g.out_channels + co) * ot + a) * oh + b) * ow + c;
                        for ci in 0..g.in_channels {
                            for i in 0..kt {
                                for j in 0..kh {
                                    for k in 0..kw {
                                        let ti = (a + i) as isize - g.padding[0] as isize;
                                        let hi = (b + j) as isize - g.padding[1] as isize;
                                        let wi = (c + k) as isize - g.padding[2] as isize;
                                        if ti < 0 || hi < 0 || wi < 0 {
                                            continue;
                                        }
                                        let (ti, hi, wi) = (ti as usize, hi as usize, wi as usize);
                                        if ti >= t || hi >= h || wi >= w {
                                            continue;
                                        }
                                        let x = (((n * g.in_channels + ci) * t + ti) * h + hi) * w + wi;
                                        let wt = (((co * g.in_channels + ci) * kt + i) * kh + j) * kw + k;
                                        f(o, x, wt);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn ref_conv(g: &ConvGeometry, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let (_, _, n_out) = sizes(g);
    let per = n_out / (g.batch * g.out_channels).max(1);
    let mut out: Vec<f64> = (0..n_out).map(|o| b[(o / per.max(1)) % g.out_channels]).collect();
    for_each_tap(g, |o, xi, wi| out[o] += x[xi] * w[wi]);
    out
}

fn ref_conv_backward(g: &ConvGeometry, x: &[f64], w: &[f64], gout: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (n_in, n_w, n_out) = sizes(g);
    let (mut dx, mut dw, mut db) = (vec![0.0; n_in], vec![0.0; n_w], vec![0.0; g.out_channels]);
    for_each_tap(g, |o, xi, wi| {
        dx[xi] += w[wi] * gout[o];
        dw[wi] += x[xi] * gout[o];
    });
    let per = n_out / (g.batch * g.out_channels).max(1);
    for (o, &v) in gout.iter().enumerate() {
        db[(o / per) % g.out_channels] += v;
    }
    (dx, dw, db)
}

/// `max |a − b| / max |b|`, the error relative to the output's scale.
fn scaled_error<F: Element>(got: &[F], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
    got.iter()
        .zip(want)
        .map(|(a, b)| (a.to_f64() - b).abs())
        .fold(0.0, f64::max)
        / scale
}

fn widen<F: Element>(v: &[F]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64()).collect()
}

pub fn check_conv<F: Element>(seed: u64, tol: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut nonempty, mut empty) = (0, 0);
    while nonempty < SHAPES {
        let g = random_geometry(&mut rng);
        let (n_in, n_w, n_out) = sizes(&g);
        let x: Vec<F> = random_vec(&mut rng, n_in);
        let w: Vec<F> = random_vec(&mut rng, n_w);
        let b: Vec<F> = random_vec(&mut rng, g.out_channels);
        let gout: Vec<F> = random_vec(&mut rng, n_out);
        let (xw, ww, bw, gw) = (widen(&x), widen(&w), widen(&b), widen(&gout));

        let y = conv3d_forward(&g, &x, &w, &b);
        assert!(scaled_error(&y, &ref_conv(&g, &xw, &ww, &bw)) <= tol, "forward {g:?}");

        let (dx_ref, dw_ref, db_ref) = ref_conv_backward(&g, &xw, &ww, &gw);
        let (dw, db) = conv3d_backward_params(&g, &x, &gout);
        let dx = conv3d_backward_input(&g, &w, &gout);
        if n_out > 0 {
            nonempty += 1;
            assert!(scaled_error(&dw, &dw_ref) <= tol, "dw {g:?}");
            assert!(scaled_error(&db, &db_ref) <= tol, "db {g:?}");
            assert!(scaled_error(&dx, &dx_ref) <= tol, "dx {g:?}");
        } else {
            empty += 1;
            assert!(y.is_empty() && dx.iter().all(|v| *v == F::ZERO) && db.iter().all(|v| *v == F::ZERO));
            assert_eq!(dx.len(), n_in);
        }
    }
    assert!(empty > 0);
}

fn ref_pool(x: &[f64], planes: usize, ext: [usize; 3], pool: [usize; 3]) -> (Vec<f64>, Vec<usize>) {
    let out_ext = [0, 1, 2].map(|a| (ext[a] + pool[a] - 1) / pool[a]);
    let (mut vals, mut args) = (Vec::new(), Vec::new());
    for p in 0..planes {
        for a in 0..out_ext[0] {
            for b in 0..out_ext[1] {
                for c in 0..out_ext[2] {
                    let mut best: Option<(f64, usize)> = None;
                    for t in a * pool[0]..((a + 1) * pool[0]).min(ext[0]) {
                        for h in b * pool[1]..((b + 1) * pool[1]).min(ext[1]) {
                            for w in c * pool[2]..((c + 1) * pool[2]).min(ext[2]) {
                                let i = ((p * ext[0] + t) * ext[1] + h) * ext[2] + w;
                                if best.is_none_or(|(v, _)| x[i] > v) {
                                    best = Some((x[i], i));
                                }
                            }
                        }
                    }
                    let (v, i) = best.unwrap();
                    vals.push(v);
                    args.push(i);
                }
            }
        }
    }
    (vals, args)
}

pub fn check_pool() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..SHAPES {
        let planes = rng.random_range(1..6);
        let ext = [0, 0, 0].map(|_: usize| rng.random_range(1..10));
        let pool = [0, 0, 0].map(|_: usize| rng.random_range(1..5));
        // a coarse grid of values so ties are common
        let x: Vec<f64> = (0..planes * ext.iter().product::<usize>())
            .map(|_| rng.random_range(0..6) as f64)
            .collect();
        let (v, a) = maxpool3d_forward(&x, planes, ext, pool);
        let (rv, ra) = ref_pool(&x, planes, ext, pool);
        assert_eq!(v, rv, "{ext:?} {pool:?}");
        assert_eq!(a, ra, "{ext:?} {pool:?}");
        let xf: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let (vf, af) = maxpool3d_forward(&xf, planes, ext, pool);
        assert_eq!(widen(&vf), rv);
        assert_eq!(af, ra);
    }
}

pub fn check_linear<F: Element>(seed: u64, tol: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SHAPES {
        let (rows, features, outputs) = (rng.random_range(1..6), rng.random_range(1..70), rng.random_range(1..12));
        let x: Vec<F> = random_vec(&mut rng, rows * features);
        let w: Vec<F> = random_vec(&mut rng, outputs * features);
        let b: Vec<F> = random_vec(&mut rng, outputs);
        let gout: Vec<F> = random_vec(&mut rng, rows * outputs);
        let (xw, ww, bw, gw) = (widen(&x), widen(&w), widen(&b), widen(&gout));

        let mut y_ref = vec![0.0; rows * outputs];
        let (mut dx_ref, mut dw_ref, mut db_ref) = (vec![0.0; rows * features], vec![0.0; outputs * features], vec![0.0; outputs]);
        for n in 0..rows {
            for k in 0..outputs {
                y_ref[n * outputs + k] = bw[k];
                db_ref[k] += gw[n * outputs + k];
                for f in 0..features {
                    y_ref[n * outputs + k] += xw[n * features + f] * ww[k * features + f];
                    dx_ref[n * features + f] += ww[k * features + f] * gw[n * outputs + k];
                    dw_ref[k * features + f] += xw[n * features + f] * gw[n * outputs + k];
                }
            }
        }
        let y = linear_forward(&x, &w, &b, rows, features);
        let (dx, dw, db) = linear_backward(&x, &w, &gout, rows, features, outputs);
        assert!(scaled_error(&y, &y_ref) <= tol);
        assert!(scaled_error(&dx, &dx_ref) <= tol);
        assert!(scaled_error(&dw, &dw_ref) <= tol);
        assert!(scaled_error(&db, &db_ref) <= tol);
    }
}
