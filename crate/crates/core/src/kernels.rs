//! Raw CPU kernels behind the differentiable ops.
//!
//! Every output element (or gradient element) is produced by exactly one
//! task with a fixed summation order, so results do not depend on the
//! number of worker threads.

use rayon::prelude::*;

use crate::tensor::Element;

/// Geometry of a stride-1 3D convolution over `N×C×T×H×W` volumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Input extents `(T, H, W)`.
    pub input: [usize; 3],
    /// Kernel extents `(kT, kH, kW)`.
    pub kernel: [usize; 3],
    /// Zero padding `(pT, pH, pW)`.
    pub padding: [usize; 3],
}

impl ConvGeometry {
    pub fn output(&self) -> [usize; 3] {
        let mut out = [0; 3];
        for a in 0..3 {
            out[a] = (self.input[a] + 2 * self.padding[a] + 1).saturating_sub(self.kernel[a]);
        }
        out
    }

    fn out_volume(&self) -> usize {
        self.output().iter().product()
    }

    fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }
}

/// Number of output channels computed together by the blocked kernels.
const CO_BLOCK: usize = 4;
/// Lanes per register strip.
const LANES: usize = 8;

/// Zero-padded copy of every `(n, c)` plane, laid out back to back with
/// `LANES` zeros of slack after the last one.
fn pad_planes<F: Element>(src: &[F], planes: usize, ext: [usize; 3], pad: [usize; 3]) -> (Vec<F>, [usize; 3]) {
    let pext = [ext[0] + 2 * pad[0], ext[1] + 2 * pad[1], ext[2] + 2 * pad[2]];
    let (vol, pvol) = (ext.iter().product::<usize>(), pext.iter().product::<usize>());
    let mut out = vec![F::ZERO; planes * pvol + pext[1] * pext[2] + LANES];
    for p in 0..planes {
        let (s, d) = (&src[p * vol..][..vol], &mut out[p * pvol..][..pvol]);
        for t in 0..ext[0] {
            for h in 0..ext[1] {
                let si = (t * ext[1] + h) * ext[2];
                let di = ((t + pad[0]) * pext[1] + h + pad[1]) * pext[2] + pad[2];
                d[di..di + ext[2]].copy_from_slice(&s[si..si + ext[2]]);
            }
        }
    }
    (out, pext)
}

/// Flat offsets of every kernel tap inside a padded plane.
fn tap_offsets(kernel: [usize; 3], pext: [usize; 3]) -> Vec<usize> {
    let mut offs = Vec::with_capacity(kernel.iter().product());
    for a in 0..kernel[0] {
        for b in 0..kernel[1] {
            for c in 0..kernel[2] {
                offs.push((a * pext[1] + b) * pext[2] + c);
            }
        }
    }
    offs
}

/// Length of the padded-stride output range that covers every valid output.
fn strided_span(out: [usize; 3], pext: [usize; 3]) -> usize {
    if out.contains(&0) {
        return 0;
    }
    ((out[0] - 1) * pext[1] + out[1] - 1) * pext[2] + out[2]
}

pub fn conv3d_forward<F: Element>(g: &ConvGeometry, input: &[F], weight: &[F], bias: &[F]) -> Vec<F> {
    let out_ext = g.output();
    let out_vol = g.out_volume();
    let mut out = vec![F::ZERO; g.batch * g.out_channels * out_vol];
    if out_vol == 0 {
        return out;
    }
    let (padded, pext) = pad_planes(input, g.batch * g.in_channels, g.input, g.padding);
    let pvol: usize = pext.iter().product();
    let offs = tap_offsets(g.kernel, pext);
    let k_vol = offs.len();
    let span = strided_span(out_ext, pext);
    let blocks = g.out_channels.div_ceil(CO_BLOCK);

    // weights regrouped as [block][ci][tap][CO_BLOCK], zero-filled past C_out
    let mut wb = vec![F::ZERO; blocks * g.in_channels * k_vol * CO_BLOCK];
    for co in 0..g.out_channels {
        let (blk, j) = (co / CO_BLOCK, co % CO_BLOCK);
        for ci in 0..g.in_channels {
            for k in 0..k_vol {
                wb[((blk * g.in_channels + ci) * k_vol + k) * CO_BLOCK + j] = weight[(co * g.in_channels + ci) * k_vol + k];
            }
        }
    }

    let tasks: Vec<(usize, usize)> = (0..g.batch).flat_map(|n| (0..blocks).map(move |b| (n, b))).collect();
    let results: Vec<Vec<F>> = tasks
        .par_iter()
        .map(|&(n, blk)| {
            let mut strip_out = vec![F::ZERO; CO_BLOCK * span];
            let wblk = &wb[blk * g.in_channels * k_vol * CO_BLOCK..][..g.in_channels * k_vol * CO_BLOCK];
            let base = n * g.in_channels * pvol;
            let mut s = 0;
            while s < span {
                let mut acc = [[F::ZERO; LANES]; CO_BLOCK];
                for ci in 0..g.in_channels {
                    let plane = &padded[base + ci * pvol..];
                    let wci = &wblk[ci * k_vol * CO_BLOCK..][..k_vol * CO_BLOCK];
                    for (k, &off) in offs.iter().enumerate() {
                        let xs: &[F; LANES] = plane[s + off..s + off + LANES].try_into().unwrap();
                        let ws: &[F; CO_BLOCK] = wci[k * CO_BLOCK..k * CO_BLOCK + CO_BLOCK].try_into().unwrap();
                        for j in 0..CO_BLOCK {
                            let wv = ws[j];
                            for l in 0..LANES {
                                acc[j][l] += wv * xs[l];
                            }
                        }
                    }
                }
                let take = LANES.min(span - s);
                for j in 0..CO_BLOCK {
                    strip_out[j * span + s..j * span + s + take].copy_from_slice(&acc[j][..take]);
                }
                s += LANES;
            }
            strip_out
        })
        .collect();
    for (&(n, blk), strips) in tasks.iter().zip(&results) {
        for j in 0..CO_BLOCK {
            let co = blk * CO_BLOCK + j;
            if co >= g.out_channels {
                break;
            }
            let dst = &mut out[(n * g.out_channels + co) * out_vol..][..out_vol];
            let src = &strips[j * span..][..span];
            for t in 0..out_ext[0] {
                for h in 0..out_ext[1] {
                    let si = (t * pext[1] + h) * pext[2];
                    let di = (t * out_ext[1] + h) * out_ext[2];
                    for w in 0..out_ext[2] {
                        dst[di + w] = src[si + w] + bias[co];
                    }
                }
            }
        }
    }
    out
}

/// Output gradient re-laid in padded strides (zeros at unused positions).
fn strided_grad<F: Element>(grad: &[F], out_ext: [usize; 3], pext: [usize; 3], span: usize) -> Vec<F> {
    let mut g = vec![F::ZERO; span];
    for t in 0..out_ext[0] {
        for h in 0..out_ext[1] {
            let si = (t * out_ext[1] + h) * out_ext[2];
            let di = (t * pext[1] + h) * pext[2];
            g[di..di + out_ext[2]].copy_from_slice(&grad[si..si + out_ext[2]]);
        }
    }
    g
}

/// Gradients of the convolution w.r.t. weight and bias.
pub fn conv3d_backward_params<F: Element>(g: &ConvGeometry, input: &[F], grad_out: &[F]) -> (Vec<F>, Vec<F>) {
    let out_ext = g.output();
    let out_vol = g.out_volume();
    let k_vol = g.kernel_volume();
    let mut dw = vec![F::ZERO; g.out_channels * g.in_channels * k_vol];
    let db: Vec<F> = (0..g.out_channels)
        .map(|co| {
            (0..g.batch)
                .map(|n| grad_out[(n * g.out_channels + co) * out_vol..][..out_vol].iter().copied().sum::<F>())
                .fold(F::ZERO, |a, b| a + b)
        })
        .collect();
    if out_vol == 0 {
        return (dw, db);
    }
    let (padded, pext) = pad_planes(input, g.batch * g.in_channels, g.input, g.padding);
    let pvol: usize = pext.iter().product();
    let offs = tap_offsets(g.kernel, pext);
    let span = strided_span(out_ext, pext);
    let blocks = g.out_channels.div_ceil(CO_BLOCK);
    let sgrads: Vec<Vec<F>> = (0..g.batch * blocks * CO_BLOCK)
        .into_par_iter()
        .map(|i| {
            let (n, co) = (i / (blocks * CO_BLOCK), i % (blocks * CO_BLOCK));
            if co < g.out_channels {
                strided_grad(&grad_out[(n * g.out_channels + co) * out_vol..][..out_vol], out_ext, pext, span)
            } else {
                vec![F::ZERO; span]
            }
        })
        .collect();
    let per_block = CO_BLOCK * g.in_channels * k_vol;
    let block_grads: Vec<Vec<F>> = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            // [j][ci][tap]
            let mut acc_out = vec![F::ZERO; per_block];
            let full = span / LANES * LANES;
            for n in 0..g.batch {
                let gs: Vec<&[F]> = (0..CO_BLOCK)
                    .map(|j| sgrads[(n * blocks + blk) * CO_BLOCK + j].as_slice())
                    .collect();
                for ci in 0..g.in_channels {
                    let plane = &padded[(n * g.in_channels + ci) * pvol..];
                    for (k, &off) in offs.iter().enumerate() {
                        let mut acc = [[F::ZERO; LANES]; CO_BLOCK];
                        let mut s = 0;
                        while s < full {
                            let xs: &[F; LANES] = plane[s + off..s + off + LANES].try_into().unwrap();
                            for j in 0..CO_BLOCK {
                                let gv: &[F; LANES] = gs[j][s..s + LANES].try_into().unwrap();
                                for l in 0..LANES {
                                    acc[j][l] += gv[l] * xs[l];
                                }
                            }
                            s += LANES;
                        }
                        for j in 0..CO_BLOCK {
                            let mut tail = F::ZERO;
                            for i in full..span {
                                tail += gs[j][i] * plane[i + off];
                            }
                            let a = &acc[j];
                            let v = ((a[0] + a[4]) + (a[1] + a[5])) + ((a[2] + a[6]) + (a[3] + a[7])) + tail;
                            acc_out[(j * g.in_channels + ci) * k_vol + k] += v;
                        }
                    }
                }
            }
            acc_out
        })
        .collect();
    for (blk, grads) in block_grads.iter().enumerate() {
        for j in 0..CO_BLOCK {
            let co = blk * CO_BLOCK + j;
            if co < g.out_channels {
                let n = g.in_channels * k_vol;
                dw[co * n..(co + 1) * n].copy_from_slice(&grads[j * n..(j + 1) * n]);
            }
        }
    }
    (dw, db)
}

/// Gradient of the convolution w.r.t. its input: a convolution of the
/// output gradient with the spatially flipped, channel-transposed kernel.
pub fn conv3d_backward_input<F: Element>(g: &ConvGeometry, weight: &[F], grad_out: &[F]) -> Vec<F> {
    if g.out_volume() == 0 {
        return vec![F::ZERO; g.batch * g.in_channels * g.input.iter().product::<usize>()];
    }
    let k_vol = g.kernel_volume();
    let [kt, kh, kw] = g.kernel;
    let mut flipped = vec![F::ZERO; weight.len()];
    for co in 0..g.out_channels {
        for ci in 0..g.in_channels {
            for a in 0..kt {
                for b in 0..kh {
                    for c in 0..kw {
                        let src = (co * g.in_channels + ci) * k_vol + (a * kh + b) * kw + c;
                        let dst = (ci * g.out_channels + co) * k_vol + ((kt - 1 - a) * kh + (kh - 1 - b)) * kw + (kw - 1 - c);
                        flipped[dst] = weight[src];
                    }
                }
            }
        }
    }
    let out = g.output();
    let back = ConvGeometry {
        batch: g.batch,
        in_channels: g.out_channels,
        out_channels: g.in_channels,
        input: out,
        kernel: g.kernel,
        padding: [kt - 1 - g.padding[0], kh - 1 - g.padding[1], kw - 1 - g.padding[2]],
    };
    debug_assert_eq!(back.output(), g.input);
    conv3d_forward(&back, grad_out, &flipped, &vec![F::ZERO; g.in_channels])
}

#[inline]
fn axpy<F: Element>(dst: &mut [F], src: &[F], a: F) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

/// Dot product with eight fixed accumulators.
#[inline]
pub(crate) fn dot<F: Element>(a: &[F], b: &[F]) -> F {
    let n = a.len().min(b.len());
    let full = n / 8 * 8;
    let mut acc = [F::ZERO; 8];
    for (ca, cb) in a[..full].chunks_exact(8).zip(b[..full].chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = F::ZERO;
    for i in full..n {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Ceil-mode output extent: trailing partial windows are kept.
pub fn pooled_extent(len: usize, pool: usize) -> usize {
    len.div_ceil(pool)
}

/// Ceil-mode, non-overlapping 3D max pooling over `(T, H, W)`.
///
/// Returns the pooled values and, per output element, the linear input
/// index of the selected maximum (first occurrence wins ties).
pub fn maxpool3d_forward<F: Element>(
    input: &[F],
    planes: usize,
    extents: [usize; 3],
    pool: [usize; 3],
) -> (Vec<F>, Vec<usize>) {
    let [t_in, h_in, w_in] = extents;
    let [t_out, h_out, w_out] = [
        pooled_extent(t_in, pool[0]),
        pooled_extent(h_in, pool[1]),
        pooled_extent(w_in, pool[2]),
    ];
    let in_vol = t_in * h_in * w_in;
    let out_vol = t_out * h_out * w_out;
    let mut out = vec![F::ZERO; planes * out_vol];
    let mut arg = vec![0usize; planes * out_vol];
    if out_vol == 0 {
        return (out, arg);
    }
    out.par_chunks_mut(out_vol)
        .zip(arg.par_chunks_mut(out_vol))
        .enumerate()
        .for_each(|(p, (dst, idx))| {
            let base = p * in_vol;
            for to in 0..t_out {
                let ts = to * pool[0]..((to + 1) * pool[0]).min(t_in);
                for ho in 0..h_out {
                    let hs = ho * pool[1]..((ho + 1) * pool[1]).min(h_in);
                    for wo in 0..w_out {
                        let ws = wo * pool[2]..((wo + 1) * pool[2]).min(w_in);
                        let mut best = base + (ts.start * h_in + hs.start) * w_in + ws.start;
                        let mut best_v = input[best];
                        for t in ts.clone() {
                            for h in hs.clone() {
                                for w in ws.clone() {
                                    let i = base + (t * h_in + h) * w_in + w;
                                    if input[i] > best_v {
                                        best_v = input[i];
                                        best = i;
                                    }
                                }
                            }
                        }
                        let o = (to * h_out + ho) * w_out + wo;
                        dst[o] = best_v;
                        idx[o] = best;
                    }
                }
            }
        });
    (out, arg)
}

/// `out[n, k] = Σ_f x[n, f] · w[k, f] + b[k]`.
pub fn linear_forward<F: Element>(x: &[F], w: &[F], b: &[F], rows: usize, features: usize) -> Vec<F> {
    let outputs = b.len();
    let mut out = vec![F::ZERO; rows * outputs];
    if outputs == 0 {
        return out;
    }
    out.par_chunks_mut(outputs).enumerate().for_each(|(n, dst)| {
        let xr = &x[n * features..][..features];
        for (k, o) in dst.iter_mut().enumerate() {
            *o = dot(xr, &w[k * features..][..features]) + b[k];
        }
    });
    out
}

/// Returns `(dx, dw, db)` for [`linear_forward`].
pub fn linear_backward<F: Element>(
    x: &[F],
    w: &[F],
    grad_out: &[F],
    rows: usize,
    features: usize,
    outputs: usize,
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let mut dx = vec![F::ZERO; rows * features];
    for n in 0..rows {
        let dst = &mut dx[n * features..][..features];
        for k in 0..outputs {
            axpy(dst, &w[k * features..][..features], grad_out[n * outputs + k]);
        }
    }
    let mut dw = vec![F::ZERO; outputs * features];
    dw.par_chunks_mut(features.max(1)).enumerate().for_each(|(k, dst)| {
        for n in 0..rows {
            axpy(dst, &x[n * features..][..features], grad_out[n * outputs + k]);
        }
    });
    let db = (0..outputs)
        .map(|k| (0..rows).map(|n| grad_out[n * outputs + k]).sum())
        .collect();
    (dx, dw, db)
}
