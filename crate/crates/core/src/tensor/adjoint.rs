//! Per-op backward rules. `apply` receives the output node's gradient and
//! accumulates into the gradients of tracked inputs. Input node ids are
//! strictly smaller than the output id, so the caller's reverse sweep
//! visits every consumer before its producers.

use super::kernels;
use super::ops::{plan_broadcast, Broadcast};
use super::{Node, Op, TapeInner};
use crate::scalar::{sigmoid, Scalar};

/// How one operand of a broadcast binary op maps onto output positions.
#[derive(Clone, Copy)]
enum View {
    Full,
    Scalar,
    Trailing { rep: usize },
}

impl View {
    #[inline]
    fn src_index(self, out_index: usize) -> usize {
        match self {
            View::Full => out_index,
            View::Scalar => 0,
            View::Trailing { rep } => out_index / rep,
        }
    }
}

fn operand_views(plan: Broadcast) -> (View, View) {
    match plan {
        Broadcast::Same => (View::Full, View::Full),
        Broadcast::LhsScalar => (View::Scalar, View::Full),
        Broadcast::RhsScalar => (View::Full, View::Scalar),
        Broadcast::LhsTrailing { rep } => (View::Trailing { rep }, View::Full),
        Broadcast::RhsTrailing { rep } => (View::Full, View::Trailing { rep }),
    }
}

/// Accumulate `contrib(i)` over output index i into a gradient buffer that
/// sees the output through `view`.
fn scatter<S: Scalar, F: Fn(usize) -> S>(gbuf: &mut [S], view: View, n_out: usize, contrib: F) {
    match view {
        View::Full => {
            for (i, g) in gbuf.iter_mut().enumerate() {
                *g += contrib(i);
            }
        }
        View::Scalar => {
            let mut acc = S::ZERO;
            for i in 0..n_out {
                acc += contrib(i);
            }
            gbuf[0] += acc;
        }
        View::Trailing { rep } => {
            for i in 0..n_out {
                gbuf[i / rep] += contrib(i);
            }
        }
    }
}

pub(crate) fn apply<S: Scalar>(inner: &mut TapeInner<S>, out_id: usize, op: &Op<S>, grad: &[S]) {
    match *op {
        Op::Leaf => {}
        Op::Add(a, b) => binary(inner, out_id, a, b, grad, BinKind::Add),
        Op::Sub(a, b) => binary(inner, out_id, a, b, grad, BinKind::Sub),
        Op::Mul(a, b) => binary(inner, out_id, a, b, grad, BinKind::Mul),
        Op::Div(a, b) => binary(inner, out_id, a, b, grad, BinKind::Div),
        Op::Scale(a, c) => unary_into(inner, a, |buf, _| {
            for (g, &go) in buf.iter_mut().zip(grad) {
                *g += go * c;
            }
        }),
        Op::AddConst(a) => unary_into(inner, a, |buf, _| {
            for (g, &go) in buf.iter_mut().zip(grad) {
                *g += go;
            }
        }),
        Op::Relu(a) => unary_into(inner, a, |buf, nodes| {
            let x = &nodes[a].data;
            for i in 0..buf.len() {
                if x[i] > S::ZERO {
                    buf[i] += grad[i];
                }
            }
        }),
        Op::ClampMax { a, cap } => unary_into(inner, a, |buf, nodes| {
            let x = &nodes[a].data;
            for i in 0..buf.len() {
                if x[i] < cap {
                    buf[i] += grad[i];
                }
            }
        }),
        Op::Sigmoid(a) => unary_into(inner, a, |buf, nodes| {
            let y = &nodes[out_id].data;
            for i in 0..buf.len() {
                buf[i] += grad[i] * y[i] * (S::ONE - y[i]);
            }
        }),
        Op::Softplus(a) => unary_into(inner, a, |buf, nodes| {
            let x = &nodes[a].data;
            for i in 0..buf.len() {
                buf[i] += grad[i] * sigmoid(x[i]);
            }
        }),
        Op::SumAll(a) => unary_into(inner, a, |buf, _| {
            let g = grad[0];
            for v in buf.iter_mut() {
                *v += g;
            }
        }),
        Op::MeanAll(a) => unary_into(inner, a, |buf, _| {
            let g = grad[0] / S::from_f64(buf.len() as f64);
            for v in buf.iter_mut() {
                *v += g;
            }
        }),
        Op::SumAxis { a, axis } | Op::MeanAxis { a, axis } => {
            let mean = matches!(op, Op::MeanAxis { .. });
            unary_into(inner, a, |buf, nodes| {
                let shape = &nodes[a].shape;
                let outer: usize = shape[..axis].iter().product();
                let len = shape[axis];
                let inner_n: usize = shape[axis + 1..].iter().product();
                let scale = if mean {
                    S::ONE / S::from_f64(len as f64)
                } else {
                    S::ONE
                };
                for o in 0..outer {
                    let gsrc = &grad[o * inner_n..][..inner_n];
                    for k in 0..len {
                        let dst = &mut buf[(o * len + k) * inner_n..][..inner_n];
                        for (d, &g) in dst.iter_mut().zip(gsrc) {
                            *d += g * scale;
                        }
                    }
                }
            });
        }
        Op::Gap(a) => unary_into(inner, a, |buf, nodes| {
            let shape = &nodes[a].shape;
            let (c, h, w) = (shape[0], shape[1], shape[2]);
            let inv = S::ONE / S::from_f64((h * w) as f64);
            for ch in 0..c {
                let g = grad[ch] * inv;
                for v in &mut buf[ch * h * w..(ch + 1) * h * w] {
                    *v += g;
                }
            }
        }),
        Op::BroadcastSpatial(a) => unary_into(inner, a, |buf, nodes| {
            let out_shape = &nodes[out_id].shape;
            let (c, hw) = (out_shape[0], out_shape[1] * out_shape[2]);
            for ch in 0..c {
                let mut acc = S::ZERO;
                for &g in &grad[ch * hw..(ch + 1) * hw] {
                    acc += g;
                }
                buf[ch] += acc;
            }
        }),
        Op::Reshape(a) => unary_into(inner, a, |buf, _| {
            for (v, &g) in buf.iter_mut().zip(grad) {
                *v += g;
            }
        }),
        Op::Slice { a, start } => unary_into(inner, a, |buf, nodes| {
            let block: usize = nodes[a].shape[1..].iter().product();
            let dst = &mut buf[start * block..start * block + grad.len()];
            for (v, &g) in dst.iter_mut().zip(grad) {
                *v += g;
            }
        }),
        Op::ReflectPad { a, pad } => unary_into(inner, a, |buf, nodes| {
            let shape = &nodes[a].shape;
            let (c, h, w) = (shape[0], shape[1], shape[2]);
            let (ph, pw) = (h + 2 * pad, w + 2 * pad);
            for ch in 0..c {
                let plane = &mut buf[ch * h * w..(ch + 1) * h * w];
                let gplane = &grad[ch * ph * pw..(ch + 1) * ph * pw];
                for y in 0..ph {
                    let sy = kernels::reflect_index(y as isize - pad as isize, h);
                    for x in 0..pw {
                        let sx = kernels::reflect_index(x as isize - pad as isize, w);
                        plane[sy * w + sx] += gplane[y * pw + x];
                    }
                }
            }
        }),
        Op::BilinearResize(a) => unary_into(inner, a, |buf, nodes| {
            let in_shape = &nodes[a].shape;
            let out_shape = &nodes[out_id].shape;
            let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let ys: Vec<(usize, usize, S)> = (0..oh)
                .map(|oy| {
                    let (y0, y1, wy) = kernels::bilinear_coords(oy, h, oh);
                    (y0, y1, S::from_f64(wy))
                })
                .collect();
            let xs: Vec<(usize, usize, S)> = (0..ow)
                .map(|ox| {
                    let (x0, x1, wx) = kernels::bilinear_coords(ox, w, ow);
                    (x0, x1, S::from_f64(wx))
                })
                .collect();
            for ch in 0..c {
                let plane = &mut buf[ch * h * w..(ch + 1) * h * w];
                let gplane = &grad[ch * oh * ow..(ch + 1) * oh * ow];
                for (oy, &(y0, y1, wy)) in ys.iter().enumerate() {
                    for (ox, &(x0, x1, wx)) in xs.iter().enumerate() {
                        let g = gplane[oy * ow + ox];
                        let w00 = (S::ONE - wy) * (S::ONE - wx);
                        let w01 = (S::ONE - wy) * wx;
                        let w10 = wy * (S::ONE - wx);
                        let w11 = wy * wx;
                        plane[y0 * w + x0] += g * w00;
                        plane[y0 * w + x1] += g * w01;
                        plane[y1 * w + x0] += g * w10;
                        plane[y1 * w + x1] += g * w11;
                    }
                }
            }
        }),
        Op::Concat { ref parts } => {
            let mut offset = 0;
            for &p in parts {
                let block: usize = {
                    let n = &inner.nodes[p];
                    n.shape[0] * n.shape[1..].iter().product::<usize>()
                };
                let gslice = &grad[offset..offset + block];
                if let Some(mut gbuf) = inner.nodes[p].grad.take() {
                    for (v, &g) in gbuf.iter_mut().zip(gslice) {
                        *v += g;
                    }
                    inner.nodes[p].grad = Some(gbuf);
                }
                offset += block;
            }
        }
        Op::Matmul { a, b, m, k, n } => {
            let mut ga = inner.nodes[a].grad.take();
            let mut gb = if a == b {
                None
            } else {
                inner.nodes[b].grad.take()
            };
            {
                let nodes = &inner.nodes;
                if let Some(buf) = ga.as_mut() {
                    // dA = G @ B^T
                    kernels::matmul_a_bt_acc(grad, &nodes[b].data, buf, m, n, k);
                }
                if let Some(buf) = gb.as_mut() {
                    // dB = A^T @ G
                    kernels::matmul_at_b_acc(&nodes[a].data, grad, buf, k, m, n);
                }
            }
            if let Some(buf) = ga {
                if a == b {
                    // Self-product: add the dB term into the same buffer.
                    let mut both = buf;
                    kernels::matmul_at_b_acc(&inner.nodes[a].data, grad, &mut both, k, m, n);
                    inner.nodes[a].grad = Some(both);
                } else {
                    inner.nodes[a].grad = Some(buf);
                }
            }
            if let Some(buf) = gb {
                inner.nodes[b].grad = Some(buf);
            }
        }
        Op::Conv2d {
            input,
            kernel,
            bias,
            stride,
            pad,
        } => {
            let (ci, h, w, co, kh, kw, oh, ow) = {
                let x = &inner.nodes[input];
                let k = &inner.nodes[kernel];
                let o = &inner.nodes[out_id];
                (
                    x.shape[0], x.shape[1], x.shape[2], k.shape[0], k.shape[2], k.shape[3],
                    o.shape[1], o.shape[2],
                )
            };
            let l = oh * ow;
            let ckk = ci * kh * kw;

            if let Some(bid) = bias {
                if let Some(mut gbuf) = inner.nodes[bid].grad.take() {
                    for c in 0..co {
                        let mut acc = S::ZERO;
                        for &g in &grad[c * l..(c + 1) * l] {
                            acc += g;
                        }
                        gbuf[c] += acc;
                    }
                    inner.nodes[bid].grad = Some(gbuf);
                }
            }

            let kernel_tracked = inner.nodes[kernel].grad.is_some();
            let input_tracked = inner.nodes[input].grad.is_some();
            if kernel_tracked {
                let cols = kernels::im2col(
                    &inner.nodes[input].data,
                    ci,
                    h,
                    w,
                    kh,
                    kw,
                    stride,
                    pad,
                    oh,
                    ow,
                );
                let mut gbuf = inner.nodes[kernel].grad.take().unwrap();
                kernels::matmul_a_bt_acc(grad, &cols, &mut gbuf, co, l, ckk);
                inner.nodes[kernel].grad = Some(gbuf);
            }
            if input_tracked {
                let mut dcols = vec![S::ZERO; ckk * l];
                kernels::matmul_at_b_acc(&inner.nodes[kernel].data, grad, &mut dcols, ckk, co, l);
                let mut gbuf = inner.nodes[input].grad.take().unwrap();
                kernels::col2im_acc(&dcols, &mut gbuf, ci, h, w, kh, kw, stride, pad, oh, ow);
                inner.nodes[input].grad = Some(gbuf);
            }
        }
    }
}

enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
}

fn binary<S: Scalar>(
    inner: &mut TapeInner<S>,
    out_id: usize,
    a: usize,
    b: usize,
    grad: &[S],
    kind: BinKind,
) {
    let n_out = grad.len();
    let (plan_a, plan_b) = {
        let (_, plan) = plan_broadcast("adjoint", &inner.nodes[a].shape, &inner.nodes[b].shape);
        operand_views(plan)
    };
    let _ = out_id;
    let aliased = a == b;
    let mut ga = inner.nodes[a].grad.take();
    let mut gb = if aliased {
        None
    } else {
        inner.nodes[b].grad.take()
    };
    {
        let nodes: &Vec<Node<S>> = &inner.nodes;
        let a_data = &nodes[a].data;
        let b_data = &nodes[b].data;
        if let Some(buf) = ga.as_mut() {
            match kind {
                BinKind::Add => scatter(buf, plan_a, n_out, |i| grad[i]),
                BinKind::Sub => scatter(buf, plan_a, n_out, |i| grad[i]),
                BinKind::Mul => {
                    scatter(buf, plan_a, n_out, |i| grad[i] * b_data[plan_b.src_index(i)])
                }
                BinKind::Div => {
                    scatter(buf, plan_a, n_out, |i| grad[i] / b_data[plan_b.src_index(i)])
                }
            }
            if aliased {
                // Second operand's contribution lands in the same buffer.
                match kind {
                    BinKind::Add => scatter(buf, plan_b, n_out, |i| grad[i]),
                    BinKind::Sub => scatter(buf, plan_b, n_out, |i| -grad[i]),
                    BinKind::Mul => scatter(buf, plan_b, n_out, |i| {
                        grad[i] * a_data[plan_a.src_index(i)]
                    }),
                    BinKind::Div => scatter(buf, plan_b, n_out, |i| {
                        let bv = b_data[plan_b.src_index(i)];
                        -grad[i] * a_data[plan_a.src_index(i)] / (bv * bv)
                    }),
                }
            }
        }
        if let Some(buf) = gb.as_mut() {
            match kind {
                BinKind::Add => scatter(buf, plan_b, n_out, |i| grad[i]),
                BinKind::Sub => scatter(buf, plan_b, n_out, |i| -grad[i]),
                BinKind::Mul => {
                    scatter(buf, plan_b, n_out, |i| grad[i] * a_data[plan_a.src_index(i)])
                }
                BinKind::Div => scatter(buf, plan_b, n_out, |i| {
                    let bv = b_data[plan_b.src_index(i)];
                    -grad[i] * a_data[plan_a.src_index(i)] / (bv * bv)
                }),
            }
        }
    }
    if let Some(buf) = ga {
        inner.nodes[a].grad = Some(buf);
    }
    if let Some(buf) = gb {
        inner.nodes[b].grad = Some(buf);
    }
}

fn unary_into<S: Scalar, F: FnOnce(&mut [S], &[Node<S>])>(
    inner: &mut TapeInner<S>,
    a: usize,
    f: F,
) {
    if let Some(mut gbuf) = inner.nodes[a].grad.take() {
        f(&mut gbuf, &inner.nodes);
        inner.nodes[a].grad = Some(gbuf);
    }
}
