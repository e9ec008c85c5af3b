//! Forward implementations of every primitive. Each op validates shapes,
//! computes its value eagerly, and records itself on the tape.

use super::kernels;
use super::{Op, Tensor};
use crate::scalar::{sigmoid, softplus, Scalar};

/// How two operand shapes line up for an elementwise op.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Broadcast {
    Same,
    /// lhs has a single element.
    LhsScalar,
    RhsScalar,
    /// lhs is the output prefix with trailing singleton dims; each lhs
    /// element covers `rep` contiguous output elements.
    LhsTrailing { rep: usize },
    RhsTrailing { rep: usize },
}

pub(crate) fn plan_broadcast(op: &str, a: &[usize], b: &[usize]) -> (Vec<usize>, Broadcast) {
    if a == b {
        return (a.to_vec(), Broadcast::Same);
    }
    let a_numel: usize = a.iter().product();
    let b_numel: usize = b.iter().product();
    if b_numel == 1 {
        return (a.to_vec(), Broadcast::RhsScalar);
    }
    if a_numel == 1 {
        return (b.to_vec(), Broadcast::LhsScalar);
    }
    if a.len() == b.len() {
        let rank = a.len();
        let mut k = 0;
        while k < rank && a[k] == b[k] {
            k += 1;
        }
        if b[k..].iter().all(|&d| d == 1) {
            let rep = a[k..].iter().product();
            return (a.to_vec(), Broadcast::RhsTrailing { rep });
        }
        if a[k..].iter().all(|&d| d == 1) {
            let rep = b[k..].iter().product();
            return (b.to_vec(), Broadcast::LhsTrailing { rep });
        }
    }
    panic!("{op}: shape mismatch {a:?} vs {b:?} (only trailing singleton dims broadcast)");
}

impl<S: Scalar> Tensor<S> {
    fn unary<F: Fn(S) -> S>(&self, f: F, op: Op<S>) -> Tensor<S> {
        let (data, tracked) = {
            let inner = self.tape().borrow();
            let node = &inner.nodes[self.id()];
            (node.data.iter().map(|&v| f(v)).collect(), node.tracked)
        };
        let shape = self.shape();
        self.tape().push(data, shape, op, tracked)
    }

    fn binary<F: Fn(S, S) -> S>(&self, other: &Tensor<S>, name: &str, f: F, op: Op<S>) -> Tensor<S> {
        self.assert_same_tape(other, name);
        let (data, shape, tracked) = {
            let inner = self.tape().borrow();
            let a = &inner.nodes[self.id()];
            let b = &inner.nodes[other.id()];
            let (shape, plan) = plan_broadcast(name, &a.shape, &b.shape);
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            match plan {
                Broadcast::Same => {
                    data.extend(a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)))
                }
                Broadcast::RhsScalar => {
                    let y = b.data[0];
                    data.extend(a.data.iter().map(|&x| f(x, y)));
                }
                Broadcast::LhsScalar => {
                    let x = a.data[0];
                    data.extend(b.data.iter().map(|&y| f(x, y)));
                }
                Broadcast::RhsTrailing { rep } => {
                    for (i, &x) in a.data.iter().enumerate() {
                        data.push(f(x, b.data[i / rep]));
                    }
                }
                Broadcast::LhsTrailing { rep } => {
                    for (i, &y) in b.data.iter().enumerate() {
                        data.push(f(a.data[i / rep], y));
                    }
                }
            }
            (data, shape, a.tracked || b.tracked)
        };
        self.tape().push(data, shape, op, tracked)
    }

    pub fn add(&self, other: &Tensor<S>) -> Tensor<S> {
        self.binary(other, "add", |x, y| x + y, Op::Add(self.id(), other.id()))
    }

    pub fn sub(&self, other: &Tensor<S>) -> Tensor<S> {
        self.binary(other, "sub", |x, y| x - y, Op::Sub(self.id(), other.id()))
    }

    pub fn mul(&self, other: &Tensor<S>) -> Tensor<S> {
        self.binary(other, "mul", |x, y| x * y, Op::Mul(self.id(), other.id()))
    }

    pub fn div(&self, other: &Tensor<S>) -> Tensor<S> {
        self.binary(other, "div", |x, y| x / y, Op::Div(self.id(), other.id()))
    }

    pub fn scale(&self, c: S) -> Tensor<S> {
        self.unary(|x| x * c, Op::Scale(self.id(), c))
    }

    pub fn neg(&self) -> Tensor<S> {
        self.scale(-S::ONE)
    }

    pub fn add_const(&self, c: S) -> Tensor<S> {
        self.unary(|x| x + c, Op::AddConst(self.id()))
    }

    pub fn relu(&self) -> Tensor<S> {
        self.unary(|x| x.maxv(S::ZERO), Op::Relu(self.id()))
    }

    pub fn sigmoid(&self) -> Tensor<S> {
        self.unary(sigmoid, Op::Sigmoid(self.id()))
    }

    pub fn softplus(&self) -> Tensor<S> {
        self.unary(softplus, Op::Softplus(self.id()))
    }

    /// Elementwise min(x, cap). The clamped branch has zero gradient.
    pub fn clamp_max(&self, cap: S) -> Tensor<S> {
        self.unary(|x| x.minv(cap), Op::ClampMax { a: self.id(), cap })
    }

    /// a @ b with a: [m,k] and b either [k,n] or a vector [k].
    pub fn matmul(&self, other: &Tensor<S>) -> Tensor<S> {
        self.assert_same_tape(other, "matmul");
        let (data, out_shape, m, k, n, tracked) = {
            let inner = self.tape().borrow();
            let a = &inner.nodes[self.id()];
            let b = &inner.nodes[other.id()];
            assert_eq!(
                a.shape.len(),
                2,
                "matmul: lhs must be a matrix, got {:?} vs {:?}",
                a.shape,
                b.shape
            );
            let (m, k) = (a.shape[0], a.shape[1]);
            let (n, out_shape) = match b.shape.len() {
                1 => {
                    assert_eq!(
                        b.shape[0], k,
                        "matmul: shape mismatch {:?} vs {:?}",
                        a.shape, b.shape
                    );
                    (1, vec![m])
                }
                2 => {
                    assert_eq!(
                        b.shape[0], k,
                        "matmul: shape mismatch {:?} vs {:?}",
                        a.shape, b.shape
                    );
                    (b.shape[1], vec![m, b.shape[1]])
                }
                _ => panic!(
                    "matmul: rhs must be a matrix or vector, got {:?} vs {:?}",
                    a.shape, b.shape
                ),
            };
            let mut data = vec![S::ZERO; m * n];
            kernels::matmul_acc(&a.data, &b.data, &mut data, m, k, n);
            (data, out_shape, m, k, n, a.tracked || b.tracked)
        };
        self.tape().push(
            data,
            out_shape,
            Op::Matmul {
                a: self.id(),
                b: other.id(),
                m,
                k,
                n,
            },
            tracked,
        )
    }

    /// 2-D cross-correlation with zero padding.
    /// input: [ci,h,w], kernel: [co,ci,kh,kw], bias: [co].
    pub fn conv2d(
        &self,
        kernel: &Tensor<S>,
        bias: Option<&Tensor<S>>,
        stride: usize,
        pad: usize,
    ) -> Tensor<S> {
        self.assert_same_tape(kernel, "conv2d");
        if let Some(b) = bias {
            self.assert_same_tape(b, "conv2d");
        }
        assert!(stride >= 1, "conv2d: stride must be >= 1");
        let (data, out_shape, tracked) = {
            let inner = self.tape().borrow();
            let x = &inner.nodes[self.id()];
            let k = &inner.nodes[kernel.id()];
            assert_eq!(
                x.shape.len(),
                3,
                "conv2d: input must be [c,h,w], got {:?}",
                x.shape
            );
            assert_eq!(
                k.shape.len(),
                4,
                "conv2d: kernel must be [co,ci,kh,kw], got {:?}",
                k.shape
            );
            let (ci, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
            let (co, kci, kh, kw) = (k.shape[0], k.shape[1], k.shape[2], k.shape[3]);
            assert_eq!(
                kci, ci,
                "conv2d: kernel input channels mismatch {:?} vs {:?}",
                k.shape, x.shape
            );
            assert!(
                kh <= h + 2 * pad && kw <= w + 2 * pad,
                "conv2d: kernel {:?} larger than padded input {:?} (pad {})",
                k.shape,
                x.shape,
                pad
            );
            let oh = (h + 2 * pad - kh) / stride + 1;
            let ow = (w + 2 * pad - kw) / stride + 1;
            let cols = kernels::im2col(&x.data, ci, h, w, kh, kw, stride, pad, oh, ow);
            let l = oh * ow;
            let mut data = vec![S::ZERO; co * l];
            kernels::matmul_acc(&k.data, &cols, &mut data, co, ci * kh * kw, l);
            let mut tracked = x.tracked || k.tracked;
            if let Some(b) = bias {
                let bn = &inner.nodes[b.id()];
                assert_eq!(
                    bn.shape,
                    vec![co],
                    "conv2d: bias shape {:?} must be [{co}]",
                    bn.shape
                );
                for c in 0..co {
                    let off = bn.data[c];
                    for v in &mut data[c * l..(c + 1) * l] {
                        *v += off;
                    }
                }
                tracked |= bn.tracked;
            }
            (data, vec![co, oh, ow], tracked)
        };
        self.tape().push(
            data,
            out_shape,
            Op::Conv2d {
                input: self.id(),
                kernel: kernel.id(),
                bias: bias.map(|b| b.id()),
                stride,
                pad,
            },
            tracked,
        )
    }

    pub fn sum_all(&self) -> Tensor<S> {
        let (v, tracked) = {
            let inner = self.tape().borrow();
            let node = &inner.nodes[self.id()];
            (node.data.iter().copied().sum::<S>(), node.tracked)
        };
        self.tape()
            .push(vec![v], vec![], Op::SumAll(self.id()), tracked)
    }

    pub fn mean_all(&self) -> Tensor<S> {
        let (v, n, tracked) = {
            let inner = self.tape().borrow();
            let node = &inner.nodes[self.id()];
            (
                node.data.iter().copied().sum::<S>(),
                node.data.len(),
                node.tracked,
            )
        };
        let mean = v / S::from_f64(n as f64);
        self.tape()
            .push(vec![mean], vec![], Op::MeanAll(self.id()), tracked)
    }

    pub fn sum_axis(&self, axis: usize) -> Tensor<S> {
        self.reduce_axis(axis, false)
    }

    pub fn mean_axis(&self, axis: usize) -> Tensor<S> {
        self.reduce_axis(axis, true)
    }

    fn reduce_axis(&self, axis: usize, mean: bool) -> Tensor<S> {
        let (data, out_shape, tracked) = {
            let inner = self.tape().borrow();
            let node = &inner.nodes[self.id()];
            assert!(
                axis < node.shape.len(),
                "reduce: axis {axis} out of range for shape {:?}",
                node.shape
            );
            let outer: usize = node.shape[..axis].iter().product();
            let len = node.shape[axis];
            let inner_n: usize = node.shape[axis + 1..].iter().product();
            let mut data = vec![S::ZERO; outer * inner_n];
            for o in 0..outer {
                for a in 0..len {
                    let src = &node.data[(o * len + a) * inner_n..][..inner_n];
                    let dst = &mut data[o * inner_n..][..inner_n];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            if mean {
                let inv = S::ONE / S::from_f64(len as f64);
                for v in &mut data {
                    *v *= inv;
                }
            }
            let mut out_shape = node.shape.clone();
            out_shape.remove(axis);
            (data, out_shape, node.tracked)
        };
        let op = if mean {
            Op::MeanAxis { a: self.id(), axis }
        } else {
            Op::SumAxis { a: self.id(), axis }
        };
        self.tape().push(data, out_shape, op, tracked)
    }

    /// Global average pool: [c,h,w] -> [c].
    pub fn gap(&self) -> Tensor<S> {
        let (data, c, tracked) = {
            let inner = self.tape().borrow();
            let node = &inner.nodes[self.id()];
            assert_eq!(
                node.shape.len(),
                3,
                "gap: input must be [c,h,w], got {:?}",
                node.shape
            );
            let (c, h, w) = (node.shape[0], node.shape[1], node.shape[2]);
            let inv = S::ONE / S::from_f64((h * w) as f64);
            let mut data = Vec::with_capacity(c);
            for ch in 0..c {
                let plane = &node.data[ch * h * w..(ch + 1) * h * w];
                data.push(plane.iter().copied().sum::<S>() * inv);
            }
            (data, c, node.tracked)
        };
        self.tape().push(data, vec![c], Op::Gap(self.id()), tracked)
    }

    /// Half-pixel-centered bilinear resample: [c,h,w] -> [c,oh,ow].
    pub fn bilinear_resize(&self, oh: usize, ow: usize) -> Tensor<S> {
        assert!(oh >= 1 && ow >= 1, "bilinear_resize: empty output");
        let (data, c, tracked) = {
            let inner = self.tape().borrow();
            let node = &inner.nodes[self.id()];
            assert_eq!(
                node.shape.len(),
                3,
                "bilinear_resize: input must be [c,h,w], got {:?}",
                node.shape
            );
            let (c, h, w) = (node.shape[0], node.shape[1], node.shape[2]);
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
            let mut data = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                let plane = &node.data[ch * h * w..(ch + 1) * h * w];
                for &(y0, y1, wy) in &ys {
                    let row0 = &plane[y0 * w..(y0 + 1) * w];
                    let row1 = &plane[y1 * w..(y1 + 1) * w];
                    for &(x0, x1, wx) in &xs {
                        let top = row0[x0] + (row0[x1] - row0[x0]) * wx;
                        let bot = row1[x0] + (row1[x1] - row1[x0]) * wx;
                        data.push(top + (bot - top) * wy);
                    }
                }
            }
            (data, c, node.tracked)
        };
        self.tape()
            .push(data, vec![c, oh, ow], Op::BilinearResize(self.id()), tracked)
    }

    /// Concatenate along axis 0. All parts must share trailing dims.
    pub fn concat(parts: &[&Tensor<S>]) -> Tensor<S> {
        assert!(!parts.is_empty(), "concat: no tensors given");
        let first = parts[0];
        for p in &parts[1..] {
            first.assert_same_tape(p, "concat");
        }
        let (data, out_shape, tracked) = {
            let inner = first.tape().borrow();
            let base = &inner.nodes[first.id()].shape;
            assert!(!base.is_empty(), "concat: scalars cannot be concatenated");
            let rest = &base[1..];
            let mut d0 = 0;
            let mut tracked = false;
            for p in parts {
                let n = &inner.nodes[p.id()];
                assert_eq!(
                    &n.shape[1..],
                    rest,
                    "concat: trailing dims differ, {:?} vs {:?}",
                    n.shape,
                    base
                );
                d0 += n.shape[0];
                tracked |= n.tracked;
            }
            let mut data = Vec::with_capacity(d0 * rest.iter().product::<usize>());
            for p in parts {
                data.extend_from_slice(&inner.nodes[p.id()].data);
            }
            let mut out_shape = base.clone();
            out_shape[0] = d0;
            (data, out_shape, tracked)
        };
        first.tape().push(
            data,
            out_shape,
            Op::Concat {
                parts: parts.iter().map(|p| p.id()).collect(),
            },
            tracked,
        )
    }

    /// Narrow along axis 0: rows [start, start+len).
    pub fn slice0(&self, start: usize, len: usize) -> Tensor<S> {
        let (data, out_shape, tracked) = {
            let inner = self.tape().borrow();
            let node = &inner.nodes[self.id()];
            assert!(!node.shape.is_empty(), "slice: scalar cannot be sliced");
            assert!(
                start + len <= node.shape[0],
                "slice: range {}..{} out of bounds for shape {:?}",
                start,
                start + len,
                node.shape
            );
            let block: usize = node.shape[1..].iter().product();
            let data = node.data[start * block..(start + len) * block].to_vec();
            let mut out_shape = node.shape.clone();
            out_shape[0] = len;
            (data, out_shape, node.tracked)
        };
        self.tape().push(
            data,
            out_shape,
            Op::Slice {
                a: self.id(),
                start,
            },
            tracked,
        )
    }

    /// Tile a vector [c] into a constant-over-space map [c,h,w].
    pub fn broadcast_spatial(&self, h: usize, w: usize) -> Tensor<S> {
        let (data, c, tracked) = {
            let inner = self.tape().borrow();
            let node = &inner.nodes[self.id()];
            assert_eq!(
                node.shape.len(),
                1,
                "broadcast_spatial: input must be a vector, got {:?}",
                node.shape
            );
            let c = node.shape[0];
            let mut data = Vec::with_capacity(c * h * w);
            for &v in &node.data {
                data.extend(std::iter::repeat(v).take(h * w));
            }
            (data, c, node.tracked)
        };
        self.tape().push(
            data,
            vec![c, h, w],
            Op::BroadcastSpatial(self.id()),
            tracked,
        )
    }

    /// Mirror-pad the two spatial dims of [c,h,w] by `pad` on each side.
    pub fn reflect_pad(&self, pad: usize) -> Tensor<S> {
        let (data, out_shape, tracked) = {
            let inner = self.tape().borrow();
            let node = &inner.nodes[self.id()];
            assert_eq!(
                node.shape.len(),
                3,
                "reflect_pad: input must be [c,h,w], got {:?}",
                node.shape
            );
            let (c, h, w) = (node.shape[0], node.shape[1], node.shape[2]);
            let (ph, pw) = (h + 2 * pad, w + 2 * pad);
            let mut data = Vec::with_capacity(c * ph * pw);
            for ch in 0..c {
                let plane = &node.data[ch * h * w..(ch + 1) * h * w];
                for y in 0..ph {
                    let sy = kernels::reflect_index(y as isize - pad as isize, h);
                    let row = &plane[sy * w..(sy + 1) * w];
                    for x in 0..pw {
                        let sx = kernels::reflect_index(x as isize - pad as isize, w);
                        data.push(row[sx]);
                    }
                }
            }
            (data, vec![c, ph, pw], node.tracked)
        };
        self.tape().push(
            data,
            out_shape,
            Op::ReflectPad {
                a: self.id(),
                pad,
            },
            tracked,
        )
    }

    pub fn reshape(&self, new_shape: &[usize]) -> Tensor<S> {
        let (data, tracked) = {
            let inner = self.tape().borrow();
            let node = &inner.nodes[self.id()];
            let numel: usize = new_shape.iter().product();
            assert_eq!(
                numel,
                node.data.len(),
                "reshape: cannot view {:?} as {:?}",
                node.shape,
                new_shape
            );
            (node.data.clone(), node.tracked)
        };
        self.tape()
            .push(data, new_shape.to_vec(), Op::Reshape(self.id()), tracked)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn tape() -> Tape<f64> {
        Tape::new()
    }

    #[test]
    fn softplus_at_zero_is_ln2() {
        let t = tape();
        let x = t.constant(vec![0.0], &[]);
        let y = x.softplus().item();
        assert!((y - std::f64::consts::LN_2).abs() < 1e-12, "y={y}");
    }

    #[test]
    fn relu_definition() {
        let t = tape();
        let x = t.constant(vec![-3.5, 2.0], &[2]);
        assert_eq!(x.relu().value(), vec![0.0, 2.0]);
    }

    #[test]
    fn broadcast_trailing_singletons() {
        let t = tape();
        let a = t.constant(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let b = t.constant(vec![10.0, 20.0], &[2, 1]);
        assert_eq!(a.add(&b).value(), vec![11.0, 12.0, 13.0, 24.0, 25.0, 26.0]);
        let s = t.constant(vec![2.0], &[1, 1]);
        assert_eq!(a.mul(&s).value(), vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0]);
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn broadcast_rejects_middle_singleton() {
        let t = tape();
        let a = t.constant(vec![0.0; 8], &[2, 2, 2]);
        let b = t.constant(vec![0.0; 4], &[2, 1, 2]);
        a.add(&b);
    }

    #[test]
    fn matmul_vector_rhs() {
        let t = tape();
        let a = t.constant(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let x = t.constant(vec![1.0, -1.0], &[2]);
        let y = a.matmul(&x);
        assert_eq!(y.shape(), vec![2]);
        assert_eq!(y.value(), vec![-1.0, -1.0]);
    }

    #[test]
    fn gap_of_constant_channels() {
        // A 512-channel map where channel c holds value c averages back to c.
        let t = tape();
        let (c, h, w) = (512usize, 16usize, 16usize);
        let mut data = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            data.extend(std::iter::repeat(ch as f64).take(h * w));
        }
        let x = t.constant(data, &[c, h, w]);
        let g = x.gap();
        assert_eq!(g.shape(), vec![512]);
        for (ch, &v) in g.value().iter().enumerate() {
            assert!((v - ch as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn conv2d_identity_kernel() {
        let t = tape();
        let x = t.constant((0..16).map(|v| v as f64).collect(), &[1, 4, 4]);
        // 1x1 kernel with weight 1 reproduces the input.
        let k = t.constant(vec![1.0], &[1, 1, 1, 1]);
        let y = x.conv2d(&k, None, 1, 0);
        assert_eq!(y.shape(), vec![1, 4, 4]);
        assert_eq!(y.value(), x.value());
    }

    #[test]
    fn conv2d_stride_and_padding_shapes() {
        let t = tape();
        let x = t.constant(vec![0.0; 3 * 8 * 8], &[3, 8, 8]);
        let k = t.constant(vec![0.0; 5 * 3 * 3 * 3], &[5, 3, 3, 3]);
        let y = x.conv2d(&k, None, 2, 1);
        assert_eq!(y.shape(), vec![5, 4, 4]);
    }

    #[test]
    fn conv2d_sum_kernel_matches_manual() {
        let t = tape();
        let x = t.constant(vec![1.0, 2.0, 3.0, 4.0], &[1, 2, 2]);
        // 2x2 all-ones kernel, no padding -> single output = sum.
        let k = t.constant(vec![1.0; 4], &[1, 1, 2, 2]);
        let y = x.conv2d(&k, None, 1, 0);
        assert_eq!(y.value(), vec![10.0]);
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let t = tape();
        let a = t.constant(vec![1.0, 2.0], &[1, 2]);
        let b = t.constant(vec![3.0, 4.0, 5.0, 6.0], &[2, 2]);
        let c = Tensor::concat(&[&a, &b]);
        assert_eq!(c.shape(), vec![3, 2]);
        assert_eq!(c.slice0(1, 2).value(), b.value());
    }

    #[test]
    fn broadcast_spatial_tiles_vector() {
        let t = tape();
        let v = t.constant(vec![1.0, 2.0], &[2]);
        let m = v.broadcast_spatial(2, 2);
        assert_eq!(m.shape(), vec![2, 2, 2]);
        assert_eq!(m.value(), vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn bilinear_resize_preserves_constants_and_doubles() {
        let t = tape();
        let x = t.constant(vec![5.0; 9], &[1, 3, 3]);
        let y = x.bilinear_resize(6, 6);
        assert!(y.value().iter().all(|&v| (v - 5.0).abs() < 1e-12));
        // Downsize back to the same size is identity.
        let z = t.constant(vec![1.0, 2.0, 3.0, 4.0], &[1, 2, 2]);
        assert_eq!(z.bilinear_resize(2, 2).value(), z.value());
    }

    #[test]
    fn reflect_pad_mirrors_rows() {
        let t = tape();
        let x = t.constant(vec![1.0, 2.0, 3.0, 4.0], &[1, 2, 2]);
        let y = x.reflect_pad(1);
        assert_eq!(y.shape(), vec![1, 4, 4]);
        // Row order after reflect: [row1, row0, row1, row0]
        let v = y.value();
        assert_eq!(&v[0..4], &[4.0, 3.0, 4.0, 3.0]);
        assert_eq!(&v[4..8], &[2.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn mean_axis_and_sum_axis() {
        let t = tape();
        let x = t.constant(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        assert_eq!(x.sum_axis(0).value(), vec![5.0, 7.0, 9.0]);
        assert_eq!(x.mean_axis(1).value(), vec![2.0, 5.0]);
    }
}
