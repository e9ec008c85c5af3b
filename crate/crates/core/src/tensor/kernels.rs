//! Raw numeric kernels shared by forward and backward passes. Everything is
//! plain row-major slices; the inner loops are written so LLVM vectorizes
//! them (axpy/dot forms over contiguous slices).

use crate::scalar::Scalar;

/// out += a @ b, with a: [m,k], b: [k,n], out: [m,n].
pub fn matmul_acc<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * b_pj;
            }
        }
    }
}

/// out += a^T @ b, with a: [k,m], b: [k,n], out: [m,n].
pub fn matmul_at_b_acc<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &a_pi) in a_row.iter().enumerate() {
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                *o += a_pi * b_pj;
            }
        }
    }
}

/// out += a @ b^T, with a: [m,k], b: [n,k], out: [m,n].
pub fn matmul_a_bt_acc<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = S::ZERO;
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            out[i * n + j] += acc;
        }
    }
}

/// Unfold a [ci,h,w] map into the im2col matrix [ci*kh*kw, oh*ow] for a
/// cross-correlation with the given stride and zero padding.
pub fn im2col<S: Scalar>(
    input: &[S],
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<S> {
    let mut cols = vec![S::ZERO; ci * kh * kw * oh * ow];
    let l = oh * ow;
    for c in 0..ci {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for dy in 0..kh {
            for dx in 0..kw {
                let row = &mut cols[((c * kh + dy) * kw + dx) * l..][..l];
                for oy in 0..oh {
                    let iy = (oy * stride + dy) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    for ox in 0..ow {
                        let ix = (ox * stride + dx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add the im2col adjoint back into a [ci,h,w] gradient buffer.
pub fn col2im_acc<S: Scalar>(
    cols: &[S],
    grad_input: &mut [S],
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) {
    let l = oh * ow;
    for c in 0..ci {
        let plane = &mut grad_input[c * h * w..(c + 1) * h * w];
        for dy in 0..kh {
            for dx in 0..kw {
                let row = &cols[((c * kh + dy) * kw + dx) * l..][..l];
                for oy in 0..oh {
                    let iy = (oy * stride + dy) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &row[oy * ow..(oy + 1) * ow];
                    for ox in 0..ow {
                        let ix = (ox * stride + dx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Reflect an out-of-range coordinate back into [0, n) without repeating the
/// edge sample (np.pad "reflect" convention). Requires n >= 1.
#[inline]
pub fn reflect_index(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
    }
}

/// Interpolation stencil for one output coordinate of a half-pixel-centered
/// bilinear resize: returns (i0, i1, weight for i1).
#[inline]
pub fn bilinear_coords(out_i: usize, in_n: usize, out_n: usize) -> (usize, usize, f64) {
    let scale = in_n as f64 / out_n as f64;
    let src = ((out_i as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(in_n - 1);
    let i1 = (i0 + 1).min(in_n - 1);
    let w = src - i0 as f64;
    (i0, i1, w.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_hand_product() {
        // [1 2; 3 4] @ [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut out = [0.0f64; 4];
        matmul_acc(&a, &b, &mut out, 2, 2, 2);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_variants_agree_with_explicit_transpose() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // [2,3]
        let b = [1.0f64, 0.5, -1.0, 2.0, 0.0, 3.0]; // [2,3]
        // a^T @ b : [3,3]
        let mut out1 = [0.0f64; 9];
        matmul_at_b_acc(&a, &b, &mut out1, 3, 2, 3);
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0]; // [3,2]
        let mut expect = [0.0f64; 9];
        matmul_acc(&at, &b, &mut expect, 3, 2, 3);
        assert_eq!(out1, expect);

        // a @ b^T : [2,2]
        let mut out2 = [0.0f64; 4];
        matmul_a_bt_acc(&a, &b, &mut out2, 2, 3, 2);
        let bt = [1.0, 2.0, 0.5, 0.0, -1.0, 3.0]; // [3,2]
        let mut expect2 = [0.0f64; 4];
        matmul_acc(&a, &bt, &mut expect2, 2, 3, 2);
        assert_eq!(out2, expect2);
    }

    #[test]
    fn reflect_index_mirrors_without_edge_repeat() {
        // n = 4: ... 2 1 | 0 1 2 3 | 2 1 0 ...
        assert_eq!(reflect_index(-1, 4), 1);
        assert_eq!(reflect_index(-2, 4), 2);
        assert_eq!(reflect_index(0, 4), 0);
        assert_eq!(reflect_index(3, 4), 3);
        assert_eq!(reflect_index(4, 4), 2);
        assert_eq!(reflect_index(5, 4), 1);
        assert_eq!(reflect_index(0, 1), 0);
        assert_eq!(reflect_index(7, 1), 0);
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y.
        let mut rng = crate::rng::Pcg32::new(11, 0);
        let (ci, h, w, kh, kw, stride, pad) = (2usize, 5usize, 4usize, 3usize, 3usize, 2usize, 1usize);
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let x: Vec<f64> = (0..ci * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let y: Vec<f64> = (0..ci * kh * kw * oh * ow)
            .map(|_| rng.uniform(-1.0, 1.0))
            .collect();
        let cols = im2col(&x, ci, h, w, kh, kw, stride, pad, oh, ow);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0f64; ci * h * w];
        col2im_acc(&y, &mut back, ci, h, w, kh, kw, stride, pad, oh, ow);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12, "lhs={lhs} rhs={rhs}");
    }
}
