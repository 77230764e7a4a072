//! Raw compute kernels shared by graph forward ops and backward rules.
//!
//! Every reduction is a single sequential loop per output element, so results
//! are bit-reproducible regardless of thread count. Parallelism only splits
//! work across independent output elements.

use rayon::prelude::*;

use super::{strides_of, Scalar, Tensor};

/// Number of scalar multiplies below which a kernel stays single-threaded.
const PAR_THRESHOLD: usize = 1 << 16;

/// C[m,n] = A[m,k] B[k,n].
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::ZERO; m * n];
    let work = m * k * n;
    let row = |i: usize, out: &mut [T]| {
        let ar = &a[i * k..(i + 1) * k];
        for (t, &av) in ar.iter().enumerate() {
            let br = &b[t * n..(t + 1) * n];
            for (o, &bv) in out.iter_mut().zip(br) {
                *o = *o + av * bv;
            }
        }
    };
    if work < PAR_THRESHOLD {
        for (i, out) in c.chunks_mut(n).enumerate() {
            row(i, out);
        }
    } else {
        c.par_chunks_mut(n).enumerate().for_each(|(i, out)| row(i, out));
    }
    c
}

/// C[b,m,n] = A[b,m,k] B[b,k,n] for every batch slice independently.
pub fn batch_matmul<T: Scalar>(
    a: &[T],
    b: &[T],
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
) -> Vec<T> {
    let mut c = vec![T::ZERO; batch * m * n];
    let slice = |bi: usize, out: &mut [T]| {
        let ab = &a[bi * m * k..(bi + 1) * m * k];
        let bb = &b[bi * k * n..(bi + 1) * k * n];
        for i in 0..m {
            let ar = &ab[i * k..(i + 1) * k];
            let or = &mut out[i * n..(i + 1) * n];
            for (t, &av) in ar.iter().enumerate() {
                let br = &bb[t * n..(t + 1) * n];
                for (o, &bv) in or.iter_mut().zip(br) {
                    *o = *o + av * bv;
                }
            }
        }
    };
    if batch * m * k * n < PAR_THRESHOLD {
        for (bi, out) in c.chunks_mut(m * n).enumerate() {
            slice(bi, out);
        }
    } else {
        c.par_chunks_mut(m * n)
            .enumerate()
            .for_each(|(bi, out)| slice(bi, out));
    }
    c
}

/// B[n,m] = A[m,n] transposed.
pub fn transpose2d<T: Scalar>(a: &[T], m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

/// Permute axes: out[perm(idx)] = in[idx]. `axes[d]` names the input axis that
/// becomes output axis `d`.
pub fn permute<T: Scalar>(x: &Tensor<T>, axes: &[usize]) -> Tensor<T> {
    let in_shape = x.shape();
    let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
    let in_strides = strides_of(in_shape);
    let out_strides = strides_of(&out_shape);
    let mut data = vec![T::ZERO; x.numel()];
    let src = x.data();
    // Walk output positions in order; map each back to the input flat index.
    for (out_flat, slot) in data.iter_mut().enumerate() {
        let mut rem = out_flat;
        let mut in_flat = 0;
        for (d, &os) in out_strides.iter().enumerate() {
            let coord = rem / os;
            rem %= os;
            in_flat += coord * in_strides[axes[d]];
        }
        *slot = src[in_flat];
    }
    Tensor::new(out_shape, data).expect("permute preserves element count")
}

/// Inverse of a permutation.
pub fn invert_axes(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; axes.len()];
    for (d, &a) in axes.iter().enumerate() {
        inv[a] = d;
    }
    inv
}

/// 3x3 same-padding cross-correlation, NCHW layout.
/// x: [b, ci, h, w], w: [co, ci, 3, 3], bias: [co] -> [b, co, h, w]
pub fn conv2d_3x3_same<T: Scalar>(
    x: &[T],
    w: &[T],
    bias: &[T],
    b: usize,
    ci: usize,
    co: usize,
    h: usize,
    wd: usize,
) -> Vec<T> {
    let mut out = vec![T::ZERO; b * co * h * wd];
    let plane = h * wd;
    let one = |idx: usize, dst: &mut [T]| {
        let (bi, oc) = (idx / co, idx % co);
        let xb = &x[bi * ci * plane..(bi + 1) * ci * plane];
        let wf = &w[oc * ci * 9..(oc + 1) * ci * 9];
        for (p, slot) in dst.iter_mut().enumerate() {
            let (y, xc) = (p / wd, p % wd);
            let mut acc = T::ZERO;
            for c in 0..ci {
                let xp = &xb[c * plane..(c + 1) * plane];
                let wk = &wf[c * 9..c * 9 + 9];
                for dy in 0..3usize {
                    let sy = y as isize + dy as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for dx in 0..3usize {
                        let sx = xc as isize + dx as isize - 1;
                        if sx < 0 || sx >= wd as isize {
                            continue;
                        }
                        acc = acc + xp[sy as usize * wd + sx as usize] * wk[dy * 3 + dx];
                    }
                }
            }
            *slot = acc + bias[oc];
        }
    };
    if b * co * ci * 9 * plane < PAR_THRESHOLD {
        for (idx, dst) in out.chunks_mut(plane).enumerate() {
            one(idx, dst);
        }
    } else {
        out.par_chunks_mut(plane)
            .enumerate()
            .for_each(|(idx, dst)| one(idx, dst));
    }
    out
}

/// Gradient w.r.t. x of `conv2d_3x3_same`: correlation of grad with the
/// spatially flipped kernel, channels transposed.
pub fn conv2d_3x3_same_grad_x<T: Scalar>(
    grad: &[T],
    w: &[T],
    b: usize,
    ci: usize,
    co: usize,
    h: usize,
    wd: usize,
) -> Vec<T> {
    let plane = h * wd;
    let mut gx = vec![T::ZERO; b * ci * plane];
    gx.par_chunks_mut(plane).enumerate().for_each(|(idx, dst)| {
        let (bi, c) = (idx / ci, idx % ci);
        let gb = &grad[bi * co * plane..(bi + 1) * co * plane];
        for (p, slot) in dst.iter_mut().enumerate() {
            let (y, xc) = (p / wd, p % wd);
            let mut acc = T::ZERO;
            for oc in 0..co {
                let gp = &gb[oc * plane..(oc + 1) * plane];
                let wk = &w[(oc * ci + c) * 9..(oc * ci + c) * 9 + 9];
                for dy in 0..3usize {
                    // out position that read x[y, xc] through tap (dy, dx)
                    let oy = y as isize - (dy as isize - 1);
                    if oy < 0 || oy >= h as isize {
                        continue;
                    }
                    for dx in 0..3usize {
                        let ox = xc as isize - (dx as isize - 1);
                        if ox < 0 || ox >= wd as isize {
                            continue;
                        }
                        acc = acc + gp[oy as usize * wd + ox as usize] * wk[dy * 3 + dx];
                    }
                }
            }
            *slot = acc;
        }
    });
    gx
}

/// Gradient w.r.t. the kernel of `conv2d_3x3_same`.
pub fn conv2d_3x3_same_grad_w<T: Scalar>(
    grad: &[T],
    x: &[T],
    b: usize,
    ci: usize,
    co: usize,
    h: usize,
    wd: usize,
) -> Vec<T> {
    let plane = h * wd;
    let mut gw = vec![T::ZERO; co * ci * 9];
    gw.par_chunks_mut(ci * 9).enumerate().for_each(|(oc, dst)| {
        for c in 0..ci {
            for dy in 0..3usize {
                for dx in 0..3usize {
                    let mut acc = T::ZERO;
                    for bi in 0..b {
                        let gp = &grad[(bi * co + oc) * plane..(bi * co + oc + 1) * plane];
                        let xp = &x[(bi * ci + c) * plane..(bi * ci + c + 1) * plane];
                        for y in 0..h {
                            let sy = y as isize + dy as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for xc in 0..wd {
                                let sx = xc as isize + dx as isize - 1;
                                if sx < 0 || sx >= wd as isize {
                                    continue;
                                }
                                acc = acc + gp[y * wd + xc] * xp[sy as usize * wd + sx as usize];
                            }
                        }
                    }
                    dst[c * 9 + dy * 3 + dx] = acc;
                }
            }
        }
    });
    gw
}

/// Gradient w.r.t. the bias: sum of grad over batch and spatial axes.
pub fn conv2d_3x3_same_grad_b<T: Scalar>(
    grad: &[T],
    b: usize,
    co: usize,
    h: usize,
    wd: usize,
) -> Vec<T> {
    let plane = h * wd;
    let mut gb = vec![T::ZERO; co];
    for bi in 0..b {
        for (oc, slot) in gb.iter_mut().enumerate() {
            let gp = &grad[(bi * co + oc) * plane..(bi * co + oc + 1) * plane];
            for &g in gp {
                *slot = *slot + g;
            }
        }
    }
    gb
}

/// out[b, c, r*y+dy, r*x+dx] = in[b, c*r^2 + dy*r + dx, y, x]
pub fn pixel_shuffle<T: Scalar>(
    x: &[T],
    b: usize,
    c_out: usize,
    r: usize,
    h: usize,
    w: usize,
) -> Vec<T> {
    let mut out = vec![T::ZERO; b * c_out * (r * h) * (r * w)];
    let (oh, ow) = (r * h, r * w);
    for bi in 0..b {
        for c in 0..c_out {
            for dy in 0..r {
                for dx in 0..r {
                    let ic = c * r * r + dy * r + dx;
                    let src = &x[((bi * c_out * r * r) + ic) * h * w..][..h * w];
                    for y in 0..h {
                        for xc in 0..w {
                            let op = ((bi * c_out + c) * oh + (r * y + dy)) * ow + (r * xc + dx);
                            out[op] = src[y * w + xc];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Exact inverse of `pixel_shuffle`.
pub fn pixel_unshuffle<T: Scalar>(
    x: &[T],
    b: usize,
    c_in: usize,
    r: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let (h, w) = (oh / r, ow / r);
    let mut out = vec![T::ZERO; b * c_in * r * r * h * w];
    for bi in 0..b {
        for c in 0..c_in {
            for dy in 0..r {
                for dx in 0..r {
                    let oc = c * r * r + dy * r + dx;
                    let dst_base = ((bi * c_in * r * r) + oc) * h * w;
                    for y in 0..h {
                        for xc in 0..w {
                            let ip = ((bi * c_in + c) * oh + (r * y + dy)) * ow + (r * xc + dx);
                            out[dst_base + y * w + xc] = x[ip];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Row-wise softmax over the last axis with per-row max subtraction.
pub fn softmax_lastdim<T: Scalar>(x: &[T], row_len: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; x.len()];
    for (src, dst) in x.chunks(row_len).zip(out.chunks_mut(row_len)) {
        let mut m = src[0];
        for &v in &src[1..] {
            m = m.maximum(v);
        }
        let mut sum = T::ZERO;
        for (d, &v) in dst.iter_mut().zip(src) {
            let e = (v - m).exp();
            *d = e;
            sum += e;
        }
        for d in dst.iter_mut() {
            *d = *d / sum;
        }
    }
    out
}

/// Tanh-form GELU and its exact derivative.
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let k = T::from_f64(0.044_715);
    let half = T::from_f64(0.5);
    let u = c * (x + k * x * x * x);
    half * x * (T::ONE + u.tanh())
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.797_884_560_802_865_4);
    let k = T::from_f64(0.044_715);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let du = c * (T::ONE + three * k * x * x);
    half * (T::ONE + t) + half * x * (T::ONE - t * t) * du
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        // Independent oracle: plain i/j/t triple loop in f64.
        let m = 3;
        let k = 4;
        let n = 2;
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut expect = vec![0.0f64; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for t in 0..k {
                    s += a[i * k + t] * b[t * n + j];
                }
                expect[i * n + j] = s;
            }
        }
        let got = matmul(&a, &b, m, k, n);
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() <= 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn transpose_round_trip() {
        let a: Vec<f32> = (0..12).map(|i| i as f32).collect();
        let t = transpose2d(&a, 3, 4);
        let back = transpose2d(&t, 4, 3);
        assert_eq!(a, back);
    }

    #[test]
    fn permute_then_inverse_is_identity() {
        let t = Tensor::new(vec![2, 3, 4], (0..24).map(|i| i as f64).collect()).unwrap();
        let axes = [2, 0, 1];
        let p = permute(&t, &axes);
        assert_eq!(p.shape(), &[4, 2, 3]);
        let back = permute(&p, &invert_axes(&axes));
        assert_eq!(back.data(), t.data());
    }

    #[test]
    fn pixel_shuffle_unshuffle_round_trip() {
        let x: Vec<f32> = (0..2 * 8 * 3 * 5).map(|i| i as f32).collect();
        let s = pixel_shuffle(&x, 2, 2, 2, 3, 5);
        let u = pixel_unshuffle(&s, 2, 2, 2, 6, 10);
        assert_eq!(x, u);
    }
}
