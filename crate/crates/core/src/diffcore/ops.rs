//! Primitive tensor operations, forward and backward.
//!
//! Kernel layouts: convolution weights are `[c_out, c_in, k, k, k]`,
//! transposed-convolution weights `[c_in, c_out, k, k, k]`, affine weights
//! `[out_features, in_features]`. All parallel loops write disjoint output
//! slices with a fixed internal order, so results are bitwise independent of
//! the worker count.
//!
//! The stride-1 convolution paths are the training and inference hot spot;
//! their inner loops fuse all kernel taps of a row so the compiler can emit
//! straight FMA chains over contiguous slices.

use super::scalar::Scalar;
use super::tensor::Tensor5;
use crate::error::{Error, Result};
use rayon::prelude::*;

#[inline]
pub fn conv_out_dim(inp: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (inp + 2 * pad).checked_sub(k).map(|d| d / stride + 1)
}

/// Batch items per parallel task, sized so each task carries enough work to
/// amortize scheduling.
fn items_per_task(batch: usize, item_work: usize) -> usize {
    const MIN_TASK_WORK: usize = 1 << 18;
    (MIN_TASK_WORK / item_work.max(1)).clamp(1, batch.max(1))
}

/// Copies the input into a zero-padded buffer of shape (B, C, D+2p, H+2p, W+2p).
fn pad_input<T: Scalar>(input: &Tensor5<T>, p: usize) -> (Vec<T>, [usize; 3]) {
    let [b, c, d, h, w] = input.shape();
    let (pd, ph, pw) = (d + 2 * p, h + 2 * p, w + 2 * p);
    if p == 0 {
        return (input.data().to_vec(), [pd, ph, pw]);
    }
    let mut out = vec![T::ZERO; b * c * pd * ph * pw];
    let psp = pd * ph * pw;
    out.par_chunks_mut(psp).enumerate().for_each(|(bc, block)| {
        let src = input.bc_slice(bc / c, bc % c);
        for z in 0..d {
            for y in 0..h {
                let dst = ((z + p) * ph + (y + p)) * pw + p;
                let s = (z * h + y) * w;
                block[dst..dst + w].copy_from_slice(&src[s..s + w]);
            }
        }
    });
    (out, [pd, ph, pw])
}

/// y += a * x
#[inline(always)]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    let n = y.len();
    let x = &x[..n];
    for i in 0..n {
        y[i] += a * x[i];
    }
}

/// out[j] += sum_t w[t] * inp[j + offs[t]] for the 27 taps of a 3x3x3
/// kernel, one fused pass. offs must be increasing; the caller guarantees
/// inp covers n + offs[26] elements.
fn fused_taps_27<T: Scalar>(out: &mut [T], inp: &[T], offs: &[usize; 27], w: &[T; 27]) {
    let n = out.len();
    assert!(inp.len() >= n + offs[26]);
    let mut j = 0;
    // SAFETY: j + l < n and offs[t] <= offs[26] keep every index in bounds.
    unsafe {
        while j + 8 <= n {
            let mut acc = [T::ZERO; 8];
            for t in 0..27 {
                let base = j + offs[t];
                let wt = w[t];
                for l in 0..8 {
                    acc[l] += wt * *inp.get_unchecked(base + l);
                }
            }
            for l in 0..8 {
                *out.get_unchecked_mut(j + l) += acc[l];
            }
            j += 8;
        }
        while j < n {
            let mut acc = T::ZERO;
            for t in 0..27 {
                acc += w[t] * *inp.get_unchecked(j + offs[t]);
            }
            *out.get_unchecked_mut(j) += acc;
            j += 1;
        }
    }
}

/// acc[t] += sum_j up[j] * inp[j + offs[t]] for all 27 taps, processed in
/// three groups of nine so the accumulator lanes stay in registers. The
/// combine order is fixed.
fn fused_dot_27<T: Scalar>(up: &[T], inp: &[T], offs: &[usize; 27], acc: &mut [T; 27]) {
    let n = up.len();
    assert!(inp.len() >= n + offs[26]);
    for group in 0..3 {
        let base_t = group * 9;
        let goffs: [usize; 9] = std::array::from_fn(|i| offs[base_t + i]);
        let mut lanes = [[T::ZERO; 8]; 9];
        let mut j = 0;
        // SAFETY: j + l < n and offsets stay <= offs[26], all in bounds.
        unsafe {
            while j + 8 <= n {
                for t in 0..9 {
                    let base = j + goffs[t];
                    for l in 0..8 {
                        lanes[t][l] += *up.get_unchecked(j + l) * *inp.get_unchecked(base + l);
                    }
                }
                j += 8;
            }
            while j < n {
                for t in 0..9 {
                    lanes[t][0] += *up.get_unchecked(j) * *inp.get_unchecked(j + goffs[t]);
                }
                j += 1;
            }
        }
        for t in 0..9 {
            let mut s = T::ZERO;
            for l in 0..8 {
                s += lanes[t][l];
            }
            acc[base_t + t] += s;
        }
    }
}

/// Dot product with eight independent accumulator lanes so the loop
/// vectorizes; the final combine order is fixed.
#[inline(always)]
fn lane_dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [T::ZERO; 8];
    let mut i = 0;
    while i + 8 <= n {
        for l in 0..8 {
            lanes[l] += a[i + l] * b[i + l];
        }
        i += 8;
    }
    let mut acc = T::ZERO;
    while i < n {
        acc += a[i] * b[i];
        i += 1;
    }
    for l in 0..8 {
        acc += lanes[l];
    }
    acc
}

/// Stride-1 convolution over one (batch, out-channel) block.
///
/// Works on a scratch grid with the padded input's strides: each kernel tap
/// is one long axpy over the whole flattened grid (out cell j reads
/// in_pad[j + off]). Cells outside the anchored valid region accumulate
/// values that are never extracted.
#[allow(clippy::too_many_arguments)]
fn conv_block_s1<T: Scalar>(
    oc: &mut [T],
    scratch: &mut [T],
    ipad: &[T],
    kernel: &[T],
    bias: T,
    co: usize,
    c_in: usize,
    k: usize,
    psp: usize,
    ph: usize,
    pw: usize,
    out_sp: [usize; 3],
    bi: usize,
    offs27: Option<&[usize; 27]>,
) {
    let [od, oh, ow] = out_sp;
    scratch.fill(T::ZERO);
    for ci in 0..c_in {
        let ip = &ipad[(bi * c_in + ci) * psp..(bi * c_in + ci + 1) * psp];
        let kbase = (co * c_in + ci) * k * k * k;
        if k == 1 {
            axpy(scratch, kernel[kbase], ip);
        } else if let Some(offs) = offs27 {
            let mut w = [T::ZERO; 27];
            w.copy_from_slice(&kernel[kbase..kbase + 27]);
            let n = psp - offs[26];
            fused_taps_27(&mut scratch[..n], ip, offs, &w);
        } else {
            for kz in 0..k {
                for ky in 0..k {
                    for kx in 0..k {
                        let off = (kz * ph + ky) * pw + kx;
                        let w = kernel[kbase + (kz * k + ky) * k + kx];
                        let n = psp - off;
                        axpy(&mut scratch[..n], w, &ip[off..]);
                    }
                }
            }
        }
    }
    for oz in 0..od {
        for oy in 0..oh {
            let src = (oz * ph + oy) * pw;
            let dst = (oz * oh + oy) * ow;
            let s = &scratch[src..src + ow];
            let o = &mut oc[dst..dst + ow];
            for i in 0..ow {
                o[i] = bias + s[i];
            }
        }
    }
}

/// Arbitrary-stride fallback.
#[allow(clippy::too_many_arguments)]
fn conv_block_strided<T: Scalar>(
    oc: &mut [T],
    ipad: &[T],
    kernel: &[T],
    co: usize,
    c_in: usize,
    k: usize,
    stride: usize,
    psp: usize,
    ph: usize,
    pw: usize,
    out_sp: [usize; 3],
    bi: usize,
) {
    let [od, oh, ow] = out_sp;
    for ci in 0..c_in {
        let ip = &ipad[(bi * c_in + ci) * psp..(bi * c_in + ci + 1) * psp];
        let kbase = (co * c_in + ci) * k * k * k;
        for kz in 0..k {
            for ky in 0..k {
                for kx in 0..k {
                    let w = kernel[kbase + (kz * k + ky) * k + kx];
                    for oz in 0..od {
                        let iz = oz * stride + kz;
                        for oy in 0..oh {
                            let iy = oy * stride + ky;
                            let irow = (iz * ph + iy) * pw + kx;
                            let orow = (oz * oh + oy) * ow;
                            for ox in 0..ow {
                                oc[orow + ox] += w * ip[irow + ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv3d_forward<T: Scalar>(
    input: &Tensor5<T>,
    kernel: &[T],
    bias: &[T],
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor5<T>> {
    let [b, c_in, d, h, w] = input.shape();
    if kernel.len() != c_out * c_in * k * k * k {
        return Err(Error::Shape(format!(
            "conv kernel has {} elements, expected {}x{}x{}^3",
            kernel.len(),
            c_out,
            c_in,
            k
        )));
    }
    if bias.len() != c_out {
        return Err(Error::Shape("conv bias length mismatch".into()));
    }
    let (od, oh, ow) = match (
        conv_out_dim(d, k, stride, pad),
        conv_out_dim(h, k, stride, pad),
        conv_out_dim(w, k, stride, pad),
    ) {
        (Some(a), Some(bb), Some(c)) => (a, bb, c),
        _ => {
            return Err(Error::Shape(format!(
                "conv input {d}x{h}x{w} smaller than kernel {k} at padding {pad}"
            )))
        }
    };

    let osp = od * oh * ow;
    let out_sp = [od, oh, ow];
    let mut out = Tensor5::zeros([b, c_out, od, oh, ow]);
    let item_work = c_out * c_in * osp * k * k * k;
    let chunk_items = items_per_task(b, item_work);

    // Pointwise convolution: a pure channel mix, no padding or scratch.
    if k == 1 && stride == 1 && pad == 0 {
        out.data_mut()
            .par_chunks_mut(chunk_items * c_out * osp)
            .enumerate()
            .for_each(|(chunk_idx, chunk)| {
                for (local, item) in chunk.chunks_mut(c_out * osp).enumerate() {
                    let bi = chunk_idx * chunk_items + local;
                    for co in 0..c_out {
                        let oc = &mut item[co * osp..(co + 1) * osp];
                        oc.fill(bias[co]);
                        for ci in 0..c_in {
                            axpy(oc, kernel[co * c_in + ci], input.bc_slice(bi, ci));
                        }
                    }
                }
            });
        return Ok(out);
    }

    let (ipad, [pd, ph, pw]) = pad_input(input, pad);
    let psp = pd * ph * pw;
    let offs27 = if k == 3 && stride == 1 {
        let mut offs = [0usize; 27];
        for kz in 0..3 {
            for ky in 0..3 {
                for kx in 0..3 {
                    offs[(kz * 3 + ky) * 3 + kx] = (kz * ph + ky) * pw + kx;
                }
            }
        }
        Some(offs)
    } else {
        None
    };
    out.data_mut()
        .par_chunks_mut(chunk_items * c_out * osp)
        .enumerate()
        .for_each(|(chunk_idx, chunk)| {
            let mut scratch = vec![T::ZERO; if stride == 1 { psp } else { 0 }];
            for (local, item) in chunk.chunks_mut(c_out * osp).enumerate() {
                let bi = chunk_idx * chunk_items + local;
                for co in 0..c_out {
                    let oc = &mut item[co * osp..(co + 1) * osp];
                    if stride == 1 {
                        conv_block_s1(
                            oc,
                            &mut scratch,
                            &ipad,
                            kernel,
                            bias[co],
                            co,
                            c_in,
                            k,
                            psp,
                            ph,
                            pw,
                            out_sp,
                            bi,
                            offs27.as_ref(),
                        );
                    } else {
                        oc.fill(bias[co]);
                        conv_block_strided(
                            oc, &ipad, kernel, co, c_in, k, stride, psp, ph, pw, out_sp, bi,
                        );
                    }
                }
            }
        });
    Ok(out)
}

pub struct ConvGrads<T> {
    pub input: Tensor5<T>,
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

/// Kernel flipped in all spatial dims with channel axes swapped; convolving
/// the upstream gradient with it (stride 1) yields the input gradient.
fn flip_transpose_kernel<T: Scalar>(kernel: &[T], c_out: usize, c_in: usize, k: usize) -> Vec<T> {
    let k3 = k * k * k;
    let mut out = vec![T::ZERO; kernel.len()];
    for co in 0..c_out {
        for ci in 0..c_in {
            for kz in 0..k {
                for ky in 0..k {
                    for kx in 0..k {
                        let src = (co * c_in + ci) * k3 + (kz * k + ky) * k + kx;
                        let dst = (ci * c_out + co) * k3
                            + ((k - 1 - kz) * k + (k - 1 - ky)) * k
                            + (k - 1 - kx);
                        out[dst] = kernel[src];
                    }
                }
            }
        }
    }
    out
}

fn lane_sum<T: Scalar>(xs: &[T]) -> T {
    let mut acc = T::ZERO;
    for &x in xs {
        acc += x;
    }
    acc
}

pub fn conv3d_backward<T: Scalar>(
    input: &Tensor5<T>,
    kernel: &[T],
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    upstream: &Tensor5<T>,
) -> ConvGrads<T> {
    let [b, c_in, d, h, w] = input.shape();
    let [ub, uc, od, oh, ow] = upstream.shape();
    assert_eq!((ub, uc), (b, c_out), "upstream shape mismatch");

    let (ipad, [pd, ph, pw]) = pad_input(input, pad);
    let psp = pd * ph * pw;

    // Bias: plain sums per output channel.
    let mut bias_grad = vec![T::ZERO; c_out];
    bias_grad.par_iter_mut().enumerate().for_each(|(co, g)| {
        let mut acc = T::ZERO;
        for bi in 0..b {
            acc += lane_sum(upstream.bc_slice(bi, co));
        }
        *g = acc;
    });

    // Kernel gradient: co-slabs in parallel, batch scanned in order. For
    // stride 1 the upstream is re-anchored on the padded grid (zeros in the
    // pad cells) so each tap's gradient is one flat lane-dot.
    let mut kernel_grad = vec![T::ZERO; kernel.len()];
    let slab = c_in * k * k * k;
    kernel_grad
        .par_chunks_mut(slab)
        .enumerate()
        .for_each(|(co, kg)| {
            if stride == 1 {
                let mut offs = [0usize; 27];
                if k == 3 {
                    for kz in 0..3 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                offs[(kz * 3 + ky) * 3 + kx] = (kz * ph + ky) * pw + kx;
                            }
                        }
                    }
                }
                let mut anchored = vec![T::ZERO; psp];
                for bi in 0..b {
                    let up = upstream.bc_slice(bi, co);
                    anchored.fill(T::ZERO);
                    for oz in 0..od {
                        for oy in 0..oh {
                            let dst = (oz * ph + oy) * pw;
                            let src = (oz * oh + oy) * ow;
                            anchored[dst..dst + ow].copy_from_slice(&up[src..src + ow]);
                        }
                    }
                    for ci in 0..c_in {
                        let ip = &ipad[(bi * c_in + ci) * psp..(bi * c_in + ci + 1) * psp];
                        if k == 3 {
                            let n = psp - offs[26];
                            let mut acc = [T::ZERO; 27];
                            fused_dot_27(&anchored[..n], ip, &offs, &mut acc);
                            let kgc = &mut kg[ci * 27..(ci + 1) * 27];
                            for t in 0..27 {
                                kgc[t] += acc[t];
                            }
                        } else {
                            for kz in 0..k {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let off = (kz * ph + ky) * pw + kx;
                                        kg[((ci * k + kz) * k + ky) * k + kx] +=
                                            lane_dot(&anchored[..psp - off], &ip[off..]);
                                    }
                                }
                            }
                        }
                    }
                }
            } else {
                let mut taps = vec![T::ZERO; k * ow];
                for bi in 0..b {
                    let up = upstream.bc_slice(bi, co);
                    for ci in 0..c_in {
                        let ip = &ipad[(bi * c_in + ci) * psp..(bi * c_in + ci + 1) * psp];
                        for kz in 0..k {
                            for ky in 0..k {
                                taps.fill(T::ZERO);
                                for oz in 0..od {
                                    let iz = oz * stride + kz;
                                    for oy in 0..oh {
                                        let iy = oy * stride + ky;
                                        let irow = (iz * ph + iy) * pw;
                                        let urow =
                                            &up[(oz * oh + oy) * ow..(oz * oh + oy + 1) * ow];
                                        for kx in 0..k {
                                            let t = &mut taps[kx * ow..(kx + 1) * ow];
                                            for ox in 0..ow {
                                                t[ox] += urow[ox] * ip[irow + kx + ox * stride];
                                            }
                                        }
                                    }
                                }
                                for kx in 0..k {
                                    kg[((ci * k + kz) * k + ky) * k + kx] +=
                                        lane_sum(&taps[kx * ow..(kx + 1) * ow]);
                                }
                            }
                        }
                    }
                }
            }
        });

    // Input gradient. For stride 1 it is itself a stride-1 convolution of
    // the upstream with the flipped/transposed kernel; reuse the fast path.
    let input_grad = if stride == 1 {
        let flipped = flip_transpose_kernel(kernel, c_out, c_in, k);
        let zero_bias = vec![T::ZERO; c_in];
        conv3d_forward(upstream, &flipped, &zero_bias, c_in, k, 1, k - 1 - pad)
            .expect("input-gradient convolution shapes are consistent")
    } else {
        let mut input_grad = Tensor5::zeros([b, c_in, d, h, w]);
        let bsp = c_in * d * h * w;
        input_grad
            .data_mut()
            .par_chunks_mut(bsp)
            .enumerate()
            .for_each(|(bi, islice)| {
                let mut gpad = vec![T::ZERO; c_in * psp];
                for co in 0..c_out {
                    let up = upstream.bc_slice(bi, co);
                    for ci in 0..c_in {
                        let gp = &mut gpad[ci * psp..(ci + 1) * psp];
                        let kbase = (co * c_in + ci) * k * k * k;
                        for kz in 0..k {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let wgt = kernel[kbase + (kz * k + ky) * k + kx];
                                    for oz in 0..od {
                                        let iz = oz * stride + kz;
                                        for oy in 0..oh {
                                            let iy = oy * stride + ky;
                                            let irow = (iz * ph + iy) * pw + kx;
                                            let orow = (oz * oh + oy) * ow;
                                            for ox in 0..ow {
                                                gp[irow + ox * stride] += wgt * up[orow + ox];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                for ci in 0..c_in {
                    let gp = &gpad[ci * psp..(ci + 1) * psp];
                    for z in 0..d {
                        for y in 0..h {
                            let src = ((z + pad) * ph + (y + pad)) * pw + pad;
                            let dst = (ci * d + z) * h * w + y * w;
                            islice[dst..dst + w].copy_from_slice(&gp[src..src + w]);
                        }
                    }
                }
            });
        input_grad
    };

    ConvGrads {
        input: input_grad,
        kernel: kernel_grad,
        bias: bias_grad,
    }
}

pub fn transp_conv3d_forward<T: Scalar>(
    input: &Tensor5<T>,
    kernel: &[T],
    bias: &[T],
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor5<T>> {
    let [b, c_in, d, h, w] = input.shape();
    if kernel.len() != c_in * c_out * k * k * k {
        return Err(Error::Shape("transposed conv kernel length mismatch".into()));
    }
    if bias.len() != c_out {
        return Err(Error::Shape("transposed conv bias length mismatch".into()));
    }
    let odim = |n: usize| ((n - 1) * stride + k).checked_sub(2 * pad);
    let (od, oh, ow) = match (odim(d), odim(h), odim(w)) {
        (Some(a), Some(bb), Some(c)) if a > 0 && bb > 0 && c > 0 => (a, bb, c),
        _ => {
            return Err(Error::Shape(format!(
                "transposed conv output collapses for input {d}x{h}x{w}, k={k}, s={stride}, p={pad}"
            )))
        }
    };

    let osp = od * oh * ow;
    let isp = d * h * w;
    let mut out = Tensor5::zeros([b, c_out, od, oh, ow]);
    let item_work = c_out * c_in * isp * k * k * k;
    let chunk_items = items_per_task(b, item_work);
    out.data_mut()
        .par_chunks_mut(chunk_items * c_out * osp)
        .enumerate()
        .for_each(|(chunk_idx, chunk)| {
            for (local, item) in chunk.chunks_mut(c_out * osp).enumerate() {
                let bi = chunk_idx * chunk_items + local;
                for co in 0..c_out {
                    let slice = &mut item[co * osp..(co + 1) * osp];
                    slice.fill(bias[co]);
                    for ci in 0..c_in {
                        let ip = input.bc_slice(bi, ci);
                        for iz in 0..d {
                            for iy in 0..h {
                                let irow = (iz * h + iy) * w;
                                for kz in 0..k {
                                    let oz = iz * stride + kz;
                                    if oz < pad || oz - pad >= od {
                                        continue;
                                    }
                                    for ky in 0..k {
                                        let oy = iy * stride + ky;
                                        if oy < pad || oy - pad >= oh {
                                            continue;
                                        }
                                        let orow = ((oz - pad) * oh + (oy - pad)) * ow;
                                        for kx in 0..k {
                                            let wgt = kernel
                                                [(((ci * c_out + co) * k + kz) * k + ky) * k + kx];
                                            for ix in 0..w {
                                                let ox = ix * stride + kx;
                                                if ox < pad || ox - pad >= ow {
                                                    continue;
                                                }
                                                slice[orow + ox - pad] += wgt * ip[irow + ix];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

pub fn transp_conv3d_backward<T: Scalar>(
    input: &Tensor5<T>,
    kernel: &[T],
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    upstream: &Tensor5<T>,
) -> ConvGrads<T> {
    let [b, c_in, d, h, w] = input.shape();
    let [_, _, od, oh, ow] = upstream.shape();

    let mut bias_grad = vec![T::ZERO; c_out];
    bias_grad.par_iter_mut().enumerate().for_each(|(co, g)| {
        let mut acc = T::ZERO;
        for bi in 0..b {
            acc += lane_sum(upstream.bc_slice(bi, co));
        }
        *g = acc;
    });

    // Input gradient: gather back through the scatter map.
    let mut input_grad = Tensor5::zeros([b, c_in, d, h, w]);
    let isp = d * h * w;
    input_grad
        .data_mut()
        .par_chunks_mut(isp)
        .enumerate()
        .for_each(|(chunk, islice)| {
            let bi = chunk / c_in;
            let ci = chunk % c_in;
            for co in 0..c_out {
                let up = upstream.bc_slice(bi, co);
                for iz in 0..d {
                    for iy in 0..h {
                        let irow = (iz * h + iy) * w;
                        for kz in 0..k {
                            let oz = iz * stride + kz;
                            if oz < pad || oz - pad >= od {
                                continue;
                            }
                            for ky in 0..k {
                                let oy = iy * stride + ky;
                                if oy < pad || oy - pad >= oh {
                                    continue;
                                }
                                let orow = ((oz - pad) * oh + (oy - pad)) * ow;
                                for kx in 0..k {
                                    let wgt =
                                        kernel[(((ci * c_out + co) * k + kz) * k + ky) * k + kx];
                                    for ix in 0..w {
                                        let ox = ix * stride + kx;
                                        if ox < pad || ox - pad >= ow {
                                            continue;
                                        }
                                        islice[irow + ix] += wgt * up[orow + ox - pad];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });

    // Kernel gradient: ci-slabs in parallel, batch scanned in order.
    let mut kernel_grad = vec![T::ZERO; kernel.len()];
    let slab = c_out * k * k * k;
    kernel_grad
        .par_chunks_mut(slab)
        .enumerate()
        .for_each(|(ci, kg)| {
            for bi in 0..b {
                let ip = input.bc_slice(bi, ci);
                for co in 0..c_out {
                    let up = upstream.bc_slice(bi, co);
                    for iz in 0..d {
                        for iy in 0..h {
                            let irow = (iz * h + iy) * w;
                            for kz in 0..k {
                                let oz = iz * stride + kz;
                                if oz < pad || oz - pad >= od {
                                    continue;
                                }
                                for ky in 0..k {
                                    let oy = iy * stride + ky;
                                    if oy < pad || oy - pad >= oh {
                                        continue;
                                    }
                                    let orow = ((oz - pad) * oh + (oy - pad)) * ow;
                                    for kx in 0..k {
                                        let mut acc = T::ZERO;
                                        for ix in 0..w {
                                            let ox = ix * stride + kx;
                                            if ox < pad || ox - pad >= ow {
                                                continue;
                                            }
                                            acc += ip[irow + ix] * up[orow + ox - pad];
                                        }
                                        kg[((co * k + kz) * k + ky) * k + kx] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });

    ConvGrads {
        input: input_grad,
        kernel: kernel_grad,
        bias: bias_grad,
    }
}

/// Average pooling, kernel 2 stride 2, trailing plane dropped on odd dims.
pub fn avg_pool_forward<T: Scalar>(input: &Tensor5<T>) -> Result<Tensor5<T>> {
    let [b, c, d, h, w] = input.shape();
    if d < 2 || h < 2 || w < 2 {
        return Err(Error::Shape(format!(
            "avg_pool needs every spatial dim >= 2, got {d}x{h}x{w}"
        )));
    }
    let (od, oh, ow) = (d / 2, h / 2, w / 2);
    let mut out = Tensor5::zeros([b, c, od, oh, ow]);
    let eighth = T::from_f64(0.125);
    let osp = od * oh * ow;
    let chunk_items = items_per_task(b * c, osp * 8);
    out.data_mut()
        .par_chunks_mut(chunk_items * osp)
        .enumerate()
        .for_each(|(chunk_idx, chunk)| {
            for (local, slice) in chunk.chunks_mut(osp).enumerate() {
                let bc = chunk_idx * chunk_items + local;
                let ip = input.bc_slice(bc / c, bc % c);
                for oz in 0..od {
                    for oy in 0..oh {
                        let r0 = ((2 * oz) * h + 2 * oy) * w;
                        let r1 = ((2 * oz) * h + 2 * oy + 1) * w;
                        let r2 = ((2 * oz + 1) * h + 2 * oy) * w;
                        let r3 = ((2 * oz + 1) * h + 2 * oy + 1) * w;
                        let orow = (oz * oh + oy) * ow;
                        for ox in 0..ow {
                            let x = 2 * ox;
                            let acc = ip[r0 + x]
                                + ip[r0 + x + 1]
                                + ip[r1 + x]
                                + ip[r1 + x + 1]
                                + ip[r2 + x]
                                + ip[r2 + x + 1]
                                + ip[r3 + x]
                                + ip[r3 + x + 1];
                            slice[orow + ox] = acc * eighth;
                        }
                    }
                }
            }
        });
    Ok(out)
}

pub fn avg_pool_backward<T: Scalar>(input_shape: [usize; 5], upstream: &Tensor5<T>) -> Tensor5<T> {
    let [b, c, d, h, w] = input_shape;
    let [_, _, od, oh, ow] = upstream.shape();
    let mut grad = Tensor5::zeros(input_shape);
    let eighth = T::from_f64(0.125);
    let isp = d * h * w;
    let chunk_items = items_per_task(b * c, isp);
    grad.data_mut()
        .par_chunks_mut(chunk_items * isp)
        .enumerate()
        .for_each(|(chunk_idx, chunk)| {
            for (local, slice) in chunk.chunks_mut(isp).enumerate() {
                let bc = chunk_idx * chunk_items + local;
                let up = upstream.bc_slice(bc / c, bc % c);
                for oz in 0..od {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let g = up[(oz * oh + oy) * ow + ox] * eighth;
                            for dz in 0..2 {
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        slice
                                            [((2 * oz + dz) * h + 2 * oy + dy) * w + 2 * ox + dx] +=
                                            g;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    grad
}

pub fn global_avg_pool_forward<T: Scalar>(input: &Tensor5<T>) -> Tensor5<T> {
    let [b, c, d, h, w] = input.shape();
    let sp = d * h * w;
    let inv = T::from_f64(1.0 / sp as f64);
    let mut out = Tensor5::zeros([b, c, 1, 1, 1]);
    for bi in 0..b {
        for ci in 0..c {
            out.data_mut()[bi * c + ci] = lane_sum(input.bc_slice(bi, ci)) * inv;
        }
    }
    out
}

pub fn global_avg_pool_backward<T: Scalar>(
    input_shape: [usize; 5],
    upstream: &Tensor5<T>,
) -> Tensor5<T> {
    let [b, c, d, h, w] = input_shape;
    let sp = d * h * w;
    let inv = T::from_f64(1.0 / sp as f64);
    let mut grad = Tensor5::zeros(input_shape);
    for bi in 0..b {
        for ci in 0..c {
            let g = upstream.data()[bi * c + ci] * inv;
            grad.bc_slice_mut(bi, ci).fill(g);
        }
    }
    grad
}

const ELEMENTWISE_CHUNK: usize = 1 << 16;

/// Builds the output by mapping input chunks in parallel; one pass, and the
/// first touch of each output page happens on the worker that fills it.
fn elementwise<T: Scalar>(
    shape: [usize; 5],
    a: &[T],
    f: impl Fn(&mut [T], &[T]) + Sync,
) -> Tensor5<T> {
    let mut out = Tensor5::zeros(shape);
    out.data_mut()
        .par_chunks_mut(ELEMENTWISE_CHUNK)
        .zip(a.par_chunks(ELEMENTWISE_CHUNK))
        .for_each(|(o, s)| f(o, s));
    out
}

pub fn leaky_relu_forward<T: Scalar>(input: &Tensor5<T>, alpha: T) -> Tensor5<T> {
    elementwise(input.shape(), input.data(), |o, s| {
        for i in 0..o.len() {
            let x = s[i];
            o[i] = if x < T::ZERO { x * alpha } else { x };
        }
    })
}

pub fn leaky_relu_backward<T: Scalar>(
    input: &Tensor5<T>,
    alpha: T,
    upstream: &Tensor5<T>,
) -> Tensor5<T> {
    let mut grad = upstream.clone();
    grad.data_mut()
        .par_chunks_mut(ELEMENTWISE_CHUNK)
        .zip(input.data().par_chunks(ELEMENTWISE_CHUNK))
        .for_each(|(g, x)| {
            for i in 0..g.len() {
                if x[i] < T::ZERO {
                    g[i] *= alpha;
                }
            }
        });
    grad
}

pub fn sigmoid_forward<T: Scalar>(input: &Tensor5<T>) -> Tensor5<T> {
    elementwise(input.shape(), input.data(), |o, s| {
        for i in 0..o.len() {
            o[i] = T::ONE / (T::ONE + (-s[i]).exp());
        }
    })
}

pub fn sigmoid_backward<T: Scalar>(output: &Tensor5<T>, upstream: &Tensor5<T>) -> Tensor5<T> {
    let mut grad = upstream.clone();
    grad.data_mut()
        .par_chunks_mut(ELEMENTWISE_CHUNK)
        .zip(output.data().par_chunks(ELEMENTWISE_CHUNK))
        .for_each(|(g, y)| {
            for i in 0..g.len() {
                g[i] *= y[i] * (T::ONE - y[i]);
            }
        });
    grad
}

/// a += b, parallel over coarse chunks.
pub fn add_assign<T: Scalar>(a: &mut Tensor5<T>, b: &Tensor5<T>) {
    a.data_mut()
        .par_chunks_mut(ELEMENTWISE_CHUNK)
        .zip(b.data().par_chunks(ELEMENTWISE_CHUNK))
        .for_each(|(x, y)| {
            for i in 0..x.len() {
                x[i] += y[i];
            }
        });
}

/// Affine layer on the flattened feature axis: out = x W^T + b with weight
/// shape (out_features, in_features).
pub fn affine_forward<T: Scalar>(
    input: &Tensor5<T>,
    weight: &[T],
    bias: &[T],
    out_features: usize,
) -> Result<Tensor5<T>> {
    let [b, c, d, h, w] = input.shape();
    let f = c * d * h * w;
    if weight.len() != out_features * f {
        return Err(Error::Shape(format!(
            "affine weight has {} elements, expected {}x{}",
            weight.len(),
            out_features,
            f
        )));
    }
    if bias.len() != out_features {
        return Err(Error::Shape("affine bias length mismatch".into()));
    }
    let mut out = Tensor5::zeros([b, out_features, 1, 1, 1]);
    for bi in 0..b {
        let x = &input.data()[bi * f..(bi + 1) * f];
        let o = &mut out.data_mut()[bi * out_features..(bi + 1) * out_features];
        for (oi, oo) in o.iter_mut().enumerate() {
            let row = &weight[oi * f..(oi + 1) * f];
            let mut acc = bias[oi];
            for i in 0..f {
                acc += row[i] * x[i];
            }
            *oo = acc;
        }
    }
    Ok(out)
}

pub struct AffineGrads<T> {
    pub input: Tensor5<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub fn affine_backward<T: Scalar>(
    input: &Tensor5<T>,
    weight: &[T],
    out_features: usize,
    upstream: &Tensor5<T>,
) -> AffineGrads<T> {
    let shape = input.shape();
    let [b, c, d, h, w] = shape;
    let f = c * d * h * w;
    let mut input_grad = Tensor5::zeros(shape);
    let mut weight_grad = vec![T::ZERO; weight.len()];
    let mut bias_grad = vec![T::ZERO; out_features];

    for bi in 0..b {
        let x = &input.data()[bi * f..(bi + 1) * f];
        let up = &upstream.data()[bi * out_features..(bi + 1) * out_features];
        let gx = &mut input_grad.data_mut()[bi * f..(bi + 1) * f];
        for oi in 0..out_features {
            let g = up[oi];
            bias_grad[oi] += g;
            let row = &weight[oi * f..(oi + 1) * f];
            let wrow = &mut weight_grad[oi * f..(oi + 1) * f];
            for i in 0..f {
                gx[i] += g * row[i];
                wrow[i] += g * x[i];
            }
        }
    }

    AffineGrads {
        input: input_grad,
        weight: weight_grad,
        bias: bias_grad,
    }
}
