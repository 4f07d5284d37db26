use crate::error::{Error, Result};
use crate::tensor::tape::{GradSink, Op};
use crate::tensor::{Real, Tape, Tensor, Var};

/// Stride and zero padding of a 2-D cross-correlation.
///
/// Padding is given per axis as `(before, after)`, so stride-2 windows can tile an
/// even extent exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: (usize, usize),
    pub pad_h: (usize, usize),
    pub pad_w: (usize, usize),
}

impl ConvGeometry {
    /// Equal stride and symmetric padding on both axes.
    pub fn new(stride: usize, pad: usize) -> Self {
        ConvGeometry {
            stride: (stride, stride),
            pad_h: (pad, pad),
            pad_w: (pad, pad),
        }
    }

    /// Padding that yields `ceil(extent / stride)` outputs, extra padding going after.
    pub fn same(input: (usize, usize), kernel: (usize, usize), stride: usize) -> Self {
        let axis = |n: usize, k: usize| {
            let out = n.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(n);
            (total / 2, total - total / 2)
        };
        ConvGeometry {
            stride: (stride, stride),
            pad_h: axis(input.0, kernel.0),
            pad_w: axis(input.1, kernel.1),
        }
    }

    /// Output extent for one axis, or `None` when the kernel exceeds the padded input.
    /// Trailing positions no window reaches are ignored.
    pub fn output_extent(input: usize, kernel: usize, stride: usize, pad: (usize, usize)) -> Option<usize> {
        let span = (input + pad.0 + pad.1).checked_sub(kernel)?;
        (stride > 0).then(|| span / stride + 1)
    }
}

/// Statistics used by batch normalisation.
pub enum NormMode<'a, T> {
    /// Normalise with the statistics of the current batch.
    Batch,
    /// Normalise with stored running statistics.
    Running { mean: &'a [T], var: &'a [T] },
}

struct ConvDims {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

impl ConvDims {
    fn k(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn spatial_out(&self) -> usize {
        self.ho * self.wo
    }

    fn cols(&self) -> usize {
        self.n * self.spatial_out()
    }
}

fn im2col<T: Real>(x: &[T], d: &ConvDims, geom: ConvGeometry) -> Vec<T> {
    let ncols = d.cols();
    let mut cols = vec![T::zero(); d.k() * ncols];
    let (sh, sw) = geom.stride;
    let (ph, pw) = (geom.pad_h.0, geom.pad_w.0);
    for ci in 0..d.c_in {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (ci * d.kh + ki) * d.kw + kj;
                let dst_row = &mut cols[row * ncols..(row + 1) * ncols];
                for n in 0..d.n {
                    let plane = &x[(n * d.c_in + ci) * d.h * d.w..][..d.h * d.w];
                    for oh in 0..d.ho {
                        let ih = (oh * sh + ki) as isize - ph as isize;
                        if ih < 0 || ih as usize >= d.h {
                            continue;
                        }
                        let src = &plane[ih as usize * d.w..][..d.w];
                        let dst = &mut dst_row[n * d.spatial_out() + oh * d.wo..][..d.wo];
                        for (ow, slot) in dst.iter_mut().enumerate() {
                            let iw = (ow * sw + kj) as isize - pw as isize;
                            if iw >= 0 && (iw as usize) < d.w {
                                *slot = src[iw as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], d: &ConvDims, geom: ConvGeometry) -> Vec<T> {
    let ncols = d.cols();
    let mut x = vec![T::zero(); d.n * d.c_in * d.h * d.w];
    let (sh, sw) = geom.stride;
    let (ph, pw) = (geom.pad_h.0, geom.pad_w.0);
    for ci in 0..d.c_in {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (ci * d.kh + ki) * d.kw + kj;
                let src_row = &cols[row * ncols..(row + 1) * ncols];
                for n in 0..d.n {
                    let plane = &mut x[(n * d.c_in + ci) * d.h * d.w..][..d.h * d.w];
                    for oh in 0..d.ho {
                        let ih = (oh * sh + ki) as isize - ph as isize;
                        if ih < 0 || ih as usize >= d.h {
                            continue;
                        }
                        let dst = &mut plane[ih as usize * d.w..][..d.w];
                        let src = &src_row[n * d.spatial_out() + oh * d.wo..][..d.wo];
                        for (ow, &v) in src.iter().enumerate() {
                            let iw = (ow * sw + kj) as isize - pw as isize;
                            if iw >= 0 && (iw as usize) < d.w {
                                dst[iw as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// `[C_out, N·S]` ⇄ `[N, C_out, S]`.
fn to_batch_major<T: Real>(src: &[T], c: usize, n: usize, s: usize) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    for ci in 0..c {
        for ni in 0..n {
            out[(ni * c + ci) * s..][..s].copy_from_slice(&src[ci * n * s + ni * s..][..s]);
        }
    }
    out
}

fn to_channel_major<T: Real>(src: &[T], c: usize, n: usize, s: usize) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    for ni in 0..n {
        for ci in 0..c {
            out[ci * n * s + ni * s..][..s].copy_from_slice(&src[(ni * c + ci) * s..][..s]);
        }
    }
    out
}

fn conv_dims(x: &[usize], w: &[usize], geom: ConvGeometry) -> Result<ConvDims> {
    if x.len() != 4 || w.len() != 4 {
        return Err(Error::dim(format!("conv2d expects rank-4 input and weight, got {:?} and {:?}", x, w)));
    }
    if x[1] != w[1] {
        return Err(Error::dim(format!("conv2d input has {} channels, weight expects {}", x[1], w[1])));
    }
    let ho = ConvGeometry::output_extent(x[2], w[2], geom.stride.0, geom.pad_h);
    let wo = ConvGeometry::output_extent(x[3], w[3], geom.stride.1, geom.pad_w);
    let (Some(ho), Some(wo)) = (ho, wo) else {
        return Err(Error::dim(format!(
            "conv2d kernel exceeds padded input: input {:?}, kernel {:?}, {:?}",
            x, w, geom
        )));
    };
    Ok(ConvDims {
        n: x[0],
        c_in: x[1],
        h: x[2],
        w: x[3],
        c_out: w[0],
        kh: w[2],
        kw: w[3],
        ho,
        wo,
    })
}

fn check_rank4(shape: &[usize], what: &str) -> Result<()> {
    if shape.len() == 4 {
        Ok(())
    } else {
        Err(Error::dim(format!("{} expects N×C×H×W, got {:?}", what, shape)))
    }
}

impl<T: Real> Tape<T> {
    /// Cross-correlation of `x: N×C_in×H×W` with `weight: C_out×C_in×kH×kW`, plus optional bias.
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let d = conv_dims(self.shape(x), self.shape(weight), geom)?;
        if let Some(b) = bias {
            if self.shape(b) != [d.c_out] {
                return Err(Error::dim(format!("conv2d bias {:?} for {} filters", self.shape(b), d.c_out)));
            }
        }
        let cols = im2col(self.value(x).data(), &d, geom);
        let (k, ncols) = (d.k(), d.cols());
        let mut prod = vec![T::zero(); d.c_out * ncols];
        T::gemm(
            d.c_out,
            k,
            ncols,
            (self.value(weight).data(), k as isize, 1),
            (&cols, ncols as isize, 1),
            (&mut prod, ncols as isize, 1),
            false,
        );
        let s = d.spatial_out();
        let mut data = to_batch_major(&prod, d.c_out, d.n, s);
        if let Some(b) = bias {
            let bv = self.value(b).data();
            for (i, chunk) in data.chunks_mut(s).enumerate() {
                let bias = bv[i % d.c_out];
                chunk.iter_mut().for_each(|v| *v += bias);
            }
        }
        let value = Tensor {
            shape: vec![d.n, d.c_out, d.ho, d.wo],
            data,
        };
        Ok(self.push(
            value,
            Op::Conv2d {
                x,
                weight,
                bias,
                geom,
                cols,
            },
        ))
    }

    /// Per-channel normalisation of `x: N×C×H×W` followed by `gamma·x̂ + beta`.
    ///
    /// In batch mode returns the batch mean and the unbiased batch variance so the
    /// caller can update its running statistics.
    #[allow(clippy::type_complexity)]
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: NormMode<'_, T>,
        eps: f64,
    ) -> Result<(Var, Option<(Vec<T>, Vec<T>)>)> {
        let xv = self.value(x);
        check_rank4(xv.shape(), "batch_norm")?;
        let (n, c) = (xv.shape()[0], xv.shape()[1]);
        let s = xv.shape()[2] * xv.shape()[3];
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::dim(format!(
                "batch_norm affine shapes {:?}/{:?} for {} channels",
                self.shape(gamma),
                self.shape(beta),
                c
            )));
        }
        let src = xv.data();
        let count = n * s;
        let (mean, var, stats) = match mode {
            NormMode::Batch => {
                if n < 2 {
                    return Err(Error::contract("batch statistics need a batch of at least 2"));
                }
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ci in 0..c {
                    let mut total = T::zero();
                    for ni in 0..n {
                        total += src[(ni * c + ci) * s..][..s].iter().copied().sum::<T>();
                    }
                    let m = total / T::of(count as f64);
                    let mut sq = T::zero();
                    for ni in 0..n {
                        for &v in &src[(ni * c + ci) * s..][..s] {
                            sq += (v - m) * (v - m);
                        }
                    }
                    mean[ci] = m;
                    var[ci] = sq / T::of(count as f64);
                }
                let unbiased = var
                    .iter()
                    .map(|&v| v * T::of(count as f64 / (count as f64 - 1.0)))
                    .collect();
                (mean.clone(), var, Some((mean, unbiased)))
            }
            NormMode::Running { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(Error::dim("running statistics length differs from channel count"));
                }
                (mean.to_vec(), var.to_vec(), None)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::of(eps)).sqrt()).collect();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); src.len()];
        let mut data = vec![T::zero(); src.len()];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * s;
                for i in base..base + s {
                    let h = (src[i] - mean[ci]) * inv_std[ci];
                    xhat[i] = h;
                    data[i] = g[ci] * h + b[ci];
                }
            }
        }
        let value = Tensor {
            shape: xv.shape().to_vec(),
            data,
        };
        let batch_stats = stats.is_some();
        let y = self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
        );
        Ok((y, stats))
    }

    /// 2×2 max pooling with stride 2. Ties go to the first element in row-major order.
    pub fn max_pool2x2(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        check_rank4(xv.shape(), "max_pool2x2")?;
        let [n, c, h, w] = [xv.shape()[0], xv.shape()[1], xv.shape()[2], xv.shape()[3]];
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::dim(format!("max_pool2x2 needs even extents, got {}×{}", h, w)));
        }
        let (ho, wo) = (h / 2, w / 2);
        let src = xv.data();
        let mut data = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut best = base + 2 * oh * w + 2 * ow;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oh + di) * w + 2 * ow + dj;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    data.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor {
            shape: vec![n, c, ho, wo],
            data,
        };
        Ok(self.push(value, Op::MaxPool { x, argmax }))
    }

    /// Spatial mean: `N×C×H×W → N×C`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        check_rank4(xv.shape(), "global_avg_pool")?;
        let (n, c) = (xv.shape()[0], xv.shape()[1]);
        let s = xv.shape()[2] * xv.shape()[3];
        let inv = T::of(1.0 / s as f64);
        let data = xv
            .data()
            .chunks(s)
            .map(|plane| plane.iter().copied().sum::<T>() * inv)
            .collect();
        Ok(self.push(Tensor { shape: vec![n, c], data }, Op::GlobalAvgPool { x }))
    }

    /// 3×3 average pooling, stride 1, zero padding 1; always divides by 9.
    pub fn avg_pool3x3(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        check_rank4(xv.shape(), "avg_pool3x3")?;
        let (h, w) = (xv.shape()[2], xv.shape()[3]);
        let ninth = T::of(1.0 / 9.0);
        let src = xv.data();
        let mut data = vec![T::zero(); src.len()];
        for (plane_out, plane) in data.chunks_mut(h * w).zip(src.chunks(h * w)) {
            for i in 0..h {
                for j in 0..w {
                    let mut total = T::zero();
                    for ii in i.saturating_sub(1)..(i + 2).min(h) {
                        for jj in j.saturating_sub(1)..(j + 2).min(w) {
                            total += plane[ii * w + jj];
                        }
                    }
                    plane_out[i * w + j] = total * ninth;
                }
            }
        }
        let value = Tensor {
            shape: xv.shape().to_vec(),
            data,
        };
        Ok(self.push(value, Op::AvgPool3 { x }))
    }

    /// 1-D zero-padded cross-correlation across the channel axis of `x: N×C`
    /// with an odd-length kernel `weight: [k]`.
    pub fn channel_conv1d(&mut self, x: Var, weight: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(weight));
        if xv.rank() != 2 || wv.rank() != 1 || wv.len() % 2 == 0 {
            return Err(Error::dim(format!(
                "channel_conv1d expects N×C input and odd kernel, got {:?} and {:?}",
                xv.shape(),
                wv.shape()
            )));
        }
        let c = xv.shape()[1];
        let k = wv.len();
        let half = (k / 2) as isize;
        let (src, ker) = (xv.data(), wv.data());
        let mut data = vec![T::zero(); src.len()];
        for (row_out, row) in data.chunks_mut(c).zip(src.chunks(c)) {
            for (ci, out) in row_out.iter_mut().enumerate() {
                let mut acc = T::zero();
                for (j, &kv) in ker.iter().enumerate() {
                    let src_c = ci as isize + j as isize - half;
                    if src_c >= 0 && (src_c as usize) < c {
                        acc += kv * row[src_c as usize];
                    }
                }
                *out = acc;
            }
        }
        let value = Tensor {
            shape: xv.shape().to_vec(),
            data,
        };
        Ok(self.push(value, Op::ChannelConv1d { x, weight }))
    }
}

pub(super) fn conv2d_backward<T: Real>(
    x: Var,
    weight: Var,
    bias: Option<Var>,
    geom: ConvGeometry,
    cols: &[T],
    g: &[T],
    sink: &mut GradSink<T>,
) {
    let d = conv_dims(sink.value(x).shape(), sink.value(weight).shape(), geom)
        .expect("shapes validated in forward");
    let (k, ncols, s) = (d.k(), d.cols(), d.spatial_out());
    let gperm = to_channel_major(g, d.c_out, d.n, s);
    if sink.wants(weight) {
        let mut dw = vec![T::zero(); d.c_out * k];
        T::gemm(
            d.c_out,
            ncols,
            k,
            (&gperm, ncols as isize, 1),
            (cols, 1, ncols as isize),
            (&mut dw, k as isize, 1),
            false,
        );
        sink.add(weight, dw);
    }
    if let Some(b) = bias {
        if sink.wants(b) {
            let db = gperm.chunks(ncols).map(|row| row.iter().copied().sum()).collect();
            sink.add(b, db);
        }
    }
    if sink.wants(x) {
        let mut dcols = vec![T::zero(); k * ncols];
        T::gemm(
            k,
            d.c_out,
            ncols,
            (sink.value(weight).data(), 1, k as isize),
            (&gperm, ncols as isize, 1),
            (&mut dcols, ncols as isize, 1),
            false,
        );
        sink.add(x, col2im(&dcols, &d, geom));
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn batchnorm_backward<T: Real>(
    x: Var,
    gamma: Var,
    beta: Var,
    xhat: &[T],
    inv_std: &[T],
    batch_stats: bool,
    g: &[T],
    sink: &mut GradSink<T>,
) {
    let shape = sink.value(x).shape();
    let (n, c) = (shape[0], shape[1]);
    let s = shape[2] * shape[3];
    let count = T::of((n * s) as f64);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * s;
            for i in base..base + s {
                dgamma[ci] += g[i] * xhat[i];
                dbeta[ci] += g[i];
            }
        }
    }
    if sink.wants(x) {
        let gam = sink.value(gamma).data();
        let mut dx = vec![T::zero(); g.len()];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * s;
                for i in base..base + s {
                    dx[i] = if batch_stats {
                        // dx = γ/σ · (g − mean(g) − x̂·mean(g·x̂))
                        gam[ci] * inv_std[ci] * (g[i] - dbeta[ci] / count - xhat[i] * dgamma[ci] / count)
                    } else {
                        gam[ci] * inv_std[ci] * g[i]
                    };
                }
            }
        }
        sink.add(x, dx);
    }
    sink.add(gamma, dgamma);
    sink.add(beta, dbeta);
}

pub(super) fn global_avg_pool_backward<T: Real>(x: Var, g: &[T], sink: &mut GradSink<T>) {
    let shape = sink.value(x).shape();
    let s = shape[2] * shape[3];
    let inv = T::of(1.0 / s as f64);
    let mut dx = Vec::with_capacity(g.len() * s);
    for &gi in g {
        dx.extend(std::iter::repeat_n(gi * inv, s));
    }
    sink.add(x, dx);
}

pub(super) fn avg_pool3_backward<T: Real>(x: Var, g: &[T], sink: &mut GradSink<T>) {
    let shape = sink.value(x).shape();
    let (h, w) = (shape[2], shape[3]);
    let ninth = T::of(1.0 / 9.0);
    let mut dx = vec![T::zero(); g.len()];
    for (plane_dx, plane_g) in dx.chunks_mut(h * w).zip(g.chunks(h * w)) {
        for i in 0..h {
            for j in 0..w {
                let gi = plane_g[i * w + j] * ninth;
                for ii in i.saturating_sub(1)..(i + 2).min(h) {
                    for jj in j.saturating_sub(1)..(j + 2).min(w) {
                        plane_dx[ii * w + jj] += gi;
                    }
                }
            }
        }
    }
    sink.add(x, dx);
}

pub(super) fn channel_conv1d_backward<T: Real>(x: Var, weight: Var, g: &[T], sink: &mut GradSink<T>) {
    let (xv, wv) = (sink.value(x), sink.value(weight));
    let c = xv.shape()[1];
    let k = wv.len();
    let half = (k / 2) as isize;
    let (src, ker) = (xv.data(), wv.data());
    let mut dx = vec![T::zero(); src.len()];
    let mut dw = vec![T::zero(); k];
    for (n, grow) in g.chunks(c).enumerate() {
        for (ci, &gv) in grow.iter().enumerate() {
            for j in 0..k {
                let src_c = ci as isize + j as isize - half;
                if src_c >= 0 && (src_c as usize) < c {
                    let idx = n * c + src_c as usize;
                    dx[idx] += gv * ker[j];
                    dw[j] += gv * src[idx];
                }
            }
        }
    }
    sink.add(x, dx);
    sink.add(weight, dw);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..18).map(|v| v as f64).collect();
        let x = tape.constant(Tensor::new(vec![1, 2, 3, 3], data.clone()).unwrap());
        let w = tape.constant(Tensor::from_f64([2, 2, 1, 1], &[1., 0., 0., 1.]).unwrap());
        let y = tape.conv2d(x, w, None, ConvGeometry::new(1, 0)).unwrap();
        assert_eq!(tape.value(y).data(), &data[..]);
    }

    #[test]
    fn valid_all_ones_kernel_sums() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_f64([1, 1, 2, 2], &[1., 2., 3., 4.]).unwrap());
        let w = tape.constant(Tensor::full([1, 1, 2, 2], 1.0f64).unwrap());
        let y = tape.conv2d(x, w, None, ConvGeometry::new(1, 0)).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 1, 1, 1]);
        assert_eq!(tape.value(y).data(), &[10.]);
    }

    #[test]
    fn uneven_extent_floors_and_oversized_kernel_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros([1, 1, 4, 4]).unwrap());
        let w = tape.constant(Tensor::zeros([1, 1, 3, 3]).unwrap());
        let y = tape.conv2d(x, w, None, ConvGeometry::new(2, 0)).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 1, 1]);
        let big = tape.constant(Tensor::zeros([1, 1, 5, 5]).unwrap());
        assert!(matches!(
            tape.conv2d(x, big, None, ConvGeometry::new(1, 0)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn max_pool_picks_window_max_and_first_tie() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_f64([1, 1, 2, 2], &[1., 2., 3., 4.]).unwrap(), true);
        let y = tape.max_pool2x2(x).unwrap();
        assert_eq!(tape.value(y).data(), &[4.]);

        let t = tape.leaf(Tensor::from_f64([1, 1, 2, 2], &[5., 5., 5., 5.]).unwrap(), true);
        let p = tape.max_pool2x2(t).unwrap();
        let root = tape.sum(p);
        tape.backward(root).unwrap();
        assert_eq!(tape.grad(t).unwrap().data(), &[1., 0., 0., 0.]);
    }

    #[test]
    fn max_pool_rejects_odd_extent() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros([1, 1, 3, 2]).unwrap());
        assert!(tape.max_pool2x2(x).is_err());
    }

    #[test]
    fn global_average_of_constant() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full([2, 3, 4, 4], 0.75f64).unwrap());
        let y = tape.global_avg_pool(x).unwrap();
        assert_eq!(tape.shape(y), &[2, 3]);
        assert!(tape.value(y).data().iter().all(|&v| (v - 0.75).abs() < 1e-15));
    }

    #[test]
    fn batch_norm_train_needs_two_samples() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros([1, 2, 2, 2]).unwrap());
        let g = tape.constant(Tensor::full([2], 1.0).unwrap());
        let b = tape.constant(Tensor::zeros([2]).unwrap());
        assert!(matches!(
            tape.batch_norm(x, g, b, NormMode::Batch, 1e-5),
            Err(Error::Contract(_))
        ));
        assert!(tape
            .batch_norm(x, g, b, NormMode::Running { mean: &[0.0; 2], var: &[1.0; 2] }, 1e-5)
            .is_ok());
    }
}
