//! Anisotropic 3D convolution (cross-correlation, zero padding).
//!
//! Kernels work row by row: for every output row all taps that touch it are
//! applied as contiguous `axpy` updates, so the row being accumulated stays
//! hot while input rows stream past. Strided x axes are handled by splitting
//! input rows into `stride` phases first, which turns every tap into a
//! contiguous slice again.
//!
//! Work is split over whole output planes (forward), input planes (input
//! gradient) or kernel slices (weight gradient). The accumulation order for
//! any single output value is fixed, so results do not depend on the number
//! of worker threads.

use rayon::prelude::*;

use crate::autodiff::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Geometry of one convolution layer. Extents are given as `(x, y, z)`
/// triples; the weight tensor is laid out `(Cout, Cin, kz, ky, kx)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub has_bias: bool,
}

impl ConvSpec {
    /// Stride 1, no padding, no bias.
    pub fn new(in_channels: usize, out_channels: usize, kernel: [usize; 3]) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: [1, 1, 1],
            padding: [0, 0, 0],
            has_bias: false,
        }
    }

    pub fn stride(mut self, stride: [usize; 3]) -> Self {
        self.stride = stride;
        self
    }

    pub fn padding(mut self, padding: [usize; 3]) -> Self {
        self.padding = padding;
        self
    }

    /// Padding `(k - 1) / 2` on every axis; shape preserving for odd kernels at stride 1.
    pub fn same_padding(mut self) -> Self {
        self.padding = self.kernel.map(|k| (k - 1) / 2);
        self
    }

    pub fn bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn weight_shape(&self) -> [usize; 5] {
        let [kx, ky, kz] = self.kernel;
        [self.out_channels, self.in_channels, kz, ky, kx]
    }

    pub fn param_count(&self) -> usize {
        let [kx, ky, kz] = self.kernel;
        kx * ky * kz * self.in_channels * self.out_channels + if self.has_bias { self.out_channels } else { 0 }
    }

    /// Output `(z, y, x)` extents for input `(z, y, x)` extents.
    pub fn output_extents(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            // spec fields are (x, y, z); extents are (z, y, x)
            let s = 2 - a;
            let (k, st, p, n) = (self.kernel[s], self.stride[s], self.padding[s], input[a]);
            if k == 0 || st == 0 {
                return Err(Error::Geometry(format!(
                    "kernel and stride must be positive, got kernel {:?} stride {:?}",
                    self.kernel, self.stride
                )));
            }
            if n + 2 * p < k {
                return Err(Error::Geometry(format!(
                    "padded input extent {} smaller than kernel {k} on axis {}",
                    n + 2 * p,
                    ["z", "y", "x"][a]
                )));
            }
            out[a] = (n + 2 * p - k) / st + 1;
        }
        Ok(out)
    }
}

/// Resolved extents for one call, axes ordered `(z, y, x)`.
#[derive(Debug, Clone)]
pub(crate) struct Geometry {
    n: usize,
    cin: usize,
    cout: usize,
    inp: [usize; 3],
    out: [usize; 3],
    k: [usize; 3],
    s: [usize; 3],
    p: [usize; 3],
    /// Output index range `[lo, hi)` for each tap along each axis.
    ranges: [Vec<(usize, usize)>; 3],
}

impl Geometry {
    pub(crate) fn new(spec: &ConvSpec, x: [usize; 5]) -> Result<Self> {
        let [n, cin, z, y, xx] = x;
        if cin != spec.in_channels {
            return Err(Error::ChannelMismatch {
                expected: spec.in_channels,
                got: cin,
            });
        }
        let out = spec.output_extents([z, y, xx])?;
        let rev = |v: [usize; 3]| [v[2], v[1], v[0]];
        let mut g = Self {
            n,
            cin,
            cout: spec.out_channels,
            inp: [z, y, xx],
            out,
            k: rev(spec.kernel),
            s: rev(spec.stride),
            p: rev(spec.padding),
            ranges: Default::default(),
        };
        g.merge_trivial_axes();
        g.ranges = [0, 1, 2].map(|a| {
            (0..g.k[a])
                .map(|k| tap_range(g.inp[a], g.out[a], k, g.s[a], g.p[a]))
                .collect()
        });
        Ok(g)
    }

    /// Folds y (and then z) into x while the inner axes are pointwise, so
    /// 1x1x1 and 1x1xk kernels run over whole slices instead of short rows.
    fn merge_trivial_axes(&mut self) {
        let trivial = |g: &Self, a: usize| g.k[a] == 1 && g.s[a] == 1 && g.p[a] == 0;
        for outer in [1, 0] {
            if (outer + 1..3).all(|a| trivial(self, a)) && trivial(self, outer) {
                self.inp[2] *= self.inp[outer];
                self.out[2] *= self.out[outer];
                self.inp[outer] = 1;
                self.out[outer] = 1;
            } else {
                break;
            }
        }
    }

    fn out_plane(&self) -> usize {
        self.out.iter().product()
    }

    fn taps(&self) -> usize {
        self.k.iter().product()
    }

    /// Row length of the phase-split input layout.
    fn phased_len(&self) -> usize {
        self.inp[2].div_ceil(self.s[2])
    }

    /// Offset into a phased row for tap `kx`: `(phase, shift)` such that
    /// `o * s + kx - p == (o + shift) * s + phase`.
    fn phase_of(&self, kx: usize) -> (usize, isize) {
        let q = kx as isize - self.p[2] as isize;
        let s = self.s[2] as isize;
        let r = q.rem_euclid(s);
        (r as usize, (q - r) / s)
    }
}

/// Valid output indices `o` with `0 <= o * s + k - p < n`.
fn tap_range(n: usize, m: usize, k: usize, s: usize, p: usize) -> (usize, usize) {
    let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
    let top = n as isize - 1 + p as isize - k as isize;
    if top < 0 {
        return (0, 0);
    }
    let hi = (top as usize / s + 1).min(m);
    (lo.min(hi), hi)
}

#[inline(always)]
fn axpy<T: Element>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with a fixed 16-lane accumulation order.
#[inline(always)]
fn dot<T: Element>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 16];
    let ca = a.chunks_exact(16);
    let cb = b.chunks_exact(16);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..16 {
            acc[i] += x[i] * y[i];
        }
    }
    for (i, (&x, &y)) in ra.iter().zip(rb).enumerate() {
        acc[i] += x * y;
    }
    let mut w = 16;
    while w > 1 {
        w /= 2;
        for i in 0..w {
            acc[i] += acc[i + w];
        }
    }
    acc[0]
}

/// Reorders each x row into `s` contiguous phases of length `ceil(X / s)`.
fn phase_split<T: Element>(data: &[T], row: usize, s: usize) -> Vec<T> {
    let xp = row.div_ceil(s);
    let rows = data.len() / row;
    let mut out = vec![T::zero(); rows * s * xp];
    out.par_chunks_mut(s * xp)
        .zip(data.par_chunks(row))
        .for_each(|(dst, src)| {
            for (i, &v) in src.iter().enumerate() {
                dst[(i % s) * xp + i / s] = v;
            }
        });
    out
}

fn phase_merge<T: Element>(phased: &[T], row: usize, s: usize, out: &mut [T]) {
    let xp = row.div_ceil(s);
    out.par_chunks_mut(row)
        .zip(phased.par_chunks(s * xp))
        .for_each(|(dst, src)| {
            for (i, v) in dst.iter_mut().enumerate() {
                *v = src[(i % s) * xp + i / s];
            }
        });
}

/// Input rows as seen by the kernels: either the raw tensor or its
/// phase-split copy, with the stride between consecutive rows.
struct Rows<'a, T: Clone> {
    data: std::borrow::Cow<'a, [T]>,
    stride: usize,
}

fn input_rows<'a, T: Element>(g: &Geometry, input: &'a [T]) -> Rows<'a, T> {
    if g.s[2] == 1 {
        Rows {
            data: std::borrow::Cow::Borrowed(input),
            stride: g.inp[2],
        }
    } else {
        Rows {
            data: std::borrow::Cow::Owned(phase_split(input, g.inp[2], g.s[2])),
            stride: g.s[2] * g.phased_len(),
        }
    }
}

/// Slice of a (possibly phased) input row for tap `kx` over outputs `[lo, hi)`.
#[inline(always)]
fn tap_slice(g: &Geometry, kx: usize, lo: usize, hi: usize) -> (usize, usize) {
    if g.s[2] == 1 {
        let start = lo + kx - g.p[2];
        (start, start + hi - lo)
    } else {
        let (phase, shift) = g.phase_of(kx);
        let start = (phase * g.phased_len()) as isize + lo as isize + shift;
        (start as usize, start as usize + hi - lo)
    }
}

pub(crate) fn forward<T: Element>(g: &Geometry, input: &[T], weight: &[T], bias: Option<&[T]>, out: &mut [T]) {
    let rows = input_rows(g, input);
    let rows_per_in_plane = g.inp[0] * g.inp[1];
    let in_plane = rows_per_in_plane * rows.stride;
    let [oz_n, oy_n, ox_n] = g.out;
    let taps = g.taps();
    let [_, ky_n, kx_n] = g.k;

    out.par_chunks_mut(g.out_plane()).enumerate().for_each(|(idx, oplane)| {
        let (n, co) = (idx / g.cout, idx % g.cout);
        oplane.fill(bias.map_or(T::zero(), |b| b[co]));
        let base = &rows.data[n * g.cin * in_plane..][..g.cin * in_plane];
        let wco = &weight[co * g.cin * taps..][..g.cin * taps];
        for oz in 0..oz_n {
            for oy in 0..oy_n {
                let orow = &mut oplane[(oz * oy_n + oy) * ox_n..][..ox_n];
                for (kz, &(zlo, zhi)) in g.ranges[0].iter().enumerate() {
                    if oz < zlo || oz >= zhi {
                        continue;
                    }
                    let iz = oz * g.s[0] + kz - g.p[0];
                    for (ky, &(ylo, yhi)) in g.ranges[1].iter().enumerate() {
                        if oy < ylo || oy >= yhi {
                            continue;
                        }
                        let iy = oy * g.s[1] + ky - g.p[1];
                        let row_off = (iz * g.inp[1] + iy) * rows.stride;
                        for ci in 0..g.cin {
                            let irow = &base[ci * in_plane + row_off..][..rows.stride];
                            let wk = &wco[ci * taps + (kz * ky_n + ky) * kx_n..][..kx_n];
                            for (kx, &(lo, hi)) in g.ranges[2].iter().enumerate() {
                                if lo >= hi {
                                    continue;
                                }
                                let (a, b) = tap_slice(g, kx, lo, hi);
                                axpy(wk[kx], &irow[a..b], &mut orow[lo..hi]);
                            }
                        }
                    }
                }
            }
        }
    });
}

pub(crate) fn backward_input<T: Element>(g: &Geometry, gout: &[T], weight: &[T], gin: &mut [T]) {
    let phased = g.s[2] > 1;
    let stride = if phased { g.s[2] * g.phased_len() } else { g.inp[2] };
    let in_plane = g.inp[0] * g.inp[1] * stride;
    if phased {
        let mut buf = vec![T::zero(); g.n * g.cin * in_plane];
        scatter_input_grad(g, gout, weight, &mut buf, stride);
        phase_merge(&buf, g.inp[2], g.s[2], gin);
    } else {
        scatter_input_grad(g, gout, weight, gin, stride);
    }
}

fn scatter_input_grad<T: Element>(g: &Geometry, gout: &[T], weight: &[T], buf: &mut [T], stride: usize) {
    let in_plane = g.inp[0] * g.inp[1] * stride;
    let [oz_n, oy_n, ox_n] = g.out;
    let out_plane = g.out_plane();
    let taps = g.taps();
    let [_, ky_n, kx_n] = g.k;
    buf.par_chunks_mut(in_plane).enumerate().for_each(|(idx, iplane)| {
        let (n, ci) = (idx / g.cin, idx % g.cin);
        for oz in 0..oz_n {
            for oy in 0..oy_n {
                for co in 0..g.cout {
                    let grow = &gout[(n * g.cout + co) * out_plane + (oz * oy_n + oy) * ox_n..][..ox_n];
                    let wk = &weight[(co * g.cin + ci) * taps..][..taps];
                    for (kz, &(zlo, zhi)) in g.ranges[0].iter().enumerate() {
                        if oz < zlo || oz >= zhi {
                            continue;
                        }
                        let iz = oz * g.s[0] + kz - g.p[0];
                        for (ky, &(ylo, yhi)) in g.ranges[1].iter().enumerate() {
                            if oy < ylo || oy >= yhi {
                                continue;
                            }
                            let iy = oy * g.s[1] + ky - g.p[1];
                            let irow = &mut iplane[(iz * g.inp[1] + iy) * stride..][..stride];
                            for (kx, &(lo, hi)) in g.ranges[2].iter().enumerate() {
                                if lo >= hi {
                                    continue;
                                }
                                let (a, b) = tap_slice(g, kx, lo, hi);
                                let w = wk[(kz * ky_n + ky) * kx_n + kx];
                                axpy(w, &grow[lo..hi], &mut irow[a..b]);
                            }
                        }
                    }
                }
            }
        }
    });
}

pub(crate) fn backward_weight<T: Element>(g: &Geometry, gout: &[T], input: &[T], gw: &mut [T]) {
    let rows = input_rows(g, input);
    let in_plane = g.inp[0] * g.inp[1] * rows.stride;
    let [oz_n, oy_n, ox_n] = g.out;
    let out_plane = g.out_plane();
    let taps = g.taps();
    let [_, ky_n, kx_n] = g.k;

    gw.par_chunks_mut(taps).enumerate().for_each(|(idx, wk)| {
        let (co, ci) = (idx / g.cin, idx % g.cin);
        wk.fill(T::zero());
        for n in 0..g.n {
            let gplane = &gout[(n * g.cout + co) * out_plane..][..out_plane];
            let iplane = &rows.data[(n * g.cin + ci) * in_plane..][..in_plane];
            for oz in 0..oz_n {
                for oy in 0..oy_n {
                    let grow = &gplane[(oz * oy_n + oy) * ox_n..][..ox_n];
                    for (kz, &(zlo, zhi)) in g.ranges[0].iter().enumerate() {
                        if oz < zlo || oz >= zhi {
                            continue;
                        }
                        let iz = oz * g.s[0] + kz - g.p[0];
                        for (ky, &(ylo, yhi)) in g.ranges[1].iter().enumerate() {
                            if oy < ylo || oy >= yhi {
                                continue;
                            }
                            let iy = oy * g.s[1] + ky - g.p[1];
                            let irow = &iplane[(iz * g.inp[1] + iy) * rows.stride..][..rows.stride];
                            for (kx, &(lo, hi)) in g.ranges[2].iter().enumerate() {
                                if lo >= hi {
                                    continue;
                                }
                                let (a, b) = tap_slice(g, kx, lo, hi);
                                wk[(kz * ky_n + ky) * kx_n + kx] += dot(&grow[lo..hi], &irow[a..b]);
                            }
                        }
                    }
                }
            }
        }
    });
}

pub(crate) fn backward_bias<T: Element>(g: &Geometry, gout: &[T]) -> Vec<T> {
    let out_plane = g.out_plane();
    (0..g.cout)
        .into_par_iter()
        .map(|co| {
            let mut acc = T::zero();
            for n in 0..g.n {
                acc += crate::ops::reduce::pairwise_sum(&gout[(n * g.cout + co) * out_plane..][..out_plane]);
            }
            acc
        })
        .collect()
}

impl<T: Element> Tape<T> {
    /// 3D cross-correlation of `x: (N, Cin, Z, Y, X)` with
    /// `w: (Cout, Cin, kz, ky, kx)` and optional bias `(Cout,)`.
    pub fn conv3d(&mut self, x: Var, spec: ConvSpec, w: Var, b: Option<Var>) -> Result<Var> {
        let xv = self.value(x);
        let dims = xv.dims5()?;
        let wshape = spec.weight_shape();
        if self.shape(w) != wshape {
            return Err(Error::Shape(format!(
                "conv weight must be {wshape:?}, got {:?}",
                self.shape(w)
            )));
        }
        if let Some(b) = b {
            if self.shape(b) != [spec.out_channels] {
                return Err(Error::Shape(format!(
                    "conv bias must be [{}], got {:?}",
                    spec.out_channels,
                    self.shape(b)
                )));
            }
        }
        let geom = Geometry::new(&spec, dims)?;
        let [oz, oy, ox] = spec.output_extents([dims[2], dims[3], dims[4]])?;
        let mut out = vec![T::zero(); dims[0] * spec.out_channels * oz * oy * ox];
        forward(
            &geom,
            xv.data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &mut out,
        );
        let value = Tensor::from_vec(&[dims[0], spec.out_channels, oz, oy, ox], out)?;
        Ok(self.push_op(value, Op::Conv3d { x, w, b, spec }))
    }
}

/// Direct seven-deep loop nest; the reference the fast kernels are tested against.
#[cfg(test)]
pub(crate) fn conv3d_reference(x: &Tensor<f64>, w: &Tensor<f64>, bias: Option<&[f64]>, spec: &ConvSpec) -> Tensor<f64> {
    let [n, cin, z, y, xx] = x.dims5().unwrap();
    let [oz, oy, ox] = spec.output_extents([z, y, xx]).unwrap();
    let [kx, ky, kz] = spec.kernel;
    let [sx, sy, sz] = spec.stride;
    let [px, py, pz] = spec.padding;
    let cout = spec.out_channels;
    let mut out = Tensor::<f64>::zeros(&[n, cout, oz, oy, ox]).unwrap();
    let xd = x.data();
    let wd = w.data();
    let od = out.data_mut();
    for b in 0..n {
        for co in 0..cout {
            for a in 0..oz {
                for c in 0..oy {
                    for d in 0..ox {
                        let mut acc = bias.map_or(0.0, |bb| bb[co]);
                        for ci in 0..cin {
                            for i in 0..kz {
                                for j in 0..ky {
                                    for k in 0..kx {
                                        let iz = (a * sz + i) as isize - pz as isize;
                                        let iy = (c * sy + j) as isize - py as isize;
                                        let ix = (d * sx + k) as isize - px as isize;
                                        if iz < 0
                                            || iy < 0
                                            || ix < 0
                                            || iz >= z as isize
                                            || iy >= y as isize
                                            || ix >= xx as isize
                                        {
                                            continue;
                                        }
                                        let xi =
                                            (((b * cin + ci) * z + iz as usize) * y + iy as usize) * xx + ix as usize;
                                        let wi = (((co * cin + ci) * kz + i) * ky + j) * kx + k;
                                        acc += xd[xi] * wd[wi];
                                    }
                                }
                            }
                        }
                        od[(((b * cout + co) * oz + a) * oy + c) * ox + d] = acc;
                    }
                }
            }
        }
    }
    out
}
