//! Separable linear interpolation along one axis, composed into trilinear
//! resampling.
//!
//! Sample positions follow the half-voxel-center convention: output index `o`
//! maps to the source coordinate `(o + 0.5) * scale - 0.5`, clamped to the
//! valid range, where `scale = source spacing / output spacing` in units of
//! source voxels per output voxel.

use rayon::prelude::*;

use crate::autodiff::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Two-tap interpolation weights for every output index.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTable<T> {
    pub(crate) n_in: usize,
    pub(crate) taps: Vec<(usize, usize, T)>,
}

impl<T: Element> LinearTable<T> {
    /// `n_out` samples of an axis with `n_in` voxels, each output voxel
    /// spanning `step` input voxels.
    pub fn half_voxel(n_in: usize, n_out: usize, step: f64) -> Self {
        let max = (n_in - 1) as f64;
        let taps = (0..n_out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * step - 0.5).clamp(0.0, max);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, T::lit(src - i0 as f64))
            })
            .collect();
        Self { n_in, taps }
    }

    /// Upsampling by an integer factor.
    pub fn upsample(n_in: usize, factor: usize) -> Self {
        Self::half_voxel(n_in, n_in * factor, 1.0 / factor as f64)
    }

    pub fn n_out(&self) -> usize {
        self.taps.len()
    }

    /// Resamples `src` viewed as `(outer, n_in, inner)` into `(outer, n_out, inner)`.
    pub fn apply(&self, inner: usize, src: &[T]) -> Vec<T> {
        let n_out = self.n_out();
        let outer = src.len() / (self.n_in * inner);
        let mut out = vec![T::zero(); outer * n_out * inner];
        out.par_chunks_mut(n_out * inner)
            .zip(src.par_chunks(self.n_in * inner))
            .for_each(|(dst, s)| {
                for (o, &(i0, i1, w)) in self.taps.iter().enumerate() {
                    let d = &mut dst[o * inner..][..inner];
                    let a = &s[i0 * inner..][..inner];
                    let b = &s[i1 * inner..][..inner];
                    let w0 = T::one() - w;
                    for ((d, &a), &b) in d.iter_mut().zip(a).zip(b) {
                        *d = w0 * a + w * b;
                    }
                }
            });
        out
    }

    /// Adjoint of [`LinearTable::apply`]: accumulates into `dst` of shape
    /// `(outer, n_in, inner)`.
    pub fn apply_transpose(&self, inner: usize, g: &[T], dst: &mut [T]) {
        let n_out = self.n_out();
        dst.par_chunks_mut(self.n_in * inner)
            .zip(g.par_chunks(n_out * inner))
            .for_each(|(d, g)| {
                for (o, &(i0, i1, w)) in self.taps.iter().enumerate() {
                    let go = &g[o * inner..][..inner];
                    let w0 = T::one() - w;
                    for (j, &gv) in go.iter().enumerate() {
                        d[i0 * inner + j] += w0 * gv;
                    }
                    for (j, &gv) in go.iter().enumerate() {
                        d[i1 * inner + j] += w * gv;
                    }
                }
            });
    }
}

pub(crate) fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize) {
    (shape[..axis].iter().product(), shape[axis + 1..].iter().product())
}

impl<T: Element> Tape<T> {
    /// Linear resampling along `axis` with a precomputed table.
    pub fn interp_axis(&mut self, x: Var, axis: usize, table: LinearTable<T>) -> Result<Var> {
        let xv = self.value(x);
        if axis >= xv.shape().len() || xv.shape()[axis] != table.n_in {
            return Err(Error::Shape(format!(
                "interpolation table expects {} samples on axis {axis} of {:?}",
                table.n_in,
                xv.shape()
            )));
        }
        let (_, inner) = outer_inner(xv.shape(), axis);
        let data = table.apply(inner, xv.data());
        let mut shape = xv.shape().to_vec();
        shape[axis] = table.n_out();
        let value = Tensor::from_vec(&shape, data)?;
        Ok(self.push_op(value, Op::Interp { x, axis, table }))
    }

    /// Trilinear upsampling of `(N, C, Z, Y, X)` by integer factors `(fx, fy, fz)`.
    pub fn upsample_trilinear(&mut self, x: Var, factor: [usize; 3]) -> Result<Var> {
        if factor.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "upsampling factors must be >= 1, got {factor:?}"
            )));
        }
        let dims = self.value(x).dims5()?;
        let mut v = x;
        // x, y, z map to axes 4, 3, 2
        for (i, &f) in factor.iter().enumerate() {
            if f == 1 {
                continue;
            }
            let axis = 4 - i;
            v = self.interp_axis(v, axis, LinearTable::upsample(dims[axis], f))?;
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck;
    use crate::tensor::Fill;

    fn up(x: &Tensor<f64>, f: [usize; 3]) -> Tensor<f64> {
        let mut t = Tape::new();
        let v = t.constant(x.clone());
        let y = t.upsample_trilinear(v, f).unwrap();
        t.value(y).clone()
    }

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::new(&[1, 2, 2, 3, 3], Fill::Constant(3.5)).unwrap();
        let y = up(&x, [2, 2, 2]);
        assert_eq!(y.shape(), &[1, 2, 4, 6, 6]);
        assert!(y.data().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn unit_factor_is_identity() {
        let x = Tensor::new(
            &[1, 1, 2, 3, 4],
            Fill::Gaussian {
                seed: 1,
                mean: 0.0,
                std: 1.0,
            },
        )
        .unwrap();
        assert_eq!(up(&x, [1, 1, 1]), x);
    }

    #[test]
    fn ramp_along_x_is_reproduced_inside() {
        // value(i) = i; output o samples (o + 0.5) / 2 - 0.5, clamped to [0, 4]
        let x = Tensor::from_vec(&[1, 1, 1, 1, 5], (0..5).map(f64::from).collect()).unwrap();
        let y = up(&x, [2, 1, 1]);
        let expect = [0.0, 0.25, 0.75, 1.25, 1.75, 2.25, 2.75, 3.25, 3.75, 4.0];
        for (a, b) in y.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_factor_is_rejected() {
        let mut t = Tape::<f64>::new();
        let v = t.constant(Tensor::zeros(&[1, 1, 2, 2, 2]).unwrap());
        assert!(t.upsample_trilinear(v, [2, 0, 1]).is_err());
    }

    #[test]
    fn gradient_is_the_transpose() {
        let x = Tensor::new(
            &[1, 2, 2, 3, 4],
            Fill::Gaussian {
                seed: 2,
                mean: 0.0,
                std: 1.0,
            },
        )
        .unwrap();
        let r = gradcheck(
            |t, v| {
                let y = t.upsample_trilinear(v[0], [2, 3, 2])?;
                let sq = t.mul(y, y)?;
                Ok(t.sum(sq))
            },
            &[x],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }
}
