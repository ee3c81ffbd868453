//! Windowed max pooling.

use rayon::prelude::*;

use crate::autodiff::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::ops::conv::ConvSpec;
use crate::tensor::{Element, Tensor};

/// Pooling window; extents are `(x, y, z)` triples like [`ConvSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PoolSpec {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl PoolSpec {
    pub fn output_extents(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        if (0..3).any(|a| self.padding[a] >= self.kernel[a]) {
            // a window made only of padding would have no maximum
            return Err(Error::Geometry(format!(
                "pool padding {:?} must be smaller than kernel {:?}",
                self.padding, self.kernel
            )));
        }
        ConvSpec::new(1, 1, self.kernel)
            .stride(self.stride)
            .padding(self.padding)
            .output_extents(input)
    }
}

fn forward<T: Element>(spec: &PoolSpec, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let [n, c, z, y, xx] = x.dims5()?;
    let [oz, oy, ox] = spec.output_extents([z, y, xx])?;
    let [kx, ky, kz] = spec.kernel;
    let [sx, sy, sz] = spec.stride;
    let [px, py, pz] = spec.padding;
    let in_plane = z * y * xx;
    let out_plane = oz * oy * ox;
    let mut out = vec![T::zero(); n * c * out_plane];
    let mut arg = vec![0u32; n * c * out_plane];
    out.par_chunks_mut(out_plane)
        .zip(arg.par_chunks_mut(out_plane))
        .enumerate()
        .for_each(|(idx, (op, ap))| {
            let ip = &x.data()[idx * in_plane..][..in_plane];
            for a in 0..oz {
                for b in 0..oy {
                    for d in 0..ox {
                        let mut best = T::neg_infinity();
                        let mut at = u32::MAX;
                        for i in 0..kz {
                            let iz = (a * sz + i) as isize - pz as isize;
                            if iz < 0 || iz >= z as isize {
                                continue;
                            }
                            for j in 0..ky {
                                let iy = (b * sy + j) as isize - py as isize;
                                if iy < 0 || iy >= y as isize {
                                    continue;
                                }
                                for k in 0..kx {
                                    let ix = (d * sx + k) as isize - px as isize;
                                    if ix < 0 || ix >= xx as isize {
                                        continue;
                                    }
                                    let flat = (iz as usize * y + iy as usize) * xx + ix as usize;
                                    let v = ip[flat];
                                    // strict comparison keeps the first maximum on ties
                                    if v > best || at == u32::MAX {
                                        best = v;
                                        at = flat as u32;
                                    }
                                }
                            }
                        }
                        let o = (a * oy + b) * ox + d;
                        op[o] = best;
                        ap[o] = at;
                    }
                }
            }
        });
    Ok((Tensor::from_vec(&[n, c, oz, oy, ox], out)?, arg))
}

pub(crate) fn backward<T: Element>(in_shape: &[usize], out_shape: &[usize], argmax: &[u32], g: &[T]) -> Vec<T> {
    let in_plane: usize = in_shape[2..].iter().product();
    let out_plane: usize = out_shape[2..].iter().product();
    let mut gx = vec![T::zero(); in_shape.iter().product()];
    gx.par_chunks_mut(in_plane).enumerate().for_each(|(idx, gp)| {
        let range = idx * out_plane..(idx + 1) * out_plane;
        for (&a, &gv) in argmax[range.clone()].iter().zip(&g[range]) {
            gp[a as usize] += gv;
        }
    });
    gx
}

impl<T: Element> Tape<T> {
    /// Max pooling; the gradient is routed to the first maximum of each window.
    pub fn max_pool3d(&mut self, x: Var, spec: PoolSpec) -> Result<Var> {
        let (value, argmax) = forward(&spec, self.value(x))?;
        Ok(self.push_op(value, Op::MaxPool3d { x, argmax }))
    }
}
