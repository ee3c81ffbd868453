//! Spacing unification and intensity normalization.

use crate::data::volume::{Spacing, Volume};
use crate::error::{Error, Result};
use crate::ops::interp::outer_inner;
use crate::ops::LinearTable;

/// Default target spacing: 1 x 1 mm in-plane, 1.5 mm between slices.
pub const TARGET_SPACING: Spacing = Spacing { x: 1.0, y: 1.0, z: 1.5 };

/// Source coordinate of output voxel `o` (half-voxel-center convention).
fn source_coord(o: usize, step: f64, n_in: usize) -> f64 {
    ((o as f64 + 0.5) * step - 0.5).clamp(0.0, (n_in - 1) as f64)
}

/// Resamples to `target` spacing: linear interpolation per axis for values,
/// nearest neighbour for the label. New extents are
/// `round(n * spacing / target)`, at least 1.
pub fn resample(volume: &Volume, target: Spacing) -> Result<Volume> {
    target
        .validate()
        .map_err(|_| Error::InvalidArgument(format!("target spacing must be positive, got {target:?}")))?;
    let ext = volume.extents();
    let (old, new_sp) = (volume.spacing.zyx(), target.zyx());
    let new_ext = [0, 1, 2].map(|a| ((ext[a] as f64 * old[a] / new_sp[a]).round() as usize).max(1));
    resample_to(volume, target, new_ext)
}

/// Resamples onto a grid of `target` spacing with exactly `new_ext` voxels.
pub fn resample_to(volume: &Volume, target: Spacing, new_ext: [usize; 3]) -> Result<Volume> {
    target
        .validate()
        .map_err(|_| Error::InvalidArgument(format!("target spacing must be positive, got {target:?}")))?;
    if new_ext.contains(&0) {
        return Err(Error::InvalidArgument(format!("extents {new_ext:?} must be positive")));
    }
    let ext = volume.extents();
    let old = volume.spacing.zyx();
    let new_sp = target.zyx();
    let steps = [0, 1, 2].map(|a| new_sp[a] / old[a]);

    let mut values: Vec<f64> = volume.values().iter().map(|&v| v as f64).collect();
    let mut shape = ext.to_vec();
    for axis in [2, 1, 0] {
        if new_ext[axis] == ext[axis] && steps[axis] == 1.0 {
            continue;
        }
        let table = LinearTable::<f64>::half_voxel(ext[axis], new_ext[axis], steps[axis]);
        let (_, inner) = outer_inner(&shape, axis);
        values = table.apply(inner, &values);
        shape[axis] = new_ext[axis];
    }

    let mut out = Volume::new(new_ext, target, values.into_iter().map(|v| v as f32).collect())?;
    if let Some(label) = volume.label() {
        let idx = |a: usize| -> Vec<usize> {
            (0..new_ext[a])
                .map(|o| (source_coord(o, steps[a], ext[a]) + 0.5).floor() as usize)
                .map(|i| i.min(ext[a] - 1))
                .collect()
        };
        let (iz, iy, ix) = (idx(0), idx(1), idx(2));
        let mut l = Vec::with_capacity(out.len());
        for &z in &iz {
            for &y in &iy {
                for &x in &ix {
                    l.push(label[volume.index(z, y, x)]);
                }
            }
        }
        out = out.with_label(l)?;
    }
    // origin follows the centre of the first output voxel, (x, y, z) order
    let origin = [2, 1, 0].map(|a| {
        let o = volume.origin[2 - a];
        o + source_coord(0, steps[a], ext[a]) * old[a]
    });
    Ok(out.with_origin(origin))
}

/// Resampling to [`TARGET_SPACING`] followed by z-score normalization.
pub fn prepare(volume: &Volume) -> Result<Volume> {
    normalize_zscore(&resample(volume, TARGET_SPACING)?)
}

/// Shifts and scales values to zero mean and unit (population) variance.
pub fn normalize_zscore(volume: &Volume) -> Result<Volume> {
    let v = volume.values();
    let first = v[0];
    if v.iter().all(|&x| x == first) {
        return Err(Error::Degenerate("cannot normalize a constant volume".into()));
    }
    let n = v.len() as f64;
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let mut out = volume.clone();
    for x in out.values_mut() {
        *x = ((*x as f64 - mean) / std) as f32;
    }
    Ok(out)
}
