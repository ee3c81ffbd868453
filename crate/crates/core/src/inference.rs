//! Whole-volume prediction from overlapping patch windows.

use crate::data::volume::Volume;
use crate::error::{Error, Result};
use crate::nn::Generator;
use crate::tensor::Tensor;

pub const DEFAULT_PATCH: [usize; 3] = [32, 96, 96];
pub const DEFAULT_STRIDE: [usize; 3] = [16, 48, 48];

/// Anything mapping a `(1, 1, Z, Y, X)` patch to same-shaped probabilities.
pub trait PatchModel {
    fn predict_patch(&self, patch: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl PatchModel for Generator<f32> {
    fn predict_patch(&self, patch: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.predict(patch)
    }
}

impl<F> PatchModel for F
where
    F: Fn(&Tensor<f32>) -> Result<Tensor<f32>>,
{
    fn predict_patch(&self, patch: &Tensor<f32>) -> Result<Tensor<f32>> {
        self(patch)
    }
}

/// Window start offsets along one axis: multiples of `stride`, with the
/// last window moved back so it ends at the volume edge. A stride wider than
/// the patch is narrowed to the patch so no voxel is skipped.
pub fn window_origins(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    if extent <= patch {
        return vec![0];
    }
    let stride = stride.min(patch);
    let last = extent - patch;
    let mut out: Vec<usize> = (0..).map(|k| k * stride).take_while(|&o| o < last).collect();
    out.push(last);
    out
}

/// Probability sums and visit counts over a volume.
#[derive(Debug, Clone)]
pub struct PredictionGrid {
    extents: [usize; 3],
    sum: Vec<f64>,
    count: Vec<u32>,
}

impl PredictionGrid {
    pub fn new(extents: [usize; 3]) -> Self {
        let n = extents.iter().product();
        Self {
            extents,
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    /// Adds a window of probabilities, `(z, y, x)` row-major, at `origin`.
    pub fn accumulate(&mut self, origin: [usize; 3], size: [usize; 3], probs: &[f32]) {
        let [_, ny, nx] = self.extents;
        for z in 0..size[0] {
            for y in 0..size[1] {
                let dst = ((origin[0] + z) * ny + origin[1] + y) * nx + origin[2];
                let src = (z * size[1] + y) * size[2];
                for x in 0..size[2] {
                    self.sum[dst + x] += probs[src + x] as f64;
                    self.count[dst + x] += 1;
                }
            }
        }
    }

    pub fn counts(&self) -> &[u32] {
        &self.count
    }

    /// Per-voxel mean; errors if any voxel was never visited.
    pub fn finalize(&self) -> Result<Vec<f32>> {
        self.sum
            .iter()
            .zip(&self.count)
            .map(|(&s, &c)| {
                if c == 0 {
                    Err(Error::Degenerate("prediction grid has an unvisited voxel".into()))
                } else {
                    Ok((s / c as f64).clamp(0.0, 1.0) as f32)
                }
            })
            .collect()
    }
}

fn predict_unpadded(
    model: &impl PatchModel,
    volume: &Volume,
    patch: [usize; 3],
    stride: [usize; 3],
) -> Result<(Vec<f32>, PredictionGrid)> {
    let ext = volume.extents();
    let origins: Vec<Vec<usize>> = (0..3).map(|a| window_origins(ext[a], patch[a], stride[a])).collect();
    let mut grid = PredictionGrid::new(ext);
    for &oz in &origins[0] {
        for &oy in &origins[1] {
            for &ox in &origins[2] {
                let corner = [oz, oy, ox];
                let window = volume.crop(corner, patch)?.to_tensor::<f32>();
                let probs = model.predict_patch(&window)?;
                if probs.shape() != window.shape() {
                    return Err(Error::Shape(format!(
                        "model returned {:?} for a {:?} patch",
                        probs.shape(),
                        window.shape()
                    )));
                }
                grid.accumulate(corner, patch, probs.data());
            }
        }
    }
    Ok((grid.finalize()?, grid))
}

/// Averaged foreground probability over a grid of `patch` windows placed
/// every `stride` voxels. Smaller volumes are zero-padded symmetrically and
/// cropped back afterwards.
pub fn sliding_window_predict(
    model: &impl PatchModel,
    volume: &Volume,
    patch: [usize; 3],
    stride: [usize; 3],
) -> Result<Volume> {
    sliding_window_with_counts(model, volume, patch, stride).map(|(v, _)| v)
}

/// As [`sliding_window_predict`], also returning per-voxel visit counts.
pub fn sliding_window_with_counts(
    model: &impl PatchModel,
    volume: &Volume,
    patch: [usize; 3],
    stride: [usize; 3],
) -> Result<(Volume, Vec<u32>)> {
    if patch.contains(&0) || stride.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "patch {patch:?} and stride {stride:?} must be positive"
        )));
    }
    let ext = volume.extents();
    let (padded, off) = volume.pad_to(patch);
    let (probs, grid) = predict_unpadded(model, &padded, patch, stride)?;
    let pext = padded.extents();
    let mut out = Vec::with_capacity(volume.len());
    let mut counts = Vec::with_capacity(volume.len());
    for z in 0..ext[0] {
        for y in 0..ext[1] {
            let start = ((z + off[0]) * pext[1] + y + off[1]) * pext[2] + off[2];
            out.extend_from_slice(&probs[start..start + ext[2]]);
            counts.extend_from_slice(&grid.counts()[start..start + ext[2]]);
        }
    }
    let result = Volume::new(ext, volume.spacing, out)?.with_origin(volume.origin);
    Ok((result, counts))
}

/// 1 where `prob >= threshold`, else 0.
pub fn threshold_mask(prob: &Volume, threshold: f64) -> Result<Volume> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} is outside [0, 1]"
        )));
    }
    let values = prob
        .values()
        .iter()
        .map(|&p| (p as f64 >= threshold) as u8 as f32)
        .collect();
    Ok(Volume::new(prob.extents(), prob.spacing, values)?.with_origin(prob.origin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::volume::Spacing;
    use crate::nn::{build_generator, Preset};
    use proptest::prelude::*;

    fn constant(c: f32) -> impl Fn(&Tensor<f32>) -> Result<Tensor<f32>> {
        move |t: &Tensor<f32>| Ok(t.map(|_| c))
    }

    #[test]
    fn origins_clamp_the_last_window() {
        assert_eq!(window_origins(130, 96, 48), vec![0, 34]);
        assert_eq!(window_origins(40, 32, 16), vec![0, 8]);
        assert_eq!(window_origins(96, 96, 48), vec![0]);
        assert_eq!(window_origins(200, 96, 48), vec![0, 48, 96, 104]);
        assert_eq!(window_origins(10, 96, 48), vec![0]);
        assert_eq!(window_origins(10, 4, 9), vec![0, 4, 6]);
    }

    #[test]
    fn constant_model_and_coverage() {
        let v = Volume::filled([40, 130, 130], Spacing::UNIT, 0.3).unwrap();
        let (p, counts) = sliding_window_with_counts(&constant(0.7), &v, DEFAULT_PATCH, DEFAULT_STRIDE).unwrap();
        assert!(p.values().iter().all(|&x| x == 0.7));
        assert!(counts.iter().all(|&c| c >= 1));
        // voxel in the overlap of both windows along every axis
        assert_eq!(counts[(20 * 130 + 60) * 130 + 60], 8);
        assert_eq!(counts[0], 1);
    }

    #[test]
    fn patch_sized_volume_is_one_window() {
        let v = Volume::new([2, 3, 4], Spacing::UNIT, (0..24).map(|i| i as f32 / 24.0).collect()).unwrap();
        let identity = |t: &Tensor<f32>| Ok(t.clone());
        let p = sliding_window_predict(&identity, &v, [2, 3, 4], [1, 1, 1]).unwrap();
        assert_eq!(p.values(), v.values());
    }

    #[test]
    fn small_volume_is_padded_and_cropped() {
        let v = Volume::filled([3, 5, 7], Spacing::new(0.5, 0.5, 2.0).unwrap(), 1.0)
            .unwrap()
            .with_origin([1.0, 2.0, 3.0]);
        let p = sliding_window_predict(&|t: &Tensor<f32>| Ok(t.map(|x| x * 0.5)), &v, [8, 16, 16], [4, 8, 8]).unwrap();
        assert_eq!(p.extents(), [3, 5, 7]);
        assert_eq!(p.spacing, v.spacing);
        assert_eq!(p.origin, v.origin);
        assert!(p.values().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn padding_path_is_neutral_for_large_volumes() {
        let v = Volume::new(
            [6, 10, 12],
            Spacing::UNIT,
            (0..720).map(|i| (i % 13) as f32 / 13.0).collect(),
        )
        .unwrap();
        let square = |t: &Tensor<f32>| Ok(t.map(|x| x * x));
        let direct = predict_unpadded(&square, &v, [4, 6, 6], [2, 3, 3]).unwrap().0;
        let full = sliding_window_predict(&square, &v, [4, 6, 6], [2, 3, 3]).unwrap();
        assert_eq!(full.values(), &direct[..]);
    }

    #[test]
    fn generator_runs_under_sliding_window() {
        let g = build_generator::<f32>(Preset::Tiny, [7, 7, 3], 0).unwrap();
        let v = Volume::filled([8, 40, 40], Spacing::UNIT, 0.2).unwrap();
        let p = sliding_window_predict(&g, &v, [8, 32, 32], [8, 16, 16]).unwrap();
        assert!(p.values().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn threshold_rules() {
        let v = Volume::new([1, 1, 3], Spacing::UNIT, vec![0.49, 0.5, 0.51]).unwrap();
        assert_eq!(threshold_mask(&v, 0.5).unwrap().values(), &[0.0, 1.0, 1.0]);
        let zero = Volume::filled([2, 2, 2], Spacing::UNIT, 0.0).unwrap();
        assert!(threshold_mask(&zero, 0.5).unwrap().values().iter().all(|&x| x == 0.0));
        assert!(threshold_mask(&v, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn thresholding_is_monotone(values in proptest::collection::vec(0.0f32..=1.0, 27), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let v = Volume::new([3, 3, 3], Spacing::UNIT, values).unwrap();
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let (a, b) = (threshold_mask(&v, lo).unwrap(), threshold_mask(&v, hi).unwrap());
            prop_assert!(a.values().iter().zip(b.values()).all(|(x, y)| x >= y));
        }

        #[test]
        fn every_voxel_is_visited(ext in prop::array::uniform3(1usize..40), patch in prop::array::uniform3(1usize..20), stride in prop::array::uniform3(1usize..20)) {
            let v = Volume::filled(ext, Spacing::UNIT, 0.0).unwrap();
            let (_, counts) = sliding_window_with_counts(&constant(1.0), &v, patch, stride).unwrap();
            prop_assert!(counts.iter().all(|&c| c >= 1));
        }
    }
}
