use rand::Rng;

use crate::data::volume::Volume;
use crate::error::Result;

/// Rejection-sampling budget when a foreground voxel is required.
pub const FOREGROUND_TRIES: usize = 50;

fn has_foreground(v: &Volume, corner: [usize; 3], size: [usize; 3]) -> bool {
    let Some(label) = v.label() else {
        return false;
    };
    (0..size[0]).any(|z| {
        (0..size[1]).any(|y| {
            let start = v.index(corner[0] + z, corner[1] + y, corner[2]);
            label[start..start + size[2]].contains(&1)
        })
    })
}

/// Crops a `size` patch, `(z, y, x)`, at a uniformly random corner. Volumes
/// smaller than `size` are zero-padded symmetrically first. With probability
/// `force_fg_fraction` up to [`FOREGROUND_TRIES`] corners are drawn until the
/// patch contains a foreground voxel; the last draw is kept otherwise.
pub fn sample_patch(volume: &Volume, size: [usize; 3], rng: &mut impl Rng, force_fg_fraction: f64) -> Result<Volume> {
    let (padded, _) = volume.pad_to(size);
    let ext = padded.extents();
    let draw = |rng: &mut dyn rand::RngCore| [0, 1, 2].map(|a| rng.gen_range(0..=ext[a] - size[a]));
    let force = rng.gen_bool(force_fg_fraction.clamp(0.0, 1.0));
    let mut corner = draw(rng);
    if force {
        for _ in 1..FOREGROUND_TRIES {
            if has_foreground(&padded, corner, size) {
                break;
            }
            corner = draw(rng);
        }
    }
    padded.crop(corner, size)
}
