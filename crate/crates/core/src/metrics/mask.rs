use crate::data::volume::{Spacing, Volume};
use crate::error::{Error, Result};

/// Binary voxel mask, `(z, y, x)` with x fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    extents: [usize; 3],
    voxels: Vec<bool>,
}

impl Mask {
    pub fn new(extents: [usize; 3], voxels: Vec<bool>) -> Result<Self> {
        if voxels.len() != extents.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "mask of {} voxels does not fit extents {extents:?}",
                voxels.len()
            )));
        }
        Ok(Self { extents, voxels })
    }

    pub fn empty(extents: [usize; 3]) -> Self {
        Self {
            extents,
            voxels: vec![false; extents.iter().product()],
        }
    }

    pub fn from_fn(extents: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut voxels = Vec::with_capacity(extents.iter().product());
        for z in 0..extents[0] {
            for y in 0..extents[1] {
                for x in 0..extents[2] {
                    voxels.push(f(z, y, x));
                }
            }
        }
        Self { extents, voxels }
    }

    /// Nonzero values are foreground.
    pub fn from_values(volume: &Volume) -> Self {
        Self {
            extents: volume.extents(),
            voxels: volume.values().iter().map(|&v| v != 0.0).collect(),
        }
    }

    /// The volume's attached label.
    pub fn from_label(volume: &Volume) -> Result<Self> {
        let label = volume
            .label()
            .ok_or_else(|| Error::InvalidArgument("volume carries no label".into()))?;
        Ok(Self {
            extents: volume.extents(),
            voxels: label.iter().map(|&l| l != 0).collect(),
        })
    }

    pub fn to_volume(&self, spacing: Spacing) -> Volume {
        let values = self.voxels.iter().map(|&b| b as u8 as f32).collect();
        Volume::new(self.extents, spacing, values).expect("mask extents are consistent")
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn voxels(&self) -> &[bool] {
        &self.voxels
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.voxels[(z * self.extents[1] + y) * self.extents[2] + x]
    }

    pub fn count(&self) -> usize {
        self.voxels.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.voxels.contains(&true)
    }

    /// Inclusive z range holding foreground.
    pub fn z_range(&self) -> Option<(usize, usize)> {
        let slice = self.extents[1] * self.extents[2];
        let mut occupied = (0..self.extents[0]).filter(|&z| self.voxels[z * slice..(z + 1) * slice].contains(&true));
        let first = occupied.next()?;
        Some((first, occupied.next_back().unwrap_or(first)))
    }

    /// Copy with every slice outside `zs` cleared.
    pub fn restrict_z(&self, zs: std::ops::RangeInclusive<usize>) -> Self {
        let slice = self.extents[1] * self.extents[2];
        let mut out = self.clone();
        for z in (0..self.extents[0]).filter(|z| !zs.contains(z)) {
            out.voxels[z * slice..(z + 1) * slice].fill(false);
        }
        out
    }

    pub(crate) fn check_same_extents(&self, other: &Mask) -> Result<()> {
        if self.extents != other.extents {
            return Err(Error::Shape(format!(
                "mask extents differ: {:?} vs {:?}",
                self.extents, other.extents
            )));
        }
        Ok(())
    }
}
