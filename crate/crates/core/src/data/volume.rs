use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Physical voxel size in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spacing {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Spacing {
    pub const UNIT: Spacing = Spacing { x: 1.0, y: 1.0, z: 1.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let s = Self { x, y, z };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.x, self.y, self.z].iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "spacing must be positive, got {self:?}"
            )))
        }
    }

    /// `(z, y, x)` order, matching [`Volume::extents`].
    pub fn zyx(&self) -> [f64; 3] {
        [self.z, self.y, self.x]
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            x: self.x * k,
            y: self.y * k,
            z: self.z * k,
        }
    }
}

/// A scalar 3D grid, optionally paired with a binary label grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    /// `(z, y, x)`.
    extents: [usize; 3],
    pub spacing: Spacing,
    /// Millimetres, `(x, y, z)`.
    pub origin: [f64; 3],
    values: Vec<f32>,
    label: Option<Vec<u8>>,
}

impl Volume {
    pub fn new(extents: [usize; 3], spacing: Spacing, values: Vec<f32>) -> Result<Self> {
        spacing.validate()?;
        let len: usize = extents.iter().product();
        if extents.contains(&0) || values.len() != len {
            return Err(Error::Shape(format!(
                "extents {extents:?} need {len} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            extents,
            spacing,
            origin: [0.0; 3],
            values,
            label: None,
        })
    }

    pub fn filled(extents: [usize; 3], spacing: Spacing, v: f32) -> Result<Self> {
        Self::new(extents, spacing, vec![v; extents.iter().product()])
    }

    /// Attaches a label grid whose entries must be 0 or 1.
    pub fn with_label(mut self, label: Vec<u8>) -> Result<Self> {
        if label.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "label has {} voxels, volume has {}",
                label.len(),
                self.values.len()
            )));
        }
        if label.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("label values must be 0 or 1".into()));
        }
        self.label = Some(label);
        Ok(self)
    }

    pub fn without_label(mut self) -> Self {
        self.label = None;
        self
    }

    pub fn with_origin(mut self, origin: [f64; 3]) -> Self {
        self.origin = origin;
        self
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn label(&self) -> Option<&[u8]> {
        self.label.as_deref()
    }

    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.extents[1] + y) * self.extents[2] + x
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.values[self.index(z, y, x)]
    }

    /// The values as a `(1, 1, Z, Y, X)` tensor.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        let [z, y, x] = self.extents;
        let data = self.values.iter().map(|&v| T::lit(v as f64)).collect();
        Tensor::from_vec(&[1, 1, z, y, x], data).expect("extents match values")
    }

    /// The label as a `(1, 1, Z, Y, X)` tensor of zeros and ones.
    pub fn label_tensor<T: Element>(&self) -> Option<Tensor<T>> {
        let [z, y, x] = self.extents;
        self.label.as_ref().map(|l| {
            let data = l.iter().map(|&v| T::lit(v as f64)).collect();
            Tensor::from_vec(&[1, 1, z, y, x], data).expect("extents match label")
        })
    }

    /// A binary volume whose values are the label, for writing masks.
    pub fn label_volume(&self) -> Option<Volume> {
        self.label.as_ref().map(|l| Volume {
            extents: self.extents,
            spacing: self.spacing,
            origin: self.origin,
            values: l.iter().map(|&v| v as f32).collect(),
            label: None,
        })
    }

    /// Copies the box starting at `corner` with `size`, both `(z, y, x)`.
    pub fn crop(&self, corner: [usize; 3], size: [usize; 3]) -> Result<Volume> {
        if (0..3).any(|a| corner[a] + size[a] > self.extents[a] || size[a] == 0) {
            return Err(Error::Shape(format!(
                "crop {corner:?}+{size:?} exceeds extents {:?}",
                self.extents
            )));
        }
        let values = self.crop_grid(&self.values, corner, size);
        let label = self.label.as_ref().map(|l| self.crop_grid(l, corner, size));
        Ok(Volume {
            extents: size,
            spacing: self.spacing,
            origin: self.origin,
            values,
            label,
        })
    }

    fn crop_grid<V: Copy>(&self, src: &[V], corner: [usize; 3], size: [usize; 3]) -> Vec<V> {
        let mut out = Vec::with_capacity(size.iter().product());
        for z in 0..size[0] {
            for y in 0..size[1] {
                let start = self.index(corner[0] + z, corner[1] + y, corner[2]);
                out.extend_from_slice(&src[start..start + size[2]]);
            }
        }
        out
    }

    /// Zero-pads symmetrically to at least `min` extents. Returns the padded
    /// volume and the offset of the original inside it.
    pub fn pad_to(&self, min: [usize; 3]) -> (Volume, [usize; 3]) {
        let ext = self.extents;
        let new = [0, 1, 2].map(|a| ext[a].max(min[a]));
        let off = [0, 1, 2].map(|a| (new[a] - ext[a]) / 2);
        if new == ext {
            return (self.clone(), off);
        }
        let n: usize = new.iter().product();
        let mut values = vec![0.0f32; n];
        let mut label = self.label.as_ref().map(|_| vec![0u8; n]);
        for z in 0..ext[0] {
            for y in 0..ext[1] {
                let src = self.index(z, y, 0);
                let dst = ((z + off[0]) * new[1] + y + off[1]) * new[2] + off[2];
                values[dst..dst + ext[2]].copy_from_slice(&self.values[src..src + ext[2]]);
                if let (Some(d), Some(s)) = (label.as_mut(), self.label.as_ref()) {
                    d[dst..dst + ext[2]].copy_from_slice(&s[src..src + ext[2]]);
                }
            }
        }
        (
            Volume {
                extents: new,
                spacing: self.spacing,
                origin: self.origin,
                values,
                label,
            },
            off,
        )
    }

    pub fn foreground_count(&self) -> usize {
        self.label.as_ref().map_or(0, |l| l.iter().filter(|&&v| v == 1).count())
    }
}
