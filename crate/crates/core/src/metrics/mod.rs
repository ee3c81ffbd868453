//! Overlap and surface-distance evaluation of binary segmentations.

pub mod brute_force;
mod edt;
mod mask;

use std::fmt;

pub use edt::squared_distance_transform;
pub use mask::Mask;

use crate::data::volume::Spacing;
use crate::error::{Error, Result};

/// Dice overlap; 1 when both masks are empty.
pub fn dsc(a: &Mask, b: &Mask) -> Result<f64> {
    a.check_same_extents(b)?;
    let (mut both, mut total) = (0usize, 0usize);
    for (&p, &q) in a.voxels().iter().zip(b.voxels()) {
        both += (p && q) as usize;
        total += p as usize + q as usize;
    }
    Ok(if total == 0 {
        1.0
    } else {
        2.0 * both as f64 / total as f64
    })
}

/// Foreground voxels with a six-connected background or out-of-bounds
/// neighbour, as `(z, y, x)` in scan order.
pub fn surface_voxels(mask: &Mask) -> Vec<[usize; 3]> {
    let ext = mask.extents();
    let mut out = Vec::new();
    for z in 0..ext[0] {
        for y in 0..ext[1] {
            for x in 0..ext[2] {
                if mask.get(z, y, x) && on_surface(mask, [z, y, x]) {
                    out.push([z, y, x]);
                }
            }
        }
    }
    out
}

fn on_surface(mask: &Mask, p: [usize; 3]) -> bool {
    let ext = mask.extents();
    (0..3).any(|axis| {
        let lower = p[axis] == 0 || {
            let mut q = p;
            q[axis] -= 1;
            !mask.get(q[0], q[1], q[2])
        };
        let upper = p[axis] + 1 == ext[axis] || {
            let mut q = p;
            q[axis] += 1;
            !mask.get(q[0], q[1], q[2])
        };
        lower || upper
    })
}

fn surface_mask(mask: &Mask) -> Vec<bool> {
    let ext = mask.extents();
    let mut sites = vec![false; mask.voxels().len()];
    for [z, y, x] in surface_voxels(mask) {
        sites[(z * ext[1] + y) * ext[2] + x] = true;
    }
    sites
}

fn directed(from: &Mask, to: &Mask, spacing: Spacing) -> Vec<f64> {
    let ext = to.extents();
    let field = squared_distance_transform(&surface_mask(to), ext, spacing.zyx());
    surface_voxels(from)
        .into_iter()
        .map(|[z, y, x]| field[(z * ext[1] + y) * ext[2] + x].sqrt())
        .collect()
}

/// Distances in mm from each surface voxel of `a` to the nearest surface
/// voxel of `b`, and the reverse.
pub fn surface_distances(a: &Mask, b: &Mask, spacing: Spacing) -> Result<(Vec<f64>, Vec<f64>)> {
    a.check_same_extents(b)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedDistance("surface distance needs two nonempty masks"));
    }
    Ok((directed(a, b, spacing), directed(b, a, spacing)))
}

/// Percentile `q` in `[0, 100]` with linear interpolation between order
/// statistics.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = q.clamp(0.0, 100.0) / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn abd_of(ab: &[f64], ba: &[f64]) -> f64 {
    (ab.iter().sum::<f64>() + ba.iter().sum::<f64>()) / (ab.len() + ba.len()) as f64
}

fn hd95_of(ab: &[f64], ba: &[f64]) -> f64 {
    let p = |d: &[f64]| percentile(d, 95.0).expect("nonempty surfaces");
    p(ab).max(p(ba))
}

/// Mean of the bidirectional surface distances, mm.
pub fn abd(a: &Mask, b: &Mask, spacing: Spacing) -> Result<f64> {
    let (ab, ba) = surface_distances(a, b, spacing)?;
    Ok(abd_of(&ab, &ba))
}

/// Larger of the two directed 95th-percentile surface distances, mm.
pub fn hd95(a: &Mask, b: &Mask, spacing: Spacing) -> Result<f64> {
    let (ab, ba) = surface_distances(a, b, spacing)?;
    Ok(hd95_of(&ab, &ba))
}

/// Which end of the z axis is superior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SuperiorEnd {
    #[default]
    HighZ,
    LowZ,
}

/// Inclusive slice ranges of the base (superior third) and apex (inferior
/// third) of the ground truth's foreground slab.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionSplit {
    pub base: (usize, usize),
    pub apex: (usize, usize),
}

pub fn region_split(gt: &Mask, superior: SuperiorEnd) -> Result<RegionSplit> {
    let (z0, z1) = gt
        .z_range()
        .ok_or_else(|| Error::Degenerate("region split needs a nonempty ground truth".into()))?;
    let span = z1 - z0 + 1;
    let third = ((span as f64 / 3.0).round() as usize).max(1);
    let low = (z0, z0 + third - 1);
    let high = (z1 + 1 - third, z1);
    Ok(match superior {
        SuperiorEnd::HighZ => RegionSplit { base: high, apex: low },
        SuperiorEnd::LowZ => RegionSplit { base: low, apex: high },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMetrics {
    pub dsc: f64,
    /// `None` when either mask is empty in the region.
    pub abd: Option<f64>,
    pub hd95: Option<f64>,
}

impl RegionMetrics {
    pub fn compute(pred: &Mask, gt: &Mask, spacing: Spacing) -> Result<Self> {
        let dsc = dsc(pred, gt)?;
        match surface_distances(pred, gt, spacing) {
            Ok((ab, ba)) => Ok(Self {
                dsc,
                abd: Some(abd_of(&ab, &ba)),
                hd95: Some(hd95_of(&ab, &ba)),
            }),
            Err(Error::UndefinedDistance(_)) => Ok(Self {
                dsc,
                abd: None,
                hd95: None,
            }),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Whole,
    Base,
    Apex,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Whole, Region::Base, Region::Apex];
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Whole => "whole",
            Region::Base => "base",
            Region::Apex => "apex",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub spacing: Spacing,
    pub whole: RegionMetrics,
    pub base: RegionMetrics,
    pub apex: RegionMetrics,
}

impl MetricsReport {
    pub fn region(&self, region: Region) -> &RegionMetrics {
        match region {
            Region::Whole => &self.whole,
            Region::Base => &self.base,
            Region::Apex => &self.apex,
        }
    }

    /// `region,dsc,abd_mm,hd95_mm`; undefined distances are written as `NA`.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or("NA".to_string(), |d| format!("{d:.6}"));
        let mut out = String::from("region,dsc,abd_mm,hd95_mm\n");
        for r in Region::ALL {
            let m = self.region(r);
            out += &format!("{r},{:.6},{},{}\n", m.dsc, cell(m.abd), cell(m.hd95));
        }
        out
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>| v.map_or("undefined".to_string(), |d| format!("{d:.2}"));
        writeln!(f, "{:<6} {:>6} {:>10} {:>10}", "region", "dsc", "abd_mm", "hd95_mm")?;
        for r in Region::ALL {
            let m = self.region(r);
            writeln!(
                f,
                "{:<6} {:>6.3} {:>10} {:>10}",
                r.to_string(),
                m.dsc,
                cell(m.abd),
                cell(m.hd95)
            )?;
        }
        write!(
            f,
            "spacing (x, y, z) = ({}, {}, {}) mm",
            self.spacing.x, self.spacing.y, self.spacing.z
        )
    }
}

/// All nine numbers for a prediction against ground truth.
pub fn evaluate(pred: &Mask, gt: &Mask, spacing: Spacing) -> Result<MetricsReport> {
    evaluate_with(pred, gt, spacing, SuperiorEnd::default())
}

pub fn evaluate_with(pred: &Mask, gt: &Mask, spacing: Spacing, superior: SuperiorEnd) -> Result<MetricsReport> {
    pred.check_same_extents(gt)?;
    spacing.validate()?;
    let split = region_split(gt, superior)?;
    let regional =
        |(lo, hi): (usize, usize)| RegionMetrics::compute(&pred.restrict_z(lo..=hi), &gt.restrict_z(lo..=hi), spacing);
    Ok(MetricsReport {
        spacing,
        whole: RegionMetrics::compute(pred, gt, spacing)?,
        base: regional(split.base)?,
        apex: regional(split.apex)?,
    })
}
