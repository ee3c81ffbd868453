//! Online in-plane augmentation of training patches.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::volume::Volume;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub p_flip: f64,
    pub p_rotate: f64,
    pub p_noise: f64,
    /// Noise standard deviation is drawn uniformly from this range.
    pub sigma_range: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_flip: 0.5,
            p_rotate: 0.5,
            p_noise: 0.5,
            sigma_range: (0.3, 0.7),
        }
    }
}

impl AugmentConfig {
    /// No augmentation at all.
    pub const OFF: AugmentConfig = AugmentConfig {
        p_flip: 0.0,
        p_rotate: 0.0,
        p_noise: 0.0,
        sigma_range: (0.3, 0.7),
    };

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_flip", self.p_flip),
            ("p_rotate", self.p_rotate),
            ("p_noise", self.p_noise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        let (lo, hi) = self.sigma_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise sigma range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    /// Up-down within each slice.
    Y,
    /// Left-right within each slice.
    X,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rotation {
    /// Counter-clockwise quarter turns in the x-y plane.
    Quarter(u8),
    /// Arbitrary in-plane angle, resampled.
    Degrees(f64),
}

/// The rotation choices sampled during augmentation.
pub const ROTATIONS: [Rotation; 5] = [
    Rotation::Degrees(25.0),
    Rotation::Degrees(-25.0),
    Rotation::Quarter(1),
    Rotation::Quarter(2),
    Rotation::Quarter(3),
];

/// Applies `src(z, y, x)`-indexed gathers to values and label alike.
fn permute(v: &Volume, extents: [usize; 3], src: impl Fn(usize, usize, usize) -> usize) -> Result<Volume> {
    let n: usize = extents.iter().product();
    let mut idx = Vec::with_capacity(n);
    for z in 0..extents[0] {
        for y in 0..extents[1] {
            for x in 0..extents[2] {
                idx.push(src(z, y, x));
            }
        }
    }
    let values = idx.iter().map(|&i| v.values()[i]).collect();
    let out = Volume::new(extents, v.spacing, values)?.with_origin(v.origin);
    match v.label() {
        Some(l) => out.with_label(idx.iter().map(|&i| l[i]).collect()),
        None => Ok(out),
    }
}

pub fn flip(v: &Volume, axis: FlipAxis) -> Result<Volume> {
    let [_, ny, nx] = v.extents();
    permute(v, v.extents(), |z, y, x| match axis {
        FlipAxis::Y => v.index(z, ny - 1 - y, x),
        FlipAxis::X => v.index(z, y, nx - 1 - x),
    })
}

/// Exact rotation by `turns` quarter turns; odd turns swap the y and x
/// extents.
pub fn rotate_quarter(v: &Volume, turns: u8) -> Result<Volume> {
    let [nz, ny, nx] = v.extents();
    match turns % 4 {
        0 => Ok(v.clone()),
        1 => permute(v, [nz, nx, ny], |z, y, x| v.index(z, x, nx - 1 - y)),
        2 => permute(v, v.extents(), |z, y, x| v.index(z, ny - 1 - y, nx - 1 - x)),
        _ => permute(v, [nz, nx, ny], |z, y, x| v.index(z, ny - 1 - x, y)),
    }
}

/// In-plane rotation about the slice centre: bilinear for values, nearest
/// neighbour for the label, zero outside the field of view.
pub fn rotate_degrees(v: &Volume, degrees: f64) -> Result<Volume> {
    let [nz, ny, nx] = v.extents();
    let (s, c) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((ny as f64 - 1.0) / 2.0, (nx as f64 - 1.0) / 2.0);
    // source position of each in-plane output voxel (inverse rotation)
    let mut samples = Vec::with_capacity(ny * nx);
    for y in 0..ny {
        for x in 0..nx {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            samples.push((cy + s * dx + c * dy, cx + c * dx - s * dy));
        }
    }
    let inside = |p: f64, n: usize| p > -1.0 && p < n as f64;
    let mut values = vec![0.0f32; v.len()];
    let mut label = v.label().map(|_| vec![0u8; v.len()]);
    for z in 0..nz {
        for (k, &(sy, sx)) in samples.iter().enumerate() {
            let out = z * ny * nx + k;
            if inside(sy, ny) && inside(sx, nx) {
                let (y0, x0) = (sy.floor(), sx.floor());
                let (wy, wx) = (sy - y0, sx - x0);
                let mut acc = 0.0f64;
                for (yy, wyy) in [(y0, 1.0 - wy), (y0 + 1.0, wy)] {
                    for (xx, wxx) in [(x0, 1.0 - wx), (x0 + 1.0, wx)] {
                        if yy >= 0.0 && xx >= 0.0 && (yy as usize) < ny && (xx as usize) < nx {
                            acc += wyy * wxx * v.get(z, yy as usize, xx as usize) as f64;
                        }
                    }
                }
                values[out] = acc as f32;
            }
            if let (Some(dst), Some(src)) = (label.as_mut(), v.label()) {
                let (ry, rx) = (sy.round(), sx.round());
                if ry >= 0.0 && rx >= 0.0 && (ry as usize) < ny && (rx as usize) < nx {
                    dst[out] = src[v.index(z, ry as usize, rx as usize)];
                }
            }
        }
    }
    let out = Volume::new(v.extents(), v.spacing, values)?.with_origin(v.origin);
    match label {
        Some(l) => out.with_label(l),
        None => Ok(out),
    }
}

pub fn rotate(v: &Volume, r: Rotation) -> Result<Volume> {
    match r {
        Rotation::Quarter(t) => rotate_quarter(v, t),
        Rotation::Degrees(d) => rotate_degrees(v, d),
    }
}

/// Adds zero-mean Gaussian noise to the values only.
pub fn add_noise(v: &Volume, sigma: f64, rng: &mut impl Rng) -> Result<Volume> {
    let dist = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(format!("noise sigma: {e}")))?;
    let mut out = v.clone();
    for x in out.values_mut() {
        *x += dist.sample(rng) as f32;
    }
    Ok(out)
}

/// Applies a flip, a rotation and noise, each independently with its
/// probability. Quarter turns that would change a non-square patch's
/// extents are replaced by a half turn.
pub fn augment(patch: &Volume, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<Volume> {
    cfg.validate()?;
    let mut v = patch.clone();
    if rng.gen_bool(cfg.p_flip) {
        let axis = if rng.gen_bool(0.5) { FlipAxis::Y } else { FlipAxis::X };
        v = flip(&v, axis)?;
    }
    if rng.gen_bool(cfg.p_rotate) {
        let mut r = ROTATIONS[rng.gen_range(0..ROTATIONS.len())];
        let [_, ny, nx] = v.extents();
        if matches!(r, Rotation::Quarter(t) if t % 2 == 1) && ny != nx {
            r = Rotation::Quarter(2);
        }
        v = rotate(&v, r)?;
    }
    if rng.gen_bool(cfg.p_noise) {
        let (lo, hi) = cfg.sigma_range;
        let sigma = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        v = add_noise(&v, sigma, rng)?;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::volume::Spacing;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(ext: [usize; 3], seed: u64) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = ext.iter().product();
        let values = (0..n).map(|_| rng.gen()).collect();
        let label = (0..n).map(|_| rng.gen_bool(0.3) as u8).collect();
        Volume::new(ext, Spacing::UNIT, values)
            .unwrap()
            .with_label(label)
            .unwrap()
    }

    fn disk(n: usize, r: f64) -> Volume {
        let c = (n as f64 - 1.0) / 2.0;
        let label: Vec<u8> = (0..n * n)
            .map(|i| {
                let (y, x) = ((i / n) as f64 - c, (i % n) as f64 - c);
                (x * x + y * y <= r * r) as u8
            })
            .collect();
        Volume::new([1, n, n], Spacing::UNIT, label.iter().map(|&v| v as f32).collect())
            .unwrap()
            .with_label(label)
            .unwrap()
    }

    fn dice(a: &[u8], b: &[u8]) -> f64 {
        let inter = a.iter().zip(b).filter(|(&x, &y)| x == 1 && y == 1).count();
        let total = a.iter().chain(b).filter(|&&x| x == 1).count();
        2.0 * inter as f64 / total as f64
    }

    #[test]
    fn double_flip_is_identity() {
        let v = random_volume([3, 5, 7], 1);
        for axis in [FlipAxis::Y, FlipAxis::X] {
            assert_eq!(flip(&flip(&v, axis).unwrap(), axis).unwrap(), v);
        }
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let v = random_volume([2, 5, 7], 2);
        let mut r = v.clone();
        for _ in 0..4 {
            r = rotate_quarter(&r, 1).unwrap();
        }
        assert_eq!(r, v);
        assert_eq!(rotate_quarter(&v, 1).unwrap().extents(), [2, 7, 5]);
        assert_eq!(
            rotate_quarter(&rotate_quarter(&v, 1).unwrap(), 1).unwrap(),
            rotate_quarter(&v, 2).unwrap()
        );
    }

    #[test]
    fn quarter_turn_direction() {
        // a single voxel at (y=0, x=2) of a 3x3 slice
        let mut values = vec![0.0f32; 9];
        values[2] = 1.0;
        let v = Volume::new([1, 3, 3], Spacing::UNIT, values).unwrap();
        let r = rotate_quarter(&v, 1).unwrap();
        // counter-clockwise in (x right, y down) image coordinates
        assert_eq!(r.get(0, 0, 0), 1.0);
        let d = rotate_degrees(&v, 90.0).unwrap();
        assert!((d.get(0, 0, 0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn small_rotation_round_trip_keeps_disk() {
        let d = disk(64, 20.0);
        let there = rotate_degrees(&d, 25.0).unwrap();
        let back = rotate_degrees(&there, -25.0).unwrap();
        let score = dice(d.label().unwrap(), back.label().unwrap());
        assert!(score >= 0.98, "{score}");
    }

    #[test]
    fn nearest_label_rotation_matches_direct_evaluation() {
        let v = random_volume([2, 9, 11], 3);
        let deg = 25.0f64;
        let r = rotate_degrees(&v, deg).unwrap();
        let (s, c) = deg.to_radians().sin_cos();
        let (cy, cx) = (4.0, 5.0);
        for z in 0..2 {
            for y in 0..9 {
                for x in 0..11 {
                    // rotate the output offset by -deg to find its source
                    let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                    let sx = cx + dx * c - dy * s;
                    let sy = cy + dx * s + dy * c;
                    let (ry, rx) = (sy.round(), sx.round());
                    let expected = if (0.0..9.0).contains(&ry) && (0.0..11.0).contains(&rx) {
                        v.label().unwrap()[v.index(z, ry as usize, rx as usize)]
                    } else {
                        0
                    };
                    assert_eq!(r.label().unwrap()[r.index(z, y, x)], expected);
                }
            }
        }
    }

    #[test]
    fn noise_touches_values_only() {
        let v = random_volume([2, 4, 4], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = add_noise(&v, 0.5, &mut rng).unwrap();
        assert_eq!(n.label(), v.label());
        assert_ne!(n.values(), v.values());
    }

    #[test]
    fn augment_is_reproducible_and_validates() {
        let v = random_volume([2, 8, 8], 6);
        let cfg = AugmentConfig {
            p_flip: 1.0,
            p_rotate: 1.0,
            p_noise: 1.0,
            ..Default::default()
        };
        let a = augment(&v, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = augment(&v, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        assert!(a.label().unwrap().iter().all(|&l| l <= 1));
        let bad = AugmentConfig {
            p_flip: 1.5,
            ..Default::default()
        };
        assert!(augment(&v, &bad, &mut ChaCha8Rng::seed_from_u64(7)).is_err());
        let off = augment(&v, &AugmentConfig::OFF, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(off, v);
    }

    proptest! {
        #[test]
        fn exact_transforms_commute_with_the_label(seed in 0u64..1000, turns in 0u8..4, fy in any::<bool>()) {
            let v = random_volume([2, 6, 6], seed);
            let indicator = Volume::new(
                v.extents(),
                v.spacing,
                v.label().unwrap().iter().map(|&l| l as f32).collect(),
            ).unwrap();
            let axis = if fy { FlipAxis::Y } else { FlipAxis::X };
            let t = |x: &Volume| rotate_quarter(&flip(x, axis).unwrap(), turns).unwrap();
            let on_label = t(&v);
            let on_indicator = t(&indicator);
            let as_mask: Vec<u8> = on_indicator.values().iter().map(|&x| x as u8).collect();
            prop_assert_eq!(on_label.label().unwrap(), as_mask.as_slice());
        }
    }
}
