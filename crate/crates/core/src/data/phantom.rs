//! Synthetic noisy, bias-modulated ellipsoid volumes with exact labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::volume::{Spacing, Volume};
use crate::error::{Error, Result};

/// Smallest supported extents, `(z, y, x)`.
pub const MIN_EXTENTS: [usize; 3] = [16, 48, 48];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomConfig {
    /// `(z, y, x)`.
    pub extents: [usize; 3],
    pub spacing: Spacing,
    pub background: f64,
    pub foreground: f64,
    /// Peak relative deviation of the multiplicative bias field.
    pub bias_amplitude: f64,
    pub noise_sigma: f64,
    /// Semi-axis range as a fraction of each extent.
    pub semi_axis_range: (f64, f64),
}

impl PhantomConfig {
    pub fn new(extents: [usize; 3], spacing: Spacing) -> Self {
        Self {
            extents,
            spacing,
            background: 0.1,
            foreground: 0.5,
            bias_amplitude: 0.3,
            noise_sigma: 0.2,
            semi_axis_range: (0.15, 0.35),
        }
    }
}

/// Quadratic polynomial over coordinates scaled to `[-1, 1]`.
fn bias_field(ext: [usize; 3], coeffs: &[f64; 9]) -> Vec<f64> {
    let unit = |i: usize, n: usize| {
        if n > 1 {
            2.0 * i as f64 / (n - 1) as f64 - 1.0
        } else {
            0.0
        }
    };
    let mut out = Vec::with_capacity(ext.iter().product());
    for z in 0..ext[0] {
        let w = unit(z, ext[0]);
        for y in 0..ext[1] {
            let v = unit(y, ext[1]);
            for x in 0..ext[2] {
                let u = unit(x, ext[2]);
                let terms = [u, v, w, u * u, v * v, w * w, u * v, v * w, u * w];
                out.push(terms.iter().zip(coeffs).map(|(t, c)| t * c).sum());
            }
        }
    }
    out
}

/// One phantom from `rng`.
pub fn generate_phantom(cfg: &PhantomConfig, rng: &mut impl Rng) -> Result<Volume> {
    let ext = cfg.extents;
    if (0..3).any(|a| ext[a] < MIN_EXTENTS[a]) {
        return Err(Error::InvalidArgument(format!(
            "phantom extents {ext:?} must be at least {MIN_EXTENTS:?}"
        )));
    }
    let (lo, hi) = cfg.semi_axis_range;
    let semi = [0, 1, 2].map(|a| rng.gen_range(lo..hi) * ext[a] as f64);
    let centre = [0, 1, 2].map(|a| rng.gen_range(0.25..0.75) * (ext[a] - 1) as f64);
    let theta = rng.gen_range(0.0..std::f64::consts::PI);
    let (s, c) = theta.sin_cos();

    let mut label = Vec::with_capacity(ext.iter().product());
    for z in 0..ext[0] {
        let dz = (z as f64 - centre[0]) / semi[0];
        for y in 0..ext[1] {
            let dy = y as f64 - centre[1];
            for x in 0..ext[2] {
                let dx = x as f64 - centre[2];
                let (ry, rx) = ((c * dy - s * dx) / semi[1], (s * dy + c * dx) / semi[2]);
                label.push((dz * dz + ry * ry + rx * rx <= 1.0) as u8);
            }
        }
    }

    let coeffs: [f64; 9] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let mut field = bias_field(ext, &coeffs);
    let peak = field.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    field.iter_mut().for_each(|v| *v = 1.0 + cfg.bias_amplitude * *v / peak);
    let fg: Vec<f64> = field
        .iter()
        .zip(&label)
        .filter(|(_, &l)| l == 1)
        .map(|(v, _)| *v)
        .collect();
    if !fg.is_empty() {
        let mean = fg.iter().sum::<f64>() / fg.len() as f64;
        field.iter_mut().for_each(|v| *v /= mean);
    }

    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0))
        .map_err(|e| Error::InvalidArgument(format!("phantom noise: {e}")))?;
    let values = field
        .iter()
        .zip(&label)
        .map(|(b, &l)| {
            let base = if l == 1 { cfg.foreground } else { cfg.background };
            let n = if cfg.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            (base * b + n) as f32
        })
        .collect();
    Volume::new(ext, cfg.spacing, values)?.with_label(label)
}

/// `n` phantoms, deterministic per `seed`; phantom `i` uses its own
/// random stream so any subset can be regenerated independently.
pub fn phantom_generate(seed: u64, n: usize, extents: [usize; 3], spacing: Spacing) -> Result<Vec<Volume>> {
    generate_phantoms(seed, n, &PhantomConfig::new(extents, spacing))
}

pub fn generate_phantoms(seed: u64, n: usize, cfg: &PhantomConfig) -> Result<Vec<Volume>> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            generate_phantom(cfg, &mut rng)
        })
        .collect()
}
