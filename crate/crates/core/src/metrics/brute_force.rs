//! Quadratic-time reference evaluator used to check the fast path.

use crate::data::volume::Spacing;
use crate::metrics::{Mask, SuperiorEnd};

const NEIGHBOURS: [[isize; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

pub fn surface(mask: &Mask) -> Vec<[usize; 3]> {
    let ext = mask.extents();
    let inside = |p: [isize; 3]| (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < ext[a]);
    let mut out = Vec::new();
    for (i, _) in mask.voxels().iter().enumerate().filter(|(_, &v)| v) {
        let p = [i / (ext[1] * ext[2]), (i / ext[2]) % ext[1], i % ext[2]];
        let exposed = NEIGHBOURS.iter().any(|d| {
            let q = [0, 1, 2].map(|a| p[a] as isize + d[a]);
            !inside(q) || !mask.get(q[0] as usize, q[1] as usize, q[2] as usize)
        });
        if exposed {
            out.push(p);
        }
    }
    out
}

fn nearest(from: &[[usize; 3]], to: &[[usize; 3]], spacing: Spacing) -> Vec<f64> {
    let step = spacing.zyx();
    from.iter()
        .map(|p| {
            to.iter()
                .map(|q| {
                    let sq: f64 = (0..3)
                        .map(|a| {
                            let d = (p[a] as f64 - q[a] as f64) * step[a];
                            d * d
                        })
                        .sum();
                    sq
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

/// `None` when either mask is empty.
pub fn distances(a: &Mask, b: &Mask, spacing: Spacing) -> Option<(Vec<f64>, Vec<f64>)> {
    let (sa, sb) = (surface(a), surface(b));
    if sa.is_empty() || sb.is_empty() {
        return None;
    }
    Some((nearest(&sa, &sb, spacing), nearest(&sb, &sa, spacing)))
}

pub fn dsc(a: &Mask, b: &Mask) -> f64 {
    let inter = a.voxels().iter().zip(b.voxels()).filter(|(p, q)| **p && **q).count();
    let sum = a.count() + b.count();
    if sum == 0 {
        1.0
    } else {
        2.0 * inter as f64 / sum as f64
    }
}

fn interpolated(mut d: Vec<f64>, q: f64) -> f64 {
    d.sort_by(|x, y| x.partial_cmp(y).expect("distances are finite"));
    let rank = q * (d.len() - 1) as f64;
    let i = rank as usize;
    if i + 1 >= d.len() {
        return d[i];
    }
    d[i] * (1.0 - (rank - i as f64)) + d[i + 1] * (rank - i as f64)
}

/// `(dsc, abd, hd95)` with undefined distances as `None`.
pub fn metrics(a: &Mask, b: &Mask, spacing: Spacing) -> (f64, Option<f64>, Option<f64>) {
    let dsc = dsc(a, b);
    match distances(a, b, spacing) {
        None => (dsc, None, None),
        Some((ab, ba)) => {
            let n = (ab.len() + ba.len()) as f64;
            let abd = ab.iter().chain(&ba).sum::<f64>() / n;
            let hd = interpolated(ab, 0.95).max(interpolated(ba, 0.95));
            (dsc, Some(abd), Some(hd))
        }
    }
}

/// Whole, base and apex triples.
pub fn evaluate(
    pred: &Mask,
    gt: &Mask,
    spacing: Spacing,
    superior: SuperiorEnd,
) -> Option<[(f64, Option<f64>, Option<f64>); 3]> {
    let ext = gt.extents();
    let slices: Vec<usize> = (0..ext[0])
        .filter(|&z| (0..ext[1]).any(|y| (0..ext[2]).any(|x| gt.get(z, y, x))))
        .collect();
    let (lo, hi) = (*slices.first()?, *slices.last()?);
    let third = ((hi - lo + 1) as f64 / 3.0).round().max(1.0) as usize;
    let bottom = lo..=lo + third - 1;
    let top = hi + 1 - third..=hi;
    let (base, apex) = match superior {
        SuperiorEnd::HighZ => (top, bottom),
        SuperiorEnd::LowZ => (bottom, top),
    };
    let cut =
        |m: &Mask, r: &std::ops::RangeInclusive<usize>| Mask::from_fn(ext, |z, y, x| r.contains(&z) && m.get(z, y, x));
    Some([
        metrics(pred, gt, spacing),
        metrics(&cut(pred, &base), &cut(gt, &base), spacing),
        metrics(&cut(pred, &apex), &cut(gt, &apex), spacing),
    ])
}
