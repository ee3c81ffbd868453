//! Exact squared Euclidean distance transform with per-axis spacing,
//! by separable lower envelopes of parabolas.

/// One line of the transform. `f` holds squared distances (or infinity),
/// samples sit at `i * step`.
fn envelope_1d(f: &[f64], step: f64, out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    let pos = |i: usize| i as f64 * step;
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        loop {
            let Some(&v) = sites.last() else {
                sites.push(q);
                bounds.push(f64::NEG_INFINITY);
                break;
            };
            let cross = ((fq + pos(q) * pos(q)) - (f[v] + pos(v) * pos(v))) / (2.0 * (pos(q) - pos(v)));
            if cross <= *bounds.last().expect("bounds track sites") {
                sites.pop();
                bounds.pop();
                continue;
            }
            sites.push(q);
            bounds.push(cross);
            break;
        }
    }
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < sites.len() && bounds[k + 1] < pos(q) {
            k += 1;
        }
        let d = pos(q) - pos(sites[k]);
        *o = d * d + f[sites[k]];
    }
}

/// Squared distance in mm from every voxel to the nearest `true` voxel of
/// `sites`; infinity everywhere when there is none. `step` is `(z, y, x)`.
pub fn squared_distance_transform(sites: &[bool], extents: [usize; 3], step: [f64; 3]) -> Vec<f64> {
    let [_, ny, nx] = extents;
    let mut d: Vec<f64> = sites.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let strides = [ny * nx, nx, 1];
    let mut line = Vec::new();
    let mut out = Vec::new();
    let (mut v, mut z) = (Vec::new(), Vec::new());
    for axis in [2, 1, 0] {
        let n = extents[axis];
        line.resize(n, 0.0);
        out.resize(n, 0.0);
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        for i in 0..extents[others[0]] {
            for j in 0..extents[others[1]] {
                let base = i * strides[others[0]] + j * strides[others[1]];
                for (k, l) in line.iter_mut().enumerate() {
                    *l = d[base + k * strides[axis]];
                }
                envelope_1d(&line, step[axis], &mut out, &mut v, &mut z);
                for (k, o) in out.iter().enumerate() {
                    d[base + k * strides[axis]] = *o;
                }
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_gives_scaled_offsets() {
        let ext = [3, 4, 5];
        let mut sites = vec![false; 60];
        sites[(4 + 2) * 5 + 3] = true;
        let step = [1.5, 0.5, 2.0];
        let d = squared_distance_transform(&sites, ext, step);
        for z in 0..3 {
            for y in 0..4 {
                for x in 0..5 {
                    let (dz, dy, dx) = ((z as f64 - 1.0) * 1.5, (y as f64 - 2.0) * 0.5, (x as f64 - 3.0) * 2.0);
                    let want = dz * dz + dy * dy + dx * dx;
                    assert!((d[(z * 4 + y) * 5 + x] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn no_sites_is_infinite() {
        let d = squared_distance_transform(&[false; 8], [2, 2, 2], [1.0; 3]);
        assert!(d.iter().all(|v| v.is_infinite()));
    }
}
