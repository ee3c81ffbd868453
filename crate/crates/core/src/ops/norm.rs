//! Batch normalization over `(N, C, ...)` tensors.

use rayon::prelude::*;

use crate::autodiff::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Per-channel running estimates used in evaluation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Element> RunningStats<T> {
    /// Mean 0, variance 1.
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }

    /// Exponential update `r = (1 - m) r + m s` using the unbiased batch variance.
    pub fn update(&mut self, batch: &BatchStats<T>, momentum: T) {
        let keep = T::one() - momentum;
        for (r, &m) in self.mean.iter_mut().zip(&batch.mean) {
            *r = keep * *r + momentum * m;
        }
        for (r, &v) in self.var.iter_mut().zip(&batch.var_unbiased) {
            *r = keep * *r + momentum * v;
        }
    }
}

/// Statistics of one training-mode batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub var_unbiased: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
pub enum BnMode<'a, T> {
    /// Normalize with the statistics of the current batch.
    Train,
    /// Normalize with fixed running statistics.
    Eval(&'a RunningStats<T>),
}

fn layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::Shape(format!("batch norm needs at least (N, C), got {shape:?}")));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

/// Per-channel sums of `f(i, value)` over batch and space, accumulated in f64.
fn channel_sums<T: Element>(
    data: &[T],
    (n, c, plane): (usize, usize, usize),
    f: impl Fn(usize, T) -> f64 + Sync,
) -> Vec<f64> {
    (0..c)
        .into_par_iter()
        .map(|ch| {
            let mut acc = 0.0;
            for b in 0..n {
                let start = (b * c + ch) * plane;
                acc += data[start..start + plane]
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| f(start + i, v))
                    .sum::<f64>();
            }
            acc
        })
        .collect()
}

pub(crate) struct BnGrads<T> {
    pub input: Option<Vec<T>>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

pub(crate) fn backward<T: Element>(
    x: &Tensor<T>,
    gamma: &[T],
    xhat: Option<&[T]>,
    mean: &[T],
    inv_std: &[T],
    g: &[T],
    want_input: bool,
) -> BnGrads<T> {
    let dims = layout(x.shape()).expect("validated in forward");
    let (_, c, plane) = dims;
    let normalized = |i: usize, ch: usize| match xhat {
        Some(h) => h[i],
        None => (x.data()[i] - mean[ch]) * inv_std[ch],
    };
    let dbeta = channel_sums(g, dims, |_, v| v.as_f64());
    let dgamma = channel_sums(g, dims, |i, v| (v * normalized(i, (i / plane) % c)).as_f64());
    let input = want_input.then(|| {
        let m = T::lit((dims.0 * plane) as f64);
        let mut gx = vec![T::zero(); x.len()];
        gx.par_chunks_mut(plane).enumerate().for_each(|(idx, gp)| {
            let ch = idx % c;
            let start = idx * plane;
            let scale = gamma[ch] * inv_std[ch];
            if xhat.is_some() {
                let db = T::lit(dbeta[ch]);
                let dg = T::lit(dgamma[ch]);
                for (j, v) in gp.iter_mut().enumerate() {
                    let i = start + j;
                    *v = scale / m * (m * g[i] - db - normalized(i, ch) * dg);
                }
            } else {
                for (j, v) in gp.iter_mut().enumerate() {
                    *v = scale * g[start + j];
                }
            }
        });
        gx
    });
    BnGrads {
        input,
        gamma: dgamma.into_iter().map(T::lit).collect(),
        beta: dbeta.into_iter().map(T::lit).collect(),
    }
}

impl<T: Element> Tape<T> {
    /// Batch normalization with affine `gamma`/`beta`. In training mode the
    /// batch statistics are returned so the caller can update its running
    /// estimates.
    pub fn batch_norm3d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode<'_, T>,
        eps: f64,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("batch norm eps must be > 0, got {eps}")));
        }
        let xv = self.value(x);
        let dims = layout(xv.shape())?;
        let (n, c, plane) = dims;
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(v) != [c] {
                return Err(Error::Shape(format!(
                    "batch norm {name} must be [{c}], got {:?}",
                    self.shape(v)
                )));
            }
        }
        let (mean, var, stats) = match mode {
            BnMode::Train => {
                let count = (n * plane) as f64;
                let mean: Vec<f64> = channel_sums(xv.data(), dims, |_, v| v.as_f64())
                    .into_iter()
                    .map(|s| s / count)
                    .collect();
                let ss = channel_sums(xv.data(), dims, |i, v| {
                    let d = v.as_f64() - mean[(i / plane) % c];
                    d * d
                });
                let var: Vec<f64> = ss.iter().map(|s| s / count).collect();
                let unbiased = ss.iter().map(|s| T::lit(s / (count - 1.0).max(1.0))).collect();
                let mean_t: Vec<T> = mean.iter().map(|&v| T::lit(v)).collect();
                let var_t: Vec<T> = var.iter().map(|&v| T::lit(v)).collect();
                let stats = BatchStats {
                    mean: mean_t.clone(),
                    var: var_t.clone(),
                    var_unbiased: unbiased,
                };
                (mean_t, var_t, Some(stats))
            }
            BnMode::Eval(running) => {
                if running.mean.len() != c || running.var.len() != c {
                    return Err(Error::Shape(format!(
                        "running statistics cover {} channels, input has {c}",
                        running.mean.len()
                    )));
                }
                (running.mean.clone(), running.var.clone(), None)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::lit(eps)).sqrt()).collect();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        xhat.par_chunks_mut(plane)
            .zip(out.par_chunks_mut(plane))
            .zip(xv.data().par_chunks(plane))
            .enumerate()
            .for_each(|(idx, ((h, o), src))| {
                let ch = idx % c;
                for ((h, o), &v) in h.iter_mut().zip(o.iter_mut()).zip(src) {
                    *h = (v - mean[ch]) * inv_std[ch];
                    *o = gd[ch] * *h + bd[ch];
                }
            });
        let value = Tensor::from_vec(xv.shape(), out)?;
        let xhat = stats.is_some().then_some(xhat);
        let var = self.push_op(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                mean,
                inv_std,
            },
        );
        Ok((var, stats))
    }

    /// Batch normalization that also maintains `running` in training mode.
    pub fn batch_norm3d_tracked(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: &mut RunningStats<T>,
        train: bool,
        momentum: f64,
        eps: f64,
    ) -> Result<Var> {
        if train {
            let (y, stats) = self.batch_norm3d(x, gamma, beta, BnMode::Train, eps)?;
            if let Some(stats) = stats {
                running.update(&stats, T::lit(momentum));
            }
            Ok(y)
        } else {
            Ok(self.batch_norm3d(x, gamma, beta, BnMode::Eval(running), eps)?.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck;
    use crate::tensor::Fill;

    fn input() -> Tensor<f64> {
        Tensor::new(
            &[2, 3, 2, 3, 4],
            Fill::Gaussian {
                seed: 9,
                mean: 1.5,
                std: 2.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let mut t = Tape::new();
        let x = t.constant(input());
        let g = t.constant(Tensor::new(&[3], Fill::Constant(1.0)).unwrap());
        let b = t.constant(Tensor::zeros(&[3]).unwrap());
        let (y, stats) = t.batch_norm3d(x, g, b, BnMode::Train, 1e-12).unwrap();
        assert!(stats.is_some());
        let y = t.value(y).data();
        let plane = 24;
        for ch in 0..3 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|n| y[(n * 3 + ch) * plane..][..plane].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn eval_mode_with_unit_stats_is_identity() {
        let x = input();
        let running = RunningStats::new(3);
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let g = t.constant(Tensor::new(&[3], Fill::Constant(1.0)).unwrap());
        let b = t.constant(Tensor::zeros(&[3]).unwrap());
        let (y, stats) = t.batch_norm3d(xv, g, b, BnMode::Eval(&running), 1e-300).unwrap();
        assert!(stats.is_none());
        assert!(t.value(y).max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut running = RunningStats::<f64>::new(1);
        let stats = BatchStats {
            mean: vec![2.0],
            var: vec![4.0],
            var_unbiased: vec![5.0],
        };
        running.update(&stats, 0.1);
        assert!((running.mean[0] - 0.2).abs() < 1e-15);
        assert!((running.var[0] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_eps_is_rejected() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(input());
        let g = t.constant(Tensor::zeros(&[3]).unwrap());
        assert!(t.batch_norm3d(x, g, g, BnMode::Train, 0.0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences_in_both_modes() {
        let gamma = Tensor::new(
            &[3],
            Fill::Gaussian {
                seed: 1,
                mean: 1.0,
                std: 0.5,
            },
        )
        .unwrap();
        let beta = Tensor::new(
            &[3],
            Fill::Gaussian {
                seed: 2,
                mean: 0.0,
                std: 0.5,
            },
        )
        .unwrap();
        let w = Tensor::new(
            &[2, 3, 2, 3, 4],
            Fill::Gaussian {
                seed: 3,
                mean: 0.0,
                std: 1.0,
            },
        )
        .unwrap();
        let running = RunningStats {
            mean: vec![0.3, -0.2, 1.0],
            var: vec![2.0, 0.5, 1.5],
        };
        for train in [true, false] {
            let r = gradcheck(
                |t, v| {
                    let mode = if train { BnMode::Train } else { BnMode::Eval(&running) };
                    let (y, _) = t.batch_norm3d(v[0], v[1], v[2], mode, 1e-5)?;
                    // weight the outputs so the loss is not invariant to the normalization
                    let wv = t.constant(w.clone());
                    let p = t.mul(y, wv)?;
                    let sq = t.mul(p, p)?;
                    Ok(t.sum(sq))
                },
                &[input(), gamma.clone(), beta.clone()],
                1e-5,
                1e-4,
            )
            .unwrap();
            assert!(r.passed, "train={train}: {r:?}");
        }
    }
}
