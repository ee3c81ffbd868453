//! Reductions to scalars.

use crate::autodiff::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
}

const PAIRWISE_BLOCK: usize = 64;

/// Pairwise (tree) summation; error grows with `log n` instead of `n`.
pub fn pairwise_sum<T: Element>(v: &[T]) -> T {
    if v.len() <= PAIRWISE_BLOCK {
        let mut acc = T::zero();
        for &x in v {
            acc += x;
        }
        acc
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

pub(crate) fn mean_per_item_backward<T: Element>(shape: &[usize], g: &[T]) -> Vec<T> {
    let per: usize = shape[1..].iter().product();
    let inv = T::one() / T::lit(per as f64);
    g.iter().flat_map(|&gv| std::iter::repeat_n(gv * inv, per)).collect()
}

impl<T: Element> Tape<T> {
    pub fn reduce(&mut self, x: Var, kind: Reduce) -> Var {
        match kind {
            Reduce::Sum => self.sum(x),
            Reduce::Mean => self.mean(x),
        }
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = pairwise_sum(self.value(x).data());
        self.push_op(Tensor::scalar(s), Op::Sum { x })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let s = pairwise_sum(xv.data()) / T::lit(xv.len() as f64);
        self.push_op(Tensor::scalar(s), Op::Mean { x })
    }

    /// Mean over every axis but the first: `(N, ...) -> (N,)`.
    pub fn mean_per_item(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() < 2 {
            return Err(Error::Shape(format!(
                "per-item mean needs a batch axis, got {:?}",
                xv.shape()
            )));
        }
        let n = xv.shape()[0];
        let per = xv.len() / n;
        let data = xv
            .data()
            .chunks(per)
            .map(|c| pairwise_sum(c) / T::lit(per as f64))
            .collect();
        let value = Tensor::from_vec(&[n], data)?;
        Ok(self.push_op(value, Op::MeanPerItem { x }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reduce(v: Vec<f64>, kind: Reduce) -> f64 {
        let mut t = Tape::new();
        let n = v.len();
        let x = t.constant(Tensor::from_vec(&[n], v).unwrap());
        let r = t.reduce(x, kind);
        t.value(r).data()[0]
    }

    #[test]
    fn small_closed_forms() {
        assert_eq!(reduce(vec![1.0, 2.0, 3.0], Reduce::Mean), 2.0);
        assert_eq!(reduce(vec![0.0; 10], Reduce::Sum), 0.0);
    }

    #[test]
    fn pairwise_sum_agrees_with_compensated_oracle() {
        let v = vec![1e-3f64; 1_000_000];
        // Neumaier compensated summation
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for &x in &v {
            let t = s + x;
            c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
            s = t;
        }
        let oracle = s + c;
        let p = pairwise_sum(&v);
        assert!(((p - oracle) / oracle).abs() < 1e-9);
    }

    #[test]
    fn per_item_mean_and_gradient() {
        let mut t = Tape::<f64>::new();
        let x = t.param(Tensor::from_vec(&[2, 2], vec![1.0, 3.0, 5.0, 9.0]).unwrap());
        let m = t.mean_per_item(x).unwrap();
        assert_eq!(t.value(m).data(), &[2.0, 7.0]);
        let s = t.sum(m);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[0.5; 4]);
    }
}
