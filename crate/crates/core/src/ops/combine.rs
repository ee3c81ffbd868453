//! Elementwise sums, products and channel concatenation.

use crate::autodiff::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    Add,
    ConcatChannels,
}

/// Splits a gradient of a channel concatenation back into its two parts.
pub(crate) fn split_channels<T: Element>(a: &[usize], b: &[usize], g: &[T]) -> (Vec<T>, Vec<T>) {
    let n = a[0];
    let pa: usize = a[1..].iter().product();
    let pb: usize = b[1..].iter().product();
    let mut ga = Vec::with_capacity(n * pa);
    let mut gb = Vec::with_capacity(n * pb);
    for chunk in g.chunks(pa + pb) {
        ga.extend_from_slice(&chunk[..pa]);
        gb.extend_from_slice(&chunk[pa..]);
    }
    (ga, gb)
}

impl<T: Element> Tape<T> {
    pub fn combine(&mut self, a: Var, b: Var, kind: Combine) -> Result<Var> {
        match kind {
            Combine::Add => self.add(a, b),
            Combine::ConcatChannels => self.concat_channels(a, b),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape(format!(
                "add needs identical shapes, got {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::from_vec(av.shape(), data)?;
        Ok(self.push_op(value, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape(format!(
                "mul needs identical shapes, got {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::from_vec(av.shape(), data)?;
        Ok(self.push_op(value, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push_op(value, Op::Scale { x, c })
    }

    /// Concatenates `(N, Ca, ...)` and `(N, Cb, ...)` into `(N, Ca + Cb, ...)`.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (sa, sb) = (av.shape(), bv.shape());
        if sa.len() < 2 || sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return Err(Error::Shape(format!(
                "concat needs matching non-channel extents, got {sa:?} and {sb:?}"
            )));
        }
        let pa: usize = sa[1..].iter().product();
        let pb: usize = sb[1..].iter().product();
        let mut data = Vec::with_capacity(av.len() + bv.len());
        for (ca, cb) in av.data().chunks(pa).zip(bv.data().chunks(pb)) {
            data.extend_from_slice(ca);
            data.extend_from_slice(cb);
        }
        let mut shape = sa.to_vec();
        shape[1] += sb[1];
        let value = Tensor::from_vec(&shape, data)?;
        Ok(self.push_op(value, Op::Concat { a, b }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck;
    use crate::tensor::Fill;

    fn g(shape: &[usize], seed: u64) -> Tensor<f64> {
        Tensor::new(
            shape,
            Fill::Gaussian {
                seed,
                mean: 0.0,
                std: 1.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn adding_zeros_is_identity() {
        let mut t = Tape::new();
        let x = g(&[1, 2, 3, 4, 5], 1);
        let a = t.constant(x.clone());
        let z = t.constant(Tensor::zeros(x.shape()).unwrap());
        let s = t.combine(a, z, Combine::Add).unwrap();
        assert_eq!(t.value(s), &x);
    }

    #[test]
    fn concat_shape_law() {
        let mut t = Tape::new();
        let a = t.constant(g(&[1, 1, 2, 3, 4], 1));
        let b = t.constant(g(&[1, 1, 2, 3, 4], 2));
        let c = t.combine(a, b, Combine::ConcatChannels).unwrap();
        assert_eq!(t.shape(c), &[1, 2, 2, 3, 4]);
        let bad = t.constant(g(&[1, 1, 2, 3, 5], 3));
        assert!(t.concat_channels(a, bad).is_err());
        assert!(t.add(a, bad).is_err());
    }

    #[test]
    fn gradients_of_both_kinds() {
        let w = g(&[2, 3, 2, 2, 3], 9);
        for kind in [Combine::Add, Combine::ConcatChannels] {
            let (sa, sb): (&[usize], &[usize]) = match kind {
                Combine::Add => (&[2, 3, 2, 2, 3], &[2, 3, 2, 2, 3]),
                Combine::ConcatChannels => (&[2, 1, 2, 2, 3], &[2, 2, 2, 2, 3]),
            };
            let r = gradcheck(
                |t, v| {
                    let c = t.combine(v[0], v[1], kind)?;
                    let wv = t.constant(w.clone());
                    let p = t.mul(c, wv)?;
                    let sq = t.mul(p, c)?;
                    Ok(t.sum(sq))
                },
                &[g(sa, 1), g(sb, 2)],
                1e-5,
                1e-4,
            )
            .unwrap();
            assert!(r.passed, "{kind:?}: {r:?}");
        }
    }
}
