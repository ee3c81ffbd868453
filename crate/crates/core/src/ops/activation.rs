use crate::autodiff::{Op, Tape, Var};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply<T: Element>(self, v: T) -> T {
        match self {
            Activation::Relu => v.max(T::zero()),
            Activation::LeakyRelu(slope) => {
                if v > T::zero() {
                    v
                } else {
                    v * T::lit(slope)
                }
            }
            Activation::Sigmoid => sigmoid(v),
        }
    }
}

/// Logistic function, evaluated without overflow for large |v|.
#[inline]
pub fn sigmoid<T: Element>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn backward<T: Element>(kind: Activation, x: &[T], y: &[T], g: &[T]) -> Vec<T> {
    match kind {
        Activation::Relu => x
            .iter()
            .zip(g)
            .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
            .collect(),
        Activation::LeakyRelu(slope) => {
            let s = T::lit(slope);
            x.iter()
                .zip(g)
                .map(|(&x, &g)| if x > T::zero() { g } else { g * s })
                .collect()
        }
        Activation::Sigmoid => y.iter().zip(g).map(|(&y, &g)| g * y * (T::one() - y)).collect(),
    }
}

impl<T: Element> Tape<T> {
    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| kind.apply(v)).collect();
        let value = Tensor::from_vec(xv.shape(), data).expect("same shape");
        self.push_op(value, Op::Activation { x, kind })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck;
    use crate::tensor::Fill;

    fn eval(kind: Activation, v: f64) -> f64 {
        let mut t = Tape::new();
        let x = t.constant(Tensor::scalar(v));
        let y = t.activation(x, kind);
        t.value(y).data()[0]
    }

    #[test]
    fn pointwise_values() {
        assert_eq!(eval(Activation::Relu, -1.0), 0.0);
        assert_eq!(eval(Activation::Relu, 2.0), 2.0);
        assert_eq!(eval(Activation::Sigmoid, 0.0), 0.5);
        assert_eq!(eval(Activation::LeakyRelu(0.2), -10.0), -2.0);
    }

    #[test]
    fn sigmoid_stays_inside_open_interval() {
        for v in [-30.0f32, -10.0, 0.0, 10.0, 15.0] {
            let s = sigmoid(v);
            assert!(s > 0.0 && s < 1.0, "{v} -> {s}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = Tensor::<f64>::new(
            &[40],
            Fill::Uniform {
                seed: 5,
                lo: -3.0,
                hi: 3.0,
            },
        )
        .unwrap();
        // keep every coordinate clear of the kinks at 0
        let x = x.map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
        for kind in [Activation::Relu, Activation::LeakyRelu(0.2), Activation::Sigmoid] {
            let r = gradcheck(
                |t, v| {
                    let y = t.activation(v[0], kind);
                    let sq = t.mul(y, y)?;
                    Ok(t.sum(sq))
                },
                std::slice::from_ref(&x),
                1e-5,
                1e-4,
            )
            .unwrap();
            assert!(r.passed, "{kind:?}: {r:?}");
        }
    }
}
