//! Fused scalar loss nodes.

use crate::autodiff::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::ops::reduce::pairwise_sum;
use crate::tensor::{Element, Tensor};

/// Lower clamp applied to both log arguments of the cross-entropy.
pub const LOG_CLAMP: f64 = 1e-7;

fn bce_terms<T: Element>(p: T, y: T, w_fg: T, w_bg: T) -> T {
    let lo = T::lit(LOG_CLAMP);
    let pos = p.max(lo);
    let neg = (T::one() - p).max(lo);
    -(w_fg * y * pos.ln() + w_bg * (T::one() - y) * neg.ln())
}

pub(crate) fn weighted_bce_backward<T: Element>(p: &[T], y: &[T], w_fg: T, w_bg: T, g: T) -> Vec<T> {
    let lo = T::lit(LOG_CLAMP);
    let scale = g / T::lit(p.len() as f64);
    p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let q = T::one() - p;
            // the clamp is flat, so clamped branches contribute nothing
            let dpos = if p > lo { -w_fg * y / p } else { T::zero() };
            let dneg = if q > lo { w_bg * (T::one() - y) / q } else { T::zero() };
            scale * (dpos + dneg)
        })
        .collect()
}

/// `max(z, 0) - z t + ln(1 + e^{-|z|})`
fn logit_bce<T: Element>(z: T, t: T) -> T {
    z.max(T::zero()) - z * t + (-z.abs()).exp().ln_1p()
}

pub(crate) fn gan_bce_backward<T: Element>(z: &[T], t: T, g: T) -> Vec<T> {
    let scale = g / T::lit(z.len() as f64);
    z.iter()
        .map(|&z| scale * (crate::ops::activation::sigmoid(z) - t))
        .collect()
}

impl<T: Element> Tape<T> {
    /// Voxel-mean of `-[w_fg y ln p + w_bg (1 - y) ln(1 - p)]` with log
    /// arguments clamped at [`LOG_CLAMP`]. `y` is a constant target.
    pub fn weighted_bce(&mut self, p: Var, y: &Tensor<T>, w_fg: T, w_bg: T) -> Result<Var> {
        let pv = self.value(p);
        if pv.shape() != y.shape() {
            return Err(Error::Shape(format!(
                "prediction {:?} and label {:?} differ",
                pv.shape(),
                y.shape()
            )));
        }
        let terms: Vec<T> = pv
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &y)| bce_terms(p, y, w_fg, w_bg))
            .collect();
        let loss = pairwise_sum(&terms) / T::lit(terms.len() as f64);
        let op = Op::WeightedBce {
            p,
            y: y.data().to_vec(),
            w_fg,
            w_bg,
        };
        Ok(self.push_op(Tensor::scalar(loss), op))
    }

    /// Batch-mean binary cross-entropy on raw logits against a constant target.
    pub fn gan_bce(&mut self, logits: Var, target: bool) -> Result<Var> {
        let zv = self.value(logits);
        if !zv.all_finite() {
            return Err(Error::NonFinite("discriminator logit".into()));
        }
        let t = if target { T::one() } else { T::zero() };
        let terms: Vec<T> = zv.data().iter().map(|&z| logit_bce(z, t)).collect();
        let loss = pairwise_sum(&terms) / T::lit(terms.len() as f64);
        Ok(self.push_op(Tensor::scalar(loss), Op::GanBce { logits, target: t }))
    }
}
