//! Differentiable operations recorded on a [`Tape`](crate::autodiff::Tape).

pub mod activation;
pub mod combine;
pub mod conv;
pub mod interp;
pub mod loss;
pub mod norm;
pub mod pool;
pub mod reduce;

pub use activation::Activation;
pub use combine::Combine;
pub use conv::ConvSpec;
pub use interp::LinearTable;
pub use norm::{BatchStats, BnMode, RunningStats};
pub use pool::PoolSpec;
pub use reduce::{pairwise_sum, Reduce};
