//! Fixtures shared by the kernel benchmarks.

use gcanet::data::{Spacing, Volume};
use gcanet::metrics::Mask;
use gcanet::nn::{Ctx, GcBlock, GcBlockSpec, ParamStore};
use gcanet::{Fill, Result, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn gaussian(shape: &[usize], seed: u64) -> Tensor<f32> {
    Tensor::new(
        shape,
        Fill::Gaussian {
            seed,
            mean: 0.0,
            std: 1.0,
        },
    )
    .expect("valid shape")
}

/// A global-convolution block with initialized weights.
pub fn gc_block(channels: usize, mid: usize, kernel: [usize; 3]) -> Result<(GcBlock, ParamStore<f32>)> {
    let block = GcBlock::new(
        "gc",
        GcBlockSpec {
            in_channels: channels,
            mid_channels: mid,
            kernel,
        },
    );
    let mut store = ParamStore::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for conv in block.convs() {
        conv.init(&mut store, &mut rng)?;
    }
    Ok((block, store))
}

/// Forward and backward through `block`, returning the summed output.
pub fn gc_block_pass(block: &GcBlock, store: &ParamStore<f32>, input: &Tensor<f32>) -> Result<f32> {
    let mut tape = Tape::new();
    let x = tape.leaf(input.clone());
    let vars = store.bind(&mut tape, true);
    let y = block.forward(&mut Ctx::new(&mut tape, &vars, store, true), x)?;
    let s = tape.sum(y);
    tape.backward(s)?;
    Ok(tape.value(s).data()[0])
}

/// Ellipsoid mask centred at `centre` (z, y, x) with semi-axes `radii`.
pub fn ellipsoid(extents: [usize; 3], centre: [f64; 3], radii: [f64; 3]) -> Mask {
    Mask::from_fn(extents, |z, y, x| {
        let p = [z as f64, y as f64, x as f64];
        p.iter()
            .zip(centre)
            .zip(radii)
            .map(|((p, c), r)| ((p - c) / r).powi(2))
            .sum::<f64>()
            <= 1.0
    })
}

pub fn constant_volume(extents: [usize; 3], value: f32) -> Volume {
    Volume::filled(extents, Spacing::new(1.0, 1.0, 1.5).expect("positive spacing"), value).expect("non-empty")
}
