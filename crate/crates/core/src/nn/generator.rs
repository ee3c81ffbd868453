//! ResNet-50-derived 3D encoder with a global-convolution decoder.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::blocks::{init_layers, BnLayer, Bottleneck, BrBlock, ConvLayer, Ctx, GcBlock, GcBlockSpec, EXPANSION};
use crate::nn::params::{Bound, ParamStore};
use crate::nn::Model;
use crate::ops::{Activation, BatchStats, ConvSpec, PoolSpec};
use crate::tensor::{Element, Tensor};

/// Total encoder downsampling in x and y.
pub const XY_STRIDE: usize = 32;
/// Total encoder downsampling in z.
pub const Z_STRIDE: usize = 8;

const STAGE_BLOCKS: [usize; 4] = [3, 4, 6, 3];
const STAGE_WIDTHS: [usize; 4] = [64, 128, 256, 512];
const STEM_WIDTH: usize = 64;
/// Initial logits of order one rather than saturated probabilities.
const HEAD_GAIN: f64 = 0.01;

/// GC kernel extents `(x, y, z)` used unless configured otherwise.
pub const DEFAULT_GC_KERNEL: [usize; 3] = [7, 7, 3];

/// Channel-width preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// ResNet-50 widths.
    Paper,
    /// All widths divided by 8.
    Tiny,
}

impl Preset {
    pub fn width_divisor(self) -> usize {
        match self {
            Preset::Paper => 1,
            Preset::Tiny => 8,
        }
    }

    pub fn decoder_width(self) -> usize {
        32 / self.width_divisor()
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Tiny => "tiny",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "tiny" => Ok(Preset::Tiny),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset {other:?} (expected paper or tiny)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub conv1: ConvLayer,
    pub bn1: BnLayer,
    pub pool: PoolSpec,
    /// Bottleneck stacks producing the res2..res5 feature maps.
    pub stages: Vec<Vec<Bottleneck>>,
}

impl Encoder {
    fn new(preset: Preset) -> Self {
        let div = preset.width_divisor();
        let stem = STEM_WIDTH / div;
        let conv1 = ConvLayer::new(
            "encoder.conv1",
            ConvSpec::new(1, stem, [7, 7, 3]).stride([2, 2, 1]).padding([3, 3, 1]),
        );
        let bn1 = BnLayer::new("encoder.bn1", stem);
        let pool = PoolSpec {
            kernel: [3, 3, 1],
            stride: [2, 2, 1],
            padding: [1, 1, 0],
        };
        let mut in_ch = stem;
        let stages = (0..4)
            .map(|s| {
                let width = STAGE_WIDTHS[s] / div;
                (0..STAGE_BLOCKS[s])
                    .map(|b| {
                        let stride = if s > 0 && b == 0 { [2, 2, 2] } else { [1, 1, 1] };
                        let block = Bottleneck::new(&format!("encoder.layer{}.{b}", s + 1), in_ch, width, stride);
                        in_ch = width * EXPANSION;
                        block
                    })
                    .collect()
            })
            .collect();
        Self {
            conv1,
            bn1,
            pool,
            stages,
        }
    }

    pub fn stage_channels(&self) -> Vec<usize> {
        self.stages
            .iter()
            .map(|s| s.last().map_or(0, |b| b.bn3.channels))
            .collect()
    }

    pub fn convs(&self) -> Vec<&ConvLayer> {
        std::iter::once(&self.conv1)
            .chain(self.stages.iter().flatten().flat_map(Bottleneck::convs))
            .collect()
    }

    pub fn bns(&self) -> Vec<&BnLayer> {
        std::iter::once(&self.bn1)
            .chain(self.stages.iter().flatten().flat_map(Bottleneck::bns))
            .collect()
    }

    /// Runs conv1, pooling and the first `n_stages` bottleneck stacks,
    /// returning each stack's output.
    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var, n_stages: usize) -> Result<Vec<Var>> {
        let h = self.conv1.forward(ctx, x)?;
        let h = self.bn1.forward(ctx, h)?;
        let h = ctx.tape.relu(h);
        let mut h = ctx.tape.max_pool3d(h, self.pool)?;
        let mut feats = Vec::with_capacity(n_stages);
        for stage in self.stages.iter().take(n_stages) {
            for block in stage {
                h = block.forward(ctx, h)?;
            }
            feats.push(h);
        }
        Ok(feats)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    /// Lateral global-convolution blocks for res2..res5.
    pub gc: Vec<GcBlock>,
    /// Boundary refinement after each lateral block.
    pub br: Vec<BrBlock>,
    /// Boundary refinement after each top-down addition, res2..res4.
    pub fuse: Vec<BrBlock>,
    /// Boundary refinement after each of the two final in-plane upsamplings.
    pub up: Vec<BrBlock>,
    pub head: ConvLayer,
}

impl Decoder {
    fn new(preset: Preset, gc_kernel: [usize; 3], stage_channels: &[usize]) -> Self {
        let m = preset.decoder_width();
        let gc = stage_channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                GcBlock::new(
                    &format!("decoder.gc{}", i + 2),
                    GcBlockSpec {
                        in_channels: c,
                        mid_channels: m,
                        kernel: gc_kernel,
                    },
                )
            })
            .collect();
        let br = (0..stage_channels.len())
            .map(|i| BrBlock::new(&format!("decoder.br{}", i + 2), m))
            .collect();
        let fuse = (0..stage_channels.len() - 1)
            .map(|i| BrBlock::new(&format!("decoder.fuse{}", i + 2), m))
            .collect();
        let up = (1..=2).map(|i| BrBlock::new(&format!("decoder.up{i}"), m)).collect();
        let head = ConvLayer::new("decoder.head", ConvSpec::new(m, 1, [1, 1, 1]).bias(true)).with_gain(HEAD_GAIN);
        Self { gc, br, fuse, up, head }
    }

    pub fn convs(&self) -> Vec<&ConvLayer> {
        self.gc
            .iter()
            .flat_map(GcBlock::convs)
            .chain(self.br.iter().flat_map(BrBlock::convs))
            .chain(self.fuse.iter().flat_map(BrBlock::convs))
            .chain(self.up.iter().flat_map(BrBlock::convs))
            .chain(std::iter::once(&self.head))
            .collect()
    }

    /// Fuses the stage features top-down and returns per-voxel logits.
    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, feats: &[Var]) -> Result<Var> {
        let lateral = |ctx: &mut Ctx<'_, T>, i: usize| -> Result<Var> {
            let h = self.gc[i].forward(ctx, feats[i])?;
            self.br[i].forward(ctx, h)
        };
        let deepest = feats.len() - 1;
        let mut d = lateral(ctx, deepest)?;
        for i in (0..deepest).rev() {
            let l = lateral(ctx, i)?;
            let factor = upsample_factor(ctx.tape.shape(l), ctx.tape.shape(d))?;
            let u = ctx.tape.upsample_trilinear(d, factor)?;
            let s = ctx.tape.add(u, l)?;
            d = self.fuse[i].forward(ctx, s)?;
        }
        for br in &self.up {
            let u = ctx.tape.upsample_trilinear(d, [2, 2, 1])?;
            d = br.forward(ctx, u)?;
        }
        self.head.forward(ctx, d)
    }
}

/// Integer `(x, y, z)` factors mapping `coarse` onto `fine` extents.
fn upsample_factor(fine: &[usize], coarse: &[usize]) -> Result<[usize; 3]> {
    let mut f = [1; 3];
    for (i, axis) in [4, 3, 2].into_iter().enumerate() {
        if !fine[axis].is_multiple_of(coarse[axis]) {
            return Err(Error::Shape(format!(
                "cannot upsample {coarse:?} onto {fine:?} by an integer factor"
            )));
        }
        f[i] = fine[axis] / coarse[axis];
    }
    Ok(f)
}

/// Result of one recorded generator pass.
#[derive(Debug)]
pub struct GeneratorPass<T> {
    /// Foreground probabilities, `(N, 1, Z, Y, X)`.
    pub output: Var,
    pub vars: Bound,
    /// Batch statistics of every batch-norm layer, in training mode.
    pub bn_stats: Vec<(String, BatchStats<T>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T = f32> {
    pub preset: Preset,
    pub gc_kernel: [usize; 3],
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub params: ParamStore<T>,
}

/// Builds the architecture for `preset` with freshly initialized weights.
pub fn build_generator<T: Element>(preset: Preset, gc_kernel: [usize; 3], seed: u64) -> Result<Generator<T>> {
    let mut g = Generator::<T>::skeleton(preset, gc_kernel)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::default();
    init_layers(&g.conv_layers(), &g.bn_layers(), &mut params, &mut rng)?;
    g.params = params;
    Ok(g)
}

impl<T: Element> Generator<T> {
    /// The architecture with an empty parameter store.
    pub fn skeleton(preset: Preset, gc_kernel: [usize; 3]) -> Result<Self> {
        GcBlockSpec {
            in_channels: 1,
            mid_channels: 1,
            kernel: gc_kernel,
        }
        .validate()?;
        let encoder = Encoder::new(preset);
        let decoder = Decoder::new(preset, gc_kernel, &encoder.stage_channels());
        Ok(Self {
            preset,
            gc_kernel,
            encoder,
            decoder,
            params: ParamStore::default(),
        })
    }

    pub fn bn_layers(&self) -> Vec<&BnLayer> {
        self.encoder.bns()
    }

    /// Checks that `(z, y, x)` is divisible by the encoder strides.
    pub fn check_extents(extents: [usize; 3]) -> Result<()> {
        let [z, y, x] = extents;
        if z % Z_STRIDE != 0 || y % XY_STRIDE != 0 || x % XY_STRIDE != 0 {
            return Err(Error::Shape(format!(
                "input extents (z, y, x) = {extents:?} must be divisible by ({Z_STRIDE}, {XY_STRIDE}, {XY_STRIDE})"
            )));
        }
        Ok(())
    }

    /// `(z, y, x)` extents of the res2..res5 feature maps.
    pub fn encoder_stage_shapes(extents: [usize; 3]) -> Result<Vec<[usize; 3]>> {
        Self::check_extents(extents)?;
        let [z, y, x] = extents;
        Ok((0..4)
            .map(|s| {
                let xy = 4 << s;
                let zs = 1 << s;
                [z / zs, y / xy, x / xy]
            })
            .collect())
    }

    /// Records a forward pass on `tape`. `train` selects batch statistics in
    /// batch norm; `trainable` binds parameters as gradient-carrying leaves.
    pub fn forward(&self, tape: &mut Tape<T>, x: Var, train: bool, trainable: bool) -> Result<GeneratorPass<T>> {
        let dims = tape.value(x).dims5()?;
        if dims[1] != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                got: dims[1],
            });
        }
        Self::check_extents([dims[2], dims[3], dims[4]])?;
        let vars = self.params.bind(tape, trainable);
        let (output, bn_stats) = self.forward_with(tape, &vars, x, train)?;
        Ok(GeneratorPass { output, vars, bn_stats })
    }

    /// Forward pass using existing parameter bindings.
    pub fn forward_with(
        &self,
        tape: &mut Tape<T>,
        vars: &Bound,
        x: Var,
        train: bool,
    ) -> Result<(Var, Vec<(String, BatchStats<T>)>)> {
        let mut ctx = Ctx::new(tape, vars, &self.params, train);
        let feats = self.encoder.forward(&mut ctx, x, 4)?;
        let logits = self.decoder.forward(&mut ctx, &feats)?;
        let output = ctx.tape.activation(logits, Activation::Sigmoid);
        Ok((output, ctx.bn_stats))
    }

    /// Foreground probabilities in evaluation mode.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let pass = self.forward(&mut tape, xv, false, false)?;
        Ok(tape.value(pass.output).clone())
    }

    /// Evaluation-mode outputs of the first `n_stages` encoder stages.
    pub fn encoder_features(&self, x: &Tensor<T>, n_stages: usize) -> Result<Vec<Tensor<T>>> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let vars = self.params.bind(&mut tape, false);
        let mut ctx = Ctx::new(&mut tape, &vars, &self.params, false);
        let feats = self.encoder.forward(&mut ctx, xv, n_stages)?;
        Ok(feats.into_iter().map(|v| tape.value(v).clone()).collect())
    }

    /// Folds training-mode batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, stats: &[(String, BatchStats<T>)], momentum: f64) -> Result<()> {
        for (name, batch) in stats {
            let mut running = self.params.running_stats(name)?;
            running.update(batch, T::lit(momentum));
            self.params.set_running_stats(name, &running)?;
        }
        Ok(())
    }

    pub fn cast<U: Element>(&self) -> Generator<U> {
        Generator {
            preset: self.preset,
            gc_kernel: self.gc_kernel,
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            params: self.params.cast(),
        }
    }

    /// Trainable scalars of the encoder alone.
    pub fn encoder_parameter_count(&self) -> usize {
        self.params.count_prefix("encoder.")
    }
}

impl<T: Element> Model<T> for Generator<T> {
    fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    fn conv_layers(&self) -> Vec<&ConvLayer> {
        let mut v = self.encoder.convs();
        v.extend(self.decoder.convs());
        v
    }
}
