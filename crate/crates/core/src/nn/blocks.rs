//! Layer descriptors shared by the generator and discriminator.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::params::{Bound, ParamStore};
use crate::ops::{BatchStats, BnMode, ConvSpec, RunningStats};
use crate::tensor::{Element, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// State threaded through a forward pass.
pub struct Ctx<'a, T> {
    pub tape: &'a mut Tape<T>,
    pub vars: &'a Bound,
    pub store: &'a ParamStore<T>,
    pub train: bool,
    pub bn_stats: Vec<(String, BatchStats<T>)>,
}

impl<'a, T: Element> Ctx<'a, T> {
    pub fn new(tape: &'a mut Tape<T>, vars: &'a Bound, store: &'a ParamStore<T>, train: bool) -> Self {
        Self {
            tape,
            vars,
            store,
            train,
            bn_stats: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub name: String,
    pub spec: ConvSpec,
    /// Variance gain of the uniform initializer: 2 ahead of a ReLU, 1 for
    /// linear outputs.
    pub gain: f64,
}

impl ConvLayer {
    pub fn new(name: impl Into<String>, spec: ConvSpec) -> Self {
        Self {
            name: name.into(),
            spec,
            gain: 2.0,
        }
    }

    /// Initializes for a linear (not rectified) output.
    pub fn linear(self) -> Self {
        self.with_gain(1.0)
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    /// Uniform weights with variance `gain / fan_in` (He-uniform for the
    /// default gain), zero bias.
    pub fn init<T: Element>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        let shape = self.spec.weight_shape();
        let fan_in: usize = shape[1..].iter().product();
        let bound = (3.0 * self.gain / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::lit(rng.gen_range(-bound..bound))).collect();
        store.insert_param(self.weight_name(), Tensor::from_vec(&shape, data)?);
        if self.spec.has_bias {
            store.insert_param(self.bias_name(), Tensor::zeros(&[self.spec.out_channels])?);
        }
        Ok(())
    }

    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.vars.get(&self.weight_name())?;
        let b = if self.spec.has_bias {
            Some(ctx.vars.get(&self.bias_name())?)
        } else {
            None
        };
        ctx.tape.conv3d(x, self.spec, w, b).map_err(|e| match e {
            Error::ChannelMismatch { .. } | Error::Geometry(_) => {
                Error::InvalidArgument(format!("layer {}: {e}", self.name))
            }
            e => e,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnLayer {
    pub name: String,
    pub channels: usize,
}

impl BnLayer {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self {
            name: name.into(),
            channels,
        }
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels
    }

    /// gamma 1, beta 0, running mean 0, running variance 1.
    pub fn init<T: Element>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let c = self.channels;
        store.insert_param(
            format!("{}.weight", self.name),
            Tensor::new(&[c], crate::Fill::Constant(1.0))?,
        );
        store.insert_param(format!("{}.bias", self.name), Tensor::zeros(&[c])?);
        let rs = RunningStats::<T>::new(c);
        store.insert_buffer(format!("{}.running_mean", self.name), Tensor::from_vec(&[c], rs.mean)?);
        store.insert_buffer(format!("{}.running_var", self.name), Tensor::from_vec(&[c], rs.var)?);
        Ok(())
    }

    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let gamma = ctx.vars.get(&format!("{}.weight", self.name))?;
        let beta = ctx.vars.get(&format!("{}.bias", self.name))?;
        if ctx.train {
            let (y, stats) = ctx.tape.batch_norm3d(x, gamma, beta, BnMode::Train, BN_EPS)?;
            if let Some(stats) = stats {
                ctx.bn_stats.push((self.name.clone(), stats));
            }
            Ok(y)
        } else {
            let running = ctx.store.running_stats(&self.name)?;
            Ok(ctx.tape.batch_norm3d(x, gamma, beta, BnMode::Eval(&running), BN_EPS)?.0)
        }
    }
}

/// ResNet bottleneck: 1x1x1 reduce, 3x3x1 (strided), 1x1x1 expand, with a
/// projected shortcut when the shape changes.
#[derive(Debug, Clone, PartialEq)]
pub struct Bottleneck {
    pub conv1: ConvLayer,
    pub bn1: BnLayer,
    pub conv2: ConvLayer,
    pub bn2: BnLayer,
    pub conv3: ConvLayer,
    pub bn3: BnLayer,
    pub downsample: Option<(ConvLayer, BnLayer)>,
}

pub const EXPANSION: usize = 4;

impl Bottleneck {
    pub fn new(name: &str, in_ch: usize, width: usize, stride: [usize; 3]) -> Self {
        let out = width * EXPANSION;
        let downsample = (stride != [1, 1, 1] || in_ch != out).then(|| {
            (
                ConvLayer::new(
                    format!("{name}.downsample.0"),
                    ConvSpec::new(in_ch, out, [1, 1, 1]).stride(stride),
                ),
                BnLayer::new(format!("{name}.downsample.1"), out),
            )
        });
        Self {
            conv1: ConvLayer::new(format!("{name}.conv1"), ConvSpec::new(in_ch, width, [1, 1, 1])),
            bn1: BnLayer::new(format!("{name}.bn1"), width),
            conv2: ConvLayer::new(
                format!("{name}.conv2"),
                ConvSpec::new(width, width, [3, 3, 1]).stride(stride).padding([1, 1, 0]),
            ),
            bn2: BnLayer::new(format!("{name}.bn2"), width),
            conv3: ConvLayer::new(format!("{name}.conv3"), ConvSpec::new(width, out, [1, 1, 1])),
            bn3: BnLayer::new(format!("{name}.bn3"), out),
            downsample,
        }
    }

    pub fn convs(&self) -> Vec<&ConvLayer> {
        let mut v = vec![&self.conv1, &self.conv2, &self.conv3];
        if let Some((c, _)) = &self.downsample {
            v.push(c);
        }
        v
    }

    pub fn bns(&self) -> Vec<&BnLayer> {
        let mut v = vec![&self.bn1, &self.bn2, &self.bn3];
        if let Some((_, b)) = &self.downsample {
            v.push(b);
        }
        v
    }

    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let h = self.conv1.forward(ctx, x)?;
        let h = self.bn1.forward(ctx, h)?;
        let h = ctx.tape.relu(h);
        let h = self.conv2.forward(ctx, h)?;
        let h = self.bn2.forward(ctx, h)?;
        let h = ctx.tape.relu(h);
        let h = self.conv3.forward(ctx, h)?;
        let h = self.bn3.forward(ctx, h)?;
        let shortcut = match &self.downsample {
            Some((c, b)) => {
                let s = c.forward(ctx, x)?;
                b.forward(ctx, s)?
            }
            None => x,
        };
        let s = ctx.tape.add(h, shortcut)?;
        Ok(ctx.tape.relu(s))
    }
}

/// Large separable kernel block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcBlockSpec {
    pub in_channels: usize,
    pub mid_channels: usize,
    /// `(kx, ky, kz)`, all odd.
    pub kernel: [usize; 3],
}

impl GcBlockSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kernel.iter().any(|k| k % 2 == 0) {
            return Err(Error::InvalidArgument(format!(
                "global convolution kernel extents must be odd, got {:?}",
                self.kernel
            )));
        }
        Ok(())
    }
}

/// Two chains of 1D convolutions, (kx,1,1)→(1,ky,1)→(1,1,kz) and
/// (1,1,kz)→(1,ky,1)→(kx,1,1), summed with a 1x1x1 projection of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct GcBlock {
    pub spec: GcBlockSpec,
    pub branch_a: [ConvLayer; 3],
    pub branch_b: [ConvLayer; 3],
    pub proj: ConvLayer,
}

impl GcBlock {
    pub fn new(name: &str, spec: GcBlockSpec) -> Self {
        let [kx, ky, kz] = spec.kernel;
        let (cin, m) = (spec.in_channels, spec.mid_channels);
        let conv = |suffix: &str, cin: usize, k: [usize; 3]| {
            ConvLayer::new(
                format!("{name}.{suffix}"),
                ConvSpec::new(cin, m, k).same_padding().bias(true),
            )
            .linear()
        };
        Self {
            spec,
            branch_a: [
                conv("a1", cin, [kx, 1, 1]),
                conv("a2", m, [1, ky, 1]),
                conv("a3", m, [1, 1, kz]),
            ],
            branch_b: [
                conv("b1", cin, [1, 1, kz]),
                conv("b2", m, [1, ky, 1]),
                conv("b3", m, [kx, 1, 1]),
            ],
            proj: conv("proj", cin, [1, 1, 1]),
        }
    }

    pub fn convs(&self) -> Vec<&ConvLayer> {
        self.branch_a
            .iter()
            .chain(&self.branch_b)
            .chain(std::iter::once(&self.proj))
            .collect()
    }

    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let cin = ctx.tape.shape(x).get(1).copied().unwrap_or(0);
        if cin != self.spec.in_channels {
            return Err(Error::ChannelMismatch {
                expected: self.spec.in_channels,
                got: cin,
            });
        }
        let mut a = x;
        for c in &self.branch_a {
            a = c.forward(ctx, a)?;
        }
        let mut b = x;
        for c in &self.branch_b {
            b = c.forward(ctx, b)?;
        }
        let p = self.proj.forward(ctx, x)?;
        let ab = ctx.tape.add(a, b)?;
        ctx.tape.add(ab, p)
    }
}

/// Residual boundary refinement: `x + conv1x1x3(relu(conv3x3x1(x)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrBlock {
    pub channels: usize,
    pub conv_a: ConvLayer,
    pub conv_b: ConvLayer,
}

impl BrBlock {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            channels,
            conv_a: ConvLayer::new(
                format!("{name}.conv_a"),
                ConvSpec::new(channels, channels, [3, 3, 1])
                    .padding([1, 1, 0])
                    .bias(true),
            ),
            conv_b: ConvLayer::new(
                format!("{name}.conv_b"),
                ConvSpec::new(channels, channels, [1, 1, 3])
                    .padding([0, 0, 1])
                    .bias(true),
            )
            .linear(),
        }
    }

    pub fn convs(&self) -> Vec<&ConvLayer> {
        vec![&self.conv_a, &self.conv_b]
    }

    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let cin = ctx.tape.shape(x).get(1).copied().unwrap_or(0);
        if cin != self.channels {
            return Err(Error::ChannelMismatch {
                expected: self.channels,
                got: cin,
            });
        }
        let h = self.conv_a.forward(ctx, x)?;
        let h = ctx.tape.relu(h);
        let h = self.conv_b.forward(ctx, h)?;
        ctx.tape.add(x, h)
    }
}

/// Initializes every listed layer in order.
pub(crate) fn init_layers<T: Element>(
    convs: &[&ConvLayer],
    bns: &[&BnLayer],
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for c in convs {
        c.init(store, rng)?;
    }
    for b in bns {
        b.init(store)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck;
    use crate::tensor::Fill;
    use rand::SeedableRng;

    fn store_for(convs: &[&ConvLayer], seed: u64) -> ParamStore<f64> {
        let mut store = ParamStore::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        init_layers(convs, &[], &mut store, &mut rng).unwrap();
        // non-zero biases so their gradients are exercised
        for (k, t) in store.params_mut() {
            if k.ends_with(".bias") {
                t.data_mut()
                    .iter_mut()
                    .enumerate()
                    .for_each(|(i, v)| *v = 0.05 * i as f64 - 0.1);
            }
        }
        store
    }

    fn gauss(shape: &[usize], seed: u64) -> Tensor<f64> {
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

    fn run<F>(store: &ParamStore<f64>, x: &Tensor<f64>, f: F) -> Tensor<f64>
    where
        F: Fn(&mut Ctx<'_, f64>, Var) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let vars = store.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let mut ctx = Ctx::new(&mut tape, &vars, store, false);
        let y = f(&mut ctx, xv).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn br_block_with_zero_weights_is_identity() {
        let br = BrBlock::new("br", 3);
        let mut store = store_for(&br.convs(), 1);
        store.zero_params();
        let x = gauss(&[1, 3, 3, 5, 4], 2);
        let y = run(&store, &x, |c, v| br.forward(c, v));
        assert_eq!(y, x);
    }

    #[test]
    fn br_block_preserves_shape() {
        let br = BrBlock::new("br", 2);
        let store = store_for(&br.convs(), 3);
        for dims in [[1, 2, 1, 1, 1], [2, 2, 3, 4, 5], [1, 2, 7, 2, 9]] {
            let x = gauss(&dims, 4);
            assert_eq!(run(&store, &x, |c, v| br.forward(c, v)).shape(), &dims);
        }
        let x = gauss(&[1, 3, 2, 2, 2], 4);
        let mut tape = Tape::new();
        let vars = store.bind(&mut tape, false);
        let xv = tape.constant(x);
        let mut ctx = Ctx::new(&mut tape, &vars, &store, false);
        assert!(matches!(br.forward(&mut ctx, xv), Err(Error::ChannelMismatch { .. })));
    }

    #[test]
    fn gc_block_with_zero_branches_is_the_projection() {
        let spec = GcBlockSpec {
            in_channels: 3,
            mid_channels: 2,
            kernel: [5, 5, 3],
        };
        let gc = GcBlock::new("gc", spec);
        let mut store = store_for(&gc.convs(), 5);
        for (k, t) in store.params_mut() {
            if !k.starts_with("gc.proj") {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let x = gauss(&[1, 3, 3, 6, 6], 6);
        let y = run(&store, &x, |c, v| gc.forward(c, v));
        let p = run(&store, &x, |c, v| gc.proj.forward(c, v));
        assert_eq!(y, p);
    }

    #[test]
    fn gc_block_parameter_count_formula() {
        let spec = GcBlockSpec {
            in_channels: 6,
            mid_channels: 4,
            kernel: [7, 5, 3],
        };
        let gc = GcBlock::new("gc", spec);
        let (cin, m) = (6, 4);
        let (kx, ky, kz) = (7, 5, 3);
        let expected = (kx * cin * m + (ky + kz) * m * m) + (kz * cin * m + (ky + kx) * m * m) + cin * m + 7 * m;
        let total: usize = gc.convs().iter().map(|c| c.spec.param_count()).sum();
        assert_eq!(total, expected);
        assert!(GcBlockSpec {
            kernel: [7, 6, 3],
            ..spec
        }
        .validate()
        .is_err());
    }

    #[test]
    fn br_block_gradcheck() {
        let br = BrBlock::new("br", 4);
        let store = store_for(&br.convs(), 7);
        let x = gauss(&[1, 4, 6, 8, 8], 8);
        let names: Vec<String> = store.params().keys().cloned().collect();
        let mut inputs = vec![x];
        inputs.extend(store.params().values().cloned());
        let r = gradcheck(
            |t, v| {
                let mut vars = Bound::default();
                for (i, n) in names.iter().enumerate() {
                    vars.insert(n.clone(), v[i + 1]);
                }
                let mut ctx = Ctx::new(t, &vars, &store, false);
                let y = br.forward(&mut ctx, v[0])?;
                let sq = ctx.tape.mul(y, y)?;
                Ok(ctx.tape.sum(sq))
            },
            &inputs,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn gc_branch_equals_dense_outer_product_kernel() {
        let spec = GcBlockSpec {
            in_channels: 1,
            mid_channels: 1,
            kernel: [5, 3, 3],
        };
        let gc = GcBlock::new("gc", spec);
        let mut store = store_for(&gc.convs(), 11);
        store.zero_params();
        let (u, v, w) = (gauss(&[5], 1), gauss(&[3], 2), gauss(&[3], 3));
        for (name, t) in [("gc.a1.weight", &u), ("gc.a2.weight", &v), ("gc.a3.weight", &w)] {
            let p = store.param_mut(name).unwrap();
            p.data_mut().copy_from_slice(t.data());
        }
        // dense (Cout, Cin, kz, ky, kx) kernel
        let mut dense = Vec::with_capacity(45);
        for &wz in w.data() {
            for &vy in v.data() {
                for &ux in u.data() {
                    dense.push(wz * vy * ux);
                }
            }
        }
        let dense_spec = ConvSpec::new(1, 1, [5, 3, 3]).same_padding();
        let x = gauss(&[1, 1, 5, 7, 9], 4);
        let branch = run(&store, &x, |c, v| {
            let mut h = v;
            for conv in &gc.branch_a {
                h = conv.forward(c, h)?;
            }
            Ok(h)
        });
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let wv = tape.constant(Tensor::from_vec(&dense_spec.weight_shape(), dense).unwrap());
        let y = tape.conv3d(xv, dense_spec, wv, None).unwrap();
        assert!(branch.max_abs_diff(tape.value(y)) < 1e-6);
    }

    #[test]
    fn gc_block_gradcheck() {
        let spec = GcBlockSpec {
            in_channels: 2,
            mid_channels: 2,
            kernel: [3, 3, 3],
        };
        let gc = GcBlock::new("gc", spec);
        let store = store_for(&gc.convs(), 12);
        let names: Vec<String> = store.params().keys().cloned().collect();
        let mut inputs = vec![gauss(&[1, 2, 3, 4, 5], 13)];
        inputs.extend(store.params().values().cloned());
        let r = gradcheck(
            |t, v| {
                let mut vars = Bound::default();
                for (i, n) in names.iter().enumerate() {
                    vars.insert(n.clone(), v[i + 1]);
                }
                let mut ctx = Ctx::new(t, &vars, &store, false);
                let y = gc.forward(&mut ctx, v[0])?;
                let sq = ctx.tape.mul(y, y)?;
                Ok(ctx.tape.sum(sq))
            },
            &inputs,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }
}
