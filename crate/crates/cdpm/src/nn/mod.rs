//! The noise-prediction network ε_θ.
//!
//! A U-shaped 2D encoder/decoder runs over every slice of the input bundle
//! with shared convolution weights (slices form the batch axis), a time
//! embedding is added per residual block, and at configured resolution
//! levels multi-head self-attention mixes the K slices at every spatial
//! position — the only place information crosses slices. Condition slices
//! pass through the same trunk but contribute no prediction; their content
//! reaches the targets exclusively through attention.
//!
//! Condition information enters three ways: clean pixels in the intensity
//! channel, a constant flag channel, and a learned flag embedding summed
//! with the sinusoidal slice-index embedding that attention levels inject.
//!
//! Everything is generic over the scalar type: the pipeline runs f32, and
//! the gradient tests run the identical code in f64 against central finite
//! differences.

pub mod layers;
pub mod ops;

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, Array3, Array4, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::scalar::Scalar;
use crate::slices::ConditionedInput;
use layers::{AttnBlock, AttnCache, Conv, GroupNorm, Linear, ResBlock, ResCache};
use ops::GnCache;

/// Architecture hyperparameters. Serialized verbatim into checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    /// Width of the finest level; level i has `base_channels * channel_mults[i]`.
    pub base_channels: usize,
    /// One multiplier per resolution level, finest first.
    pub channel_mults: Vec<usize>,
    /// Levels (0-based) where cross-slice attention runs, in both the down
    /// and up paths.
    pub attn_levels: BTreeSet<usize>,
    /// Attention heads; must divide the channel width at every attention level.
    pub num_heads: usize,
    /// Sinusoidal + MLP time embedding width (even).
    pub time_embed_dim: usize,
    /// Sinusoidal slice-index + flag embedding width (even).
    pub slice_embed_dim: usize,
    /// Largest representable absolute slice index plus one.
    pub max_depth: usize,
    /// Largest bundle (len(C)+len(P)) the network accepts; the training-time
    /// slice budget.
    pub max_bundle: usize,
    /// Input channels: intensity plus condition flag. Fixed at 2.
    pub in_channels: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            base_channels: 32,
            channel_mults: vec![1, 2, 4],
            attn_levels: BTreeSet::from([2]),
            num_heads: 4,
            time_embed_dim: 64,
            slice_embed_dim: 32,
            max_depth: 128,
            max_bundle: 20,
            in_channels: 2,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::InvalidConfig("base_channels must be positive".into()));
        }
        if self.channel_mults.is_empty() || self.channel_mults.contains(&0) {
            return Err(Error::InvalidConfig("channel_mults must be non-empty and positive".into()));
        }
        let levels = self.channel_mults.len();
        for &l in &self.attn_levels {
            if l >= levels {
                return Err(Error::InvalidConfig(format!(
                    "attention level {l} out of range for {levels} levels"
                )));
            }
            let width = self.base_channels * self.channel_mults[l];
            if self.num_heads == 0 || width % self.num_heads != 0 {
                return Err(Error::InvalidConfig(format!(
                    "{} heads do not divide the width {width} at level {l}",
                    self.num_heads
                )));
            }
        }
        for (name, dim) in [
            ("time_embed_dim", self.time_embed_dim),
            ("slice_embed_dim", self.slice_embed_dim),
        ] {
            if dim < 2 || dim % 2 != 0 {
                return Err(Error::InvalidConfig(format!("{name} must be even and >= 2, got {dim}")));
            }
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidConfig("max_depth must be positive".into()));
        }
        if self.max_bundle == 0 {
            return Err(Error::InvalidConfig("max_bundle must be positive".into()));
        }
        if self.in_channels != 2 {
            return Err(Error::InvalidConfig(format!(
                "in_channels is fixed at 2 (intensity + flag), got {}",
                self.in_channels
            )));
        }
        Ok(())
    }

    /// Channel width per level.
    pub fn widths(&self) -> Vec<usize> {
        self.channel_mults.iter().map(|m| self.base_channels * m).collect()
    }

    pub fn levels(&self) -> usize {
        self.channel_mults.len()
    }

    /// The spatial divisor the U shape imposes: inputs must be divisible by
    /// 2^(levels−1).
    pub fn spatial_divisor(&self) -> usize {
        1 << (self.levels() - 1)
    }
}

/// Sinusoidal positional embedding shared by the time and slice-index
/// pathways: for half = dim/2 and ω_j = exp(−ln(10000)·j/(half−1)),
/// entry j is sin(pos·ω_j) and entry half+j is cos(pos·ω_j).
pub fn sinusoidal_embedding(pos: usize, dim: usize) -> Result<Array1<f64>> {
    if dim < 2 || dim % 2 != 0 {
        return Err(Error::InvalidConfig(format!("embedding dim must be even and >= 2, got {dim}")));
    }
    let half = dim / 2;
    let mut out = Array1::zeros(dim);
    for j in 0..half {
        let omega = if half == 1 {
            1.0
        } else {
            (-(10_000f64).ln() * j as f64 / (half - 1) as f64).exp()
        };
        let arg = pos as f64 * omega;
        out[j] = arg.sin();
        out[half + j] = arg.cos();
    }
    Ok(out)
}

/// Base (pre-projection) time embedding; the network's learned MLP is
/// applied on top inside the forward pass.
pub fn time_embedding(t: usize, dim: usize) -> Result<Array1<f64>> {
    sinusoidal_embedding(t, dim)
}

#[derive(Debug, Clone, PartialEq)]
struct DownBlock<F> {
    res: ResBlock<F>,
    attn: Option<AttnBlock<F>>,
    down: Option<Conv<F>>,
}

#[derive(Debug, Clone, PartialEq)]
struct UpBlock<F> {
    level: usize,
    res: ResBlock<F>,
    attn: Option<AttnBlock<F>>,
    up: Option<Conv<F>>,
}

/// The full parameter set θ plus its architecture. One instance also serves
/// as a gradient or optimizer-moment store via [`Denoiser::zeros_like`].
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser<F> {
    config: DenoiserConfig,
    time_l1: Linear<F>,
    time_l2: Linear<F>,
    /// Row 0: target flag, row 1: condition flag.
    flag_table: Array2<F>,
    stem: Conv<F>,
    down: Vec<DownBlock<F>>,
    mid: ResBlock<F>,
    /// Stored in processing order: coarsest level first.
    up: Vec<UpBlock<F>>,
    out_gn: GroupNorm<F>,
    out_conv: Conv<F>,
}

/// Deterministically initialize θ from a seed: fan-in scaled uniform
/// weights, zero biases, unit norm scales, and zero-initialized attention
/// and output projections so a fresh network predicts exactly zero noise.
pub fn init_denoiser<F: Scalar>(config: &DenoiserConfig, seed: u64) -> Result<Denoiser<F>> {
    config.validate()?;
    let mut rng = substream(seed, "denoiser-init");
    let te = config.time_embed_dim;
    let se = config.slice_embed_dim;
    let widths = config.widths();
    let levels = config.levels();

    let time_l1 = Linear::init(te, te, &mut rng);
    let time_l2 = Linear::init(te, te, &mut rng);
    let fbound = 1.0 / (se as f64).sqrt();
    let flag_table = Array2::from_shape_fn((2, se), |_| F::uniform_sym(&mut rng, fbound));
    let stem = Conv::init(widths[0], config.in_channels, 3, 1, 1, &mut rng);

    let mut down = Vec::with_capacity(levels);
    for i in 0..levels {
        let cin = if i == 0 { widths[0] } else { widths[i - 1] };
        let res = ResBlock::init(cin, widths[i], te, &mut rng);
        let attn = config
            .attn_levels
            .contains(&i)
            .then(|| AttnBlock::init(widths[i], se, config.num_heads, &mut rng));
        let downc = (i + 1 < levels).then(|| Conv::init(widths[i], widths[i], 3, 2, 1, &mut rng));
        down.push(DownBlock { res, attn, down: downc });
    }

    let mid = ResBlock::init(widths[levels - 1], widths[levels - 1], te, &mut rng);

    let mut up = Vec::with_capacity(levels);
    for i in (0..levels).rev() {
        let res = ResBlock::init(2 * widths[i], widths[i], te, &mut rng);
        let attn = config
            .attn_levels
            .contains(&i)
            .then(|| AttnBlock::init(widths[i], se, config.num_heads, &mut rng));
        let upc = (i > 0).then(|| Conv::init(widths[i - 1], widths[i], 3, 1, 1, &mut rng));
        up.push(UpBlock { level: i, res, attn, up: upc });
    }

    let out_gn = GroupNorm::new(widths[0]);
    let out_conv = Conv::zeros(1, widths[0], 3, 1, 1);

    Ok(Denoiser {
        config: config.clone(),
        time_l1,
        time_l2,
        flag_table,
        stem,
        down,
        mid,
        up,
        out_gn,
        out_conv,
    })
}

/// Activation record of one forward pass, consumed by [`Denoiser::backward`].
pub struct Tape<F> {
    x_in: Array4<F>,
    t_sin: Array2<F>,
    t_z1: Array2<F>,
    t_z1a: Array2<F>,
    temb: Array2<F>,
    se: Array2<F>,
    down: Vec<DownCache<F>>,
    mid: ResCache<F>,
    up: Vec<UpCache<F>>,
    out_gnc: GnCache<F>,
    out_gn_out: Array4<F>,
    out_conv_in: Array4<F>,
    target_slots: Vec<usize>,
    flags: Vec<bool>,
}

struct DownCache<F> {
    res: ResCache<F>,
    attn: Option<AttnCache<F>>,
    pre_down: Option<Array4<F>>,
}

struct UpCache<F> {
    res: ResCache<F>,
    attn: Option<AttnCache<F>>,
    /// Nearest-upsampled activations, the input of the upsampling conv.
    pre_up_conv: Option<Array4<F>>,
}

impl<F: Scalar> Denoiser<F> {
    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    /// Learned slice embedding: sinusoid of the absolute index plus the flag
    /// row (condition vs. target).
    pub fn slice_embedding(&self, index: usize, is_cond: bool) -> Result<Array1<F>> {
        if index >= self.config.max_depth {
            return Err(Error::IndexOutOfRange { index, depth: self.config.max_depth });
        }
        let base = sinusoidal_embedding(index, self.config.slice_embed_dim)?;
        let row = self.flag_table.index_axis(Axis(0), usize::from(is_cond));
        Ok(Array1::from_shape_fn(base.len(), |j| F::from_f64(base[j]) + row[j]))
    }

    fn validate_input(&self, input: &ConditionedInput<F>) -> Result<(usize, usize, usize)> {
        let (k, h, w) = input.slices.dim();
        if k == 0 {
            return Err(Error::EmptyInput("empty slice bundle".into()));
        }
        if input.indices.len() != k || input.is_cond.len() != k {
            return Err(Error::ShapeMismatch {
                expected: vec![k],
                got: vec![input.indices.len(), input.is_cond.len()],
            });
        }
        if k > self.config.max_bundle {
            return Err(Error::BudgetViolation { got: k, budget: self.config.max_bundle });
        }
        let div = self.config.spatial_divisor();
        if h % div != 0 || w % div != 0 || h == 0 || w == 0 {
            return Err(Error::InvalidConfig(format!(
                "spatial size {h}x{w} must be divisible by {div} for {} levels",
                self.config.levels()
            )));
        }
        for &i in &input.indices {
            if i >= self.config.max_depth {
                return Err(Error::IndexOutOfRange { index: i, depth: self.config.max_depth });
            }
        }
        Ok((k, h, w))
    }

    /// Forward pass returning per-target predictions and the activation tape.
    pub fn forward(&self, input: &ConditionedInput<F>) -> Result<(Array3<F>, Tape<F>)> {
        let (k, h, w) = self.validate_input(input)?;
        let cfg = &self.config;

        // Input tensor: intensity channel + constant flag channel.
        let mut x_in = Array4::<F>::zeros((k, 2, h, w));
        for ki in 0..k {
            x_in.index_axis_mut(Axis(0), ki)
                .index_axis_mut(Axis(0), 0)
                .assign(&input.slices.index_axis(Axis(0), ki));
            if input.is_cond[ki] {
                x_in.index_axis_mut(Axis(0), ki)
                    .index_axis_mut(Axis(0), 1)
                    .fill(F::one());
            }
        }

        // Time pathway: sinusoid -> linear -> SiLU -> linear.
        let t_base = sinusoidal_embedding(input.t, cfg.time_embed_dim)?;
        let t_sin = Array2::from_shape_fn((1, cfg.time_embed_dim), |(_, j)| F::from_f64(t_base[j]));
        let t_z1 = self.time_l1.forward(&t_sin);
        let t_z1a = ops::silu(&t_z1);
        let temb = self.time_l2.forward(&t_z1a);

        // Per-slot slice embeddings.
        let mut se = Array2::<F>::zeros((k, cfg.slice_embed_dim));
        for ki in 0..k {
            let row = self.slice_embedding(input.indices[ki], input.is_cond[ki])?;
            se.index_axis_mut(Axis(0), ki).assign(&row);
        }

        let mut hcur = self.stem.forward(&x_in);
        let mut down_caches = Vec::with_capacity(self.down.len());
        let mut skips: Vec<Array4<F>> = Vec::with_capacity(self.down.len());
        for block in &self.down {
            let (y, res) = block.res.forward(&hcur, &temb);
            hcur = y;
            let attn = block.attn.as_ref().map(|a| {
                let (y, c) = a.forward(&hcur, &se);
                hcur = y;
                c
            });
            skips.push(hcur.clone());
            let pre_down = block.down.as_ref().map(|d| {
                let pre = hcur.clone();
                hcur = d.forward(&hcur);
                pre
            });
            down_caches.push(DownCache { res, attn, pre_down });
        }

        let (y, mid) = self.mid.forward(&hcur, &temb);
        hcur = y;

        let mut up_caches = Vec::with_capacity(self.up.len());
        for block in &self.up {
            let cat = ndarray::concatenate(
                Axis(1),
                &[hcur.view(), skips[block.level].view()],
            )
            .expect("matching spatial dims");
            let (y, res) = block.res.forward(&cat.as_standard_layout().to_owned(), &temb);
            hcur = y;
            let attn = block.attn.as_ref().map(|a| {
                let (y, c) = a.forward(&hcur, &se);
                hcur = y;
                c
            });
            let pre_up_conv = block.up.as_ref().map(|u| {
                let near = ops::upsample2(&hcur);
                hcur = u.forward(&near);
                near
            });
            up_caches.push(UpCache { res, attn, pre_up_conv });
        }

        let (out_gn_out, out_gnc) = self.out_gn.forward(&hcur);
        let out_conv_in = ops::silu(&out_gn_out);
        let out_all = self.out_conv.forward(&out_conv_in); // (K, 1, H, W)

        let target_slots: Vec<usize> = (0..k).filter(|&i| !input.is_cond[i]).collect();
        let mut sel = Array3::<F>::zeros((target_slots.len(), h, w));
        for (j, &slot) in target_slots.iter().enumerate() {
            sel.index_axis_mut(Axis(0), j)
                .assign(&out_all.index_axis(Axis(0), slot).index_axis(Axis(0), 0));
        }
        if sel.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "denoiser output".into() });
        }

        let tape = Tape {
            x_in,
            t_sin,
            t_z1,
            t_z1a,
            temb,
            se,
            down: down_caches,
            mid,
            up: up_caches,
            out_gnc,
            out_gn_out,
            out_conv_in,
            target_slots,
            flags: input.is_cond.clone(),
        };
        Ok((sel, tape))
    }

    /// Accumulate parameter gradients for the cotangent `d_sel` (one map per
    /// target slice) into a fresh zero gradient store.
    pub fn backward(&self, tape: &Tape<F>, d_sel: &Array3<F>) -> Denoiser<F> {
        let mut g = self.zeros_like();
        let (k, _, h, w) = tape.x_in.dim();
        let mut d_temb = Array2::<F>::zeros(tape.temb.raw_dim());
        let mut d_se = Array2::<F>::zeros(tape.se.raw_dim());

        // Scatter target cotangents into the full bundle.
        let mut d_out = Array4::<F>::zeros((k, 1, h, w));
        for (j, &slot) in tape.target_slots.iter().enumerate() {
            d_out
                .index_axis_mut(Axis(0), slot)
                .index_axis_mut(Axis(0), 0)
                .assign(&d_sel.index_axis(Axis(0), j));
        }

        // Output head.
        let d = self.out_conv.backward(&tape.out_conv_in, &d_out, &mut g.out_conv);
        let d = ops::silu_backward(&tape.out_gn_out, &d);
        let mut d = self.out_gn.backward(&d, &tape.out_gnc, &mut g.out_gn);

        // Up path, reversed (finest level first), collecting skip gradients.
        let levels = self.config.levels();
        let mut d_skips: Vec<Option<Array4<F>>> = vec![None; levels];
        for (pos, block) in self.up.iter().enumerate().rev() {
            let cache = &tape.up[pos];
            if let (Some(u), Some(pre)) = (&block.up, &cache.pre_up_conv) {
                let d_near = u.backward(pre, &d, g.up[pos].up.as_mut().unwrap());
                d = ops::upsample2_backward(&d_near);
            }
            if let (Some(a), Some(ac)) = (&block.attn, &cache.attn) {
                d = a.backward(ac, &tape.se, &d, g.up[pos].attn.as_mut().unwrap(), &mut d_se);
            }
            let d_cat =
                block.res.backward(&cache.res, &tape.temb, &d, &mut g.up[pos].res, &mut d_temb);
            let width = self.config.widths()[block.level];
            let (d_h, d_skip) = split_channels(&d_cat, width);
            d_skips[block.level] = Some(d_skip);
            d = d_h;
        }

        let mut d = self.mid.backward(&tape.mid, &tape.temb, &d, &mut g.mid, &mut d_temb);

        // Down path, reversed (coarsest level first). Each level's output fed
        // both its skip connection and (except the coarsest) the downsample.
        for (i, block) in self.down.iter().enumerate().rev() {
            let cache = &tape.down[i];
            let mut d_level = match (&block.down, &cache.pre_down) {
                (Some(dc), Some(pre)) => dc.backward(pre, &d, g.down[i].down.as_mut().unwrap()),
                _ => d,
            };
            if let Some(ds) = d_skips[i].take() {
                d_level.zip_mut_with(&ds, |a, &b| *a += b);
            }
            if let (Some(a), Some(ac)) = (&block.attn, &cache.attn) {
                d_level =
                    a.backward(ac, &tape.se, &d_level, g.down[i].attn.as_mut().unwrap(), &mut d_se);
            }
            d = block
                .res
                .backward(&cache.res, &tape.temb, &d_level, &mut g.down[i].res, &mut d_temb);
        }
        let _ = self.stem.backward(&tape.x_in, &d, &mut g.stem);

        // Slice-embedding gradients land in the learned flag rows; the
        // sinusoidal part has no parameters.
        for ki in 0..k {
            let row = usize::from(tape.flags[ki]);
            for j in 0..d_se.dim().1 {
                g.flag_table[[row, j]] += d_se[[ki, j]];
            }
        }

        // Time MLP.
        let d_z1a = self.time_l2.backward(&tape.t_z1a, &d_temb, &mut g.time_l2);
        let d_z1 = ops::silu_backward(&tape.t_z1, &d_z1a);
        let _ = self.time_l1.backward(&tape.t_sin, &d_z1, &mut g.time_l1);

        g
    }

    /// Walk every parameter tensor in a fixed documented order:
    /// time MLP, flag table, stem, down blocks (finest→coarsest), mid,
    /// up blocks (coarsest→finest), output head.
    pub fn for_each_param(&self, f: &mut dyn FnMut(&str, &[usize], &[F])) {
        self.time_l1.visit("time.l1", f);
        self.time_l2.visit("time.l2", f);
        f("flag.table", self.flag_table.shape(), self.flag_table.as_slice().unwrap());
        self.stem.visit("stem", f);
        for (i, b) in self.down.iter().enumerate() {
            b.res.visit(&format!("down{i}.res"), f);
            if let Some(a) = &b.attn {
                a.visit(&format!("down{i}.attn"), f);
            }
            if let Some(d) = &b.down {
                d.visit(&format!("down{i}.down"), f);
            }
        }
        self.mid.visit("mid.res", f);
        for b in &self.up {
            let i = b.level;
            b.res.visit(&format!("up{i}.res"), f);
            if let Some(a) = &b.attn {
                a.visit(&format!("up{i}.attn"), f);
            }
            if let Some(u) = &b.up {
                u.visit(&format!("up{i}.upsample"), f);
            }
        }
        self.out_gn.visit("out.gn", f);
        self.out_conv.visit("out.conv", f);
    }

    /// Mutable variant of [`Denoiser::for_each_param`], same order.
    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut [F])) {
        self.time_l1.visit_mut("time.l1", f);
        self.time_l2.visit_mut("time.l2", f);
        f("flag.table", self.flag_table.as_slice_mut().unwrap());
        self.stem.visit_mut("stem", f);
        for (i, b) in self.down.iter_mut().enumerate() {
            b.res.visit_mut(&format!("down{i}.res"), f);
            if let Some(a) = &mut b.attn {
                a.visit_mut(&format!("down{i}.attn"), f);
            }
            if let Some(d) = &mut b.down {
                d.visit_mut(&format!("down{i}.down"), f);
            }
        }
        self.mid.visit_mut("mid.res", f);
        for b in &mut self.up {
            let i = b.level;
            b.res.visit_mut(&format!("up{i}.res"), f);
            if let Some(a) = &mut b.attn {
                a.visit_mut(&format!("up{i}.attn"), f);
            }
            if let Some(u) = &mut b.up {
                u.visit_mut(&format!("up{i}.upsample"), f);
            }
        }
        self.out_gn.visit_mut("out.gn", f);
        self.out_conv.visit_mut("out.conv", f);
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |_, _, data| n += data.len());
        n
    }

    /// Same topology, all parameters zero: the gradient/moment store.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_param_mut(&mut |_, data| data.fill(F::zero()));
        z
    }

    pub fn check_finite(&self) -> Result<()> {
        let mut bad: Option<String> = None;
        self.for_each_param(&mut |name, _, data| {
            if bad.is_none() && data.iter().any(|v| !v.is_finite()) {
                bad = Some(name.to_string());
            }
        });
        match bad {
            Some(name) => Err(Error::NonFinite { context: format!("parameter {name}") }),
            None => Ok(()),
        }
    }
}

fn split_channels<F: Scalar>(d: &Array4<F>, first: usize) -> (Array4<F>, Array4<F>) {
    let a = d.slice(ndarray::s![.., ..first, .., ..]).to_owned();
    let b = d.slice(ndarray::s![.., first.., .., ..]).to_owned();
    (a, b)
}

/// Anything that predicts per-target noise for a conditioned bundle. Lets
/// the sampler and training loop run against closed-form mock models in
/// tests.
pub trait EpsModel<F: Scalar> {
    fn predict_eps(&self, input: &ConditionedInput<F>) -> Result<Array3<F>>;
}

impl<F: Scalar> EpsModel<F> for Denoiser<F> {
    fn predict_eps(&self, input: &ConditionedInput<F>) -> Result<Array3<F>> {
        Ok(self.forward(input)?.0)
    }
}

/// Free-function form of the model call: returns one H×W noise prediction
/// per target slice.
pub fn predict_eps<F: Scalar>(
    params: &Denoiser<F>,
    input: &ConditionedInput<F>,
) -> Result<Array3<F>> {
    EpsModel::predict_eps(params, input)
}

/// Overwrite every parameter (including the deliberately zero-initialized
/// projections) with small uniform noise. Test and bench helper: a freshly
/// initialized network outputs exactly zero, which would mask wiring bugs.
pub fn randomize_params<F: Scalar, R: Rng + ?Sized>(net: &mut Denoiser<F>, rng: &mut R) {
    net.for_each_param_mut(&mut |_, data| {
        for v in data {
            *v = F::uniform_sym(rng, 0.3);
        }
    });
}
