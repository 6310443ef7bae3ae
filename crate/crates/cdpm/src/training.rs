//! Noise-prediction training.
//!
//! One training draw picks condition/target index sets, a diffusion step t,
//! and Gaussian noise for the targets, assembles the conditioned bundle,
//! and scores the network by mean squared error between predicted and true
//! noise — averaged over target elements so the loss scale is independent
//! of how many slices were drawn. The optimizer is the standard
//! decoupled-weight-decay adaptive-moment method.
//!
//! The step loop is deterministic and resumable: a single named RNG
//! substream drives every draw in a documented order (volume index, index
//! sets, t, noise — per batch slot, in sequence), its state lives in
//! [`TrainState`], and serializing/restoring that state reproduces the
//! remaining steps bit-exactly on the same platform. The dataset is
//! reordered internally by content digest, so the caller's list order
//! (e.g. directory listing order) never affects results.

use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{volume_to_bytes, Volume};
use crate::error::{Error, Result};
use crate::nn::{init_denoiser, Denoiser, EpsModel};
use crate::rng::{substream, CdpmRng};
use crate::scalar::Scalar;
use crate::schedule::{forward_sample, NoiseSchedule, ScheduleConfig};
use crate::slices::{
    assemble_subvolume, gather_slices, sample_index_sets, ConditionedInput, IndexSets,
    SamplerPolicy,
};
use crate::nn::DenoiserConfig;

/// First-moment decay of the optimizer.
pub const ADAM_BETA1: f64 = 0.9;
/// Second-moment decay of the optimizer.
pub const ADAM_BETA2: f64 = 0.999;
/// Denominator stabilizer of the optimizer.
pub const ADAM_EPS: f64 = 1e-8;

/// Everything one training run needs, serializable as the config file the
/// CLI consumes and echoes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Optimization steps to run in total.
    pub iterations: usize,
    /// Volume draws averaged into each step's gradient.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Decoupled weight decay, applied uniformly to all parameters.
    pub weight_decay: f64,
    /// Optional global-norm gradient clip.
    pub grad_clip: Option<f64>,
    /// Emit an intermediate checkpoint every this many steps (0 = never).
    pub checkpoint_every: usize,
    /// Root seed; initialization and the step loop use named substreams.
    pub seed: u64,
    pub schedule: ScheduleConfig,
    pub policy: SamplerPolicy,
    pub denoiser: DenoiserConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            batch_size: 3,
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            grad_clip: None,
            checkpoint_every: 0,
            seed: 0,
            schedule: ScheduleConfig::default(),
            policy: SamplerPolicy::default(),
            denoiser: DenoiserConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight_decay must be non-negative".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidConfig("grad_clip must be positive".into()));
            }
        }
        self.schedule.build()?;
        self.policy.validate()?;
        self.denoiser.validate()?;
        if self.policy.tau_max > self.denoiser.max_bundle {
            return Err(Error::InvalidConfig(format!(
                "slice budget {} exceeds the network's bundle capacity {}",
                self.policy.tau_max, self.denoiser.max_bundle
            )));
        }
        Ok(())
    }
}

/// One (C, P, t, ε) draw: everything random about a single loss evaluation,
/// separated from the evaluation itself so tests can pin the draw.
#[derive(Debug, Clone)]
pub struct LossSample<F> {
    pub sets: IndexSets,
    pub t: usize,
    /// One standard-normal map per target slice, ascending index order.
    pub eps: Array3<F>,
}

/// Draw the random inputs of one loss evaluation. Draw order, documented
/// and stable: index sets first, then t uniform over 0..T, then ε in
/// slice-major row-major order.
pub fn sample_loss_inputs<F: Scalar>(
    policy: &SamplerPolicy,
    sched: &NoiseSchedule,
    dims: (usize, usize, usize),
    rng: &mut CdpmRng,
) -> Result<LossSample<F>> {
    let (depth, h, w) = dims;
    let sets = sample_index_sets(policy, depth, rng)?;
    let t = rng.random_range(0..sched.len());
    let mut eps = Array3::zeros((sets.target().len(), h, w));
    for v in eps.iter_mut() {
        *v = F::std_normal(rng);
    }
    Ok(LossSample { sets, t, eps })
}

/// Assemble the network input for a draw: clean condition slices from the
/// volume, target slices noised to step t in closed form.
pub fn conditioned_input_for<F: Scalar>(
    volume: &Array3<F>,
    sample: &LossSample<F>,
    sched: &NoiseSchedule,
) -> Result<ConditionedInput<F>> {
    let x0 = gather_slices(volume, sample.sets.target())?;
    let x_t = forward_sample(&x0, sample.t, &sample.eps, sched)?;
    let cond_map = sample
        .sets
        .cond()
        .iter()
        .map(|&i| (i, volume.index_axis(ndarray::Axis(0), i).to_owned()))
        .collect();
    assemble_subvolume(&cond_map, &sample.sets, &x_t, sample.t)
}

/// Mean squared error between predicted and true noise, accumulated in f64
/// over all target elements.
pub fn eps_mse<F: Scalar>(pred: &Array3<F>, eps: &Array3<F>) -> Result<f64> {
    if pred.dim() != eps.dim() {
        return Err(Error::ShapeMismatch {
            expected: eps.shape().to_vec(),
            got: pred.shape().to_vec(),
        });
    }
    let n = pred.len() as f64;
    let sum: f64 = pred
        .iter()
        .zip(eps.iter())
        .map(|(&p, &e)| {
            let d = (p - e).to_f64();
            d * d
        })
        .sum();
    Ok(sum / n)
}

/// Loss of an arbitrary noise predictor on a pinned draw — no gradients.
/// This is what mock models and ablation comparisons run against.
pub fn model_loss<F: Scalar, M: EpsModel<F>>(
    model: &M,
    volume: &Array3<F>,
    sample: &LossSample<F>,
    sched: &NoiseSchedule,
) -> Result<f64> {
    let input = conditioned_input_for(volume, sample, sched)?;
    let pred = model.predict_eps(&input)?;
    eps_mse(&pred, &sample.eps)
}

/// A loss evaluation with parameter gradients and the draw's metadata.
pub struct LossDraw<F> {
    pub loss: f64,
    pub grads: Denoiser<F>,
    pub len_c: usize,
    pub len_p: usize,
    pub t: usize,
}

/// Loss and gradients of the network on a pinned draw.
pub fn loss_and_grads<F: Scalar>(
    params: &Denoiser<F>,
    volume: &Array3<F>,
    sample: &LossSample<F>,
    sched: &NoiseSchedule,
) -> Result<LossDraw<F>> {
    let input = conditioned_input_for(volume, sample, sched)?;
    let (pred, tape) = params.forward(&input)?;
    let loss = eps_mse(&pred, &sample.eps)?;
    // d/dpred of mean((pred − ε)²) = 2(pred − ε)/N.
    let scale = F::from_f64(2.0 / pred.len() as f64);
    let mut d_sel = pred;
    d_sel.zip_mut_with(&sample.eps, |p, &e| *p = (*p - e) * scale);
    let grads = params.backward(&tape, &d_sel);
    Ok(LossDraw {
        loss,
        grads,
        len_c: sample.sets.cond().len(),
        len_p: sample.sets.target().len(),
        t: sample.t,
    })
}

/// Draw (C, P, t, ε) from `rng` and evaluate loss plus gradients on one
/// volume.
pub fn diffusion_loss<F: Scalar>(
    params: &Denoiser<F>,
    volume: &Array3<F>,
    sched: &NoiseSchedule,
    policy: &SamplerPolicy,
    rng: &mut CdpmRng,
) -> Result<LossDraw<F>> {
    let (d, h, w) = volume.dim();
    let sample = sample_loss_inputs(policy, sched, (d, h, w), rng)?;
    loss_and_grads(params, volume, &sample, sched)
}

/// Flatten every parameter tensor into one vector, visit order.
pub fn flatten_params<F: Scalar>(net: &Denoiser<F>, out: &mut Vec<F>) {
    out.clear();
    net.for_each_param(&mut |_, _, data| out.extend_from_slice(data));
}

/// Euclidean norm of a flat gradient, accumulated in f64.
pub fn global_grad_norm<F: Scalar>(grad: &[F]) -> f64 {
    grad.iter()
        .map(|&g| {
            let x = g.to_f64();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Scale `grad` down so its global norm is at most `max_norm`; returns the
/// pre-clip norm.
pub fn clip_global_norm<F: Scalar>(grad: &mut [F], max_norm: f64) -> f64 {
    let norm = global_grad_norm(grad);
    if norm > max_norm {
        let s = F::from_f64(max_norm / norm);
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}

/// Decoupled-weight-decay adaptive-moment optimizer state: flat first and
/// second moments in parameter visit order, plus the update count for bias
/// correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<F> {
    m: Vec<F>,
    v: Vec<F>,
    step: u64,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(param_count: usize) -> Self {
        Self { m: vec![F::zero(); param_count], v: vec![F::zero(); param_count], step: 0 }
    }

    /// Reassemble from checkpointed pieces.
    pub fn from_parts(m: Vec<F>, v: Vec<F>, step: u64) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::ShapeMismatch { expected: vec![m.len()], got: vec![v.len()] });
        }
        Ok(Self { m, v, step })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[F], &[F]) {
        (&self.m, &self.v)
    }

    /// Apply one update with the given flat gradient (visit order). The
    /// per-element arithmetic runs in f64 and casts back once.
    pub fn update(
        &mut self,
        params: &mut Denoiser<F>,
        grad: &[F],
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if grad.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.m.len()],
                got: vec![grad.len()],
            });
        }
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        let mut pos = 0usize;
        let (m, v) = (&mut self.m, &mut self.v);
        params.for_each_param_mut(&mut |_, data| {
            for p in data.iter_mut() {
                let g = grad[pos].to_f64();
                let mi = ADAM_BETA1 * m[pos].to_f64() + (1.0 - ADAM_BETA1) * g;
                let vi = ADAM_BETA2 * v[pos].to_f64() + (1.0 - ADAM_BETA2) * g * g;
                m[pos] = F::from_f64(mi);
                v[pos] = F::from_f64(vi);
                let update = (mi / bc1) / ((vi / bc2).sqrt() + ADAM_EPS);
                let pv = p.to_f64();
                *p = F::from_f64(pv - lr * (update + weight_decay * pv));
                pos += 1;
            }
        });
        Ok(())
    }
}

/// Full resumable training state. Serializing this (the checkpoint module
/// handles the container) and restoring it reproduces the remaining steps
/// bit-exactly on the same platform.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<F> {
    pub params: Denoiser<F>,
    pub opt: AdamW<F>,
    /// Completed optimization steps.
    pub step: usize,
    /// The loop's RNG, advanced in the documented draw order.
    pub rng: CdpmRng,
    /// Running statistics: draws-averaged loss summed over steps.
    pub loss_count: u64,
    pub loss_sum: f64,
}

/// One loss-log line: a single volume draw within a step.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    pub step: usize,
    pub loss: f64,
    pub len_c: usize,
    pub len_p: usize,
    pub t: usize,
}

/// Header of the CSV loss log.
pub const LOSS_CSV_HEADER: &str = "step,loss,len_c,len_p,t";

impl LossRow {
    /// One CSV line (no trailing newline); floats print in shortest
    /// round-trippable form.
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{},{}", self.step, self.loss, self.len_c, self.len_p, self.t)
    }
}

/// Receives loss rows and intermediate checkpoints as training runs.
pub trait TrainSink {
    fn on_row(&mut self, row: &LossRow) -> Result<()>;
    fn on_checkpoint(&mut self, state: &TrainState<f32>) -> Result<()>;
}

/// Discards everything.
impl TrainSink for () {
    fn on_row(&mut self, _row: &LossRow) -> Result<()> {
        Ok(())
    }
    fn on_checkpoint(&mut self, _state: &TrainState<f32>) -> Result<()> {
        Ok(())
    }
}

/// Collects rows and checkpoint step numbers in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub rows: Vec<LossRow>,
    pub checkpoint_steps: Vec<usize>,
}

impl TrainSink for MemorySink {
    fn on_row(&mut self, row: &LossRow) -> Result<()> {
        self.rows.push(row.clone());
        Ok(())
    }
    fn on_checkpoint(&mut self, state: &TrainState<f32>) -> Result<()> {
        self.checkpoint_steps.push(state.step);
        Ok(())
    }
}

/// Fresh state at step 0: seeded parameter init, zero moments, and the
/// loop's RNG substream.
pub fn init_train_state(config: &TrainConfig) -> Result<TrainState<f32>> {
    config.validate()?;
    let params = init_denoiser::<f32>(&config.denoiser, config.seed)?;
    let n = params.param_count();
    Ok(TrainState {
        params,
        opt: AdamW::new(n),
        step: 0,
        rng: substream(config.seed, "train-loop"),
        loss_count: 0,
        loss_sum: 0.0,
    })
}

/// Validate the dataset and return voxel arrays in canonical order: sorted
/// by content digest, so the caller's list order is irrelevant.
fn canonical_volumes(dataset: &[Volume], config: &TrainConfig) -> Result<Vec<Array3<f32>>> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training dataset".into()));
    }
    let dims = dataset[0].dims();
    let div = config.denoiser.spatial_divisor();
    if dims.0 > config.denoiser.max_depth {
        return Err(Error::InvalidConfig(format!(
            "volume depth {} exceeds the network's max_depth {}",
            dims.0, config.denoiser.max_depth
        )));
    }
    if dims.1 % div != 0 || dims.2 % div != 0 {
        return Err(Error::InvalidConfig(format!(
            "volume size {}x{} must be divisible by {div}",
            dims.1, dims.2
        )));
    }
    let mut keyed: Vec<([u8; 32], usize)> = Vec::with_capacity(dataset.len());
    for (i, v) in dataset.iter().enumerate() {
        if v.dims() != dims {
            return Err(Error::ShapeMismatch {
                expected: vec![dims.0, dims.1, dims.2],
                got: vec![v.dims().0, v.dims().1, v.dims().2],
            });
        }
        if v.voxels().iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidConfig(format!(
                "volume {i} has intensities outside [0,1]; normalize first"
            )));
        }
        keyed.push((Sha256::digest(volume_to_bytes(v)).into(), i));
    }
    keyed.sort();
    Ok(keyed.into_iter().map(|(_, i)| dataset[i].voxels().clone()).collect())
}

/// Continue training `state` until `config.iterations` steps are complete.
///
/// Per step, for each batch slot in order: draw a volume index, then the
/// loss inputs, evaluate loss and gradients, and log a row. Gradients are
/// averaged over the batch, optionally clipped, and applied once.
pub fn resume<S: TrainSink>(
    state: &mut TrainState<f32>,
    config: &TrainConfig,
    dataset: &[Volume],
    sink: &mut S,
) -> Result<()> {
    config.validate()?;
    let vols = canonical_volumes(dataset, config)?;
    let sched = config.schedule.build()?;
    let dims = (vols[0].dim().0, vols[0].dim().1, vols[0].dim().2);
    let n_params = state.params.param_count();
    let mut gsum = vec![0f32; n_params];
    let mut gtmp: Vec<f32> = Vec::with_capacity(n_params);

    while state.step < config.iterations {
        gsum.fill(0.0);
        let mut batch_loss = 0.0f64;
        for _ in 0..config.batch_size {
            let idx = state.rng.random_range(0..vols.len());
            let sample = sample_loss_inputs::<f32>(&config.policy, &sched, dims, &mut state.rng)?;
            let (len_c, len_p, t) =
                (sample.sets.cond().len(), sample.sets.target().len(), sample.t);
            let draw = match loss_and_grads(&state.params, &vols[idx], &sample, &sched) {
                Ok(d) => d,
                Err(Error::NonFinite { .. }) => {
                    return Err(Error::NonFiniteLoss { step: state.step, t, len_c, len_p })
                }
                Err(e) => return Err(e),
            };
            if !draw.loss.is_finite() {
                return Err(Error::NonFiniteLoss { step: state.step, t, len_c, len_p });
            }
            flatten_params(&draw.grads, &mut gtmp);
            for (a, b) in gsum.iter_mut().zip(&gtmp) {
                *a += b;
            }
            batch_loss += draw.loss;
            sink.on_row(&LossRow { step: state.step, loss: draw.loss, len_c, len_p, t })?;
        }
        let inv_b = 1.0 / config.batch_size as f32;
        for gi in gsum.iter_mut() {
            *gi *= inv_b;
        }
        if let Some(c) = config.grad_clip {
            clip_global_norm(&mut gsum, c);
        }
        state.opt.update(&mut state.params, &gsum, config.learning_rate, config.weight_decay)?;
        state.params.check_finite()?;
        state.step += 1;
        state.loss_sum += batch_loss / config.batch_size as f64;
        state.loss_count += 1;
        if config.checkpoint_every > 0
            && state.step % config.checkpoint_every == 0
            && state.step < config.iterations
        {
            sink.on_checkpoint(state)?;
        }
    }
    Ok(())
}

/// Train from scratch: initialize, then [`resume`] to `config.iterations`.
/// Returns the final state; the caller writes the final checkpoint.
pub fn train<S: TrainSink>(
    config: &TrainConfig,
    dataset: &[Volume],
    sink: &mut S,
) -> Result<TrainState<f32>> {
    let mut state = init_train_state(config)?;
    resume(&mut state, config, dataset, sink)?;
    Ok(state)
}
