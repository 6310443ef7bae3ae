//! The `CDPM` checkpoint container.
//!
//! One binary format carries both deliverables of training: a finished
//! model (architecture + schedule + parameters) and a full resumable
//! training state (model plus optimizer moments and the loop RNG).
//!
//! Layout, all integers little-endian:
//!
//! | offset | size        | field                                   |
//! |--------|-------------|-----------------------------------------|
//! | 0      | 4           | magic `CDPM`                            |
//! | 4      | 4           | format version (u32), currently 1       |
//! | 8      | 8           | config length `L` (u64)                 |
//! | 16     | L           | canonical JSON config block             |
//! | 16+L   | 8           | tensor count (u64)                      |
//! | …      | per tensor  | name len (u16), name, rank (u8),        |
//! |        |             | dims (rank × u64), data (f32 LE)        |
//!
//! The JSON block is canonical (sorted keys, compact), so identical
//! checkpoints are byte-identical and round-trips are bit-exact. Tensor
//! names are the parameter visit names; training states add the flat
//! optimizer moments as `adam.m` and `adam.v`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canon::canonical_json;
use crate::data::ViewAxis;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::nn::{init_denoiser, Denoiser, DenoiserConfig};
use crate::rng::RngSnapshot;
use crate::schedule::ScheduleConfig;
use crate::training::{AdamW, TrainConfig, TrainState};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CDPM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained (or initialized) model ready for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub denoiser: DenoiserConfig,
    pub schedule: ScheduleConfig,
    /// Volume axis the model slices along; fixed at training time.
    pub slicing_axis: ViewAxis,
    /// Training volume dims in model orientation (slice axis first);
    /// generated volumes take the same shape.
    pub volume_dims: [usize; 3],
    /// Optimization steps behind these parameters.
    pub trained_steps: u64,
    pub params: Denoiser<f32>,
}

/// A resumable training run: config plus full state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainCheckpoint {
    pub config: TrainConfig,
    pub slicing_axis: ViewAxis,
    /// Training volume dims in model orientation (slice axis first).
    pub volume_dims: [usize; 3],
    pub state: TrainState<f32>,
}

/// The JSON config block. `kind` discriminates the two checkpoint flavors.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum MetaBlock {
    Model {
        denoiser: DenoiserConfig,
        schedule: ScheduleConfig,
        slicing_axis: ViewAxis,
        volume_dims: [usize; 3],
        scalar: String,
        trained_steps: u64,
    },
    TrainState {
        train: TrainConfig,
        slicing_axis: ViewAxis,
        volume_dims: [usize; 3],
        scalar: String,
        step: u64,
        opt_step: u64,
        loss_count: u64,
        loss_sum: f64,
        rng: RngSnapshot,
    },
}

fn encode(meta: &MetaBlock, tensors: &[(String, Vec<usize>, &[f32])]) -> Result<Vec<u8>> {
    let cfg = canonical_json(meta)?;
    let mut out = Vec::with_capacity(64 + cfg.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    out.extend_from_slice(cfg.as_bytes());
    out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for (name, shape, data) in tensors {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(Error::Format(format!("tensor name too long: {name}")));
        }
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.push(shape.len() as u8);
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::ShapeMismatch { expected: shape.clone(), got: vec![data.len()] });
        }
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in *data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u64_usize(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64()?)
            .map_err(|_| Error::Format(format!("{what} does not fit in memory")))
    }
}

type TensorMap = BTreeMap<String, (Vec<usize>, Vec<f32>)>;

fn decode(bytes: &[u8]) -> Result<(MetaBlock, TensorMap)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a CDPM checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let cfg_len = r.u64_usize("config block")?;
    let cfg = std::str::from_utf8(r.take(cfg_len)?)
        .map_err(|_| Error::Format("config block is not UTF-8".into()))?;
    let meta: MetaBlock = serde_json::from_str(cfg)?;
    let n_tensors = r.u64_usize("tensor count")?;
    let mut tensors = TensorMap::new();
    for _ in 0..n_tensors {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64_usize("tensor dimension")?);
        }
        let len: usize = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(
            || Error::Format(format!("tensor {name} has an overflowing shape")),
        )?;
        let raw = r.take(len * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if tensors.insert(name.clone(), (shape, data)).is_some() {
            return Err(Error::Format(format!("duplicate tensor {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    Ok((meta, tensors))
}

fn param_tensors(params: &Denoiser<f32>) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    let mut out = Vec::new();
    params.for_each_param(&mut |name, shape, data| {
        out.push((name.to_string(), shape.to_vec(), data.to_vec()));
    });
    out
}

/// Rebuild a parameter set from named tensors; every parameter must be
/// present with its exact shape, and no tensor may be left over.
fn params_from_tensors(config: &DenoiserConfig, tensors: &mut TensorMap) -> Result<Denoiser<f32>> {
    let mut params = init_denoiser::<f32>(config, 0)?;
    let mut err: Option<Error> = None;
    params.for_each_param_mut(&mut |name, data| {
        if err.is_some() {
            return;
        }
        match tensors.remove(name) {
            Some((_, values)) if values.len() == data.len() => data.copy_from_slice(&values),
            Some((shape, _)) => {
                err = Some(Error::Format(format!(
                    "tensor {name} has shape {shape:?}, which does not match the architecture"
                )))
            }
            None => err = Some(Error::Format(format!("checkpoint is missing tensor {name}"))),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(params)
}

fn reject_leftovers(tensors: &TensorMap) -> Result<()> {
    if let Some(name) = tensors.keys().next() {
        return Err(Error::Format(format!("checkpoint has unexpected tensor {name}")));
    }
    Ok(())
}

/// Serialize a model checkpoint to bytes.
pub fn model_to_bytes(ckpt: &ModelCheckpoint) -> Result<Vec<u8>> {
    ckpt.denoiser.validate()?;
    let meta = MetaBlock::Model {
        denoiser: ckpt.denoiser.clone(),
        schedule: ckpt.schedule.clone(),
        slicing_axis: ckpt.slicing_axis,
        volume_dims: ckpt.volume_dims,
        scalar: "f32".into(),
        trained_steps: ckpt.trained_steps,
    };
    let owned = param_tensors(&ckpt.params);
    let view: Vec<(String, Vec<usize>, &[f32])> =
        owned.iter().map(|(n, s, d)| (n.clone(), s.clone(), d.as_slice())).collect();
    encode(&meta, &view)
}

/// Deserialize a model checkpoint (also accepts a training-state file,
/// extracting the model half).
pub fn model_from_bytes(bytes: &[u8]) -> Result<ModelCheckpoint> {
    let (meta, mut tensors) = decode(bytes)?;
    match meta {
        MetaBlock::Model { denoiser, schedule, slicing_axis, volume_dims, scalar, trained_steps } => {
            check_scalar(&scalar)?;
            let params = params_from_tensors(&denoiser, &mut tensors)?;
            reject_leftovers(&tensors)?;
            Ok(ModelCheckpoint {
                denoiser,
                schedule,
                slicing_axis,
                volume_dims,
                trained_steps,
                params,
            })
        }
        MetaBlock::TrainState { .. } => {
            let t = train_state_from_bytes(bytes)?;
            Ok(ModelCheckpoint {
                denoiser: t.config.denoiser.clone(),
                schedule: t.config.schedule.clone(),
                slicing_axis: t.slicing_axis,
                volume_dims: t.volume_dims,
                trained_steps: t.state.step as u64,
                params: t.state.params,
            })
        }
    }
}

/// Serialize a full training state.
pub fn train_state_to_bytes(ckpt: &TrainCheckpoint) -> Result<Vec<u8>> {
    ckpt.config.validate()?;
    let (m, v) = ckpt.state.opt.moments();
    let meta = MetaBlock::TrainState {
        train: ckpt.config.clone(),
        slicing_axis: ckpt.slicing_axis,
        volume_dims: ckpt.volume_dims,
        scalar: "f32".into(),
        step: ckpt.state.step as u64,
        opt_step: ckpt.state.opt.step_count(),
        loss_count: ckpt.state.loss_count,
        loss_sum: ckpt.state.loss_sum,
        rng: RngSnapshot::from(&ckpt.state.rng),
    };
    let mut owned = param_tensors(&ckpt.state.params);
    owned.push(("adam.m".into(), vec![m.len()], m.to_vec()));
    owned.push(("adam.v".into(), vec![v.len()], v.to_vec()));
    let view: Vec<(String, Vec<usize>, &[f32])> =
        owned.iter().map(|(n, s, d)| (n.clone(), s.clone(), d.as_slice())).collect();
    encode(&meta, &view)
}

/// Deserialize a full training state.
pub fn train_state_from_bytes(bytes: &[u8]) -> Result<TrainCheckpoint> {
    let (meta, mut tensors) = decode(bytes)?;
    let MetaBlock::TrainState {
        train,
        slicing_axis,
        volume_dims,
        scalar,
        step,
        opt_step,
        loss_count,
        loss_sum,
        rng,
    } = meta
    else {
        return Err(Error::Format(
            "checkpoint is a bare model, not a resumable training state".into(),
        ));
    };
    check_scalar(&scalar)?;
    let m = take_flat(&mut tensors, "adam.m")?;
    let v = take_flat(&mut tensors, "adam.v")?;
    let params = params_from_tensors(&train.denoiser, &mut tensors)?;
    reject_leftovers(&tensors)?;
    if m.len() != params.param_count() {
        return Err(Error::ShapeMismatch {
            expected: vec![params.param_count()],
            got: vec![m.len()],
        });
    }
    let opt = AdamW::from_parts(m, v, opt_step)?;
    Ok(TrainCheckpoint {
        config: train,
        slicing_axis,
        volume_dims,
        state: TrainState {
            params,
            opt,
            step: step as usize,
            rng: rng.restore(),
            loss_count,
            loss_sum,
        },
    })
}

fn check_scalar(scalar: &str) -> Result<()> {
    if scalar != "f32" {
        return Err(Error::Format(format!("unsupported checkpoint scalar type {scalar}")));
    }
    Ok(())
}

fn take_flat(tensors: &mut TensorMap, name: &str) -> Result<Vec<f32>> {
    let (shape, data) =
        tensors.remove(name).ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
    if shape.len() != 1 {
        return Err(Error::Format(format!("tensor {name} must be flat, got shape {shape:?}")));
    }
    Ok(data)
}

pub fn save_model(path: &Path, ckpt: &ModelCheckpoint) -> Result<()> {
    write_atomic(path, &model_to_bytes(ckpt)?)
}

pub fn load_model(path: &Path) -> Result<ModelCheckpoint> {
    model_from_bytes(&std::fs::read(path)?)
}

pub fn save_train_state(path: &Path, ckpt: &TrainCheckpoint) -> Result<()> {
    write_atomic(path, &train_state_to_bytes(ckpt)?)
}

pub fn load_train_state(path: &Path) -> Result<TrainCheckpoint> {
    train_state_from_bytes(&std::fs::read(path)?)
}

/// Human-facing checkpoint summary for the `inspect` command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointInfo {
    pub version: u32,
    /// "model" or "train_state".
    pub kind: String,
    pub param_count: usize,
    pub tensor_count: usize,
    /// The embedded canonical JSON config block, verbatim.
    pub config_json: String,
}

/// Read metadata without reconstructing the network.
pub fn inspect_bytes(bytes: &[u8]) -> Result<CheckpointInfo> {
    let (meta, tensors) = decode(bytes)?;
    let (kind, denoiser) = match &meta {
        MetaBlock::Model { denoiser, .. } => ("model", denoiser),
        MetaBlock::TrainState { train, .. } => ("train_state", &train.denoiser),
    };
    let param_count = init_denoiser::<f32>(denoiser, 0)?.param_count();
    Ok(CheckpointInfo {
        version: CHECKPOINT_VERSION,
        kind: kind.into(),
        param_count,
        tensor_count: tensors.len(),
        config_json: canonical_json(&meta)?,
    })
}

pub fn inspect(path: &Path) -> Result<CheckpointInfo> {
    inspect_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::randomize_params;
    use crate::rng::substream;
    use crate::schedule::VarianceMode;
    use crate::slices::SamplerPolicy;
    use crate::training::{resume, train};
    use ndarray::Array3;
    use std::collections::BTreeSet;

    fn tiny_config() -> DenoiserConfig {
        DenoiserConfig {
            base_channels: 4,
            channel_mults: vec![1, 2],
            attn_levels: BTreeSet::from([1]),
            num_heads: 2,
            time_embed_dim: 8,
            slice_embed_dim: 8,
            max_depth: 8,
            max_bundle: 4,
            in_channels: 2,
        }
    }

    fn model_checkpoint(seed: u64) -> ModelCheckpoint {
        let mut params = init_denoiser::<f32>(&tiny_config(), seed).unwrap();
        randomize_params(&mut params, &mut substream(seed, "ckpt"));
        ModelCheckpoint {
            denoiser: tiny_config(),
            schedule: ScheduleConfig { t_steps: 10, ..ScheduleConfig::default() },
            slicing_axis: ViewAxis::Axial,
            volume_dims: [8, 8, 8],
            trained_steps: 123,
            params,
        }
    }

    #[test]
    fn header_layout_is_stable() {
        let bytes = model_to_bytes(&model_checkpoint(1)).unwrap();
        assert_eq!(&bytes[0..4], b"CDPM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let cfg_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let cfg = std::str::from_utf8(&bytes[16..16 + cfg_len]).unwrap();
        let v: serde_json::Value = serde_json::from_str(cfg).unwrap();
        assert_eq!(v["kind"], "model");
        assert_eq!(v["scalar"], "f32");
        assert_eq!(v["trained_steps"], 123);
        // Canonical block: re-serializing the parsed value is the identity.
        assert_eq!(serde_json::to_string(&v).unwrap(), cfg);
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let ckpt = model_checkpoint(2);
        let bytes = model_to_bytes(&ckpt).unwrap();
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        // Writer is deterministic: same checkpoint, same bytes.
        assert_eq!(model_to_bytes(&back).unwrap(), bytes);
    }

    fn tiny_train_config() -> TrainConfig {
        TrainConfig {
            iterations: 10,
            batch_size: 2,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            grad_clip: None,
            checkpoint_every: 0,
            seed: 5,
            schedule: ScheduleConfig {
                t_steps: 8,
                beta_start: 1e-3,
                beta_end: 0.1,
                variance_mode: VarianceMode::Beta,
            },
            policy: SamplerPolicy { tau_max: 4, ..SamplerPolicy::default() },
            denoiser: tiny_config(),
        }
    }

    fn tiny_dataset() -> Vec<crate::data::Volume> {
        let mut rng = substream(6, "ckpt-data");
        (0..3)
            .map(|_| {
                crate::data::Volume::new(Array3::from_shape_fn((8, 8, 8), |_| {
                    rand::Rng::random_range(&mut rng, 0.0..=1.0)
                }))
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn training_resumes_bit_exactly_through_disk() {
        let full_cfg = tiny_train_config();
        let half_cfg = TrainConfig { iterations: 5, ..full_cfg.clone() };
        let data = tiny_dataset();

        let direct = train(&full_cfg, &data, &mut ()).unwrap();

        let half = train(&half_cfg, &data, &mut ()).unwrap();
        let ckpt = TrainCheckpoint {
            config: full_cfg.clone(),
            slicing_axis: ViewAxis::Axial,
            volume_dims: [8, 8, 8],
            state: half,
        };
        let bytes = train_state_to_bytes(&ckpt).unwrap();
        let mut restored = train_state_from_bytes(&bytes).unwrap();
        assert_eq!(restored, ckpt);

        resume(&mut restored.state, &full_cfg, &data, &mut ()).unwrap();
        assert_eq!(restored.state.params, direct.params);
        assert_eq!(restored.state.opt, direct.opt);
        assert_eq!(restored.state.rng, direct.rng);
    }

    #[test]
    fn model_view_of_a_train_state_extracts_params() {
        let cfg = tiny_train_config();
        let data = tiny_dataset();
        let state = train(&cfg, &data, &mut ()).unwrap();
        let params = state.params.clone();
        let step = state.step;
        let ckpt = TrainCheckpoint {
            config: cfg.clone(),
            slicing_axis: ViewAxis::Coronal,
            volume_dims: [8, 8, 8],
            state,
        };
        let bytes = train_state_to_bytes(&ckpt).unwrap();
        let model = model_from_bytes(&bytes).unwrap();
        assert_eq!(model.params, params);
        assert_eq!(model.trained_steps, step as u64);
        assert_eq!(model.slicing_axis, ViewAxis::Coronal);
        assert_eq!(model.schedule, cfg.schedule);
    }

    #[test]
    fn inspect_reports_kind_version_and_parameter_count() {
        let ckpt = model_checkpoint(3);
        let bytes = model_to_bytes(&ckpt).unwrap();
        let info = inspect_bytes(&bytes).unwrap();
        assert_eq!(info.kind, "model");
        assert_eq!(info.version, 1);
        assert_eq!(info.param_count, ckpt.params.param_count());
        assert_eq!(info.tensor_count, info_tensor_count(&ckpt));
        assert!(info.config_json.contains("\"slicing_axis\""));
    }

    fn info_tensor_count(ckpt: &ModelCheckpoint) -> usize {
        let mut n = 0;
        ckpt.params.for_each_param(&mut |_, _, _| n += 1);
        n
    }

    #[test]
    fn corrupted_files_are_rejected_with_format_errors() {
        let good = model_to_bytes(&model_checkpoint(4)).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(model_from_bytes(&bad_magic), Err(Error::Format(_))));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(model_from_bytes(&bad_version), Err(Error::Format(_))));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(model_from_bytes(truncated), Err(Error::Format(_))));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(model_from_bytes(&trailing), Err(Error::Format(_))));

        // A model file is not a resumable state.
        assert!(matches!(train_state_from_bytes(&good), Err(Error::Format(_))));
    }

    #[test]
    fn architecture_mismatches_are_rejected() {
        // Tensors of the narrow network under a config claiming a wider one:
        // encoding can't know, but decoding must detect the shape clash.
        let mut spliced = model_checkpoint(5);
        spliced.denoiser.base_channels = 8;
        spliced.denoiser.max_bundle = 4;
        let bad_bytes = model_to_bytes(&spliced).unwrap();
        assert!(matches!(model_from_bytes(&bad_bytes), Err(Error::Format(_))));
    }

    #[test]
    fn missing_and_unexpected_tensors_are_rejected() {
        let good = model_to_bytes(&model_checkpoint(6)).unwrap();
        let n_off = 16 + u64::from_le_bytes(good[8..16].try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(good[n_off..n_off + 8].try_into().unwrap());

        // Drop the trailing tensor by lowering the count and truncating at
        // the last tensor's header.
        let mut last_start = n_off + 8;
        for _ in 0..n - 1 {
            let name_len =
                u16::from_le_bytes(good[last_start..last_start + 2].try_into().unwrap()) as usize;
            let rank = good[last_start + 2 + name_len] as usize;
            let dims_at = last_start + 2 + name_len + 1;
            let len: usize = (0..rank)
                .map(|i| {
                    u64::from_le_bytes(
                        good[dims_at + 8 * i..dims_at + 8 * (i + 1)].try_into().unwrap(),
                    ) as usize
                })
                .product();
            last_start = dims_at + 8 * rank + 4 * len;
        }
        let mut missing = good[..last_start].to_vec();
        missing[n_off..n_off + 8].copy_from_slice(&(n - 1).to_le_bytes());
        let err = model_from_bytes(&missing).unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("missing tensor")), "{err}");

        // Append an extra flat tensor and raise the count.
        let mut extra = good.clone();
        extra[n_off..n_off + 8].copy_from_slice(&(n + 1).to_le_bytes());
        extra.extend_from_slice(&(5u16).to_le_bytes());
        extra.extend_from_slice(b"bogus");
        extra.push(1);
        extra.extend_from_slice(&2u64.to_le_bytes());
        extra.extend_from_slice(&1.0f32.to_le_bytes());
        extra.extend_from_slice(&2.0f32.to_le_bytes());
        let err = model_from_bytes(&extra).unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("bogus")), "{err}");
    }
}
