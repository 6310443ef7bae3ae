//! `cdpm train` — fit the denoiser on a directory of volumes, logging losses
//! to CSV and writing resumable checkpoints.

use std::path::{Path, PathBuf};

use cdpm::checkpoint::{
    load_train_state, save_model, save_train_state, ModelCheckpoint, TrainCheckpoint,
};
use cdpm::data::{to_slicing_orientation, ViewAxis, Volume};
use cdpm::fsutil::write_atomic;
use cdpm::training::{
    init_train_state, resume, LossRow, TrainConfig, TrainSink, TrainState, LOSS_CSV_HEADER,
};
use cdpm::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::common::{at_path, ensure_out_dir, load_config, load_volume_dir, require, write_config_echo};

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Run config as JSON (see docs/configuration.md). Flags below override
    /// individual fields.
    #[arg(long)]
    config: PathBuf,
    /// Directory of training volumes (.vol); overrides the config file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Total optimization steps to reach; overrides the config file.
    #[arg(long)]
    iterations: Option<usize>,
    /// Root seed for init and the training loop; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Resume from a training-state checkpoint instead of initializing;
    /// overrides the config file.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Output directory: resolved config echo, loss.csv, and checkpoints.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainRunConfig {
    /// Directory of training volumes.
    data: Option<PathBuf>,
    /// Continue from this training-state checkpoint when set.
    resume: Option<PathBuf>,
    /// Axis the model slices along; volumes are reoriented so it leads.
    slicing_axis: ViewAxis,
    train: TrainConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            data: None,
            resume: None,
            slicing_axis: ViewAxis::Axial,
            train: TrainConfig::default(),
        }
    }
}

/// Streams loss rows into an in-memory CSV and writes periodic checkpoints;
/// both land in the output directory atomically.
struct DiskSink<'a> {
    out: &'a Path,
    csv: String,
    config: &'a TrainConfig,
    slicing_axis: ViewAxis,
    volume_dims: [usize; 3],
}

impl DiskSink<'_> {
    fn write_csv(&self) -> Result<()> {
        write_atomic(&self.out.join("loss.csv"), self.csv.as_bytes())
    }
}

impl TrainSink for DiskSink<'_> {
    fn on_row(&mut self, row: &LossRow) -> Result<()> {
        self.csv.push_str(&row.csv_line());
        self.csv.push('\n');
        Ok(())
    }

    fn on_checkpoint(&mut self, state: &TrainState<f32>) -> Result<()> {
        let ckpt = TrainCheckpoint {
            config: self.config.clone(),
            slicing_axis: self.slicing_axis,
            volume_dims: self.volume_dims,
            state: state.clone(),
        };
        let name = format!("checkpoint_{:06}.cdpm", state.step);
        save_train_state(&self.out.join(name), &ckpt)?;
        // Keep the loss log current with the checkpoint it accompanies.
        self.write_csv()
    }
}

/// The resumed checkpoint must describe the same run: identical config apart
/// from the step target, same slicing axis, same volume shape.
fn check_resumable(
    ckpt: &TrainCheckpoint,
    cfg: &TrainRunConfig,
    dims: [usize; 3],
    path: &Path,
) -> Result<()> {
    let mut aligned = ckpt.config.clone();
    aligned.iterations = cfg.train.iterations;
    if aligned != cfg.train || ckpt.slicing_axis != cfg.slicing_axis {
        return Err(Error::InvalidConfig(format!(
            "{}: checkpoint was trained with a different config; \
             resume only continues the identical run (iterations may differ)",
            path.display()
        )));
    }
    if ckpt.volume_dims != dims {
        return Err(Error::InvalidConfig(format!(
            "{}: checkpoint was trained on {:?} volumes but the dataset is {:?}",
            path.display(),
            ckpt.volume_dims,
            dims
        )));
    }
    Ok(())
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut cfg: TrainRunConfig = load_config(Some(&args.config))?;
    if let Some(data) = args.data {
        cfg.data = Some(data);
    }
    if let Some(resume_from) = args.resume {
        cfg.resume = Some(resume_from);
    }
    if let Some(iterations) = args.iterations {
        cfg.train.iterations = iterations;
    }
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    cfg.train.validate()?;
    let data_dir = require(cfg.data.as_deref(), "training data", "--data")?;

    let volumes: Vec<Volume> = load_volume_dir(data_dir)?
        .into_iter()
        .map(|v| Volume::new(to_slicing_orientation(v.voxels(), cfg.slicing_axis)))
        .collect::<Result<_>>()?;
    let (d, h, w) = volumes[0].dims();
    let volume_dims = [d, h, w];

    let mut state = match cfg.resume.as_deref() {
        Some(path) => {
            let ckpt = load_train_state(path).map_err(|e| at_path(e, path))?;
            check_resumable(&ckpt, &cfg, volume_dims, path)?;
            ckpt.state
        }
        None => init_train_state(&cfg.train)?,
    };

    ensure_out_dir(&args.out)?;
    write_config_echo(&cfg, &args.out.join("config.json"))?;
    let mut sink = DiskSink {
        out: &args.out,
        csv: format!("{LOSS_CSV_HEADER}\n"),
        config: &cfg.train,
        slicing_axis: cfg.slicing_axis,
        volume_dims,
    };
    resume(&mut state, &cfg.train, &volumes, &mut sink)?;
    sink.write_csv()?;

    let model = ModelCheckpoint {
        denoiser: cfg.train.denoiser.clone(),
        schedule: cfg.train.schedule.clone(),
        slicing_axis: cfg.slicing_axis,
        volume_dims,
        trained_steps: state.step as u64,
        params: state.params.clone(),
    };
    save_model(&args.out.join("model.cdpm"), &model)?;
    let final_state = TrainCheckpoint {
        config: cfg.train.clone(),
        slicing_axis: cfg.slicing_axis,
        volume_dims,
        state,
    };
    save_train_state(&args.out.join("train_state.cdpm"), &final_state)?;

    let steps = final_state.state.loss_count;
    let loss_note = if steps > 0 {
        format!(", mean batch loss {:.6}", final_state.state.loss_sum / steps as f64)
    } else {
        String::new()
    };
    println!(
        "trained to step {} ({} volumes{loss_note}); wrote model.cdpm and train_state.cdpm to {}",
        final_state.state.step,
        volumes.len(),
        args.out.display()
    );
    Ok(())
}
