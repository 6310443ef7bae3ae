//! `cdpm sample` — staged autoregressive generation from a trained
//! checkpoint.

use std::path::PathBuf;

use cdpm::checkpoint::load_model;
use cdpm::data::{export_slice_montage, from_slicing_orientation, save_volume, Volume};
use cdpm::rng::substream_indexed;
use cdpm::sampler::{generate_volume, ClipMode};
use cdpm::slices::staging_plan;
use cdpm::Result;
use serde::{Deserialize, Serialize};

use crate::common::{at_path, ensure_out_dir, load_config, volume_file_name, write_config_echo};

fn parse_clip(s: &str) -> std::result::Result<ClipMode, String> {
    match s {
        "final" => Ok(ClipMode::Final),
        "xstart" => Ok(ClipMode::Xstart),
        "none" => Ok(ClipMode::None),
        other => Err(format!("unknown clip mode {other:?}, expected final, xstart, or none")),
    }
}

#[derive(Debug, clap::Args)]
pub struct SampleArgs {
    /// Run config as JSON; flags below override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained checkpoint (.cdpm); a training state works too.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Number of volumes to generate; overrides the config file.
    #[arg(long)]
    count: Option<usize>,
    /// Root seed; volume i draws from its own substream. Overrides the
    /// config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Slices generated per stage; defaults to half the checkpoint's slice
    /// budget. Overrides the config file.
    #[arg(long)]
    stage_target: Option<usize>,
    /// Slices each stage conditions on; defaults to the budget minus
    /// stage-target. Overrides the config file.
    #[arg(long)]
    stage_cond: Option<usize>,
    /// Where to clamp to [0,1]: final, xstart, or none.
    #[arg(long, value_parser = parse_clip)]
    clip: Option<ClipMode>,
    /// Also write a per-volume montage PNG of every slice.
    #[arg(long)]
    montage: bool,
    /// Output directory for the volumes and the resolved config echo.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SampleRunConfig {
    checkpoint: Option<PathBuf>,
    count: usize,
    seed: u64,
    /// Stage shape; `None` resolves from the checkpoint's slice budget and
    /// the echo records the resolved values.
    stage_target: Option<usize>,
    stage_cond: Option<usize>,
    clip: ClipMode,
    montage: bool,
}

impl Default for SampleRunConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            count: 1,
            seed: 0,
            stage_target: None,
            stage_cond: None,
            clip: ClipMode::Final,
            montage: false,
        }
    }
}

pub fn run(args: SampleArgs) -> Result<()> {
    let mut cfg: SampleRunConfig = load_config(args.config.as_deref())?;
    if let Some(checkpoint) = args.checkpoint {
        cfg.checkpoint = Some(checkpoint);
    }
    if let Some(count) = args.count {
        cfg.count = count;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(k) = args.stage_target {
        cfg.stage_target = Some(k);
    }
    if let Some(m) = args.stage_cond {
        cfg.stage_cond = Some(m);
    }
    if let Some(clip) = args.clip {
        cfg.clip = clip;
    }
    if args.montage {
        cfg.montage = true;
    }
    let ckpt_path = crate::common::require(cfg.checkpoint.clone(), "checkpoint", "--checkpoint")?;
    cfg.checkpoint = Some(ckpt_path.clone());

    let ckpt = load_model(&ckpt_path).map_err(|e| at_path(e, &ckpt_path))?;
    let sched = ckpt.schedule.build()?;
    let budget = ckpt.denoiser.max_bundle;
    let stage_target = *cfg.stage_target.get_or_insert_with(|| (budget / 2).max(1));
    let stage_cond = *cfg.stage_cond.get_or_insert(budget.saturating_sub(stage_target));
    let [depth, h, w] = ckpt.volume_dims;
    let plan = staging_plan(depth, stage_target, stage_cond, budget)?;

    ensure_out_dir(&args.out)?;
    write_config_echo(&cfg, &args.out.join("config.json"))?;
    for i in 0..cfg.count {
        let mut rng = substream_indexed(cfg.seed, "sample", i as u64);
        let oriented =
            generate_volume(&ckpt.params, &plan, (h, w), &sched, &mut rng, cfg.clip)?;
        let volume = Volume::new(from_slicing_orientation(&oriented, ckpt.slicing_axis))?;
        let path = args.out.join(volume_file_name(i));
        save_volume(&volume, &path).map_err(|e| at_path(e, &path))?;
        if cfg.montage {
            let png = path.with_extension("png");
            export_slice_montage(&volume, ckpt.slicing_axis, 1, &png)
                .map_err(|e| at_path(e, &png))?;
        }
    }
    println!(
        "sampled {} volumes ({} stages of {stage_target}/{stage_cond} over depth {depth}) to {}",
        cfg.count,
        plan.stages().len(),
        args.out.display()
    );
    Ok(())
}
