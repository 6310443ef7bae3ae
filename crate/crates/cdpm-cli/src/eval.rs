//! `cdpm eval` — score a synthetic volume set against a reference set and
//! write the canonical JSON report.

use std::path::PathBuf;

use cdpm::data::Volume;
use cdpm::fsutil::write_atomic;
use cdpm::metrics::{evaluate, report_to_json, MetricsConfig};
use cdpm::Result;
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::common::{load_config, load_volume_dir, require, write_config_echo};

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Run config as JSON; flags below override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of synthetic volumes (.vol); overrides the config file.
    #[arg(long)]
    synth: Option<PathBuf>,
    /// Directory of reference volumes (.vol); overrides the config file.
    #[arg(long)]
    real: Option<PathBuf>,
    /// Report path; the resolved config echo lands beside it with a
    /// .config.json suffix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalRunConfig {
    synth: Option<PathBuf>,
    real: Option<PathBuf>,
    metrics: MetricsConfig,
}

fn voxel_sets(dir: &std::path::Path) -> Result<Vec<Array3<f32>>> {
    Ok(load_volume_dir(dir)?.into_iter().map(Volume::into_voxels).collect())
}

pub fn run(args: EvalArgs) -> Result<()> {
    let mut cfg: EvalRunConfig = load_config(args.config.as_deref())?;
    if let Some(synth) = args.synth {
        cfg.synth = Some(synth);
    }
    if let Some(real) = args.real {
        cfg.real = Some(real);
    }
    let synth_dir = require(cfg.synth.as_deref(), "synthetic set", "--synth")?;
    let real_dir = require(cfg.real.as_deref(), "reference set", "--real")?;

    let synth = voxel_sets(synth_dir)?;
    let real = voxel_sets(real_dir)?;
    let report = evaluate(&synth, &real, &cfg.metrics)?;

    let mut text = report_to_json(&report)?;
    text.push('\n');
    write_atomic(&args.out, text.as_bytes())?;
    write_config_echo(&cfg, &args.out.with_extension("config.json"))?;

    let d = &report.ms_ssim_pairwise;
    let f = &report.frechet;
    println!(
        "ms-ssim {:.4} (sd {:.4}) | mmd2 {:.6} | frechet axial {:.4} coronal {:.4} sagittal {:.4}",
        d.mean, d.sd, report.mmd.value, f.axial, f.coronal, f.sagittal
    );
    println!("report written to {}", args.out.display());
    Ok(())
}
