//! `cdpm phantom` — draw a corpus of procedural volumes.

use std::path::PathBuf;

use cdpm::data::{generate_phantom, save_volume, PhantomSpec};
use cdpm::rng::substream_indexed;
use cdpm::Result;
use serde::{Deserialize, Serialize};

use crate::common::{at_path, ensure_out_dir, load_config, volume_file_name, write_config_echo};

#[derive(Debug, clap::Args)]
pub struct PhantomArgs {
    /// Run config as JSON: {"count": N, "spec": {...}}. Defaults apply when
    /// omitted; the echo written next to the volumes has the same shape.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of volumes to draw; overrides the config file.
    #[arg(long)]
    count: Option<usize>,
    /// Root seed; volume i draws from its own substream. Overrides the
    /// config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the volumes and the resolved config echo.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PhantomRunConfig {
    count: usize,
    spec: PhantomSpec,
}

impl Default for PhantomRunConfig {
    fn default() -> Self {
        Self { count: 8, spec: PhantomSpec::default() }
    }
}

pub fn run(args: PhantomArgs) -> Result<()> {
    let mut cfg: PhantomRunConfig = load_config(args.spec.as_deref())?;
    if let Some(count) = args.count {
        cfg.count = count;
    }
    if let Some(seed) = args.seed {
        cfg.spec.seed = seed;
    }
    cfg.spec.validate()?;

    ensure_out_dir(&args.out)?;
    write_config_echo(&cfg, &args.out.join("config.json"))?;
    for i in 0..cfg.count {
        let mut rng = substream_indexed(cfg.spec.seed, "data", i as u64);
        let volume = generate_phantom(&cfg.spec, &mut rng)?;
        let path = args.out.join(volume_file_name(i));
        save_volume(&volume, &path).map_err(|e| at_path(e, &path))?;
    }
    let (d, h, w) = cfg.spec.dims;
    println!("wrote {} {d}x{h}x{w} phantom volumes to {}", cfg.count, args.out.display());
    Ok(())
}
