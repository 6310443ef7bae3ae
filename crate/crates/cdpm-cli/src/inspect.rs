//! `cdpm inspect` — print checkpoint metadata without loading the network.

use std::path::PathBuf;

use cdpm::checkpoint::inspect;
use cdpm::Result;

use crate::common::at_path;

#[derive(Debug, clap::Args)]
pub struct InspectArgs {
    /// Checkpoint file (.cdpm) to describe.
    path: PathBuf,
}

pub fn run(args: InspectArgs) -> Result<()> {
    let info = inspect(&args.path).map_err(|e| at_path(e, &args.path))?;
    println!("kind: {}", info.kind);
    println!("format version: {}", info.version);
    println!("tensors: {}", info.tensor_count);
    println!("parameters: {}", info.param_count);
    let value: serde_json::Value = serde_json::from_str(&info.config_json)?;
    println!("config: {}", serde_json::to_string_pretty(&value)?);
    Ok(())
}
