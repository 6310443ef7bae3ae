//! `cdpm` — generate phantom corpora, train the slice-conditional denoiser,
//! sample volumes stage by stage, score synthetic sets, and inspect
//! checkpoints.
//!
//! Every subcommand that produces files also writes the fully-resolved run
//! config (canonical JSON) beside them; re-running from that echo reproduces
//! the outputs bit-exactly on the same platform. Command-line flags override
//! fields read from a config file.

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

mod common;
mod eval;
mod inspect;
mod phantom;
mod sample;
mod train;

#[derive(Debug, Parser)]
#[command(name = "cdpm", version, about = "Conditional diffusion for volumetric data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, clap::Subcommand)]
enum Cmd {
    /// Draw procedural phantom volumes as a stand-in training corpus.
    Phantom(phantom::PhantomArgs),
    /// Train the denoiser on a directory of volumes.
    Train(train::TrainArgs),
    /// Generate volumes from a trained checkpoint by staged sampling.
    Sample(sample::SampleArgs),
    /// Score a synthetic volume set against a reference set.
    Eval(eval::EvalArgs),
    /// Print checkpoint metadata: kind, format version, sizes, config.
    Inspect(inspect::InspectArgs),
}

/// Exit codes: 0 success, 1 usage error (bad flags, malformed or invalid
/// config), 2 runtime failure (I/O, corrupt files, numeric trouble).
fn exit_code(e: &cdpm::Error) -> i32 {
    match e {
        cdpm::Error::InvalidConfig(_) | cdpm::Error::Json(_) => 1,
        _ => 2,
    }
}

fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Cmd::Phantom(args) => phantom::run(args),
        Cmd::Train(args) => train::run(args),
        Cmd::Sample(args) => sample::run(args),
        Cmd::Eval(args) => eval::run(args),
        Cmd::Inspect(args) => inspect::run(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn main() {
    // Die quietly when a pipe closes early (`cdpm inspect … | head`) instead
    // of panicking on the failed stdout write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(run(std::env::args_os()));
}
