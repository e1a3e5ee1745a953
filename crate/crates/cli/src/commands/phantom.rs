use std::path::PathBuf;

use tomorecon_core::phantom::{generate, PhantomKind};
use tomorecon_core::volume::save_volume;

use crate::failure::CliResult;

#[derive(Debug, clap::Args)]
pub struct Args {
    output: PathBuf,
    /// ellipsoids, ball or one-hot.
    #[arg(long, default_value = "ellipsoids")]
    kind: PhantomKind,
    #[arg(long, default_value_t = 64)]
    size: usize,
}

pub fn run(a: Args) -> CliResult {
    save_volume(&generate(a.kind, a.size)?, &a.output)?;
    Ok(())
}
