use std::path::PathBuf;

use tomorecon_core::slicing::{sample_training_stacks, save_training_export, Augmentation, DEFAULT_SLICE_SIZE};
use tomorecon_core::volume::load_volume;

use crate::failure::{CliResult, Failure};
use crate::labels::{load_labels, sample_name};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(required = true)]
    volumes: Vec<PathBuf>,
    /// Output stem: writes `<out>.bin` and `<out>.json`.
    #[arg(long)]
    out: PathBuf,
    /// Optional labels file passed through to the metadata.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Slices per stack.
    #[arg(long, default_value_t = 120)]
    per_volume: usize,
    /// Stacks (independent normals) per volume.
    #[arg(long, default_value_t = 1)]
    stacks: usize,
    #[arg(long, default_value_t = DEFAULT_SLICE_SIZE)]
    size: usize,
    #[arg(long, default_value_t = 0.3)]
    scale: f64,
    #[arg(long, default_value_t = 0.3)]
    translation: f64,
    #[arg(long, default_value_t = 0.3)]
    intensity: f64,
    /// Maximum deviation of the in-plane axes from perpendicular, radians.
    #[arg(long, default_value_t = 0.0)]
    shear: f64,
    /// Disable every augmentation.
    #[arg(long)]
    no_augment: bool,
    /// Volume `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn run(a: Args) -> CliResult {
    let labels = match &a.labels {
        Some(path) => Some(load_labels(path)?),
        None => None,
    };
    let aug = if a.no_augment {
        Augmentation::none()
    } else {
        Augmentation {
            scale: a.scale,
            translation: a.translation,
            intensity: a.intensity,
            shear: a.shear,
        }
    };
    let mut all = Vec::new();
    for (index, path) in a.volumes.iter().enumerate() {
        let label = match &labels {
            Some(map) => {
                let name = sample_name(path);
                Some(
                    map.get(&name)
                        .ok_or_else(|| Failure::invalid(format!("no label for {name:?}")))?
                        .label,
                )
            }
            None => None,
        };
        let volume = load_volume(path)?;
        let seed = a.seed.wrapping_add(index as u64);
        let slices = sample_training_stacks(&volume, a.stacks, a.per_volume, a.size, a.size, &aug, seed)?;
        all.extend(slices.into_iter().map(|s| (index, label, s)));
    }
    save_training_export(&a.out, &all)?;
    eprintln!("exported {} slices", all.len());
    Ok(())
}
