use std::path::PathBuf;

use tomorecon_core::postprocess::{monte_carlo_eval, Connectivity, CrossValConfig, LabeledSample};
use tomorecon_core::volume::load_volume;

use super::{parse_connectivity, print_json, write_json};
use crate::failure::{CliResult, Failure};
use crate::labels::{load_labels, sample_name};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Heatmap volumes; each file name must appear in the labels file.
    #[arg(required = true)]
    heatmaps: Vec<PathBuf>,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Annotated samples per fold used to pick tau'.
    #[arg(long, default_value_t = 5)]
    calibration: usize,
    /// Weight of sensitivity against specificity when picking tau.
    #[arg(long, default_value_t = 5.0)]
    sensitivity_weight: f64,
    #[arg(long, default_value_t = 64)]
    tau_prime_steps: usize,
    /// 6 or 26.
    #[arg(long, default_value = "26", value_parser = parse_connectivity)]
    connectivity: Connectivity,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(a: Args) -> CliResult {
    let labels = load_labels(&a.labels)?;
    let mut samples = Vec::with_capacity(a.heatmaps.len());
    for path in &a.heatmaps {
        let name = sample_name(path);
        let entry = labels.get(&name).ok_or_else(|| {
            Failure::invalid(format!("no label for {name:?} ({}) in {}", path.display(), a.labels.display()))
        })?;
        let heatmap = load_volume(path)?;
        samples.push(LabeledSample::new(name, heatmap, entry.positive(), entry.truth()?)?);
    }
    let cfg = CrossValConfig {
        folds: a.folds,
        calibration_samples: a.calibration,
        seed: a.seed,
        sensitivity_weight: a.sensitivity_weight,
        connectivity: a.connectivity,
        tau_prime_steps: a.tau_prime_steps,
    };
    let report = monte_carlo_eval(&samples, &cfg)?;
    if let Some(path) = &a.out {
        write_json(path, &report)?;
    }
    print_json(&report);
    Ok(())
}
