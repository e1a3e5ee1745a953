use std::path::PathBuf;

use serde::Serialize;
use tomorecon_core::postprocess::components::connected_components;
use tomorecon_core::postprocess::thresholds::heatmap_max;
use tomorecon_core::postprocess::{binarize, predicted_label, BinarizationThresholds, Connectivity};
use tomorecon_core::volume::{load_volume, save_volume};

use super::{parse_connectivity, print_json};
use crate::failure::CliResult;

#[derive(Debug, clap::Args)]
pub struct Args {
    heatmap: PathBuf,
    /// Output mask volume (1 inside, 0 outside).
    output: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    tau: f64,
    #[arg(long, allow_negative_numbers = true)]
    tau_prime: f64,
    /// 6 or 26.
    #[arg(long, default_value = "26", value_parser = parse_connectivity)]
    connectivity: Connectivity,
}

#[derive(Debug, Serialize)]
struct Summary {
    max: f64,
    label: bool,
    voxels: usize,
    components: usize,
}

pub fn run(a: Args) -> CliResult {
    let heatmap = load_volume(&a.heatmap)?;
    let thresholds = BinarizationThresholds::new(a.tau, a.tau_prime)?;
    let mask = binarize(&heatmap, thresholds, a.connectivity)?;
    save_volume(&mask.to_volume()?, &a.output)?;
    print_json(&Summary {
        max: heatmap_max(&heatmap),
        label: predicted_label(&heatmap, a.tau),
        voxels: mask.count(),
        components: connected_components(&mask, a.connectivity).len(),
    });
    Ok(())
}
