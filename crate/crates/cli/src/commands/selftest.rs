use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use tomorecon_core::backprojection::{default_c_norm, reconstruct, ReconConfig, ReconMode};
use tomorecon_core::evaluators::EvaluatorKind;
use tomorecon_core::geometry::BasisPolicy;
use tomorecon_core::phantom::{generate, PhantomKind};
use tomorecon_core::quality::{compare, edge_sharpness, QualityReport};
use tomorecon_core::volume::{load_volume, save_volume};

use super::{print_json, write_json, Derivative};
use crate::failure::{CliResult, Failure};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Volume to reconstruct; a generated phantom is used if omitted.
    #[arg(long, conflicts_with = "phantom")]
    volume: Option<PathBuf>,
    /// ellipsoids, ball or one-hot.
    #[arg(long, default_value = "ellipsoids")]
    phantom: PhantomKind,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long = "M", default_value_t = 64)]
    samples: usize,
    #[arg(long = "L", default_value_t = 500)]
    directions: usize,
    #[arg(long, default_value_t = 64)]
    slice_size: usize,
    #[arg(long, value_enum, default_value = "true")]
    derivative: Derivative,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value_t = 0.95)]
    min_correlation: f64,
    #[arg(long, default_value_t = 0.15)]
    max_relative_rmse: f64,
    /// Also write the reconstruction here.
    #[arg(long)]
    save: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Report {
    source: String,
    shape: [usize; 3],
    samples: usize,
    directions: usize,
    quality: QualityReport,
    edge_sharpness: f64,
    seconds: f64,
    min_correlation: f64,
    max_relative_rmse: f64,
    passed: bool,
}

pub fn run(a: Args) -> CliResult {
    let (volume, source) = match &a.volume {
        Some(path) => (load_volume(path)?, path.display().to_string()),
        None => (generate(a.phantom, a.size)?, format!("phantom:{}:{}", a.phantom, a.size)),
    };
    let cfg = ReconConfig {
        samples: a.samples,
        directions: a.directions,
        output_shape: None,
        slice_shape: [a.slice_size, a.slice_size],
        derivative: a.derivative.into(),
        c_norm: default_c_norm(),
        basis: BasisPolicy::Deterministic,
        threads: a.threads,
        ..ReconConfig::default()
    };
    let started = Instant::now();
    let heatmap = reconstruct(ReconMode::Tonno, &volume, &EvaluatorKind::Sum, &cfg)?;
    let seconds = started.elapsed().as_secs_f64();
    let quality = compare(&heatmap, &volume)?;
    let report = Report {
        source,
        shape: volume.shape(),
        samples: a.samples,
        directions: a.directions,
        edge_sharpness: edge_sharpness(&heatmap, &volume)?,
        seconds,
        min_correlation: a.min_correlation,
        max_relative_rmse: a.max_relative_rmse,
        passed: quality.pearson >= a.min_correlation && quality.relative_rmse <= a.max_relative_rmse,
        quality,
    };
    if let Some(path) = &a.save {
        save_volume(&heatmap, path)?;
    }
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    print_json(&report);
    if report.passed {
        Ok(())
    } else {
        Err(Failure::failed(
            "selftest_failed",
            format!(
                "correlation {:.4} (min {}), relative RMSE {:.4} (max {})",
                report.quality.pearson, a.min_correlation, report.quality.relative_rmse, a.max_relative_rmse
            ),
        ))
    }
}
