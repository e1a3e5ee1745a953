use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tomorecon_core::backprojection::{default_c_norm, reconstruct_with, ReconConfig, ReconMode};
use tomorecon_core::evaluators::{Evaluator, EvaluatorKind};
use tomorecon_core::geometry::BasisPolicy;
use tomorecon_core::slicing::DEFAULT_SLICE_SIZE;
use tomorecon_core::volume::{load_volume, save_volume, volume_paths};

use super::{parse_grid, parse_shape3, write_json, Alignment, Derivative};
use crate::failure::{CliResult, Failure};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Input volume (header `.json` or payload `.bin`). With --from-manifest
    /// the only positional is the output.
    #[arg(required_unless_present = "from_manifest")]
    input: Option<PathBuf>,
    /// Output heatmap; defaults to the manifest's output with --from-manifest.
    output: Option<PathBuf>,
    /// tonno, avgcam or tomocam.
    #[arg(long, default_value = "tonno")]
    mode: ReconMode,
    /// sum, pooled:<gh>x<gw> or external:<cmd> [args...].
    #[arg(long, default_value = "sum")]
    evaluator: EvaluatorKind,
    /// Grid size reported by an external evaluator; scalar if omitted.
    #[arg(long, value_parser = parse_grid)]
    eval_grid: Option<[usize; 2]>,
    /// Seconds to wait for each external response.
    #[arg(long, default_value_t = 300.0)]
    eval_timeout: f64,
    /// Extra input channel volumes (external evaluators only).
    #[arg(long = "channel")]
    channels: Vec<PathBuf>,
    /// Slices per direction.
    #[arg(long = "M", default_value_t = 100)]
    samples: usize,
    /// Number of directions; 2000 for tonno, 1000 for the CAM modes by default.
    #[arg(long = "L")]
    directions: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SLICE_SIZE)]
    slice_size: usize,
    /// Output grid as DxHxW; defaults to the input shape.
    #[arg(long, value_parser = parse_shape3)]
    output_shape: Option<[usize; 3]>,
    #[arg(long, value_enum, default_value = "paper")]
    derivative: Derivative,
    /// Placement of evaluator grid cells in the slice plane.
    #[arg(long, value_enum, default_value = "corners")]
    cell_alignment: Alignment,
    /// Inversion constant; defaults to -1/(8 pi^2).
    #[arg(long, allow_negative_numbers = true)]
    c_norm: Option<f64>,
    /// Draw in-plane axes from a seeded generator instead of the fixed rule.
    #[arg(long)]
    random_basis: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Re-run the reconstruction recorded in a manifest.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
}

/// Everything needed to repeat a reconstruction.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub mode: ReconMode,
    pub evaluator: EvaluatorKind,
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    pub config: ReconConfig,
    pub input_shape: [usize; 3],
    pub output_shape: [usize; 3],
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let (header, _) = volume_paths(output);
    header.with_extension("manifest.json")
}

fn absolute(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

struct Job {
    mode: ReconMode,
    evaluator: EvaluatorKind,
    inputs: Vec<PathBuf>,
    output: PathBuf,
    config: ReconConfig,
}

fn job_from_flags(a: Args) -> CliResult<Job> {
    let input = a.input.expect("clap requires input without a manifest");
    let output = a
        .output
        .ok_or_else(|| Failure::invalid("missing output path"))?;
    let mut evaluator = a.evaluator;
    match &mut evaluator {
        EvaluatorKind::External(spec) => {
            spec.grid = a.eval_grid;
            spec.timeout_secs = a.eval_timeout;
        }
        _ if a.eval_grid.is_some() => {
            return Err(Failure::invalid("--eval-grid applies to external evaluators only"));
        }
        _ => {}
    }
    let config = ReconConfig {
        samples: a.samples,
        directions: a.directions.unwrap_or(a.mode.default_directions()),
        output_shape: a.output_shape,
        slice_shape: [a.slice_size, a.slice_size],
        derivative: a.derivative.into(),
        cell_alignment: a.cell_alignment.into(),
        c_norm: a.c_norm.unwrap_or_else(default_c_norm),
        basis: if a.random_basis {
            BasisPolicy::Random { seed: a.seed }
        } else {
            BasisPolicy::Deterministic
        },
        threads: a.threads,
    };
    let mut inputs = vec![input];
    inputs.extend(a.channels);
    Ok(Job {
        mode: a.mode,
        evaluator,
        inputs,
        output,
        config,
    })
}

fn job_from_manifest(path: &Path, output: Option<PathBuf>) -> CliResult<Job> {
    let text = fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    Ok(Job {
        mode: m.mode,
        evaluator: m.evaluator,
        inputs: m.inputs,
        output: output.unwrap_or(m.output),
        config: m.config,
    })
}

pub fn run(a: Args) -> CliResult {
    let job = match a.from_manifest.clone() {
        // With a manifest the first positional is the output.
        Some(path) => job_from_manifest(&path, a.output.clone().or(a.input.clone()))?,
        None => job_from_flags(a)?,
    };
    job.config.validate()?;
    let volumes = job
        .inputs
        .iter()
        .map(load_volume)
        .collect::<Result<Vec<_>, _>>()?;
    let [h, w] = job.config.slice_shape;
    let started = Instant::now();
    let mut evaluator = Evaluator::open(&job.evaluator, h, w, volumes.len())?;
    let heatmap = reconstruct_with(job.mode, &volumes, &mut evaluator, &job.config);
    let closed = evaluator.close();
    let heatmap = heatmap?;
    closed?;
    let seconds = started.elapsed().as_secs_f64();
    save_volume(&heatmap, &job.output)?;
    let manifest = Manifest {
        tool: "tomorecon".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        mode: job.mode,
        evaluator: job.evaluator,
        inputs: job.inputs.iter().map(|p| absolute(&volume_paths(p).0)).collect(),
        output: absolute(&volume_paths(&job.output).0),
        config: job.config,
        input_shape: volumes[0].shape(),
        output_shape: heatmap.shape(),
    };
    write_json(&manifest_path(&job.output), &manifest)?;
    eprintln!(
        "reconstructed {:?} in {seconds:.2}s -> {}",
        heatmap.shape(),
        volume_paths(&job.output).0.display()
    );
    Ok(())
}
