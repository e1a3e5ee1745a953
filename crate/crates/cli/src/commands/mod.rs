pub mod binarize;
pub mod evaluate;
pub mod phantom;
pub mod reconstruct;
pub mod sample;
pub mod selftest;

use std::fs;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use tomorecon_core::filtering::{CellAlignment, DerivativeMode};
use tomorecon_core::postprocess::Connectivity;

use crate::failure::{CliResult, Failure};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Derivative {
    /// Stencil times `M - 1`.
    Paper,
    /// Stencil divided by the squared sample spacing.
    True,
}

impl From<Derivative> for DerivativeMode {
    fn from(d: Derivative) -> Self {
        match d {
            Derivative::Paper => DerivativeMode::PaperScale,
            Derivative::True => DerivativeMode::TrueSecondDerivative,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Alignment {
    Corners,
    Centers,
}

impl From<Alignment> for CellAlignment {
    fn from(a: Alignment) -> Self {
        match a {
            Alignment::Corners => CellAlignment::Corners,
            Alignment::Centers => CellAlignment::Centers,
        }
    }
}

pub fn parse_connectivity(text: &str) -> Result<Connectivity, String> {
    let n: u32 = text.parse().map_err(|_| format!("expected 6 or 26, got {text:?}"))?;
    Connectivity::from_count(n).map_err(|e| e.to_string())
}

pub fn parse_shape3(text: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = text.split('x').collect();
    let bad = || format!("expected DxHxW, got {text:?}");
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0; 3];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.trim().parse().map_err(|_| bad())?;
    }
    Ok(out)
}

pub fn parse_grid(text: &str) -> Result<[usize; 2], String> {
    let (a, b) = text.split_once('x').ok_or_else(|| format!("expected GHxGW, got {text:?}"))?;
    let gh = a.trim().parse().map_err(|_| format!("bad grid height in {text:?}"))?;
    let gw = b.trim().parse().map_err(|_| format!("bad grid width in {text:?}"))?;
    Ok([gh, gw])
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

pub fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}
