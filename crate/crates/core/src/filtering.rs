//! Second-difference filtering along the slice axis and the piecewise-linear
//! profiles that backprojection samples.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::normalized;

/// Scaling of the central second difference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    /// Divide the stencil by `1/(M-1)`.
    #[default]
    PaperScale,
    /// Divide the stencil by `h^2 = (2/(M-1))^2`: a consistent estimate of
    /// the second derivative in `s`.
    TrueSecondDerivative,
}

impl DerivativeMode {
    /// Multiplier applied to `p[m+1] + p[m-1] - 2 p[m]`.
    pub fn factor(self, samples: usize) -> f64 {
        let m1 = (samples - 1) as f64;
        match self {
            DerivativeMode::PaperScale => m1,
            DerivativeMode::TrueSecondDerivative => 0.25 * m1 * m1,
        }
    }
}

/// Placement of grid cells in the slice plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellAlignment {
    /// Cell `0` sits at the slice edge `-1` and cell `g - 1` at `+1`:
    /// `a' = (u + 1)(g - 1) / 2`.
    #[default]
    Corners,
    /// Each cell sits at the center of the pixel block it pools; points in
    /// the outer half-block take the edge cell's value.
    Centers,
}

impl fmt::Display for CellAlignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellAlignment::Corners => "corners",
            CellAlignment::Centers => "centers",
        })
    }
}

impl FromStr for CellAlignment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corners" => Ok(CellAlignment::Corners),
            "centers" => Ok(CellAlignment::Centers),
            other => Err(Error::InvalidParameter(format!(
                "unknown cell alignment {other:?}; expected corners or centers"
            ))),
        }
    }
}

/// Affine map from an in-plane coordinate in `[-1, 1]` to a cell index:
/// `a' = (u + 1) * slope - shift`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct AxisMap {
    slope: f64,
    shift: f64,
    clamp: bool,
}

impl AxisMap {
    fn corners(cells: usize) -> Self {
        Self {
            slope: 0.5 * (cells as f64 - 1.0),
            shift: 0.0,
            clamp: false,
        }
    }

    fn centers(cells: usize, pixels: usize) -> Self {
        let k = (pixels / cells) as f64;
        Self {
            slope: 0.5 * (pixels as f64 - 1.0) / k,
            shift: 0.5 * (k - 1.0) / k,
            clamp: true,
        }
    }

    #[inline]
    fn locate(&self, coord: f64, extent: usize) -> Option<(usize, usize, f64)> {
        if extent == 1 {
            // A single cell covers the plane.
            return coord.is_finite().then_some((0, 0, 0.0));
        }
        if !(-1.0..=1.0).contains(&coord) {
            return None;
        }
        let mut pos = (coord + 1.0) * self.slope - self.shift;
        let last = (extent - 1) as f64;
        if self.clamp {
            pos = pos.clamp(0.0, last);
        } else if !(0.0..=last).contains(&pos) {
            return None;
        }
        let lo = (pos as usize).min(extent - 2);
        Some((lo, lo + 1, pos - lo as f64))
    }
}

/// Values on `M` evenly spaced offsets `s_m` covering `[-1, 1]`, each a
/// `cells[0] x cells[1]` grid (a single cell for scalar profiles).
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    samples: usize,
    cells: [usize; 2],
    values: Vec<f64>,
    maps: [AxisMap; 2],
}

impl Profile {
    pub fn new(samples: usize, cells: [usize; 2], values: Vec<f64>) -> Result<Self> {
        if samples < 2 || cells[0] == 0 || cells[1] == 0 {
            return Err(Error::InvalidParameter(format!(
                "profile needs >= 2 samples and non-empty cells, got {samples} x {cells:?}"
            )));
        }
        if values.len() != samples * cells[0] * cells[1] {
            return Err(Error::ShapeMismatch(format!(
                "profile {samples} x {cells:?} needs {} values, got {}",
                samples * cells[0] * cells[1],
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            samples,
            cells,
            values,
            maps: [AxisMap::corners(cells[0]), AxisMap::corners(cells[1])],
        })
    }

    /// Sets how cells are placed on a slice of `pixels` (`h`, `w`), which
    /// must be a multiple of the grid for [`CellAlignment::Centers`].
    pub fn with_alignment(mut self, alignment: CellAlignment, pixels: [usize; 2]) -> Result<Self> {
        self.maps = match alignment {
            CellAlignment::Corners => [AxisMap::corners(self.cells[0]), AxisMap::corners(self.cells[1])],
            CellAlignment::Centers => {
                if !pixels[0].is_multiple_of(self.cells[0]) || !pixels[1].is_multiple_of(self.cells[1]) {
                    return Err(Error::InvalidParameter(format!(
                        "slice {pixels:?} is not a multiple of the {:?} grid",
                        self.cells
                    )));
                }
                [
                    AxisMap::centers(self.cells[0], pixels[0]),
                    AxisMap::centers(self.cells[1], pixels[1]),
                ]
            }
        };
        Ok(self)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Offset `s_m` of sample `m`.
    pub fn position(&self, m: usize) -> f64 {
        normalized(m, self.samples)
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Linear interpolation over `s` of cell `(0, 0)`; zero outside `[-1, 1]`.
    #[inline]
    pub fn at(&self, s: f64) -> f64 {
        let Some((m0, m1, t)) = grid_axis(s, self.samples) else {
            return 0.0;
        };
        let stride = self.cells[0] * self.cells[1];
        let a = self.values[m0 * stride];
        let b = self.values[m1 * stride];
        a + (b - a) * t
    }

    /// Trilinear interpolation over `(s, u, v)`. `u` and `v` map to grid
    /// indices by the profile's [`CellAlignment`] (by default
    /// `(u + 1)(g - 1)/2`); points off the plane are zero. A single-cell axis
    /// is constant along its in-plane coordinate.
    #[inline]
    pub fn at_grid(&self, s: f64, u: f64, v: f64) -> f64 {
        let [gh, gw] = self.cells;
        let Some((m0, m1, tm)) = grid_axis(s, self.samples) else { return 0.0 };
        let Some((a0, a1, ta)) = self.maps[0].locate(u, gh) else { return 0.0 };
        let Some((b0, b1, tb)) = self.maps[1].locate(v, gw) else { return 0.0 };
        let stride = gh * gw;
        let vals = &self.values;
        let plane = |m: usize| {
            let row = |a: usize| {
                let base = m * stride + a * gw;
                let x = vals[base + b0];
                x + (vals[base + b1] - x) * tb
            };
            let r0 = row(a0);
            r0 + (row(a1) - r0) * ta
        };
        let p0 = plane(m0);
        p0 + (plane(m1) - p0) * tm
    }
}

/// Bracketing indices and weight for a normalized coordinate on an axis of
/// `extent` samples, `None` when the index falls outside `[0, extent - 1]`.
#[inline]
fn grid_axis(coord: f64, extent: usize) -> Option<(usize, usize, f64)> {
    if extent == 1 {
        // (coord + 1) * 0 / 2 == 0 for every finite coord.
        return coord.is_finite().then_some((0, 0, 0.0));
    }
    if !(-1.0..=1.0).contains(&coord) {
        return None;
    }
    let pos = (coord + 1.0) * 0.5 * (extent - 1) as f64;
    let lo = (pos as usize).min(extent - 2);
    Some((lo, lo + 1, pos - lo as f64))
}

/// Central second difference of an `M + 2` sample scalar profile.
pub fn second_difference(p: &[f64], mode: DerivativeMode) -> Result<Profile> {
    second_difference_grid(p, [1, 1], mode)
}

/// Per-cell central second difference of an `(M + 2) x gh x gw` tensor
/// (m-major), giving `M x gh x gw`.
pub fn second_difference_grid(p: &[f64], cells: [usize; 2], mode: DerivativeMode) -> Result<Profile> {
    let stride = cells[0] * cells[1];
    if stride == 0 || !p.len().is_multiple_of(stride) {
        return Err(Error::ShapeMismatch(format!(
            "{} values do not tile {cells:?} cells",
            p.len()
        )));
    }
    let total = p.len() / stride;
    if total < 5 {
        return Err(Error::InvalidParameter(format!(
            "need M + 2 >= 5 samples for the second difference, got {total}"
        )));
    }
    let samples = total - 2;
    let factor = mode.factor(samples);
    let mut out = Vec::with_capacity(samples * stride);
    for m in 1..=samples {
        let prev = &p[(m - 1) * stride..m * stride];
        let here = &p[m * stride..(m + 1) * stride];
        let next = &p[(m + 1) * stride..(m + 2) * stride];
        for c in 0..stride {
            out.push((next[c] + prev[c] - 2.0 * here[c]) * factor);
        }
    }
    Profile::new(samples, cells, out)
}

/// Drops the two padding samples at `m = -1` and `m = M`, keeping the values
/// on `[-1, 1]` unfiltered.
pub fn unfiltered_profile(p: &[f64], cells: [usize; 2]) -> Result<Profile> {
    let stride = cells[0] * cells[1];
    if stride == 0 || !p.len().is_multiple_of(stride) || p.len() / stride < 5 {
        return Err(Error::ShapeMismatch(format!(
            "{} values do not form an (M + 2) x {cells:?} stack with M >= 3",
            p.len()
        )));
    }
    let samples = p.len() / stride - 2;
    Profile::new(samples, cells, p[stride..(samples + 1) * stride].to_vec())
}
