//! Scale-free comparison of a reconstruction against its source volume.
//!
//! Reconstructions are only defined up to an affine map (the normalization
//! of the measurement and of the inversion constant both fold into it), so
//! every score here first fits `a * G + b` to `V` by least squares over the
//! ball inscribed in the cube.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume3;

/// Voxels whose normalized position lies in the closed unit ball.
pub fn inscribed_ball(shape: [usize; 3]) -> Vec<bool> {
    let probe = Volume3::zeros(shape).expect("shape validated by caller");
    let mut mask = Vec::with_capacity(probe.len());
    for i in 0..shape[0] {
        for j in 0..shape[1] {
            for k in 0..shape[2] {
                mask.push(probe.voxel_position(i, j, k).norm() <= 1.0);
            }
        }
    }
    mask
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub scale: f64,
    pub offset: f64,
}

impl AffineFit {
    pub fn apply(&self, g: f64) -> f64 {
        self.scale * g + self.offset
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Correlation of the calibrated `a * G + b` with `V` over the ball.
    /// The sign of `G` is absorbed by `a`, so this is `|pearson|`.
    pub correlation: f64,
    /// Pearson correlation of the raw `G` with `V`.
    pub pearson: f64,
    /// RMSE of the calibrated `G` against `V`.
    pub rmse: f64,
    /// `rmse` divided by the value range of `V` over the ball.
    pub relative_rmse: f64,
    pub fit: AffineFit,
    pub voxels: usize,
}

fn same_shape(a: &Volume3, b: &Volume3) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Affine calibration of `recon` onto `reference` and the resulting scores.
pub fn compare(recon: &Volume3, reference: &Volume3) -> Result<QualityReport> {
    same_shape(recon, reference)?;
    let mask = inscribed_ball(reference.shape());
    let pairs: Vec<(f64, f64)> = recon
        .data()
        .iter()
        .zip(reference.data())
        .zip(&mask)
        .filter(|(_, &inside)| inside)
        .map(|((&g, &v), _)| (g as f64, v as f64))
        .collect();
    let n = pairs.len() as f64;
    if pairs.is_empty() {
        return Err(Error::Degenerate("no voxels inside the inscribed ball".into()));
    }
    let mean_g = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_v = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sgg, mut svv, mut sgv) = (0.0, 0.0, 0.0);
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(g, v) in &pairs {
        let (dg, dv) = (g - mean_g, v - mean_v);
        sgg += dg * dg;
        svv += dv * dv;
        sgv += dg * dv;
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    if svv == 0.0 {
        return Err(Error::Degenerate(
            "reference volume is constant over the inscribed ball; correlation is undefined".into(),
        ));
    }
    if sgg == 0.0 {
        return Err(Error::Degenerate(
            "reconstruction is constant over the inscribed ball; correlation is undefined".into(),
        ));
    }
    let scale = sgv / sgg;
    let fit = AffineFit {
        scale,
        offset: mean_v - scale * mean_g,
    };
    let sse: f64 = pairs.iter().map(|&(g, v)| (fit.apply(g) - v).powi(2)).sum();
    let rmse = (sse / n).sqrt();
    let pearson = sgv / (sgg * svv).sqrt();
    Ok(QualityReport {
        correlation: pearson.abs(),
        pearson,
        rmse,
        relative_rmse: rmse / (vmax - vmin),
        fit,
        voxels: pairs.len(),
    })
}

/// Sum of the gradient magnitude of the calibrated reconstruction over the
/// boundary voxels of `reference` (voxels with a face neighbour of another
/// value). Central differences in voxel units.
pub fn edge_sharpness(recon: &Volume3, reference: &Volume3) -> Result<f64> {
    let fit = compare(recon, reference)?.fit;
    let [d, h, w] = reference.shape();
    let g = |i: usize, j: usize, k: usize| fit.apply(recon.get(i, j, k) as f64);
    let mut total = 0.0;
    for i in 1..d - 1 {
        for j in 1..h - 1 {
            for k in 1..w - 1 {
                let c = reference.get(i, j, k);
                let boundary = [
                    reference.get(i - 1, j, k),
                    reference.get(i + 1, j, k),
                    reference.get(i, j - 1, k),
                    reference.get(i, j + 1, k),
                    reference.get(i, j, k - 1),
                    reference.get(i, j, k + 1),
                ]
                .iter()
                .any(|&n| n != c);
                if !boundary {
                    continue;
                }
                let gx = 0.5 * (g(i + 1, j, k) - g(i - 1, j, k));
                let gy = 0.5 * (g(i, j + 1, k) - g(i, j - 1, k));
                let gz = 0.5 * (g(i, j, k + 1) - g(i, j, k - 1));
                total += (gx * gx + gy * gy + gz * gz).sqrt();
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::two_ellipsoids;

    #[test]
    fn affine_copy_is_perfect() {
        let v = two_ellipsoids(16).unwrap();
        let g = Volume3::new(v.shape(), v.data().iter().map(|x| -0.25 * x + 3.0).collect()).unwrap();
        let q = compare(&g, &v).unwrap();
        assert!((q.correlation - 1.0).abs() < 1e-12);
        assert!((q.pearson + 1.0).abs() < 1e-12);
        assert!(q.rmse < 1e-6);
        assert!((q.fit.scale + 4.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs_are_reported() {
        let zero = Volume3::zeros([8, 8, 8]).unwrap();
        let v = two_ellipsoids(8).unwrap();
        assert!(matches!(compare(&v, &zero), Err(Error::Degenerate(_))));
        assert!(matches!(compare(&zero, &v), Err(Error::Degenerate(_))));
    }

    #[test]
    fn sharpness_prefers_crisp_edges() {
        let v = two_ellipsoids(24).unwrap();
        let blurred = Volume3::from_normalized_fn(v.shape(), |x| {
            let r = x.norm();
            1.0 / (1.0 + ((r - 0.55) * 8.0).exp())
        })
        .unwrap();
        assert!(edge_sharpness(&v, &v).unwrap() > edge_sharpness(&blurred, &v).unwrap());
    }
}
