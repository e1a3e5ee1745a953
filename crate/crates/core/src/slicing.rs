//! Oriented slice extraction and slice stacks.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{make_frame, normalized, BasisPolicy, DirectionFrame, UnitDirection, Vec3};
use crate::volume::{encode_f32_le, volume_paths, Volume3};

/// Default slice resolution (both axes).
pub const DEFAULT_SLICE_SIZE: usize = 224;

/// A 2D image sampled from a volume on an oriented plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice2 {
    shape: [usize; 2],
    data: Vec<f32>,
    /// Offset `s` of the plane along its normal.
    pub offset: f64,
    pub frame: DirectionFrame,
}

impl Slice2 {
    pub fn new(shape: [usize; 2], data: Vec<f32>, offset: f64, frame: DirectionFrame) -> Result<Self> {
        check_slice_shape(shape[0], shape[1])?;
        if data.len() != shape[0] * shape[1] {
            return Err(Error::ShapeMismatch(format!(
                "slice {shape:?} needs {} values, got {}",
                shape[0] * shape[1],
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            shape,
            data,
            offset,
            frame,
        })
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.shape[1] + j]
    }
}

fn check_slice_shape(h: usize, w: usize) -> Result<()> {
    if h < 2 || w < 2 {
        return Err(Error::InvalidParameter(format!(
            "slice axes must be >= 2, got {h}x{w}"
        )));
    }
    Ok(())
}

/// Samples `volume` on the plane through `origin` spanned by `u` (rows) and
/// `v` (columns), pixel `(i, j)` at `origin + i' u + j' v`.
fn sample_plane(volume: &Volume3, origin: Vec3, u: Vec3, v: Vec3, h: usize, w: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        let row = origin + u * normalized(i, h);
        for j in 0..w {
            out.push(volume.interpolate(row + v * normalized(j, w)) as f32);
        }
    }
    out
}

/// Slice of `volume` with normal `frame.n` containing the point `s * n`.
pub fn extract_slice(volume: &Volume3, s: f64, frame: &DirectionFrame, h: usize, w: usize) -> Result<Slice2> {
    check_slice_shape(h, w)?;
    let data = sample_plane(volume, frame.n.vec() * s, frame.u, frame.v, h, w);
    Ok(Slice2 {
        shape: [h, w],
        data,
        offset: s,
        frame: *frame,
    })
}

/// `M + 2` slices at `s_m = 2m/(M-1) - 1`, `m = -1..=M`.
#[derive(Clone, Debug)]
pub struct SliceStack {
    pub samples: usize,
    pub slices: Vec<Slice2>,
}

impl SliceStack {
    pub fn offsets(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.offset).collect()
    }
}

/// Offsets `s_m` for `m = -1..=M`.
pub fn stack_offsets(samples: usize) -> Result<Vec<f64>> {
    if samples < 3 {
        return Err(Error::InvalidParameter(format!(
            "slices per direction must be >= 3, got {samples}"
        )));
    }
    let denom = (samples - 1) as f64;
    Ok((-1..=samples as i64)
        .map(|m| 2.0 * m as f64 / denom - 1.0)
        .collect())
}

pub fn extract_stack(
    volume: &Volume3,
    frame: &DirectionFrame,
    samples: usize,
    h: usize,
    w: usize,
) -> Result<SliceStack> {
    check_slice_shape(h, w)?;
    let offsets = stack_offsets(samples)?;
    let slices = offsets
        .par_iter()
        .map(|&s| extract_slice(volume, s, frame, h, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(SliceStack { samples, slices })
}

/// Augmentation half-ranges for training slice export.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    /// In-plane axis lengths drawn from `[1 - scale, 1 + scale]`.
    pub scale: f64,
    /// Per-slice origin shift `(du, dv)` drawn from `(-translation, translation)`.
    pub translation: f64,
    /// Intensity map `y = (1 + a) x + b`, `a, b` drawn from `(-intensity, intensity)`.
    pub intensity: f64,
    /// Deviation from perpendicular `u`/`v`, radians, drawn from `(-shear, shear)`.
    pub shear: f64,
}

impl Default for Augmentation {
    fn default() -> Self {
        Self {
            scale: 0.3,
            translation: 0.3,
            intensity: 0.3,
            shear: 0.0,
        }
    }
}

impl Augmentation {
    pub fn none() -> Self {
        Self {
            scale: 0.0,
            translation: 0.0,
            intensity: 0.0,
            shear: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !(ok(self.scale) && ok(self.translation) && ok(self.intensity) && ok(self.shear)) {
            return Err(Error::InvalidParameter(format!(
                "augmentation ranges must be finite and non-negative: {self:?}"
            )));
        }
        if self.scale >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "scale range {} would allow non-positive axis lengths",
                self.scale
            )));
        }
        if self.shear >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidParameter(format!(
                "shear range {} would allow degenerate axes",
                self.shear
            )));
        }
        Ok(())
    }
}

/// Everything needed to re-sample one training slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSliceMeta {
    pub stack: usize,
    pub slice: usize,
    pub s: f64,
    pub normal: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    /// Plane origin: `s n + du u + dv v`.
    pub origin: Vec3,
    pub gain: f64,
    pub bias: f64,
}

#[derive(Clone, Debug)]
pub struct TrainingSlice {
    pub meta: TrainingSliceMeta,
    pub shape: [usize; 2],
    pub data: Vec<f32>,
}

/// Uniform on `(-half, half)`; always consumes one draw so the stream layout
/// does not depend on the configured ranges.
fn symmetric(rng: &mut ChaCha8Rng, half: f64) -> f64 {
    let t: f64 = rng.random();
    half * (2.0 * t - 1.0)
}

fn uniform_direction(rng: &mut ChaCha8Rng) -> UnitDirection {
    let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi: f64 = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    let r = (1.0 - z * z).max(0.0).sqrt();
    UnitDirection::new(Vec3::new(r * phi.cos(), r * phi.sin(), z))
        .expect("point on the sphere is never zero")
}

/// Draws `stacks` randomly oriented stacks of `per_stack` slices with offsets
/// spanning `[-1, 1]`, applying geometric and intensity augmentation.
///
/// All random parameters are drawn sequentially before any pixel is sampled,
/// so the output depends only on `seed`.
pub fn sample_training_stacks(
    volume: &Volume3,
    stacks: usize,
    per_stack: usize,
    h: usize,
    w: usize,
    aug: &Augmentation,
    seed: u64,
) -> Result<Vec<TrainingSlice>> {
    check_slice_shape(h, w)?;
    aug.validate()?;
    if per_stack < 2 {
        return Err(Error::InvalidParameter(format!(
            "slices per stack must be >= 2, got {per_stack}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut metas = Vec::with_capacity(stacks * per_stack);
    for stack in 0..stacks {
        let n = uniform_direction(&mut rng);
        let base = make_frame(n, BasisPolicy::Deterministic, 0);
        for slice in 0..per_stack {
            let s = normalized(slice, per_stack);
            let psi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            let u_dir = base.u * psi.cos() + base.v * psi.sin();
            let perp = n.vec().cross(u_dir);
            let shear = symmetric(&mut rng, aug.shear);
            let v_dir = perp * shear.cos() + u_dir * shear.sin();
            let u = u_dir * (1.0 + symmetric(&mut rng, aug.scale));
            let v = v_dir * (1.0 + symmetric(&mut rng, aug.scale));
            let du = symmetric(&mut rng, aug.translation);
            let dv = symmetric(&mut rng, aug.translation);
            let gain = 1.0 + symmetric(&mut rng, aug.intensity);
            let bias = symmetric(&mut rng, aug.intensity);
            metas.push(TrainingSliceMeta {
                stack,
                slice,
                s,
                normal: n.vec(),
                u,
                v,
                origin: n.vec() * s + u * du + v * dv,
                gain,
                bias,
            });
        }
    }
    Ok(metas
        .into_par_iter()
        .map(|meta| {
            let mut data = sample_plane(volume, meta.origin, meta.u, meta.v, h, w);
            if meta.gain != 1.0 || meta.bias != 0.0 {
                for x in &mut data {
                    *x = (meta.gain * *x as f64 + meta.bias) as f32;
                }
            }
            TrainingSlice {
                meta,
                shape: [h, w],
                data,
            }
        })
        .collect())
}

/// One exported slice's metadata, with the source volume and its label.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExportRecord {
    pub volume: usize,
    pub label: Option<i64>,
    #[serde(flatten)]
    pub meta: TrainingSliceMeta,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExportManifest {
    pub count: usize,
    pub h: usize,
    pub w: usize,
    pub dtype: String,
    pub slices: Vec<ExportRecord>,
}

/// Writes `<stem>.bin` (count x h x w little-endian f32) and `<stem>.json`.
pub fn save_training_export(
    path: impl AsRef<Path>,
    slices: &[(usize, Option<i64>, TrainingSlice)],
) -> Result<()> {
    let (header_path, payload_path) = volume_paths(path);
    let [h, w] = slices.first().map(|s| s.2.shape).unwrap_or([0, 0]);
    let mut payload = Vec::with_capacity(slices.len() * h * w * 4);
    let mut records = Vec::with_capacity(slices.len());
    for (volume, label, slice) in slices {
        if slice.shape != [h, w] {
            return Err(Error::ShapeMismatch(format!(
                "mixed slice shapes {:?} and {:?} in one export",
                [h, w],
                slice.shape
            )));
        }
        payload.extend(encode_f32_le(&slice.data));
        records.push(ExportRecord {
            volume: *volume,
            label: *label,
            meta: slice.meta.clone(),
        });
    }
    let manifest = ExportManifest {
        count: records.len(),
        h,
        w,
        dtype: crate::volume::DTYPE_TAG.to_owned(),
        slices: records,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))?;
    fs::write(&payload_path, payload).map_err(|e| Error::io(&payload_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fibonacci_lattice;

    fn frame_z() -> DirectionFrame {
        let n = UnitDirection::new(Vec3::new(1.0, 0.0, 0.0)).unwrap();
        make_frame(n, BasisPolicy::Deterministic, 0)
    }

    fn one_hot_center(n: usize) -> Volume3 {
        let mut data = vec![0.0; n * n * n];
        let c = n / 2;
        data[(c * n + c) * n + c] = 1.0;
        Volume3::new([n, n, n], data).unwrap()
    }

    #[test]
    fn constant_volume_gives_constant_slice() {
        let v = Volume3::new([5, 5, 5], vec![1.0; 125]).unwrap();
        let s = extract_slice(&v, 0.0, &frame_z(), 9, 7).unwrap();
        assert!(s.data().iter().all(|&x| (x - 1.0).abs() < 1e-6));
    }

    #[test]
    fn far_plane_is_empty() {
        let v = Volume3::new([5, 5, 5], vec![1.0; 125]).unwrap();
        for dir in fibonacci_lattice(20).unwrap() {
            let f = make_frame(dir, BasisPolicy::Deterministic, 0);
            let s = extract_slice(&v, 1.8, &f, 8, 8).unwrap();
            assert!(s.data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn one_hot_peaks_at_center_pixel() {
        let v = one_hot_center(9);
        for (l, dir) in fibonacci_lattice(15).unwrap().into_iter().enumerate() {
            let f = make_frame(dir, BasisPolicy::Random { seed: 1 }, l as u64);
            let s = extract_slice(&v, 0.0, &f, 9, 9).unwrap();
            let center = s.get(4, 4);
            assert!(center > 0.0);
            assert!(s.data().iter().all(|&x| x <= center));
        }
    }

    #[test]
    fn stack_offsets_formula() {
        assert_eq!(stack_offsets(3).unwrap(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let o = stack_offsets(100).unwrap();
        assert_eq!(o.len(), 102);
        for w in o.windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] - w[0] - 2.0 / 99.0).abs() < 1e-12);
        }
        assert!(stack_offsets(2).is_err());
    }

    #[test]
    fn stack_of_constant_volume() {
        let v = Volume3::new([4, 4, 4], vec![3.0; 64]).unwrap();
        let stack = extract_stack(&v, &frame_z(), 5, 6, 6).unwrap();
        assert_eq!(stack.slices.len(), 7);
        for slice in &stack.slices[1..6] {
            assert!(slice.data().iter().all(|&x| (x - 3.0).abs() < 1e-6));
        }
    }

    #[test]
    fn half_turn_frame_rotates_slice() {
        let n = 7;
        let data = (0..n * n * n).map(|i| ((i * 13) % 17) as f32).collect();
        let v = Volume3::new([n, n, n], data).unwrap();
        for (l, dir) in fibonacci_lattice(12).unwrap().into_iter().enumerate() {
            let f = make_frame(dir, BasisPolicy::Random { seed: 5 }, l as u64);
            let a = extract_slice(&v, 0.2, &f, 10, 6).unwrap();
            let b = extract_slice(&v, 0.2, &f.rotated_half_turn(), 10, 6).unwrap();
            for i in 0..10 {
                for j in 0..6 {
                    assert!((a.get(i, j) - b.get(9 - i, 5 - j)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn training_samples_are_deterministic() {
        let v = one_hot_center(9);
        let aug = Augmentation::default();
        let a = sample_training_stacks(&v, 2, 5, 8, 8, &aug, 42).unwrap();
        let b = sample_training_stacks(&v, 2, 5, 8, 8, &aug, 42).unwrap();
        assert_eq!(a.len(), 10);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.meta, y.meta);
            assert_eq!(x.data, y.data);
        }
        let c = sample_training_stacks(&v, 2, 5, 8, 8, &aug, 43).unwrap();
        assert_ne!(a[0].meta, c[0].meta);
    }

    #[test]
    fn unaugmented_training_geometry_matches_stack() {
        let n = 7;
        let data = (0..n * n * n).map(|i| ((i * 5) % 11) as f32).collect();
        let v = Volume3::new([n, n, n], data).unwrap();
        let items = sample_training_stacks(&v, 3, 6, 8, 8, &Augmentation::none(), 9).unwrap();
        for item in &items {
            let m = &item.meta;
            let nv = m.normal;
            assert!((m.s - normalized(m.slice, 6)).abs() < 1e-15);
            assert!((m.u.norm() - 1.0).abs() < 1e-12 && (m.v.norm() - 1.0).abs() < 1e-12);
            assert!(m.u.dot(nv).abs() < 1e-12 && m.v.dot(nv).abs() < 1e-12 && m.u.dot(m.v).abs() < 1e-12);
            assert_eq!((m.gain, m.bias), (1.0, 0.0));
            let frame = DirectionFrame {
                n: UnitDirection::new(nv).unwrap(),
                u: m.u,
                v: m.v,
            };
            let reference = extract_slice(&v, m.s, &frame, 8, 8).unwrap();
            for (a, b) in reference.data().iter().zip(&item.data) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn augmented_parameters_stay_in_range() {
        let v = one_hot_center(5);
        let aug = Augmentation {
            shear: 0.2,
            ..Augmentation::default()
        };
        for item in sample_training_stacks(&v, 4, 10, 4, 4, &aug, 1).unwrap() {
            let m = &item.meta;
            assert!(m.u.dot(m.normal).abs() < 1e-12 && m.v.dot(m.normal).abs() < 1e-12);
            assert!((0.7..=1.3).contains(&m.u.norm()) && (0.7..=1.3).contains(&m.v.norm()));
            assert!((0.7..=1.3).contains(&m.gain) && m.bias.abs() <= 0.3);
            let cos = m.u.dot(m.v) / (m.u.norm() * m.v.norm());
            assert!(cos.abs() <= 0.2f64.sin() + 1e-12);
        }
    }

    #[test]
    fn export_writes_payload_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let v = one_hot_center(5);
        let items = sample_training_stacks(&v, 1, 3, 4, 4, &Augmentation::default(), 2).unwrap();
        let tagged: Vec<_> = items.into_iter().map(|t| (0, Some(1), t)).collect();
        let stem = dir.path().join("train");
        save_training_export(&stem, &tagged).unwrap();
        let bytes = fs::read(dir.path().join("train.bin")).unwrap();
        assert_eq!(bytes.len(), 3 * 4 * 4 * 4);
        let text = fs::read_to_string(dir.path().join("train.json")).unwrap();
        let manifest: ExportManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(manifest.count, 3);
        assert_eq!(manifest.slices[2].meta, tagged[2].2.meta);
        assert_eq!(manifest.slices[0].label, Some(1));
    }
}
