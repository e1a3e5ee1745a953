//! Dense 3D scalar fields on the normalized cube, and their on-disk format.
//!
//! A volume on disk is a pair of files sharing a stem: `<name>.json` holding
//! `{"shape":[d,h,w],"dtype":"f32le","order":"dhw"}` and `<name>.bin` holding
//! `d*h*w` little-endian `f32` values with `w` fastest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalized, Vec3};

pub const DTYPE_TAG: &str = "f32le";
pub const ORDER_TAG: &str = "dhw";

#[derive(Clone, Debug, PartialEq)]
pub struct Volume3 {
    shape: [usize; 3],
    data: Vec<f32>,
}

fn check_shape(shape: [usize; 3]) -> Result<()> {
    if shape.iter().any(|&n| n < 2) {
        return Err(Error::InvalidParameter(format!(
            "every volume axis must be >= 2, got {shape:?}"
        )));
    }
    Ok(())
}

impl Volume3 {
    pub fn new(shape: [usize; 3], data: Vec<f32>) -> Result<Self> {
        check_shape(shape)?;
        let expected = shape[0] * shape[1] * shape[2];
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 3]) -> Result<Self> {
        Self::new(shape, vec![0.0; shape[0] * shape[1] * shape[2]])
    }

    /// Fills each voxel from its normalized coordinates.
    pub fn from_normalized_fn(shape: [usize; 3], f: impl Fn(Vec3) -> f64) -> Result<Self> {
        check_shape(shape)?;
        let [d, h, w] = shape;
        let mut data = Vec::with_capacity(d * h * w);
        for i in 0..d {
            for j in 0..h {
                for k in 0..w {
                    let x = Vec3::new(normalized(i, d), normalized(j, h), normalized(k, w));
                    data.push(f(x) as f32);
                }
            }
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.index(i, j, k)]
    }

    /// Normalized coordinates of voxel `(i, j, k)`.
    pub fn voxel_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            normalized(i, self.shape[0]),
            normalized(j, self.shape[1]),
            normalized(k, self.shape[2]),
        )
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Trilinear interpolation with `(-1,-1,-1)` at voxel `(0,0,0)` and
    /// `(1,1,1)` at the last voxel. Zero outside the closed cube.
    #[inline]
    pub fn interpolate(&self, x: Vec3) -> f64 {
        let [d, h, w] = self.shape;
        let Some((i0, ti)) = axis_cell(x.x, d) else { return 0.0 };
        let Some((j0, tj)) = axis_cell(x.y, h) else { return 0.0 };
        let Some((k0, tk)) = axis_cell(x.z, w) else { return 0.0 };

        let plane = h * w;
        let base = i0 * plane + j0 * w + k0;
        let c = &self.data;
        let lerp = |a: f32, b: f32, t: f64| a as f64 + (b as f64 - a as f64) * t;

        let c00 = lerp(c[base], c[base + 1], tk);
        let c01 = lerp(c[base + w], c[base + w + 1], tk);
        let c10 = lerp(c[base + plane], c[base + plane + 1], tk);
        let c11 = lerp(c[base + plane + w], c[base + plane + w + 1], tk);
        let c0 = c00 + (c01 - c00) * tj;
        let c1 = c10 + (c11 - c10) * tj;
        c0 + (c1 - c0) * ti
    }
}

/// Lower cell index and fractional offset along one axis, `None` outside
/// `[-1, 1]`.
#[inline]
fn axis_cell(coord: f64, extent: usize) -> Option<(usize, f64)> {
    if !(-1.0..=1.0).contains(&coord) {
        return None;
    }
    let pos = (coord + 1.0) * 0.5 * (extent - 1) as f64;
    let cell = (pos as usize).min(extent - 2);
    Some((cell, pos - cell as f64))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct VolumeHeader {
    pub shape: [usize; 3],
    pub dtype: String,
    pub order: String,
}

impl VolumeHeader {
    pub fn for_shape(shape: [usize; 3]) -> Self {
        Self {
            shape,
            dtype: DTYPE_TAG.to_owned(),
            order: ORDER_TAG.to_owned(),
        }
    }
}

/// Header and payload paths for a volume stem. Accepts `name`, `name.json`
/// or `name.bin`.
pub fn volume_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let path = path.as_ref();
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut header = stem.clone().into_os_string();
    header.push(".json");
    let mut payload = stem.into_os_string();
    payload.push(".bin");
    (header.into(), payload.into())
}

pub fn save_volume(volume: &Volume3, path: impl AsRef<Path>) -> Result<()> {
    let (header_path, payload_path) = volume_paths(path);
    let header = serde_json::to_string(&VolumeHeader::for_shape(volume.shape))
        .expect("header serialization cannot fail");
    fs::write(&header_path, header).map_err(|e| Error::io(&header_path, e))?;
    fs::write(&payload_path, encode_f32_le(&volume.data))
        .map_err(|e| Error::io(&payload_path, e))
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume3> {
    let (header_path, payload_path) = volume_paths(path);
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: VolumeHeader =
        serde_json::from_str(&text).map_err(|e| Error::MalformedHeader {
            path: header_path.clone(),
            reason: e.to_string(),
        })?;
    if header.dtype != DTYPE_TAG || header.order != ORDER_TAG {
        return Err(Error::MalformedHeader {
            path: header_path,
            reason: format!(
                "unsupported dtype/order {:?}/{:?}, expected {DTYPE_TAG:?}/{ORDER_TAG:?}",
                header.dtype, header.order
            ),
        });
    }
    check_shape(header.shape)?;

    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let expected = 4 * (header.shape[0] * header.shape[1] * header.shape[2]) as u64;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::TruncatedPayload {
            path: payload_path,
            expected,
            found,
        });
    }
    if found > expected {
        return Err(Error::OversizedPayload {
            path: payload_path,
            expected,
            found,
        });
    }
    Volume3::new(header.shape, decode_f32_le(&bytes))
}

pub(crate) fn encode_f32_le(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) fn decode_f32_le(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(shape: [usize; 3]) -> Volume3 {
        let n = shape.iter().product::<usize>();
        let data = (0..n).map(|i| ((i * 37) % 101) as f32 * 0.25 - 7.0).collect();
        Volume3::new(shape, data).unwrap()
    }

    #[test]
    fn corners_and_outside() {
        let v = ramp([3, 4, 5]);
        assert_eq!(v.interpolate(Vec3::new(-1.0, -1.0, -1.0)), v.get(0, 0, 0) as f64);
        assert_eq!(v.interpolate(Vec3::new(1.0, 1.0, 1.0)), v.get(2, 3, 4) as f64);
        assert_eq!(v.interpolate(Vec3::new(2.0, 0.0, 0.0)), 0.0);
        assert_eq!(v.interpolate(Vec3::new(0.0, -1.0000001, 0.0)), 0.0);
    }

    #[test]
    fn constant_volume_reproduced() {
        let v = Volume3::new([4, 4, 4], vec![2.5; 64]).unwrap();
        for x in [-0.99, -0.3, 0.0, 0.41, 0.999] {
            let p = Vec3::new(x, -x * 0.7, x * 0.2);
            assert!((v.interpolate(p) - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_at_voxel_centers() {
        let v = ramp([5, 3, 6]);
        for i in 0..5 {
            for j in 0..3 {
                for k in 0..6 {
                    let got = v.interpolate(v.voxel_position(i, j, k));
                    assert!((got - v.get(i, j, k) as f64).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(
            Volume3::new([1, 4, 4], vec![0.0; 16]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            Volume3::new([2, 2, 2], vec![0.0; 7]),
            Err(Error::ShapeMismatch(_))
        ));
        let mut data = vec![0.0; 8];
        data[3] = f32::NAN;
        assert!(matches!(
            Volume3::new([2, 2, 2], data),
            Err(Error::NonFinite { index: 3 })
        ));
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let v = ramp([3, 5, 2]);
        let path = dir.path().join("vol.json");
        save_volume(&v, &path).unwrap();
        let back = load_volume(&path).unwrap();
        assert_eq!(back.shape(), v.shape());
        let a: Vec<u32> = v.data().iter().map(|x| x.to_bits()).collect();
        let b: Vec<u32> = back.data().iter().map(|x| x.to_bits()).collect();
        assert_eq!(a, b);
        // Any of the three path spellings resolves to the same pair.
        assert_eq!(load_volume(dir.path().join("vol")).unwrap(), back);
        assert_eq!(load_volume(dir.path().join("vol.bin")).unwrap(), back);
    }

    #[test]
    fn load_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let v = ramp([2, 3, 4]);
        let path = dir.path().join("v.json");
        save_volume(&v, &path).unwrap();
        let (header, payload) = volume_paths(&path);

        let bytes = fs::read(&payload).unwrap();
        fs::write(&payload, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_volume(&path), Err(Error::TruncatedPayload { .. })));

        let mut longer = bytes.clone();
        longer.extend_from_slice(&[0, 0, 0, 0]);
        fs::write(&payload, &longer).unwrap();
        assert!(matches!(load_volume(&path), Err(Error::OversizedPayload { .. })));

        fs::write(&payload, &bytes).unwrap();
        fs::write(&header, r#"{"shape":[1,3,4],"dtype":"f32le","order":"dhw"}"#).unwrap();
        assert!(matches!(load_volume(&path), Err(Error::InvalidParameter(_))));

        fs::write(&header, r#"{"shape":[2,3"#).unwrap();
        assert!(matches!(load_volume(&path), Err(Error::MalformedHeader { .. })));

        fs::write(&header, r#"{"shape":[2,3,4],"dtype":"f64le","order":"dhw"}"#).unwrap();
        assert!(matches!(load_volume(&path), Err(Error::MalformedHeader { .. })));

        fs::write(&header, r#"{"shape":[2,3,4],"dtype":"f32le","order":"dhw"}"#).unwrap();
        let mut nan = bytes.clone();
        nan[8..12].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&payload, &nan).unwrap();
        assert!(matches!(load_volume(&path), Err(Error::NonFinite { index: 2 })));

        fs::remove_file(&payload).unwrap();
        assert!(matches!(load_volume(&path), Err(Error::Io { .. })));
    }

    fn arb_volume(shape: [usize; 3]) -> impl Strategy<Value = Volume3> {
        let n = shape.iter().product::<usize>();
        proptest::collection::vec(-10.0f32..10.0, n)
            .prop_map(move |data| Volume3::new(shape, data).unwrap())
    }

    proptest! {
        #[test]
        fn interpolation_bounded_by_cell(v in arb_volume([4, 3, 5]),
                                         x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let p = Vec3::new(x, y, z);
            let got = v.interpolate(p);
            let (i0, _) = axis_cell(x, 4).unwrap();
            let (j0, _) = axis_cell(y, 3).unwrap();
            let (k0, _) = axis_cell(z, 5).unwrap();
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for di in 0..2 { for dj in 0..2 { for dk in 0..2 {
                let c = v.get(i0 + di, j0 + dj, k0 + dk) as f64;
                lo = lo.min(c);
                hi = hi.max(c);
            }}}
            prop_assert!(got >= lo - 1e-9 && got <= hi + 1e-9);
        }

        #[test]
        fn interpolation_is_linear(a in arb_volume([3, 3, 3]), b in arb_volume([3, 3, 3]),
                                   alpha in -3.0f32..3.0, beta in -3.0f32..3.0,
                                   x in -1.2f64..1.2, y in -1.2f64..1.2, z in -1.2f64..1.2) {
            let combo: Vec<f32> = a.data().iter().zip(b.data())
                .map(|(p, q)| alpha * p + beta * q).collect();
            let c = Volume3::new([3, 3, 3], combo).unwrap();
            let p = Vec3::new(x, y, z);
            let lhs = c.interpolate(p);
            let rhs = alpha as f64 * a.interpolate(p) + beta as f64 * b.interpolate(p);
            prop_assert!((lhs - rhs).abs() <= 1e-6 * (1.0 + rhs.abs()) + 1e-5);
        }
    }
}
