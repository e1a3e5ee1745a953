//! Sphere sampling, in-plane bases and the normalized-cube index mapping.
//!
//! All geometry lives in the normalized cube `[-1, 1]^3`. Axis 0 of a volume
//! (depth, slowest in memory) maps to the first vector component.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// A point on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec3", try_from = "Vec3")]
pub struct UnitDirection(Vec3);

impl UnitDirection {
    /// Normalizes `v`; fails on a (near) zero vector.
    pub fn new(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(Error::InvalidParameter(format!(
                "cannot normalize vector {v:?}"
            )));
        }
        Ok(Self(v * (1.0 / n)))
    }

    pub fn vec(self) -> Vec3 {
        self.0
    }
}

impl From<UnitDirection> for Vec3 {
    fn from(d: UnitDirection) -> Vec3 {
        d.0
    }
}

impl TryFrom<Vec3> for UnitDirection {
    type Error = Error;
    fn try_from(v: Vec3) -> Result<Self> {
        UnitDirection::new(v)
    }
}

/// Plane normal plus the two in-plane axis vectors.
///
/// Reconstruction frames are orthonormal. Training frames may carry scaled or
/// sheared `u`/`v`, but both stay perpendicular to `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionFrame {
    pub n: UnitDirection,
    pub u: Vec3,
    pub v: Vec3,
}

impl DirectionFrame {
    /// The same plane seen from the opposite in-plane orientation.
    pub fn rotated_half_turn(self) -> Self {
        Self {
            n: self.n,
            u: -self.u,
            v: -self.v,
        }
    }

    /// Coordinates of `x` in the `(n, u, v)` system.
    #[inline]
    pub fn project(&self, x: Vec3) -> (f64, f64, f64) {
        (x.dot(self.n.0), x.dot(self.u), x.dot(self.v))
    }
}

/// How the in-plane axes are chosen for each reconstruction direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum BasisPolicy {
    /// Gram-Schmidt of a fixed reference axis; bitwise reproducible.
    #[default]
    Deterministic,
    /// Uniform rotation of `u` within the plane, keyed by `(seed, index)`.
    Random { seed: u64 },
}

/// Golden angle in radians.
pub fn golden_angle() -> f64 {
    PI * (3.0 - 5f64.sqrt())
}

/// `L` near-uniform directions on the unit sphere, pole to pole along `y`.
pub fn fibonacci_lattice(count: usize) -> Result<Vec<UnitDirection>> {
    if count < 2 {
        return Err(Error::InvalidParameter(format!(
            "fibonacci lattice needs at least 2 points, got {count}"
        )));
    }
    let alpha = golden_angle();
    let denom = (count - 1) as f64;
    Ok((0..count)
        .map(|l| {
            let y = 2.0 * l as f64 / denom - 1.0;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let theta = l as f64 * alpha;
            // Already unit length up to rounding; renormalize so the 1e-12
            // norm invariant holds for every count.
            let p = Vec3::new(r * theta.cos(), y, r * theta.sin());
            UnitDirection(p * (1.0 / p.norm()))
        })
        .collect())
}

const REFERENCE_AXIS: Vec3 = Vec3::new(1.0, 0.0, 0.0);
const FALLBACK_AXIS: Vec3 = Vec3::new(0.0, 1.0, 0.0);

fn gram_schmidt_axis(n: Vec3) -> Vec3 {
    let reference = if n.dot(REFERENCE_AXIS).abs() > 0.9 {
        FALLBACK_AXIS
    } else {
        REFERENCE_AXIS
    };
    let u = reference - n * reference.dot(n);
    u * (1.0 / u.norm())
}

/// Orthonormal frame `(n, u, v)` with `v = n x u`.
///
/// `index` keys the random stream so that each direction of a run gets its own
/// reproducible in-plane rotation.
pub fn make_frame(n: UnitDirection, policy: BasisPolicy, index: u64) -> DirectionFrame {
    let nv = n.vec();
    let e1 = gram_schmidt_axis(nv);
    let u = match policy {
        BasisPolicy::Deterministic => e1,
        BasisPolicy::Random { seed } => {
            let e2 = nv.cross(e1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index);
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let u = e1 * phi.cos() + e2 * phi.sin();
            u * (1.0 / u.norm())
        }
    };
    let v = nv.cross(u);
    DirectionFrame { n, u, v }
}

/// Maps voxel index `i` of an axis with `extent` samples to `[-1, 1]`.
pub fn index_to_normalized(i: usize, extent: usize) -> Result<f64> {
    if extent < 2 {
        return Err(Error::InvalidParameter(format!(
            "axis extent must be >= 2, got {extent}"
        )));
    }
    if i >= extent {
        return Err(Error::InvalidParameter(format!(
            "index {i} out of range for extent {extent}"
        )));
    }
    Ok(normalized(i, extent))
}

/// Unchecked form of [`index_to_normalized`] for hot loops.
#[inline]
pub(crate) fn normalized(i: usize, extent: usize) -> f64 {
    2.0 * i as f64 / (extent - 1) as f64 - 1.0
}
