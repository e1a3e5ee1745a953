//! Synthetic test volumes with known content.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::volume::Volume3;

/// Axis-aligned ellipsoid in normalized coordinates, added to the background.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: Vec3,
    pub semi_axes: Vec3,
    pub value: f64,
}

impl Ellipsoid {
    pub fn ball(center: Vec3, radius: f64, value: f64) -> Self {
        Self {
            center,
            semi_axes: Vec3::new(radius, radius, radius),
            value,
        }
    }

    pub fn contains(&self, x: Vec3) -> bool {
        let d = x - self.center;
        let q = (d.x / self.semi_axes.x).powi(2)
            + (d.y / self.semi_axes.y).powi(2)
            + (d.z / self.semi_axes.z).powi(2);
        q <= 1.0
    }
}

/// Sum of the ellipsoid indicators sampled at voxel centers.
pub fn render(shape: [usize; 3], shapes: &[Ellipsoid]) -> Result<Volume3> {
    Volume3::from_normalized_fn(shape, |x| {
        shapes.iter().filter(|e| e.contains(x)).map(|e| e.value).sum()
    })
}

/// The two-ellipsoid test object: a large body with a brighter off-center
/// inclusion, both inside the unit ball.
pub fn two_ellipsoids_spec() -> [Ellipsoid; 2] {
    [
        Ellipsoid {
            center: Vec3::new(0.0, 0.0, 0.0),
            semi_axes: Vec3::new(0.65, 0.5, 0.55),
            value: 1.0,
        },
        Ellipsoid {
            center: Vec3::new(0.2, -0.15, 0.1),
            semi_axes: Vec3::new(0.22, 0.18, 0.28),
            value: 1.0,
        },
    ]
}

pub fn two_ellipsoids(size: usize) -> Result<Volume3> {
    render([size; 3], &two_ellipsoids_spec())
}

pub fn centered_ball(size: usize, radius: f64) -> Result<Volume3> {
    render([size; 3], &[Ellipsoid::ball(Vec3::default(), radius, 1.0)])
}

/// A single unit voxel at the grid center (rounded down).
pub fn one_hot(size: usize) -> Result<Volume3> {
    let mut data = vec![0.0; size * size * size];
    let c = size / 2;
    data[(c * size + c) * size + c] = 1.0;
    Volume3::new([size; 3], data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    Ellipsoids,
    Ball,
    OneHot,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ellipsoids" => Ok(PhantomKind::Ellipsoids),
            "ball" => Ok(PhantomKind::Ball),
            "one-hot" | "onehot" => Ok(PhantomKind::OneHot),
            other => Err(Error::InvalidParameter(format!(
                "unknown phantom {other:?}; expected ellipsoids, ball or one-hot"
            ))),
        }
    }
}

impl std::fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PhantomKind::Ellipsoids => "ellipsoids",
            PhantomKind::Ball => "ball",
            PhantomKind::OneHot => "one-hot",
        })
    }
}

pub fn generate(kind: PhantomKind, size: usize) -> Result<Volume3> {
    match kind {
        PhantomKind::Ellipsoids => two_ellipsoids(size),
        PhantomKind::Ball => centered_ball(size, 0.5),
        PhantomKind::OneHot => one_hot(size),
    }
}
