use std::collections::VecDeque;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbours only.
    Six,
    /// Face, edge and corner neighbours.
    #[default]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            other => Err(Error::InvalidParameter(format!(
                "connectivity must be 6 or 26, got {other}"
            ))),
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Connectivity::Six => 6,
            Connectivity::TwentySix => 26,
        }
    }

    fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                for dk in -1i64..=1 {
                    let manhattan = di.abs() + dj.abs() + dk.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([di, dj, dk]);
                    }
                }
            }
        }
        out
    }
}

impl FromStr for Connectivity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let n = s
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("connectivity must be 6 or 26, got {s:?}")))?;
        Connectivity::from_count(n)
    }
}

/// Binary volume, row-major like [`Volume3`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    shape: [usize; 3],
    data: Vec<bool>,
}

impl Mask {
    pub fn new(shape: [usize; 3], data: Vec<bool>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "mask {shape:?} needs {} values, got {}",
                shape.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn empty(shape: [usize; 3]) -> Self {
        Self {
            shape,
            data: vec![false; shape.iter().product()],
        }
    }

    /// Nonzero voxels of `volume`.
    pub fn from_volume(volume: &Volume3) -> Self {
        Self {
            shape: volume.shape(),
            data: volume.data().iter().map(|&v| v != 0.0).collect(),
        }
    }

    pub fn to_volume(&self) -> Result<Volume3> {
        Volume3::new(
            self.shape,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn set(&mut self, flat: usize, value: bool) {
        self.data[flat] = value;
    }

    /// Sorted flat indices of the set voxels.
    pub fn indices(&self) -> Vec<usize> {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub(crate) fn unflatten(&self, flat: usize) -> [usize; 3] {
        let [_, h, w] = self.shape;
        [flat / (h * w), (flat / w) % h, flat % w]
    }
}

/// Inclusive voxel-index box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BoundingBox {
    pub fn new(min: [usize; 3], max: [usize; 3]) -> Result<Self> {
        if (0..3).any(|a| min[a] > max[a]) {
            return Err(Error::InvalidParameter(format!(
                "box min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn point(p: [usize; 3]) -> Self {
        Self { min: p, max: p }
    }

    pub fn include(&mut self, p: [usize; 3]) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn volume(&self) -> u64 {
        (0..3).map(|a| (self.max[a] - self.min[a] + 1) as u64).product()
    }

    pub fn intersection(&self, other: &BoundingBox) -> u64 {
        (0..3)
            .map(|a| {
                let lo = self.min[a].max(other.min[a]);
                let hi = self.max[a].min(other.max[a]);
                if hi >= lo {
                    (hi - lo + 1) as u64
                } else {
                    0
                }
            })
            .product()
    }

    /// `(intersection, union)` voxel counts.
    pub fn overlap(&self, other: &BoundingBox) -> (u64, u64) {
        let inter = self.intersection(other);
        (inter, self.volume() + other.volume() - inter)
    }

    pub fn fits(&self, shape: [usize; 3]) -> bool {
        (0..3).all(|a| self.max[a] < shape[a])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    /// Sorted flat voxel indices.
    pub voxels: Vec<usize>,
    pub bbox: BoundingBox,
    /// Largest heatmap value over the component, when a heatmap was given.
    pub peak: Option<f64>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }
}

/// Disjoint components ordered by their first voxel in scan order.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentSet {
    pub shape: [usize; 3],
    pub components: Vec<Component>,
}

impl ComponentSet {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Sorted flat indices of every voxel in every component.
    pub fn voxels(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.components.iter().flat_map(|c| c.voxels.iter().copied()).collect();
        all.sort_unstable();
        all
    }

    pub fn to_mask(&self) -> Mask {
        let mut mask = Mask::empty(self.shape);
        for c in &self.components {
            for &v in &c.voxels {
                mask.set(v, true);
            }
        }
        mask
    }
}

/// Breadth-first labeling of `mask`.
pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> ComponentSet {
    label(mask, connectivity, None)
}

/// As [`connected_components`], recording each component's peak in `values`.
pub fn connected_components_with_peaks(
    mask: &Mask,
    connectivity: Connectivity,
    values: &Volume3,
) -> Result<ComponentSet> {
    if values.shape() != mask.shape() {
        return Err(Error::ShapeMismatch(format!(
            "mask {:?} vs heatmap {:?}",
            mask.shape(),
            values.shape()
        )));
    }
    Ok(label(mask, connectivity, Some(values)))
}

fn label(mask: &Mask, connectivity: Connectivity, values: Option<&Volume3>) -> ComponentSet {
    let [d, h, w] = mask.shape;
    let offsets = connectivity.offsets();
    let mut seen = vec![false; mask.data.len()];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.data.len() {
        if !mask.data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut voxels = Vec::new();
        let mut bbox = BoundingBox::point(mask.unflatten(start));
        while let Some(flat) = queue.pop_front() {
            voxels.push(flat);
            let p = mask.unflatten(flat);
            bbox.include(p);
            for off in &offsets {
                let q = [p[0] as i64 + off[0], p[1] as i64 + off[1], p[2] as i64 + off[2]];
                if q[0] < 0 || q[1] < 0 || q[2] < 0 || q[0] >= d as i64 || q[1] >= h as i64 || q[2] >= w as i64 {
                    continue;
                }
                let nf = (q[0] as usize * h + q[1] as usize) * w + q[2] as usize;
                if mask.data[nf] && !seen[nf] {
                    seen[nf] = true;
                    queue.push_back(nf);
                }
            }
        }
        voxels.sort_unstable();
        let peak = values.map(|v| {
            voxels
                .iter()
                .map(|&i| v.data()[i] as f64)
                .fold(f64::NEG_INFINITY, f64::max)
        });
        components.push(Component { voxels, bbox, peak });
    }
    ComponentSet {
        shape: mask.shape,
        components,
    }
}

/// Size of the intersection of two sorted index lists.
pub fn sorted_intersection(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_with(shape: [usize; 3], points: &[[usize; 3]]) -> Mask {
        let mut m = Mask::empty(shape);
        for p in points {
            m.set((p[0] * shape[1] + p[1]) * shape[2] + p[2], true);
        }
        m
    }

    #[test]
    fn face_neighbours_join_at_both_connectivities() {
        let m = mask_with([3, 3, 3], &[[0, 0, 0], [0, 0, 1]]);
        assert_eq!(connected_components(&m, Connectivity::Six).len(), 1);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).len(), 1);
    }

    #[test]
    fn corner_neighbours_join_only_at_26() {
        let m = mask_with([3, 3, 3], &[[0, 0, 0], [1, 1, 1]]);
        assert_eq!(connected_components(&m, Connectivity::Six).len(), 2);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).len(), 1);
    }

    #[test]
    fn empty_mask_has_no_components() {
        assert!(connected_components(&Mask::empty([4, 4, 4]), Connectivity::TwentySix).is_empty());
    }

    #[test]
    fn labels_follow_scan_order_with_boxes_and_peaks() {
        let m = mask_with([4, 4, 4], &[[3, 3, 3], [0, 1, 2], [0, 1, 3], [2, 0, 0]]);
        let mut values = vec![0.0f32; 64];
        values[(3 * 4 + 3) * 4 + 3] = 5.0;
        values[4 + 3] = 2.0;
        let heat = Volume3::new([4, 4, 4], values).unwrap();
        let set = connected_components_with_peaks(&m, Connectivity::Six, &heat).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.components[0].voxels, vec![6, 7]);
        assert_eq!(set.components[0].bbox, BoundingBox::new([0, 1, 2], [0, 1, 3]).unwrap());
        assert_eq!(set.components[0].peak, Some(2.0));
        assert_eq!(set.components[1].bbox, BoundingBox::point([2, 0, 0]));
        assert_eq!(set.components[2].peak, Some(5.0));
        assert_eq!(set.to_mask(), m);
    }

    #[test]
    fn box_overlap_counts() {
        let a = BoundingBox::new([0, 0, 0], [3, 3, 3]).unwrap();
        let b = BoundingBox::new([1, 1, 1], [2, 2, 2]).unwrap();
        assert_eq!(a.overlap(&b), (8, 64));
        let c = BoundingBox::new([5, 0, 0], [6, 1, 1]).unwrap();
        assert_eq!(a.overlap(&c), (0, 64 + 8));
        assert!(BoundingBox::new([2, 0, 0], [1, 0, 0]).is_err());
    }

    #[test]
    fn sorted_intersection_counts() {
        assert_eq!(sorted_intersection(&[1, 3, 5, 9], &[0, 3, 4, 5, 10]), 2);
        assert_eq!(sorted_intersection(&[], &[1]), 0);
    }
}
