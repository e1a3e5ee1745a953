//! Independent reference for component matching: union-find labeling and
//! all-pairs IoU, shared by the core tests and the acceptance suite.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tomorecon_core::postprocess::components::Connectivity;

fn neighbours(conn: Connectivity) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for a in -1i64..=1 {
        for b in -1i64..=1 {
            for c in -1i64..=1 {
                let taxicab = a.abs() + b.abs() + c.abs();
                let keep = match conn {
                    Connectivity::Six => taxicab == 1,
                    Connectivity::TwentySix => taxicab > 0,
                };
                if keep {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Union-find labeling; returns each component as a sorted voxel list.
pub fn label(mask: &[bool], shape: [usize; 3], conn: Connectivity) -> Vec<Vec<usize>> {
    let [d, h, w] = shape;
    let mut parent: Vec<usize> = (0..mask.len()).collect();
    let offsets = neighbours(conn);
    for i in 0..d {
        for j in 0..h {
            for k in 0..w {
                let a = (i * h + j) * w + k;
                if !mask[a] {
                    continue;
                }
                for o in &offsets {
                    let (ni, nj, nk) = (i as i64 + o[0], j as i64 + o[1], k as i64 + o[2]);
                    if ni < 0 || nj < 0 || nk < 0 || ni >= d as i64 || nj >= h as i64 || nk >= w as i64 {
                        continue;
                    }
                    let b = (ni as usize * h + nj as usize) * w + nk as usize;
                    if mask[b] {
                        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..mask.len() {
        if mask[v] {
            let r = find(&mut parent, v);
            groups.entry(r).or_default().push(v);
        }
    }
    groups.into_values().collect()
}

pub struct Expected {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub dice: f64,
}

pub fn brute_force(pred: &[bool], gt: &[bool], shape: [usize; 3], conn: Connectivity) -> Expected {
    let pc = label(pred, shape, conn);
    let gc = label(gt, shape, conn);
    let iou = |a: &Vec<usize>, b: &Vec<usize>| {
        let inter = a.iter().filter(|v| b.binary_search(v).is_ok()).count();
        inter as f64 / (a.len() + b.len() - inter) as f64
    };
    let tp = pc.iter().filter(|p| gc.iter().any(|g| iou(p, g) > 0.125)).count();
    let detected = gc.iter().filter(|g| pc.iter().any(|p| iou(p, g) > 0.125)).count();
    let inter = pred.iter().zip(gt).filter(|(a, b)| **a && **b).count();
    let total = pred.iter().filter(|a| **a).count() + gt.iter().filter(|b| **b).count();
    let dice = if total == 0 { 1.0 } else { 2.0 * inter as f64 / total as f64 };
    let (precision, recall, f1) = if gc.is_empty() {
        (None, None, None)
    } else {
        let p = if pc.is_empty() { 0.0 } else { tp as f64 / pc.len() as f64 };
        let r = detected as f64 / gc.len() as f64;
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (Some(p), Some(r), Some(f))
    };
    Expected {
        tp,
        fp: pc.len() - tp,
        fn_: gc.len() - detected,
        precision,
        recall,
        f1,
        dice,
    }
}

/// Random blobs: a few axis-aligned boxes with random holes.
pub fn random_mask(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> Vec<bool> {
    let n = shape.iter().product();
    let mut m = vec![false; n];
    for _ in 0..rng.random_range(0..5) {
        let lo: Vec<usize> = shape.iter().map(|&s| rng.random_range(0..s)).collect();
        let hi: Vec<usize> = lo.iter().zip(&shape).map(|(&l, &s)| rng.random_range(l..s)).collect();
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    m[(i * shape[1] + j) * shape[2] + k] = rng.random_bool(0.85);
                }
            }
        }
    }
    m
}

pub fn perturb(rng: &mut ChaCha8Rng, m: &[bool]) -> Vec<bool> {
    m.iter().map(|&v| if rng.random_bool(0.1) { !v } else { v }).collect()
}

