//! Slice measurements: the function applied to every extracted slice before
//! filtering and backprojection.
//!
//! Two built-in evaluators mirror the approximate Radon transform (pixel mean)
//! and its spatially pooled variant. The external evaluator forwards slices
//! to another process over a small binary protocol, which is how a trained
//! classifier or CAM extractor plugs in.

mod external;
pub mod protocol;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DirectionFrame;
use crate::slicing::{extract_slice, Slice2};
use crate::volume::Volume3;

pub use external::ExternalEvaluator;

/// Arity of one slice's measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputShape {
    Scalar,
    Grid { gh: usize, gw: usize },
}

impl OutputShape {
    pub fn cells(self) -> [usize; 2] {
        match self {
            OutputShape::Scalar => [1, 1],
            OutputShape::Grid { gh, gw } => [gh, gw],
        }
    }

    pub fn per_slice(self) -> usize {
        let [a, b] = self.cells();
        a * b
    }
}

/// How an external evaluator process is launched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalSpec {
    pub program: String,
    pub args: Vec<String>,
    /// Reported grid size; `None` means scalar output.
    pub grid: Option<[usize; 2]>,
    pub timeout_secs: f64,
}

impl ExternalSpec {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            grid: None,
            timeout_secs: 300.0,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn output(&self) -> OutputShape {
        match self.grid {
            None => OutputShape::Scalar,
            Some([gh, gw]) => OutputShape::Grid { gh, gw },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EvaluatorKind {
    Sum,
    PooledGrid { gh: usize, gw: usize },
    External(ExternalSpec),
}

impl EvaluatorKind {
    pub fn output(&self) -> OutputShape {
        match self {
            EvaluatorKind::Sum => OutputShape::Scalar,
            EvaluatorKind::PooledGrid { gh, gw } => OutputShape::Grid { gh: *gh, gw: *gw },
            EvaluatorKind::External(spec) => spec.output(),
        }
    }

    /// Checks the kind against the slice resolution it will receive.
    pub fn validate(&self, h: usize, w: usize) -> Result<()> {
        match self.output() {
            OutputShape::Scalar => Ok(()),
            OutputShape::Grid { gh, gw } => {
                if gh == 0 || gw == 0 {
                    return Err(Error::InvalidParameter(format!(
                        "grid size must be positive, got {gh}x{gw}"
                    )));
                }
                if matches!(self, EvaluatorKind::PooledGrid { .. }) && (!h.is_multiple_of(gh) || !w.is_multiple_of(gw)) {
                    return Err(Error::InvalidParameter(format!(
                        "slice {h}x{w} is not divisible into a {gh}x{gw} grid"
                    )));
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for EvaluatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvaluatorKind::Sum => write!(f, "sum"),
            EvaluatorKind::PooledGrid { gh, gw } => write!(f, "pooled:{gh}x{gw}"),
            EvaluatorKind::External(spec) => {
                write!(f, "external:{}", spec.program)?;
                for a in &spec.args {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
        }
    }
}

fn parse_grid(text: &str) -> Result<[usize; 2]> {
    let bad = || Error::InvalidParameter(format!("expected <gh>x<gw>, got {text:?}"));
    let (a, b) = text.split_once('x').ok_or_else(bad)?;
    let gh = a.trim().parse().map_err(|_| bad())?;
    let gw = b.trim().parse().map_err(|_| bad())?;
    Ok([gh, gw])
}

impl FromStr for EvaluatorKind {
    type Err = Error;

    /// `sum`, `pooled:<gh>x<gw>`, `external:<cmd> [args...]`.
    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "sum" {
            return Ok(EvaluatorKind::Sum);
        }
        if let Some(rest) = text.strip_prefix("pooled:") {
            let [gh, gw] = parse_grid(rest)?;
            if gh == 0 || gw == 0 {
                return Err(Error::InvalidParameter("grid size must be positive".into()));
            }
            return Ok(EvaluatorKind::PooledGrid { gh, gw });
        }
        if let Some(rest) = text.strip_prefix("external:") {
            let mut parts = rest.split_whitespace().map(str::to_owned);
            let program = parts
                .next()
                .ok_or_else(|| Error::InvalidParameter("external evaluator needs a command".into()))?;
            return Ok(EvaluatorKind::External(ExternalSpec::new(program, parts.collect())));
        }
        Err(Error::InvalidParameter(format!(
            "unknown evaluator {text:?}; expected sum, pooled:<gh>x<gw> or external:<cmd>"
        )))
    }
}

/// Per-slice outputs in input order, `cells[0] * cells[1]` values per slice.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationResult {
    pub cells: [usize; 2],
    pub values: Vec<f64>,
}

impl EvaluationResult {
    pub fn empty(cells: [usize; 2]) -> Self {
        Self {
            cells,
            values: Vec::new(),
        }
    }

    pub fn per_slice(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.per_slice()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        let k = self.per_slice();
        &self.values[m * k..(m + 1) * k]
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }
}

/// Mean pixel value of a slice.
pub fn forward_sum(slice: &Slice2) -> f64 {
    let total: f64 = slice.data().iter().map(|&v| v as f64).sum();
    total / slice.data().len() as f64
}

/// Non-overlapping mean pooling down to a `gh x gw` grid, row-major.
pub fn forward_pooled(slice: &Slice2, gh: usize, gw: usize) -> Result<Vec<f64>> {
    let [h, w] = slice.shape();
    if gh == 0 || gw == 0 || h % gh != 0 || w % gw != 0 {
        return Err(Error::InvalidParameter(format!(
            "slice {h}x{w} is not divisible into a {gh}x{gw} grid"
        )));
    }
    let (kh, kw) = (h / gh, w / gw);
    let mut out = vec![0.0f64; gh * gw];
    let data = slice.data();
    for i in 0..h {
        let row = &data[i * w..(i + 1) * w];
        let a = i / kh;
        for (j, &v) in row.iter().enumerate() {
            out[a * gw + j / kw] += v as f64;
        }
    }
    let area = (kh * kw) as f64;
    for v in &mut out {
        *v /= area;
    }
    Ok(out)
}

/// Approximate Radon transform: mean of the slice at offset `s`.
pub fn approximate_radon(volume: &Volume3, s: f64, frame: &DirectionFrame, h: usize, w: usize) -> Result<f64> {
    Ok(forward_sum(&extract_slice(volume, s, frame, h, w)?))
}

/// Applies a built-in (pure) evaluator. External kinds must go through
/// [`Evaluator`].
pub fn evaluate_builtin(kind: &EvaluatorKind, slices: &[Slice2]) -> Result<EvaluationResult> {
    match kind {
        EvaluatorKind::Sum => Ok(EvaluationResult {
            cells: [1, 1],
            values: slices.iter().map(forward_sum).collect(),
        }),
        EvaluatorKind::PooledGrid { gh, gw } => {
            let mut values = Vec::with_capacity(slices.len() * gh * gw);
            for s in slices {
                values.extend(forward_pooled(s, *gh, *gw)?);
            }
            Ok(EvaluationResult {
                cells: [*gh, *gw],
                values,
            })
        }
        EvaluatorKind::External(_) => Err(Error::InvalidParameter(
            "external evaluators need a running session".into(),
        )),
    }
}

/// A ready-to-use evaluator: built-in, or a live external session.
#[derive(Debug)]
pub enum Evaluator {
    Builtin(EvaluatorKind),
    External(ExternalEvaluator),
}

impl Evaluator {
    /// Builds an evaluator for slices of `h x w` with `channels` channels.
    /// Spawns and handshakes external processes.
    pub fn open(kind: &EvaluatorKind, h: usize, w: usize, channels: usize) -> Result<Self> {
        kind.validate(h, w)?;
        match kind {
            EvaluatorKind::External(spec) => {
                Ok(Evaluator::External(ExternalEvaluator::spawn(spec, h, w, channels)?))
            }
            builtin => {
                if channels != 1 {
                    return Err(Error::InvalidParameter(format!(
                        "built-in evaluator {builtin} is single-channel, got {channels} channels"
                    )));
                }
                Ok(Evaluator::Builtin(builtin.clone()))
            }
        }
    }

    pub fn output(&self) -> OutputShape {
        match self {
            Evaluator::Builtin(kind) => kind.output(),
            Evaluator::External(ext) => ext.output(),
        }
    }

    /// Single-channel batch evaluation, order-preserving.
    pub fn evaluate_batch(&mut self, slices: &[Slice2]) -> Result<EvaluationResult> {
        self.evaluate_channels(&[slices])
    }

    /// `channels[c][k]` is channel `c` of slice `k`.
    pub fn evaluate_channels(&mut self, channels: &[&[Slice2]]) -> Result<EvaluationResult> {
        match self {
            Evaluator::Builtin(kind) => match channels {
                [single] => evaluate_builtin(kind, single),
                _ => Err(Error::InvalidParameter(format!(
                    "built-in evaluator {kind} is single-channel"
                ))),
            },
            Evaluator::External(ext) => ext.evaluate(channels),
        }
    }

    /// Ends an external session cleanly; no-op for built-ins.
    pub fn close(self) -> Result<()> {
        match self {
            Evaluator::Builtin(_) => Ok(()),
            Evaluator::External(ext) => ext.shutdown(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_frame, BasisPolicy, UnitDirection, Vec3};
    use crate::slicing::extract_stack;

    fn frame() -> DirectionFrame {
        make_frame(
            UnitDirection::new(Vec3::new(0.0, 0.0, 1.0)).unwrap(),
            BasisPolicy::Deterministic,
            0,
        )
    }

    fn slice(h: usize, w: usize, data: Vec<f32>) -> Slice2 {
        Slice2::new([h, w], data, 0.0, frame()).unwrap()
    }

    #[test]
    fn sum_examples() {
        assert_eq!(forward_sum(&slice(3, 4, vec![1.0; 12])), 1.0);
        assert_eq!(forward_sum(&slice(3, 4, vec![0.0; 12])), 0.0);
        let mut d = vec![0.0; 12];
        d[5] = 12.0;
        assert_eq!(forward_sum(&slice(3, 4, d)), 1.0);
    }

    #[test]
    fn pooled_examples() {
        let data: Vec<f32> = (0..16).map(|i| (i * 7 % 5) as f32).collect();
        let s = slice(4, 4, data.clone());
        assert_eq!(forward_pooled(&s, 1, 1).unwrap(), vec![forward_sum(&s)]);
        let identity: Vec<f64> = data.iter().map(|&v| v as f64).collect();
        assert_eq!(forward_pooled(&s, 4, 4).unwrap(), identity);

        let checker: Vec<f32> = (0..16).map(|i| ((i / 4 + i % 4) % 2) as f32).collect();
        assert_eq!(forward_pooled(&slice(4, 4, checker), 2, 2).unwrap(), vec![0.5; 4]);

        assert!(forward_pooled(&s, 3, 2).is_err());
    }

    #[test]
    fn batch_sum_is_per_slice_mean() {
        let v = Volume3::from_normalized_fn([6, 6, 6], |x| x.x + 0.5 * x.y * x.y).unwrap();
        let stack = extract_stack(&v, &frame(), 5, 8, 8).unwrap();
        let mut e = Evaluator::open(&EvaluatorKind::Sum, 8, 8, 1).unwrap();
        let r = e.evaluate_batch(&stack.slices).unwrap();
        assert_eq!(r.len(), 7);
        for (m, s) in stack.slices.iter().enumerate() {
            assert_eq!(r.slice(m), &[forward_sum(s)]);
            assert_eq!(
                approximate_radon(&v, s.offset, &s.frame, 8, 8).unwrap(),
                forward_sum(s)
            );
        }
        assert!(e.evaluate_batch(&[]).unwrap().is_empty());

        let pooled = evaluate_builtin(&EvaluatorKind::PooledGrid { gh: 1, gw: 1 }, &stack.slices).unwrap();
        assert_eq!(pooled.values, r.values);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("sum".parse::<EvaluatorKind>().unwrap(), EvaluatorKind::Sum);
        assert_eq!(
            "pooled:7x7".parse::<EvaluatorKind>().unwrap(),
            EvaluatorKind::PooledGrid { gh: 7, gw: 7 }
        );
        match "external:python3 client.py --mode mean".parse::<EvaluatorKind>().unwrap() {
            EvaluatorKind::External(spec) => {
                assert_eq!(spec.program, "python3");
                assert_eq!(spec.args, vec!["client.py", "--mode", "mean"]);
            }
            other => panic!("{other:?}"),
        }
        assert!("pooled:0x3".parse::<EvaluatorKind>().is_err());
        assert!("pooled:7".parse::<EvaluatorKind>().is_err());
        assert!("external:".parse::<EvaluatorKind>().is_err());
        assert!("max".parse::<EvaluatorKind>().is_err());
        for text in ["sum", "pooled:3x5", "external:a b c"] {
            assert_eq!(text.parse::<EvaluatorKind>().unwrap().to_string(), text);
        }
    }

    #[test]
    fn builtin_rejects_bad_setup() {
        assert!(Evaluator::open(&EvaluatorKind::PooledGrid { gh: 3, gw: 3 }, 8, 8, 1).is_err());
        assert!(Evaluator::open(&EvaluatorKind::Sum, 8, 8, 2).is_err());
    }
}
