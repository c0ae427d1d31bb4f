//! Interval (box) abstraction of ReLU networks.
//!
//! Abstraction and concretization are trivial here: the input sets being
//! abstracted are boxes already, so a box stands for exactly the points it
//! contains. Endpoints are computed in round-to-nearest `f64` without
//! outward rounding.

use serde::{Deserialize, Serialize};

use crate::diffnet::{LayerSpec, Network, Record, Tape, Trace};
use crate::error::{ArtError, Result};

/// An axis-aligned box `[lower_i, upper_i]` per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct IntervalBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for IntervalBox {
    type Error = ArtError;

    fn try_from(raw: RawBox) -> Result<Self> {
        IntervalBox::new(raw.lower, raw.upper)
    }
}

impl From<IntervalBox> for RawBox {
    fn from(b: IntervalBox) -> Self {
        RawBox {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

impl IntervalBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(ArtError::InvalidBox(format!(
                "{} lower bounds but {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() {
            return Err(ArtError::InvalidBox("box has no dimensions".into()));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(ArtError::InvalidBox(format!("dimension {i} is not finite")));
            }
            if l > u {
                return Err(ArtError::InvalidBox(format!(
                    "dimension {i}: lower {l} exceeds upper {u}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Degenerate box `[x, x]`.
    pub fn point(x: &[f64]) -> Result<Self> {
        Self::new(x.to_vec(), x.to_vec())
    }

    /// Builds a box from `(lower, upper)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    }

    pub(crate) fn from_parts_unchecked(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        midpoint(self.lower[i], self.upper[i])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    /// `self ⊆ other`, coordinate-wise.
    pub fn is_subset_of(&self, other: &IntervalBox) -> bool {
        self.dim() == other.dim()
            && (0..self.dim())
                .all(|i| other.lower[i] <= self.lower[i] && self.upper[i] <= other.upper[i])
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }
}

fn midpoint(l: f64, u: f64) -> f64 {
    // l + (u - l)/2 stays inside [l, u] and avoids overflow of l + u.
    let m = l + (u - l) / 2.0;
    m.clamp(l, u)
}

/// Tightest box containing `{W x + b : x ∈ input}`, computed per output
/// coordinate. The layer's activation flag is ignored.
pub fn affine_abs(layer: &LayerSpec, input: &IntervalBox) -> Result<IntervalBox> {
    if input.dim() != layer.in_dim() {
        return Err(ArtError::dims(
            "affine_abs input",
            layer.in_dim(),
            input.dim(),
        ));
    }
    Ok(affine_abs_unchecked(layer, input))
}

fn affine_abs_unchecked(layer: &LayerSpec, input: &IntervalBox) -> IntervalBox {
    let (lo, hi) = (input.lower(), input.upper());
    let mut lower = Vec::with_capacity(layer.out_dim());
    let mut upper = Vec::with_capacity(layer.out_dim());
    for j in 0..layer.out_dim() {
        let mut l = layer.bias()[j];
        let mut u = l;
        for (i, &w) in layer.row(j).iter().enumerate() {
            if w >= 0.0 {
                l += w * lo[i];
                u += w * hi[i];
            } else {
                l += w * hi[i];
                u += w * lo[i];
            }
        }
        lower.push(l);
        upper.push(u);
    }
    IntervalBox::from_parts_unchecked(lower, upper)
}

/// Element-wise ReLU on both bounds.
pub fn relu_abs(input: &IntervalBox) -> IntervalBox {
    IntervalBox::from_parts_unchecked(
        input.lower.iter().map(|v| v.max(0.0)).collect(),
        input.upper.iter().map(|v| v.max(0.0)).collect(),
    )
}

pub(crate) fn record_box(net: &Network, input: &IntervalBox) -> Vec<Record<IntervalBox>> {
    let mut records: Vec<Record<IntervalBox>> = Vec::with_capacity(net.layers().len());
    for layer in net.layers() {
        let x = records.last().map_or(input, |r| &r.post);
        let pre = affine_abs_unchecked(layer, x);
        let post = if layer.apply_relu() {
            relu_abs(&pre)
        } else {
            pre.clone()
        };
        records.push(Record { pre, post });
    }
    records
}

/// Propagates `input` through every layer, recording the interval tape.
pub fn forward_box<'n>(net: &'n Network, input: &IntervalBox) -> Result<(IntervalBox, Tape<'n>)> {
    net.check_input(input.dim())?;
    let layers = record_box(net, input);
    let out = layers
        .last()
        .map(|r| r.post.clone())
        .expect("networks have at least one layer");
    Ok((
        out,
        Tape::new(
            net,
            Trace::Interval {
                input: input.clone(),
                layers,
            },
        ),
    ))
}

/// Output box only, without a tape.
pub fn eval_box(net: &Network, input: &IntervalBox) -> Result<IntervalBox> {
    net.check_input(input.dim())?;
    let mut b = input.clone();
    for layer in net.layers() {
        b = affine_abs_unchecked(layer, &b);
        if layer.apply_relu() {
            b = relu_abs(&b);
        }
    }
    Ok(b)
}

/// Splits `b` at the midpoint of dimension `dim`. The two halves share the
/// midpoint face and their union is `b`.
pub fn bisect(b: &IntervalBox, dim: usize) -> Result<(IntervalBox, IntervalBox)> {
    if dim >= b.dim() {
        return Err(ArtError::dims("bisect dimension", b.dim(), dim));
    }
    if b.width(dim) <= 0.0 {
        return Err(ArtError::ZeroWidth { dim });
    }
    let m = b.midpoint(dim);
    let mut left = b.clone();
    let mut right = b.clone();
    left.upper[dim] = m;
    right.lower[dim] = m;
    Ok((left, right))
}
