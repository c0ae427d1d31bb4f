//! Output predicates over network outputs and the correctness losses that
//! measure how far an output (or a box of outputs) is from satisfying them.
//!
//! Predicates are boolean combinations of linear inequalities `a·y ≤ b`.
//! Negation is pushed down to the atoms when a predicate is built, so a
//! negated atom is stored as the strict inequality `-a·y < -b`.
//!
//! The distance to a single atom is the Euclidean distance from `y` to the
//! half-space, `max(0, (a·y - b) / ‖a‖)`. Conjunctions take the max over their
//! children and disjunctions the min. Over a box of outputs, an atom is
//! scored at the worst corner, which gives a sound upper bound on the
//! distance of every point in the box.

mod json;

use crate::diffnet::Tape;
use crate::error::{ArtError, Result};
use crate::interval::IntervalBox;

pub use json::{
    parse_properties, property_to_json, write_properties, PredicateJson, PropertyJson,
    PROPERTY_FORMAT, PROPERTY_VERSION,
};

/// `coeffs · y ≤ bound`, or `coeffs · y < bound` when `strict`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    coeffs: Vec<f64>,
    bound: f64,
    strict: bool,
    norm: f64,
}

impl Atom {
    pub fn new(coeffs: Vec<f64>, bound: f64, strict: bool) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(ArtError::InvalidPredicate(
                "atom has no coefficients".into(),
            ));
        }
        if !bound.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(ArtError::InvalidPredicate(
                "atom values must be finite".into(),
            ));
        }
        let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(ArtError::InvalidPredicate(
                "atom coefficient vector is zero".into(),
            ));
        }
        Ok(Self {
            coeffs,
            bound,
            strict,
            norm,
        })
    }

    /// `coeffs · y ≤ bound`
    pub fn le(coeffs: Vec<f64>, bound: f64) -> Result<Self> {
        Self::new(coeffs, bound, false)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn negate(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
            bound: -self.bound,
            strict: !self.strict,
            norm: self.norm,
        }
    }

    fn dot(&self, y: &[f64]) -> f64 {
        self.coeffs.iter().zip(y).map(|(a, v)| a * v).sum()
    }

    fn holds(&self, y: &[f64]) -> bool {
        let s = self.dot(y);
        if self.strict {
            s < self.bound
        } else {
            s <= self.bound
        }
    }

    fn threshold(&self, opts: LossOptions) -> f64 {
        if self.strict {
            self.bound - opts.margin
        } else {
            self.bound
        }
    }

    fn concrete_dist(&self, y: &[f64], opts: LossOptions) -> f64 {
        positive((self.dot(y) - self.threshold(opts)) / self.norm)
    }

    /// `max_{y ∈ out} coeffs · y`
    fn sup_over(&self, out: &IntervalBox) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                if a >= 0.0 {
                    a * out.upper()[i]
                } else {
                    a * out.lower()[i]
                }
            })
            .sum()
    }

    fn abstract_dist(&self, out: &IntervalBox, opts: LossOptions) -> f64 {
        positive((self.sup_over(out) - self.threshold(opts)) / self.norm)
    }
}

fn positive(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// A quantifier-free boolean combination of linear output inequalities, in
/// negation normal form.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputPredicate {
    Atom(Atom),
    And(Vec<OutputPredicate>),
    Or(Vec<OutputPredicate>),
}

impl OutputPredicate {
    pub fn atom(coeffs: Vec<f64>, bound: f64) -> Result<Self> {
        Ok(Self::Atom(Atom::le(coeffs, bound)?))
    }

    pub fn and(children: Vec<OutputPredicate>) -> Result<Self> {
        if children.is_empty() {
            return Err(ArtError::InvalidPredicate("empty conjunction".into()));
        }
        Ok(Self::And(children))
    }

    pub fn or(children: Vec<OutputPredicate>) -> Result<Self> {
        if children.is_empty() {
            return Err(ArtError::InvalidPredicate("empty disjunction".into()));
        }
        Ok(Self::Or(children))
    }

    /// Logical negation, pushed to the atoms by De Morgan.
    pub fn negate(&self) -> Self {
        match self {
            Self::Atom(a) => Self::Atom(a.negate()),
            Self::And(cs) => Self::Or(cs.iter().map(Self::negate).collect()),
            Self::Or(cs) => Self::And(cs.iter().map(Self::negate).collect()),
        }
    }

    /// Output dimension shared by every atom, or an error if they disagree.
    pub fn output_dim(&self) -> Result<usize> {
        let mut dim = None;
        let mut mismatch = None;
        self.visit_atoms(&mut |a| match dim {
            None => dim = Some(a.coeffs.len()),
            Some(d) if d != a.coeffs.len() => mismatch = Some((d, a.coeffs.len())),
            Some(_) => {}
        });
        if let Some((d, found)) = mismatch {
            return Err(ArtError::dims("predicate atom length", d, found));
        }
        dim.ok_or_else(|| ArtError::InvalidPredicate("predicate has no atoms".into()))
    }

    pub fn check_dim(&self, e: usize) -> Result<()> {
        let d = self.output_dim()?;
        if d != e {
            return Err(ArtError::dims("predicate vs network output", e, d));
        }
        Ok(())
    }

    fn visit_atoms(&self, f: &mut impl FnMut(&Atom)) {
        match self {
            Self::Atom(a) => f(a),
            Self::And(cs) | Self::Or(cs) => cs.iter().for_each(|c| c.visit_atoms(f)),
        }
    }

    pub fn atom_count(&self) -> usize {
        let mut n = 0;
        self.visit_atoms(&mut |_| n += 1);
        n
    }

    /// Evaluates the loss tree with per-atom score `score`, returning the
    /// value together with the atom that determines it. Conjunctions pick
    /// the first child with the largest value and disjunctions the first
    /// child with the smallest.
    fn select<'p>(&'p self, score: &impl Fn(&Atom) -> f64) -> (f64, &'p Atom) {
        match self {
            Self::Atom(a) => (score(a), a),
            Self::And(cs) => pick(cs, score, |cand, best| cand > best),
            Self::Or(cs) => pick(cs, score, |cand, best| cand < best),
        }
    }
}

fn pick<'p>(
    children: &'p [OutputPredicate],
    score: &impl Fn(&Atom) -> f64,
    better: impl Fn(f64, f64) -> bool,
) -> (f64, &'p Atom) {
    let mut iter = children.iter();
    let mut best = iter
        .next()
        .expect("connectives have at least one child")
        .select(score);
    for c in iter {
        let cand = c.select(score);
        if better(cand.0, best.0) {
            best = cand;
        }
    }
    best
}

/// Knobs for the correctness losses.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossOptions {
    /// Slack subtracted from the threshold of strict atoms, so a zero loss
    /// means the strict inequality holds by at least this much.
    pub margin: f64,
}

/// A box-shaped input precondition paired with an output predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectnessProperty {
    pub input: IntervalBox,
    pub output: OutputPredicate,
}

impl CorrectnessProperty {
    pub fn new(input: IntervalBox, output: OutputPredicate) -> Result<Self> {
        output.output_dim()?;
        Ok(Self { input, output })
    }

    pub fn check_network(&self, d: usize, e: usize) -> Result<()> {
        if self.input.dim() != d {
            return Err(ArtError::dims("property input box", d, self.input.dim()));
        }
        self.output.check_dim(e)
    }
}

pub fn satisfies(y: &[f64], p: &OutputPredicate) -> bool {
    match p {
        OutputPredicate::Atom(a) => a.holds(y),
        OutputPredicate::And(cs) => cs.iter().all(|c| satisfies(y, c)),
        OutputPredicate::Or(cs) => cs.iter().any(|c| satisfies(y, c)),
    }
}

/// Concrete correctness loss of one output vector, with zero margin.
pub fn dist_concrete(y: &[f64], p: &OutputPredicate) -> f64 {
    dist_concrete_with(y, p, LossOptions::default())
}

pub fn dist_concrete_with(y: &[f64], p: &OutputPredicate, opts: LossOptions) -> f64 {
    p.select(&|a| a.concrete_dist(y, opts)).0
}

/// Worst-case correctness loss over every output in `out`, with zero margin.
pub fn dist_abstract(out: &IntervalBox, p: &OutputPredicate) -> f64 {
    dist_abstract_with(out, p, LossOptions::default())
}

pub fn dist_abstract_with(out: &IntervalBox, p: &OutputPredicate, opts: LossOptions) -> f64 {
    p.select(&|a| a.abstract_dist(out, opts)).0
}

/// Abstract loss value and its gradient with respect to the output bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct AbstractLoss {
    pub value: f64,
    pub grad_lower: Vec<f64>,
    pub grad_upper: Vec<f64>,
}

pub fn abstract_loss_grad(
    out: &IntervalBox,
    p: &OutputPredicate,
    opts: LossOptions,
) -> AbstractLoss {
    let (value, atom) = p.select(&|a| a.abstract_dist(out, opts));
    let mut grad_lower = vec![0.0; out.dim()];
    let mut grad_upper = vec![0.0; out.dim()];
    if value > 0.0 {
        for (i, &c) in atom.coeffs.iter().enumerate() {
            if c >= 0.0 {
                grad_upper[i] = c / atom.norm;
            } else {
                grad_lower[i] = c / atom.norm;
            }
        }
    }
    AbstractLoss {
        value,
        grad_lower,
        grad_upper,
    }
}

/// Value and gradient with respect to `y` of the concrete loss.
pub fn concrete_loss_grad(y: &[f64], p: &OutputPredicate, opts: LossOptions) -> (f64, Vec<f64>) {
    let (value, atom) = p.select(&|a| a.concrete_dist(y, opts));
    let grad = if value > 0.0 {
        atom.coeffs.iter().map(|c| c / atom.norm).collect()
    } else {
        vec![0.0; y.len()]
    };
    (value, grad)
}

/// Scores the output box of an interval tape and terminates the tape in
/// that loss, so [`crate::backward`] yields gradients for the weights and
/// the input bounds.
pub fn record_dist_abstract(
    tape: &mut Tape<'_>,
    p: &OutputPredicate,
    opts: LossOptions,
) -> Result<f64> {
    let out = tape
        .output_box()
        .ok_or_else(|| ArtError::Usage("abstract loss needs an interval tape".into()))?;
    p.check_dim(out.dim())?;
    let loss = abstract_loss_grad(out, p, opts);
    tape.attach_interval_loss(loss.value, loss.grad_lower, loss.grad_upper)?;
    Ok(loss.value)
}

/// Concrete counterpart of [`record_dist_abstract`].
pub fn record_dist_concrete(
    tape: &mut Tape<'_>,
    p: &OutputPredicate,
    opts: LossOptions,
) -> Result<f64> {
    let y = tape
        .output()
        .ok_or_else(|| ArtError::Usage("concrete loss needs a concrete tape".into()))?;
    p.check_dim(y.len())?;
    let (value, grad) = concrete_loss_grad(y, p, opts);
    tape.attach_point_loss(value, grad)?;
    Ok(value)
}
