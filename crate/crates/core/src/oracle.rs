//! Independent checkers. Everything here evaluates the concrete network on
//! sampled or gridded points and never trusts the abstract machinery it is
//! used to validate.
//!
//! Sampling is counter-based: sample `i` draws from its own stream of a
//! generator keyed by the seed, so results do not depend on thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diffnet::Network;
use crate::error::{ArtError, Result};
use crate::interval::{eval_box, IntervalBox};
use crate::property::{dist_concrete, satisfies, CorrectnessProperty, OutputPredicate};
use crate::trainer::Dataset;

/// Slack allowed between a sampled output and the abstract bounds.
pub const SOUNDNESS_TOLERANCE: f64 = 1e-9;

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform point in `b`. Zero-width dimensions return their single value.
pub fn sample_in(b: &IntervalBox, rng: &mut impl Rng) -> Vec<f64> {
    (0..b.dim())
        .map(|i| {
            let (l, u) = (b.lower()[i], b.upper()[i]);
            if u > l {
                rng.gen_range(l..=u)
            } else {
                l
            }
        })
        .collect()
}

/// `n` uniform samples from `b`, reproducible for a given seed.
pub fn uniform_samples(b: &IntervalBox, n: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| sample_in(b, &mut sample_rng(seed, i)))
        .collect()
}

/// A sampled output coordinate that escaped the claimed bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundViolation {
    pub input: Vec<f64>,
    pub output_index: usize,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Samples `n` points of `input` and reports every output coordinate lying
/// outside the interval propagation of `input` by more than
/// [`SOUNDNESS_TOLERANCE`].
pub fn mc_soundness(
    net: &Network,
    input: &IntervalBox,
    n: usize,
    seed: u64,
) -> Result<Vec<BoundViolation>> {
    let claimed = eval_box(net, input)?;
    check_bounds(net, input, &claimed, n, seed)
}

/// Like [`mc_soundness`] but against caller-supplied output bounds.
pub fn check_bounds(
    net: &Network,
    input: &IntervalBox,
    claimed: &IntervalBox,
    n: usize,
    seed: u64,
) -> Result<Vec<BoundViolation>> {
    if n == 0 {
        return Err(ArtError::Usage("sample count must be at least 1".into()));
    }
    net.check_input(input.dim())?;
    if claimed.dim() != net.output_dim() {
        return Err(ArtError::dims(
            "claimed output bounds",
            net.output_dim(),
            claimed.dim(),
        ));
    }
    let found = (0..n as u64)
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = sample_in(input, &mut sample_rng(seed, i));
            let y = net.eval_unchecked(&x);
            y.into_iter()
                .enumerate()
                .filter(|(j, v)| {
                    *v < claimed.lower()[*j] - SOUNDNESS_TOLERANCE
                        || *v > claimed.upper()[*j] + SOUNDNESS_TOLERANCE
                })
                .map(|(j, v)| BoundViolation {
                    input: x.clone(),
                    output_index: j,
                    value: v,
                    lower: claimed.lower()[j],
                    upper: claimed.upper()[j],
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(found)
}

/// Largest concrete loss over a regular grid and the grid point attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorst {
    pub value: f64,
    pub at: Vec<f64>,
}

pub const GRID_MAX_DIM: usize = 4;

/// Maximum of the concrete loss over a `resolution^d` grid spanning `input`
/// (endpoints included). A lower bound on the true worst case, and therefore
/// on the abstract loss of the box.
pub fn grid_worst_dist(
    net: &Network,
    input: &IntervalBox,
    pred: &OutputPredicate,
    resolution: usize,
) -> Result<GridWorst> {
    let d = input.dim();
    if d > GRID_MAX_DIM {
        return Err(ArtError::Usage(format!(
            "grid search supports at most {GRID_MAX_DIM} input dimensions, got {d}; sample instead"
        )));
    }
    if resolution < 2 {
        return Err(ArtError::Usage("grid resolution must be at least 2".into()));
    }
    net.check_input(d)?;
    pred.check_dim(net.output_dim())?;
    let total = resolution.pow(d as u32);
    let coord = |i: usize, step: usize| {
        let (l, u) = (input.lower()[i], input.upper()[i]);
        if step + 1 == resolution {
            u
        } else {
            l + (u - l) * step as f64 / (resolution - 1) as f64
        }
    };
    let best = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let x: Vec<f64> = (0..d)
                .map(|i| {
                    let step = rem % resolution;
                    rem /= resolution;
                    coord(i, step)
                })
                .collect();
            let v = dist_concrete(&net.eval_unchecked(&x), pred);
            (v, flat, x)
        })
        .reduce_with(|a, b| {
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                b
            } else {
                a
            }
        })
        .expect("grid is non-empty");
    Ok(GridWorst {
        value: best.0,
        at: best.2,
    })
}

/// Which output index becomes the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelPolarity {
    #[default]
    ArgMax,
    ArgMin,
}

fn pick_label(y: &[f64], polarity: LabelPolarity) -> usize {
    let mut best = 0;
    for (i, &v) in y.iter().enumerate().skip(1) {
        let better = match polarity {
            LabelPolarity::ArgMax => v > y[best],
            LabelPolarity::ArgMin => v < y[best],
        };
        if better {
            best = i;
        }
    }
    best
}

/// Uniformly samples training and test inputs from `input` and labels them
/// with the oracle network's preferred output.
pub fn label_with_oracle(
    oracle: &Network,
    n_train: usize,
    n_test: usize,
    input: &IntervalBox,
    seed: u64,
    polarity: LabelPolarity,
) -> Result<(Dataset, Dataset)> {
    oracle.check_input(input.dim())?;
    let xs = uniform_samples(input, n_train + n_test, seed);
    let labels: Vec<usize> = xs
        .par_iter()
        .map(|x| pick_label(&oracle.eval_unchecked(x), polarity))
        .collect();
    let (train_x, test_x) = xs.split_at(n_train);
    let (train_y, test_y) = labels.split_at(n_train);
    Ok((
        Dataset::new(train_x.to_vec(), train_y.to_vec())?,
        Dataset::new(test_x.to_vec(), test_y.to_vec())?,
    ))
}

/// A sampled input whose output violates the property.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub distance: f64,
}

/// Samples `n` inputs from the property's box and returns those whose
/// outputs fail the predicate, in sample order.
pub fn sample_violations(
    net: &Network,
    property: &CorrectnessProperty,
    n: usize,
    seed: u64,
) -> Result<Vec<Counterexample>> {
    if n == 0 {
        return Err(ArtError::Usage("sample count must be at least 1".into()));
    }
    property.check_network(net.input_dim(), net.output_dim())?;
    Ok((0..n as u64)
        .into_par_iter()
        .filter_map(|i| {
            let x = sample_in(&property.input, &mut sample_rng(seed, i));
            let y = net.eval_unchecked(&x);
            (!satisfies(&y, &property.output)).then(|| Counterexample {
                distance: dist_concrete(&y, &property.output),
                input: x,
                output: y,
            })
        })
        .collect())
}

pub const DATASET_HEADER: &str = "# art-dataset 1";

/// CSV with a version comment, a header row `x0,...,x{d-1},label`, and one
/// row per sample.
pub fn write_dataset_csv(data: &Dataset, d: usize) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (x, l) in data.inputs.iter().zip(&data.labels) {
        if x.len() != d {
            return Err(ArtError::dims("dataset sample", d, x.len()));
        }
        let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        row.push(l.to_string());
        w.write_record(&row)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)
        .expect("csv output is utf-8");
    Ok(format!("{DATASET_HEADER}\n{body}"))
}

pub fn read_dataset_csv(text: &str) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.len() < 2 || header.get(header.len() - 1) != Some("label") {
        return Err(ArtError::Parse {
            line: 1,
            message: "dataset header must be `x0,...,label`".into(),
        });
    }
    let d = header.len() - 1;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != d + 1 {
            return Err(ArtError::Parse {
                line,
                message: format!("expected {} columns, found {}", d + 1, rec.len()),
            });
        }
        let x = rec
            .iter()
            .take(d)
            .enumerate()
            .map(|(c, s)| {
                s.parse::<f64>().map_err(|_| ArtError::Parse {
                    line,
                    message: format!("column {}: `{s}` is not a number", c + 1),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let label = rec[d].parse::<usize>().map_err(|_| ArtError::Parse {
            line,
            message: format!("label `{}` is not a class index", &rec[d]),
        })?;
        inputs.push(x);
        labels.push(label);
    }
    Dataset::new(inputs, labels)
}
