//! The joint training loop: minimize the summed abstract correctness loss
//! plus a cross-entropy accuracy loss, refining the worst regions after every
//! weight update, until the abstract loss is exactly zero and the accuracy
//! loss is within bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffnet::{backward, forward, sgd_step, AdamState, GradientBundle, Network, Tape};
use crate::error::{ArtError, Result};
use crate::refine::RegionSet;

/// Labeled classification samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(ArtError::dims("dataset labels", inputs.len(), labels.len()));
        }
        if let Some(first) = inputs.first() {
            let d = first.len();
            if let Some(bad) = inputs.iter().find(|x| x.len() != d) {
                return Err(ArtError::dims("dataset sample", d, bad.len()));
            }
        }
        if inputs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ArtError::NonFinite("dataset input".into()));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn check_network(&self, net: &Network) -> Result<()> {
        if let Some(x) = self.inputs.first() {
            net.check_input(x.len())?;
        }
        let e = net.output_dim();
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= e) {
            return Err(ArtError::dims("dataset label (classes)", e, bad + 1));
        }
        Ok(())
    }

    /// Fraction of samples whose argmax output equals the label.
    pub fn accuracy(&self, net: &Network) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        let hits = self
            .inputs
            .par_iter()
            .zip(&self.labels)
            .filter(|(x, &l)| argmax(&net.eval_unchecked(x)) == l)
            .count();
        hits as f64 / self.len() as f64
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// `-log softmax(logits)[label]` and its gradient `softmax - onehot`.
fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Mean cross-entropy over a dataset, one tape per sample. Each tape carries
/// its sample's share `ce_i / n` of the mean, so summing the backward passes
/// gives the gradient of the mean.
#[derive(Debug)]
pub struct AccuracyLoss<'n> {
    pub value: f64,
    pub tapes: Vec<Tape<'n>>,
}

pub fn accuracy_loss<'n>(net: &'n Network, data: &Dataset) -> Result<AccuracyLoss<'n>> {
    if data.is_empty() {
        return Ok(AccuracyLoss {
            value: 0.0,
            tapes: Vec::new(),
        });
    }
    data.check_network(net)?;
    let n = data.len() as f64;
    let tapes = data
        .inputs
        .par_iter()
        .zip(&data.labels)
        .map(|(x, &label)| {
            let (y, mut tape) = forward(net, x)?;
            let (ce, grad) = cross_entropy(&y, label);
            tape.attach_point_loss(ce / n, grad.iter().map(|g| g / n).collect())?;
            Ok(tape)
        })
        .collect::<Result<Vec<_>>>()?;
    let value = tapes.iter().filter_map(Tape::loss).sum();
    Ok(AccuracyLoss { value, tapes })
}

/// Value and parameter gradient of the mean cross-entropy.
pub fn accuracy_loss_grad(net: &Network, data: &Dataset) -> Result<(f64, GradientBundle)> {
    let loss = accuracy_loss(net, data)?;
    let parts = loss
        .tapes
        .par_iter()
        .map(|t| backward(t, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let mut grads = GradientBundle::zeros(net);
    for g in &parts {
        grads.accumulate(g, 1.0);
    }
    Ok((loss.value, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum LrDecay {
    None,
    /// Multiply the rate by `factor` once the joint loss has not improved
    /// for `patience` consecutive epochs.
    Plateau {
        patience: usize,
        factor: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    /// Regions refined per epoch.
    pub k: usize,
    pub region_cap: usize,
    pub eps_accuracy: f64,
    pub max_epochs: usize,
    pub optimizer: OptimizerKind,
    pub lr_decay: LrDecay,
    pub seed: u64,
    /// Weight of the accuracy term in the joint loss.
    pub accuracy_weight: f64,
    /// Disable to train on the unrefined input boxes only.
    pub refine: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            k: 200,
            region_cap: 5000,
            eps_accuracy: 0.3,
            max_epochs: 100,
            optimizer: OptimizerKind::Adam,
            lr_decay: LrDecay::Plateau {
                patience: 10,
                factor: 0.5,
            },
            seed: 0,
            accuracy_weight: 1.0,
            refine: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ArtError::Usage(m.to_string()));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.k == 0 || self.region_cap == 0 || self.max_epochs == 0 {
            return bad("k, region cap and max epochs must be positive");
        }
        if !(self.eps_accuracy.is_finite() && self.eps_accuracy >= 0.0) {
            return bad("accuracy bound must be a non-negative number");
        }
        if !(self.accuracy_weight.is_finite() && self.accuracy_weight >= 0.0) {
            return bad("accuracy weight must be non-negative");
        }
        if let LrDecay::Plateau { patience, factor } = self.lr_decay {
            if patience == 0 || !(factor > 0.0 && factor <= 1.0) {
                return bad("plateau decay needs patience > 0 and factor in (0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainOutcome {
    Certified,
    EpochBudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss_d: f64,
    pub loss_a: f64,
    pub regions: usize,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub outcome: TrainOutcome,
    pub final_loss_d: f64,
    pub final_loss_a: f64,
    pub final_regions: usize,
    pub optimizer_steps: usize,
    pub splits: usize,
}

pub const REPORT_CSV_HEADER: &str = "# art-report 1";

impl TrainReport {
    pub fn certified(&self) -> bool {
        self.outcome == TrainOutcome::Certified
    }

    /// Per-epoch CSV. Wall-clock seconds are only written when
    /// `with_time` is set, so that reports are reproducible byte for byte.
    pub fn to_csv(&self, with_time: bool) -> String {
        let mut out = format!("{REPORT_CSV_HEADER}\nepoch,loss_d,loss_a,regions,seconds\n");
        for e in &self.epochs {
            let secs = if with_time {
                format!("{:.6}", e.seconds)
            } else {
                String::new()
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch, e.loss_d, e.loss_a, e.regions, secs
            );
        }
        out
    }

    /// JSON summary. Like [`Self::to_csv`], timings are opt-in.
    pub fn summary_json(&self, config: &TrainConfig, with_time: bool) -> String {
        let total_seconds: f64 = self.epochs.last().map_or(0.0, |e| e.seconds);
        let mut v = serde_json::json!({
            "format": "art-report",
            "version": 1,
            "outcome": self.outcome,
            "epochs": self.epochs.len(),
            "optimizer_steps": self.optimizer_steps,
            "final_loss_d": self.final_loss_d,
            "final_loss_a": self.final_loss_a,
            "final_regions": self.final_regions,
            "splits": self.splits,
            "config": config,
        });
        if with_time {
            v["seconds"] = serde_json::json!(total_seconds);
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }
}

enum Optimizer {
    Sgd,
    Adam(AdamState),
}

impl Optimizer {
    fn step(&mut self, net: &mut Network, grads: &GradientBundle, lr: f64) {
        match self {
            Optimizer::Sgd => sgd_step(net, grads, lr),
            Optimizer::Adam(state) => state.step(net, grads, lr),
        }
    }
}

struct Plateau {
    best: f64,
    stale: usize,
}

/// Trains `net` until every region of `set` has zero abstract loss and the
/// accuracy loss is at most `cfg.eps_accuracy`, or until `cfg.max_epochs`
/// optimizer steps have been taken.
///
/// Each epoch evaluates both losses, checks the exit condition, takes one
/// full-batch optimizer step on their sum, and then bisects the `cfg.k`
/// worst regions using the gradients computed before the step.
pub fn art_train(
    mut net: Network,
    set: &mut RegionSet,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    cfg.validate()?;
    set.check_network(&net)?;
    data.check_network(&net)?;

    let start = Instant::now();
    let mut optimizer = match cfg.optimizer {
        OptimizerKind::Sgd => Optimizer::Sgd,
        OptimizerKind::Adam => Optimizer::Adam(AdamState::new(&net)),
    };
    let mut lr = cfg.lr;
    let mut plateau = Plateau {
        best: f64::INFINITY,
        stale: 0,
    };
    let mut epochs = Vec::new();
    let mut steps = 0;
    let mut splits = 0;

    loop {
        let abs = set.evaluate(&net)?;
        let (loss_a, acc_grads) = accuracy_loss_grad(&net, data)?;
        let loss_d = abs.total;
        if !loss_d.is_finite() || !loss_a.is_finite() {
            return Err(ArtError::NonFinite(format!(
                "loss diverged at epoch {} (loss_d = {loss_d}, loss_a = {loss_a}); try a smaller learning rate",
                epochs.len()
            )));
        }
        epochs.push(EpochStats {
            epoch: epochs.len(),
            loss_d,
            loss_a,
            regions: set.len(),
            lr,
            seconds: start.elapsed().as_secs_f64(),
        });

        let certified = loss_d == 0.0 && loss_a <= cfg.eps_accuracy;
        if certified || steps == cfg.max_epochs {
            let outcome = if certified {
                TrainOutcome::Certified
            } else {
                TrainOutcome::EpochBudgetExhausted
            };
            let report = TrainReport {
                epochs,
                outcome,
                final_loss_d: loss_d,
                final_loss_a: loss_a,
                final_regions: set.len(),
                optimizer_steps: steps,
                splits,
            };
            return Ok((net, report));
        }

        let mut grads = abs.weight_grads;
        grads.accumulate(&acc_grads, cfg.accuracy_weight);
        if !grads.is_finite() {
            return Err(ArtError::NonFinite(format!(
                "gradient diverged at epoch {}",
                epochs.len() - 1
            )));
        }
        // Refinement scores come from the gradients of this epoch's loss,
        // so split against the weights they were computed for.
        let before = cfg.refine.then(|| net.clone());
        optimizer.step(&mut net, &grads, lr);
        steps += 1;
        if let Some(prev) = before {
            splits += set.refine_topk(&prev, cfg.k, cfg.region_cap)?.len();
        }

        if let LrDecay::Plateau { patience, factor } = cfg.lr_decay {
            let joint = loss_d + cfg.accuracy_weight * loss_a;
            if joint < plateau.best * (1.0 - 1e-4) {
                plateau.best = joint;
                plateau.stale = 0;
            } else {
                plateau.stale += 1;
                if plateau.stale >= patience {
                    lr *= factor;
                    plateau.stale = 0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "verdict")]
pub enum CertifyOutcome {
    Certified { splits: usize },
    Unknown { max_loss: f64, splits: usize },
}

impl CertifyOutcome {
    pub fn is_certified(&self) -> bool {
        matches!(self, CertifyOutcome::Certified { .. })
    }
}

#[derive(PartialEq)]
struct Candidate {
    loss: f64,
    idx: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.loss
            .total_cmp(&other.loss)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Branch-and-bound verification with the weights held fixed: repeatedly
/// bisect the worst region until every region has zero abstract loss or
/// `budget` splits have been spent.
pub fn certify_only(net: &Network, set: &mut RegionSet, budget: usize) -> Result<CertifyOutcome> {
    set.refresh(net)?;
    let mut heap: BinaryHeap<Candidate> = set
        .regions()
        .iter()
        .enumerate()
        .filter_map(|(idx, r)| {
            r.loss()
                .filter(|l| *l > 0.0)
                .map(|loss| Candidate { loss, idx })
        })
        .collect();
    let mut splits = 0;
    while let Some(top) = heap.peek() {
        if splits >= budget {
            break;
        }
        let idx = top.idx;
        let Some(split) = set.split_region(idx, net)? else {
            // A point box with positive loss is a concrete counterexample.
            break;
        };
        heap.pop();
        splits += 1;
        debug_assert_eq!(set.regions()[idx].id, split.left);
        let right = set.len() - 1;
        for i in [idx, right] {
            if let Some(loss) = set.regions()[i].loss().filter(|l| *l > 0.0) {
                heap.push(Candidate { loss, idx: i });
            }
        }
    }
    Ok(if heap.is_empty() {
        CertifyOutcome::Certified { splits }
    } else {
        CertifyOutcome::Unknown {
            max_loss: set.cached_max(),
            splits,
        }
    })
}
