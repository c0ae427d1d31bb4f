//! Input space abstractions: each correctness property's input box is tiled
//! by regions, and regions whose abstract loss is largest get bisected along
//! the dimension with the largest gradient score.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::diffnet::{backward, GradientBundle, Network, Revision, Tape};
use crate::error::Result;
use crate::interval::{bisect, forward_box, IntervalBox};
use crate::property::{record_dist_abstract, CorrectnessProperty, LossOptions, OutputPredicate};

#[derive(Debug, Clone, PartialEq)]
struct RegionCache {
    revision: Revision,
    loss: f64,
    grad_lower: Vec<f64>,
    grad_upper: Vec<f64>,
}

/// One sub-box of an origin property's input box. The output predicate is
/// always the origin's, looked up through [`RegionSet::predicate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: usize,
    pub parent: Option<usize>,
    pub origin: usize,
    pub bounds: IntervalBox,
    cache: Option<RegionCache>,
}

impl Region {
    /// Cached abstract loss, if any has been computed.
    pub fn loss(&self) -> Option<f64> {
        self.cache.as_ref().map(|c| c.loss)
    }

    pub fn is_fresh(&self, revision: Revision) -> bool {
        self.cache.as_ref().is_some_and(|c| c.revision == revision)
    }

    /// Cached `(∂loss/∂lower, ∂loss/∂upper)` of the region's input box.
    pub fn grad_bounds(&self) -> Option<(&[f64], &[f64])> {
        self.cache
            .as_ref()
            .map(|c| (c.grad_lower.as_slice(), c.grad_upper.as_slice()))
    }
}

/// A single bisection: `parent` was replaced by `left` and `right`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRecord {
    pub parent: usize,
    pub left: usize,
    pub right: usize,
    pub dim: usize,
    pub midpoint: f64,
}

/// Forward-box the region, score it, and sweep back for the input-bound and
/// weight gradients. Regions at zero loss have zero gradients and skip the
/// backward pass.
fn evaluate_box(
    net: &Network,
    bounds: &IntervalBox,
    predicate: &OutputPredicate,
    opts: LossOptions,
) -> Result<(RegionCache, Option<GradientBundle>)> {
    let (_, mut tape) = forward_box(net, bounds)?;
    let loss = record_dist_abstract(&mut tape, predicate, opts)?;
    let d = bounds.dim();
    if loss == 0.0 {
        return Ok((
            RegionCache {
                revision: net.revision(),
                loss,
                grad_lower: vec![0.0; d],
                grad_upper: vec![0.0; d],
            },
            None,
        ));
    }
    let mut grads = backward(&tape, 1.0)?;
    let cache = RegionCache {
        revision: net.revision(),
        loss,
        grad_lower: grads.d_input_lower.take().unwrap_or_else(|| vec![0.0; d]),
        grad_upper: grads.d_input_upper.take().unwrap_or_else(|| vec![0.0; d]),
    };
    Ok((cache, Some(grads)))
}

/// Per-region abstract losses with their tapes, plus the uniform sum.
#[derive(Debug)]
pub struct RegionLosses<'n> {
    pub per_region: Vec<f64>,
    pub total: f64,
    pub tapes: Vec<Tape<'n>>,
}

/// Abstract correctness loss of every region, summed with uniform weights.
/// Each tape is terminated in its region's loss.
pub fn region_losses<'n>(net: &'n Network, set: &RegionSet) -> Result<RegionLosses<'n>> {
    set.check_network(net)?;
    let tapes = set
        .regions
        .par_iter()
        .map(|r| {
            let (_, mut tape) = forward_box(net, &r.bounds)?;
            record_dist_abstract(&mut tape, set.predicate(r), set.options)?;
            Ok(tape)
        })
        .collect::<Result<Vec<_>>>()?;
    let per_region: Vec<f64> = tapes.iter().map(|t| t.loss().unwrap_or(0.0)).collect();
    let total = per_region.iter().sum();
    Ok(RegionLosses {
        per_region,
        total,
        tapes,
    })
}

/// Bisection scores `(|∂/∂lower_i| + |∂/∂upper_i|) * width_i`. Zero-width
/// dimensions score `-inf` so they are never chosen.
///
/// Uses the region's cached gradients when they belong to `net`, and
/// recomputes them otherwise.
pub fn score_dimensions(
    region: &Region,
    net: &Network,
    predicate: &OutputPredicate,
    opts: LossOptions,
) -> Result<Vec<f64>> {
    let fresh;
    let cache = match &region.cache {
        Some(c) if c.revision == net.revision() => c,
        _ => {
            fresh = evaluate_box(net, &region.bounds, predicate, opts)?.0;
            &fresh
        }
    };
    Ok(scores_from(cache, &region.bounds))
}

fn scores_from(cache: &RegionCache, bounds: &IntervalBox) -> Vec<f64> {
    (0..bounds.dim())
        .map(|i| {
            let w = bounds.width(i);
            if w > 0.0 {
                (cache.grad_lower[i].abs() + cache.grad_upper[i].abs()) * w
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// First index of the largest finite score.
fn argmax_dim(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s == f64::NEG_INFINITY || s.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Result of evaluating every region against one network.
#[derive(Debug, Clone)]
pub struct RegionEvaluation {
    pub losses: Vec<f64>,
    pub total: f64,
    pub max: f64,
    /// Gradient of `total` with respect to the network parameters.
    pub weight_grads: GradientBundle,
}

/// The input space abstraction: regions tiling the input boxes of the
/// origin properties, plus the log of every split that produced them.
#[derive(Debug, Clone)]
pub struct RegionSet {
    origins: Vec<CorrectnessProperty>,
    regions: Vec<Region>,
    splits: Vec<SplitRecord>,
    next_id: usize,
    options: LossOptions,
}

impl RegionSet {
    /// One unrefined region per property.
    pub fn new(origins: Vec<CorrectnessProperty>) -> Self {
        let regions = origins
            .iter()
            .enumerate()
            .map(|(i, p)| Region {
                id: i,
                parent: None,
                origin: i,
                bounds: p.input.clone(),
                cache: None,
            })
            .collect();
        Self {
            next_id: origins.len(),
            origins,
            regions,
            splits: Vec::new(),
            options: LossOptions::default(),
        }
    }

    pub fn with_options(mut self, options: LossOptions) -> Self {
        self.options = options;
        self.regions.iter_mut().for_each(|r| r.cache = None);
        self
    }

    pub fn options(&self) -> LossOptions {
        self.options
    }

    pub fn origins(&self) -> &[CorrectnessProperty] {
        &self.origins
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn splits(&self) -> &[SplitRecord] {
        &self.splits
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn predicate(&self, region: &Region) -> &OutputPredicate {
        &self.origins[region.origin].output
    }

    pub fn check_network(&self, net: &Network) -> Result<()> {
        self.origins
            .iter()
            .try_for_each(|p| p.check_network(net.input_dim(), net.output_dim()))
    }

    /// Recomputes every region against `net`, refreshing all caches, and
    /// accumulates the parameter gradient of the summed loss.
    pub fn evaluate(&mut self, net: &Network) -> Result<RegionEvaluation> {
        self.check_network(net)?;
        let (origins, opts) = (&self.origins, self.options);
        let results = self
            .regions
            .par_iter()
            .map(|r| evaluate_box(net, &r.bounds, &origins[r.origin].output, opts))
            .collect::<Result<Vec<_>>>()?;

        let mut weight_grads = GradientBundle::zeros(net);
        let mut losses = Vec::with_capacity(results.len());
        for (region, (cache, grads)) in self.regions.iter_mut().zip(results) {
            losses.push(cache.loss);
            if let Some(g) = grads {
                weight_grads.accumulate(&g, 1.0);
            }
            region.cache = Some(cache);
        }
        let total = losses.iter().sum();
        let max = losses.iter().copied().fold(0.0, f64::max);
        Ok(RegionEvaluation {
            losses,
            total,
            max,
            weight_grads,
        })
    }

    /// Recomputes only the regions whose cache does not belong to `net`.
    pub fn refresh(&mut self, net: &Network) -> Result<()> {
        self.check_network(net)?;
        let rev = net.revision();
        let (origins, opts) = (&self.origins, self.options);
        self.regions
            .par_iter_mut()
            .filter(|r| !r.is_fresh(rev))
            .try_for_each(|r| {
                r.cache = Some(evaluate_box(net, &r.bounds, &origins[r.origin].output, opts)?.0);
                Ok(())
            })
    }

    /// Sum of cached losses. Call after [`Self::evaluate`] or [`Self::refresh`].
    pub fn cached_total(&self) -> f64 {
        self.regions.iter().filter_map(Region::loss).sum()
    }

    pub fn cached_max(&self) -> f64 {
        self.regions
            .iter()
            .filter_map(Region::loss)
            .fold(0.0, f64::max)
    }

    /// Bisects the `k` regions with the largest positive loss. Nothing is
    /// split once the set holds `cap` regions, and the set never grows past
    /// `cap`. Regions at zero loss are never split.
    pub fn refine_topk(&mut self, net: &Network, k: usize, cap: usize) -> Result<Vec<SplitRecord>> {
        if self.len() >= cap || k == 0 {
            return Ok(Vec::new());
        }
        self.refresh(net)?;
        let mut candidates: Vec<(usize, f64)> = self
            .regions
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.loss().filter(|l| *l > 0.0).map(|l| (i, l)))
            .collect();
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        candidates.truncate(k.min(cap - self.len()));

        let mut done = Vec::with_capacity(candidates.len());
        for (idx, _) in candidates {
            if let Some(split) = self.split_region(idx, net)? {
                done.push(split);
            }
        }
        Ok(done)
    }

    /// Bisects region `idx` along its best-scoring dimension. The left child
    /// takes the parent's slot and the right child is appended. Returns
    /// `None` when every dimension has zero width.
    pub(crate) fn split_region(
        &mut self,
        idx: usize,
        net: &Network,
    ) -> Result<Option<SplitRecord>> {
        let opts = self.options;
        let parent = &self.regions[idx];
        let predicate = &self.origins[parent.origin].output;
        let scores = score_dimensions(parent, net, predicate, opts)?;
        let Some(dim) = argmax_dim(&scores) else {
            return Ok(None);
        };
        let (left_box, right_box) = bisect(&parent.bounds, dim)?;
        let parent_loss = match &parent.cache {
            Some(c) if c.revision == net.revision() => c.loss,
            _ => evaluate_box(net, &parent.bounds, predicate, opts)?.0.loss,
        };
        let (left_cache, _) = evaluate_box(net, &left_box, predicate, opts)?;
        let (right_cache, _) = evaluate_box(net, &right_box, predicate, opts)?;
        assert!(
            left_cache.loss <= parent_loss && right_cache.loss <= parent_loss,
            "refinement increased the abstract loss: parent {parent_loss}, children {} / {}",
            left_cache.loss,
            right_cache.loss
        );

        let split = SplitRecord {
            parent: parent.id,
            left: self.next_id,
            right: self.next_id + 1,
            dim,
            midpoint: left_box.upper()[dim],
        };
        let origin = parent.origin;
        self.next_id += 2;
        self.regions[idx] = Region {
            id: split.left,
            parent: Some(split.parent),
            origin,
            bounds: left_box,
            cache: Some(left_cache),
        };
        self.regions.push(Region {
            id: split.right,
            parent: Some(split.parent),
            origin,
            bounds: right_box,
            cache: Some(right_cache),
        });
        self.splits.push(split);
        Ok(Some(split))
    }

    /// Replays the split log from the origin boxes and checks that it yields
    /// exactly the current regions. Since every split is a midpoint
    /// bisection, this witnesses that each origin box is tiled by its
    /// descendants.
    pub fn verify_cover(&self) -> bool {
        let mut alive: BTreeMap<usize, (usize, IntervalBox)> = self
            .origins
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (i, p.input.clone())))
            .collect();
        for s in &self.splits {
            let Some((origin, parent)) = alive.remove(&s.parent) else {
                return false;
            };
            let Ok((l, r)) = bisect(&parent, s.dim) else {
                return false;
            };
            if l.upper()[s.dim].to_bits() != s.midpoint.to_bits() {
                return false;
            }
            alive.insert(s.left, (origin, l));
            alive.insert(s.right, (origin, r));
        }
        alive.len() == self.regions.len()
            && self.regions.iter().all(|r| {
                alive
                    .get(&r.id)
                    .is_some_and(|(o, b)| *o == r.origin && *b == r.bounds)
            })
    }

    /// Split log as CSV: one line per bisection.
    pub fn split_log_csv(&self) -> String {
        let mut out = String::from("# art-splits 1\nparent,left,right,dim,midpoint\n");
        for s in &self.splits {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.parent, s.left, s.right, s.dim, s.midpoint
            );
        }
        out
    }
}

impl From<CorrectnessProperty> for RegionSet {
    fn from(p: CorrectnessProperty) -> Self {
        RegionSet::new(vec![p])
    }
}
