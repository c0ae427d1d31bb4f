//! Randomized property suites. Each returns a [`Suite`] tally so that the
//! unit-level test files and the acceptance target can share them.

use std::collections::HashMap;

use art_core::interval::eval_box;
use art_core::oracle::{grid_worst_dist, mc_soundness, uniform_samples};
use art_core::property::{record_dist_abstract, record_dist_concrete, OutputPredicate};
use art_core::{
    backward, certify_only, dist_abstract, forward, forward_box, region_losses,
    CorrectnessProperty, IntervalBox, LossOptions, Network, RegionSet,
};
use rand::Rng;

use super::*;

#[derive(Debug, Default)]
pub struct Suite {
    pub name: &'static str,
    pub instances: usize,
    pub checks: usize,
    pub skipped: usize,
    pub failures: Vec<String>,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            ..Self::default()
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok && self.failures.len() < 20 {
            self.failures.push(what());
        } else if !ok {
            self.failures.push(String::new());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn line(&self) -> String {
        format!(
            "{}: {} instances, {} checks, {} skipped at kinks, {} failures",
            self.name,
            self.instances,
            self.checks,
            self.skipped,
            self.failures.len()
        )
    }
}

fn dims(rng: &mut impl Rng) -> (usize, usize) {
    (rng.gen_range(1..=4), rng.gen_range(1..=4))
}

/// Every sampled output lies inside the propagated box.
pub fn over_approximation(instances: usize, samples: usize, seed: u64) -> Suite {
    let mut s = Suite::new("over-approximation soundness");
    let mut r = rng(seed);
    for inst in 0..instances {
        let (d, e) = dims(&mut r);
        let net = random_net(&mut r, d, e);
        let b = random_box(&mut r, d);
        let bad = mc_soundness(&net, &b, samples, seed ^ inst as u64).unwrap();
        s.check(bad.is_empty(), || {
            format!("instance {inst}: {:?}", bad.first())
        });
        // Second opinion with the reference forward pass.
        let out = eval_box(&net, &b).unwrap();
        for _ in 0..100 {
            let x = random_point_in(&mut r, &b);
            let y = ref_forward(&net, &x);
            let inside = y
                .iter()
                .enumerate()
                .all(|(j, v)| out.lower()[j] - 1e-9 <= *v && *v <= out.upper()[j] + 1e-9);
            s.check(inside, || {
                format!("instance {inst}: {x:?} -> {y:?} outside {out:?}")
            });
        }
        s.instances += 1;
    }
    s
}

/// A sub-box maps into the image of its super-box.
pub fn inclusion_isotonicity(instances: usize, seed: u64) -> Suite {
    let mut s = Suite::new("inclusion isotonicity");
    let mut r = rng(seed);
    for inst in 0..instances {
        let (d, e) = dims(&mut r);
        let net = random_net(&mut r, d, e);
        let outer = random_box(&mut r, d);
        let a = random_point_in(&mut r, &outer);
        let c = random_point_in(&mut r, &outer);
        let inner = IntervalBox::new(
            a.iter().zip(&c).map(|(x, y)| x.min(*y)).collect(),
            a.iter().zip(&c).map(|(x, y)| x.max(*y)).collect(),
        )
        .unwrap();
        let point = IntervalBox::point(&a).unwrap();
        let big = eval_box(&net, &outer).unwrap();
        let small = eval_box(&net, &inner).unwrap();
        let tiny = eval_box(&net, &point).unwrap();
        s.check(small.is_subset_of(&big), || {
            format!("instance {inst}: {small:?} ⊄ {big:?}")
        });
        s.check(tiny.is_subset_of(&small), || {
            format!("instance {inst}: point image escapes")
        });
        s.instances += 1;
    }
    s
}

/// Satisfiable instance: each atom's bound is placed between the sampled
/// worst value and the interval bound, so refinement can close the gap.
fn satisfiable_instance(r: &mut impl Rng) -> (Network, Vec<CorrectnessProperty>) {
    let (d, e) = (r.gen_range(1..=3), r.gen_range(1..=3));
    let net = random_net(r, d, e);
    let origins = (0..r.gen_range(1..=2))
        .map(|_| {
            let b = random_box(r, d);
            let out = eval_box(&net, &b).unwrap();
            let ys: Vec<Vec<f64>> = (0..200)
                .map(|_| ref_forward(&net, &random_point_in(r, &b)))
                .collect();
            let mut atoms = Vec::new();
            for _ in 0..r.gen_range(1..=3) {
                let a: Vec<f64> = loop {
                    let a: Vec<f64> = (0..e).map(|_| r.gen_range(-1.0..1.0)).collect();
                    if a.iter().map(|v| v * v).sum::<f64>() > 1e-2 {
                        break a;
                    }
                };
                let dot = |y: &[f64]| a.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
                let sampled = ys.iter().map(|y| dot(y)).fold(f64::MIN, f64::max);
                let sup: f64 = a
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| {
                        if c >= 0.0 {
                            c * out.upper()[i]
                        } else {
                            c * out.lower()[i]
                        }
                    })
                    .sum();
                let bound = sampled + r.gen_range(0.05..0.9) * (sup - sampled) + 0.05;
                atoms.push(OutputPredicate::atom(a, bound).unwrap());
            }
            let pred = if atoms.len() == 1 {
                atoms.pop().unwrap()
            } else {
                OutputPredicate::and(atoms).unwrap()
            };
            CorrectnessProperty::new(b, pred).unwrap()
        })
        .collect();
    (net, origins)
}

/// Zero region losses imply sampled satisfaction of every origin property.
/// Runs until `instances` sets have been certified by input splitting.
pub fn zero_loss_chain(instances: usize, samples: usize, seed: u64) -> Suite {
    let mut s = Suite::new("zero-loss soundness chain");
    let mut r = rng(seed);
    let mut attempts = 0;
    while s.instances < instances && attempts < 20 * instances {
        attempts += 1;
        let (net, origins) = satisfiable_instance(&mut r);
        let mut set = RegionSet::new(origins.clone());
        if !certify_only(&net, &mut set, 2000).unwrap().is_certified() {
            continue;
        }
        let losses = region_losses(&net, &set).unwrap();
        s.check(losses.total == 0.0, || {
            format!("attempt {attempts}: recomputed loss {}", losses.total)
        });
        for (o, p) in origins.iter().enumerate() {
            let xs = uniform_samples(&p.input, samples, seed ^ attempts as u64);
            let bad = xs
                .iter()
                .find(|x| !ref_satisfies(&p.output, &ref_forward(&net, x)));
            s.check(bad.is_none(), || {
                format!("attempt {attempts} origin {o}: violated at {bad:?}")
            });
        }
        s.instances += 1;
    }
    let got = s.instances;
    s.check(got >= instances, || {
        format!("only {got} of {instances} instances certified")
    });
    s
}

/// Refinement keeps a tiling of every origin box, children map inside the
/// parent's image and max child loss never exceeds the parent loss.
pub fn refinement(instances: usize, seed: u64) -> Suite {
    let mut s = Suite::new("refinement monotonicity and cover");
    let mut r = rng(seed);
    for inst in 0..instances {
        let (d, e) = dims(&mut r);
        let mut net = random_net(&mut r, d, e);
        let origins: Vec<CorrectnessProperty> = (0..r.gen_range(1..=3))
            .map(|_| {
                CorrectnessProperty::new(random_box(&mut r, d), random_predicate(&mut r, e, 2))
                    .unwrap()
            })
            .collect();
        let mut set = RegionSet::new(origins.clone());
        for _round in 0..4 {
            set.evaluate(&net).unwrap();
            let before: HashMap<usize, IntervalBox> = set
                .regions()
                .iter()
                .map(|g| (g.id, g.bounds.clone()))
                .collect();
            let k = r.gen_range(1..=8);
            let splits = set.refine_topk(&net, k, 200).unwrap();
            let by_id: HashMap<usize, (usize, IntervalBox)> = set
                .regions()
                .iter()
                .map(|g| (g.id, (g.origin, g.bounds.clone())))
                .collect();
            for sp in &splits {
                let parent = &before[&sp.parent];
                let (origin, left) = &by_id[&sp.left];
                let (_, right) = &by_id[&sp.right];
                let pred = &origins[*origin].output;
                let p_out = eval_box(&net, parent).unwrap();
                let p_loss = dist_abstract(&p_out, pred);
                for child in [left, right] {
                    s.check(child.is_subset_of(parent), || {
                        format!("instance {inst}: child escapes parent")
                    });
                    let c_out = eval_box(&net, child).unwrap();
                    s.check(c_out.is_subset_of(&p_out), || {
                        format!("instance {inst}: child image {c_out:?} ⊄ {p_out:?}")
                    });
                    let c_loss = dist_abstract(&c_out, pred);
                    s.check(c_loss <= p_loss, || {
                        format!("instance {inst}: child loss {c_loss} > parent {p_loss}")
                    });
                }
                s.check(tiles(parent, &[left, right]), || {
                    format!("instance {inst}: split {sp:?} does not tile its parent")
                });
            }
            // Move the weights a little, as a training step would.
            for _ in 0..3 {
                let idx = r.gen_range(0..param_count(&net));
                net = perturb_param(&net, idx, r.gen_range(-0.1..0.1));
            }
        }
        for (o, p) in origins.iter().enumerate() {
            let leaves: Vec<&IntervalBox> = set
                .regions()
                .iter()
                .filter(|g| g.origin == o)
                .map(|g| &g.bounds)
                .collect();
            s.check(tiles(&p.input, &leaves), || {
                format!("instance {inst}: origin {o} not tiled")
            });
        }
        s.check(set.verify_cover(), || {
            format!("instance {inst}: split log replay failed")
        });
        s.instances += 1;
    }
    s
}

/// Grid search never finds a concrete loss above the abstract loss.
pub fn grid_below_abstract(instances: usize, seed: u64) -> Suite {
    let mut s = Suite::new("grid worst ≤ abstract loss");
    let mut r = rng(seed);
    for inst in 0..instances {
        let d = r.gen_range(1..=3);
        let e = r.gen_range(1..=3);
        let net = random_net(&mut r, d, e);
        let b = random_box(&mut r, d);
        let pred = random_predicate(&mut r, e, 2);
        let res = [0, 200, 40, 15][d];
        let grid = grid_worst_dist(&net, &b, &pred, res).unwrap();
        let abs = dist_abstract(&eval_box(&net, &b).unwrap(), &pred);
        s.check(grid.value <= abs + 1e-9, || {
            format!("instance {inst}: grid {} > abstract {abs}", grid.value)
        });
        s.instances += 1;
    }
    s
}

/// Activation and selection pattern of a point; a change between the two
/// ends of a finite-difference stencil marks a kink.
fn point_pattern(net: &Network, x: &[f64], pred: Option<&OutputPredicate>) -> Vec<i64> {
    let mut pat: Vec<i64> = ref_preactivations(net, x)
        .iter()
        .map(|v| (*v > 0.0) as i64)
        .collect();
    if let Some(p) = pred {
        let y = ref_forward(net, x);
        let m: Vec<f64> = atoms(p).iter().map(|a| atom_margin(a, &y)).collect();
        pat.extend(m.iter().map(|v| (*v > 0.0) as i64));
        pat.extend(argsort(&m));
    }
    pat
}

fn box_pattern(net: &Network, b: &IntervalBox, pred: &OutputPredicate) -> Vec<i64> {
    let (_, tape) = forward_box(net, b).unwrap();
    let mut pat = Vec::new();
    for (layer, (pre, _)) in net.layers().iter().zip(tape.interval_records().unwrap()) {
        if layer.apply_relu() {
            pat.extend(pre.lower().iter().map(|v| (*v > 0.0) as i64));
            pat.extend(pre.upper().iter().map(|v| (*v > 0.0) as i64));
        }
        pat.extend(layer.weights().iter().map(|w| (*w >= 0.0) as i64));
    }
    let out = tape.output_box().unwrap();
    let m: Vec<f64> = atoms(pred)
        .iter()
        .map(|a| atom_box_margin(a, out))
        .collect();
    pat.extend(m.iter().map(|v| (*v > 0.0) as i64));
    pat.extend(argsort(&m));
    pat
}

fn argsort(v: &[f64]) -> Vec<i64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    idx.into_iter().map(|i| i as i64).collect()
}

pub const FD_STEP: f64 = 1e-5;

/// Reverse-mode gradients against central differences, for concrete losses
/// (linear functionals and property distances) and for the abstract loss
/// with respect to both weights and input bounds.
pub fn gradients(instances: usize, seed: u64) -> Suite {
    let mut s = Suite::new("gradient check");
    let mut r = rng(seed);
    let h = FD_STEP;
    for inst in 0..instances {
        let (d, e) = dims(&mut r);
        let net = random_net(&mut r, d, e);
        let pred = random_predicate(&mut r, e, 2);
        let around = random_box(&mut r, d);
        let x = random_point_in(&mut r, &around);
        let b = random_box(&mut r, d);
        let np = param_count(&net);

        // Concrete loss: either c·y or the property distance.
        let linear: Option<Vec<f64>> = if inst % 2 == 0 {
            Some((0..e).map(|_| r.gen_range(-1.0..1.0)).collect())
        } else {
            None
        };
        let concrete = |n: &Network, x: &[f64]| -> f64 {
            let y = ref_forward(n, x);
            match &linear {
                Some(c) => c.iter().zip(&y).map(|(a, v)| a * v).sum(),
                None => art_core::dist_concrete(&y, &pred),
            }
        };
        let (y, mut tape) = forward(&net, &x).unwrap();
        match &linear {
            Some(c) => {
                let v = c.iter().zip(&y).map(|(a, v)| a * v).sum();
                tape.attach_point_loss(v, c.clone()).unwrap();
            }
            None => {
                record_dist_concrete(&mut tape, &pred, LossOptions::default()).unwrap();
            }
        }
        let g = backward(&tape, 1.0).unwrap();
        let analytic: Vec<f64> = g.params().copied().collect();
        let pp = linear.is_none().then_some(&pred);
        for (idx, &a) in analytic.iter().enumerate().take(np) {
            let (lo, hi) = (perturb_param(&net, idx, -h), perturb_param(&net, idx, h));
            if point_pattern(&lo, &x, pp) != point_pattern(&hi, &x, pp) {
                s.skipped += 1;
                continue;
            }
            let num = (concrete(&hi, &x) - concrete(&lo, &x)) / (2.0 * h);
            s.check(grad_agrees(a, num), || {
                format!("instance {inst} concrete param {idx}: analytic {a} numeric {num}")
            });
        }
        let dx = g.d_input.clone().unwrap();
        for i in 0..d {
            let (mut xl, mut xh) = (x.clone(), x.clone());
            xl[i] -= h;
            xh[i] += h;
            if point_pattern(&net, &xl, pp) != point_pattern(&net, &xh, pp) {
                s.skipped += 1;
                continue;
            }
            let num = (concrete(&net, &xh) - concrete(&net, &xl)) / (2.0 * h);
            s.check(grad_agrees(dx[i], num), || {
                format!(
                    "instance {inst} concrete input {i}: analytic {} numeric {num}",
                    dx[i]
                )
            });
        }

        // Abstract loss.
        let abstract_loss =
            |n: &Network, b: &IntervalBox| dist_abstract(&eval_box(n, b).unwrap(), &pred);
        let (_, mut tape) = forward_box(&net, &b).unwrap();
        record_dist_abstract(&mut tape, &pred, LossOptions::default()).unwrap();
        let g = backward(&tape, 1.0).unwrap();
        let analytic: Vec<f64> = g.params().copied().collect();
        for (idx, &a) in analytic.iter().enumerate() {
            let (lo, hi) = (perturb_param(&net, idx, -h), perturb_param(&net, idx, h));
            if box_pattern(&lo, &b, &pred) != box_pattern(&hi, &b, &pred) {
                s.skipped += 1;
                continue;
            }
            let num = (abstract_loss(&hi, &b) - abstract_loss(&lo, &b)) / (2.0 * h);
            s.check(grad_agrees(a, num), || {
                format!("instance {inst} abstract param {idx}: analytic {a} numeric {num}")
            });
        }
        let gl = g.d_input_lower.clone().unwrap();
        let gu = g.d_input_upper.clone().unwrap();
        for i in 0..d {
            for (upper, an) in [(false, gl[i]), (true, gu[i])] {
                let shift = |delta: f64| {
                    let (mut l, mut u) = (b.lower().to_vec(), b.upper().to_vec());
                    if upper {
                        u[i] += delta;
                    } else {
                        l[i] += delta;
                    }
                    IntervalBox::new(l, u).unwrap()
                };
                let (bl, bh) = (shift(-h), shift(h));
                if box_pattern(&net, &bl, &pred) != box_pattern(&net, &bh, &pred) {
                    s.skipped += 1;
                    continue;
                }
                let num = (abstract_loss(&net, &bh) - abstract_loss(&net, &bl)) / (2.0 * h);
                s.check(grad_agrees(an, num), || {
                    format!("instance {inst} bound {i} upper={upper}: analytic {an} numeric {num}")
                });
            }
        }
        s.instances += 1;
    }
    // A checker that skips everything proves nothing.
    let total = s.checks + s.skipped;
    let skipped = s.skipped;
    s.check(skipped * 5 <= total, || {
        format!("{skipped} of {total} coordinates skipped")
    });
    s
}
