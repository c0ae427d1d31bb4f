//! Random instance generators and independent reference checkers shared by
//! the integration tests.

#![allow(dead_code)]

use art_core::property::{Atom, OutputPredicate};
use art_core::{IntervalBox, LayerSpec, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Random network with 1..=3 layers and hidden widths 1..=8. The last layer
/// is linear, the others use ReLU. Weights in [-1, 1], biases in [-0.5, 0.5].
pub fn random_net(rng: &mut impl Rng, d: usize, e: usize) -> Network {
    let depth = rng.gen_range(1..=3);
    let mut dims = vec![d];
    for _ in 1..depth {
        dims.push(rng.gen_range(1..=8));
    }
    dims.push(e);
    random_net_with_dims(rng, &dims, true)
}

pub fn random_net_with_dims(rng: &mut impl Rng, dims: &[usize], relu: bool) -> Network {
    let n = dims.len() - 1;
    let layers = (0..n)
        .map(|k| {
            let (i, o) = (dims[k], dims[k + 1]);
            let w = (0..i * o).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = (0..o).map(|_| rng.gen_range(-0.5..0.5)).collect();
            LayerSpec::new(o, i, w, b, relu && k + 1 < n).unwrap()
        })
        .collect();
    Network::new(layers).unwrap()
}

/// Box with centre in [-2, 2] and half-width in [0.05, 1.5] per dimension.
pub fn random_box(rng: &mut impl Rng, d: usize) -> IntervalBox {
    let pairs: Vec<(f64, f64)> = (0..d)
        .map(|_| {
            let c = rng.gen_range(-2.0..2.0);
            let r = rng.gen_range(0.05..1.5);
            (c - r, c + r)
        })
        .collect();
    IntervalBox::from_pairs(&pairs).unwrap()
}

pub fn random_point_in(rng: &mut impl Rng, b: &IntervalBox) -> Vec<f64> {
    (0..b.dim())
        .map(|i| {
            if b.width(i) == 0.0 {
                b.lower()[i]
            } else {
                rng.gen_range(b.lower()[i]..=b.upper()[i])
            }
        })
        .collect()
}

pub fn random_atom(rng: &mut impl Rng, e: usize) -> Atom {
    loop {
        let a: Vec<f64> = (0..e).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if a.iter().map(|v| v * v).sum::<f64>() < 1e-4 {
            continue;
        }
        let atom = Atom::le(a, rng.gen_range(-1.0..1.0)).unwrap();
        return if rng.gen_bool(0.5) {
            atom.negate()
        } else {
            atom
        };
    }
}

/// Random predicate of nesting depth at most `depth`.
pub fn random_predicate(rng: &mut impl Rng, e: usize, depth: usize) -> OutputPredicate {
    if depth == 0 || rng.gen_bool(0.35) {
        return OutputPredicate::Atom(random_atom(rng, e));
    }
    let n = rng.gen_range(1..=3);
    let kids = (0..n)
        .map(|_| random_predicate(rng, e, depth - 1))
        .collect();
    if rng.gen_bool(0.5) {
        OutputPredicate::and(kids).unwrap()
    } else {
        OutputPredicate::or(kids).unwrap()
    }
}

pub fn atoms(p: &OutputPredicate) -> Vec<&Atom> {
    match p {
        OutputPredicate::Atom(a) => vec![a],
        OutputPredicate::And(k) | OutputPredicate::Or(k) => k.iter().flat_map(atoms).collect(),
    }
}

/// Plain dot-product forward pass written independently of the library.
pub fn ref_forward(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    for layer in net.layers() {
        let mut next = Vec::with_capacity(layer.out_dim());
        for j in 0..layer.out_dim() {
            let mut s = layer.bias()[j];
            for (i, xi) in v.iter().enumerate() {
                s += layer.weight(j, i) * xi;
            }
            next.push(if layer.apply_relu() { s.max(0.0) } else { s });
        }
        v = next;
    }
    v
}

/// Pre-activations of every ReLU layer at `x`.
pub fn ref_preactivations(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut v = x.to_vec();
    for layer in net.layers() {
        let pre = layer.affine(&v);
        if layer.apply_relu() {
            out.extend(&pre);
            v = pre.iter().map(|p| p.max(0.0)).collect();
        } else {
            v = pre;
        }
    }
    out
}

/// Truth value of an atom straight from its definition.
pub fn atom_holds(a: &Atom, y: &[f64]) -> bool {
    let s: f64 = a.coeffs().iter().zip(y).map(|(c, v)| c * v).sum();
    if a.is_strict() {
        s < a.bound()
    } else {
        s <= a.bound()
    }
}

pub fn ref_satisfies(p: &OutputPredicate, y: &[f64]) -> bool {
    match p {
        OutputPredicate::Atom(a) => atom_holds(a, y),
        OutputPredicate::And(k) => k.iter().all(|c| ref_satisfies(c, y)),
        OutputPredicate::Or(k) => k.iter().any(|c| ref_satisfies(c, y)),
    }
}

/// Signed distance `(a·y - b) / |a|` of `y` from an atom's boundary.
pub fn atom_margin(a: &Atom, y: &[f64]) -> f64 {
    let s: f64 = a.coeffs().iter().zip(y).map(|(c, v)| c * v).sum();
    let n = a.coeffs().iter().map(|c| c * c).sum::<f64>().sqrt();
    (s - a.bound()) / n
}

/// Same as [`atom_margin`] but for the worst point of an output box.
pub fn atom_box_margin(a: &Atom, out: &IntervalBox) -> f64 {
    let s: f64 = a
        .coeffs()
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
    let n = a.coeffs().iter().map(|c| c * c).sum::<f64>().sqrt();
    (s - a.bound()) / n
}

/// Copy of `net` with parameter `idx` shifted by `delta`. Parameters are
/// numbered layer by layer, weights (row-major) before biases.
pub fn perturb_param(net: &Network, idx: usize, delta: f64) -> Network {
    let mut k = idx;
    let layers = net
        .layers()
        .iter()
        .map(|l| {
            let mut w = l.weights().to_vec();
            let mut b = l.bias().to_vec();
            if k < w.len() {
                w[k] += delta;
                k = usize::MAX;
            } else if k != usize::MAX {
                k -= w.len();
                if k < b.len() {
                    b[k] += delta;
                    k = usize::MAX;
                } else {
                    k -= b.len();
                }
            }
            LayerSpec::new(l.out_dim(), l.in_dim(), w, b, l.apply_relu()).unwrap()
        })
        .collect();
    Network::new(layers).unwrap()
}

pub fn param_count(net: &Network) -> usize {
    net.layers()
        .iter()
        .map(|l| l.weights().len() + l.bias().len())
        .sum()
}

/// `(|a - f| <= rel * max(|a|, |f|)) || |a - f| <= abs`.
pub fn grad_agrees(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= 1e-6 || diff <= 1e-4 * analytic.abs().max(numeric.abs())
}

/// Checks that the leaves of one origin tile `origin` exactly: every leaf
/// lies inside, leaves overlap only on faces, and their volumes add up. For
/// boxes with degenerate dimensions the check runs on the non-degenerate
/// coordinates.
pub fn tiles(origin: &IntervalBox, leaves: &[&IntervalBox]) -> bool {
    if leaves.iter().any(|b| !b.is_subset_of(origin)) {
        return false;
    }
    let active: Vec<usize> = (0..origin.dim())
        .filter(|&i| origin.width(i) > 0.0)
        .collect();
    let vol = |b: &IntervalBox| active.iter().map(|&i| b.width(i)).product::<f64>();
    let total = vol(origin);
    let sum: f64 = leaves.iter().map(|b| vol(b)).sum();
    if !close(sum, total, 1e-9 * total.max(1.0)) {
        return false;
    }
    for (a, x) in leaves.iter().enumerate() {
        for y in &leaves[a + 1..] {
            let overlap: f64 = active
                .iter()
                .map(|&i| {
                    (x.upper()[i].min(y.upper()[i]) - x.lower()[i].max(y.lower()[i])).max(0.0)
                })
                .product();
            if overlap > 1e-12 * total.max(1.0) {
                return false;
            }
        }
    }
    true
}

pub mod suites;
