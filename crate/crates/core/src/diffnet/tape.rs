use crate::error::{ArtError, Result};
use crate::interval::IntervalBox;

use super::network::{LayerSpec, Network};

/// Values recorded while evaluating one layer.
#[derive(Debug, Clone)]
pub(crate) struct Record<T> {
    pub pre: T,
    pub post: T,
}

#[derive(Debug, Clone)]
pub(crate) enum Trace {
    Point {
        input: Vec<f64>,
        layers: Vec<Record<Vec<f64>>>,
    },
    Interval {
        input: IntervalBox,
        layers: Vec<Record<IntervalBox>>,
    },
}

/// Gradient of the attached scalar loss with respect to the network output.
#[derive(Debug, Clone)]
enum LossHead {
    Point {
        value: f64,
        grad: Vec<f64>,
    },
    Interval {
        value: f64,
        grad_lower: Vec<f64>,
        grad_upper: Vec<f64>,
    },
}

/// A recorded forward pass, concrete or interval, that can be swept in
/// reverse once a scalar loss has been attached to its output.
#[derive(Debug, Clone)]
pub struct Tape<'n> {
    net: &'n Network,
    trace: Trace,
    head: Option<LossHead>,
}

impl<'n> Tape<'n> {
    pub(crate) fn new(net: &'n Network, trace: Trace) -> Self {
        Self {
            net,
            trace,
            head: None,
        }
    }

    pub fn network(&self) -> &'n Network {
        self.net
    }

    pub fn is_interval(&self) -> bool {
        matches!(self.trace, Trace::Interval { .. })
    }

    /// Output of a concrete tape.
    pub fn output(&self) -> Option<&[f64]> {
        match &self.trace {
            Trace::Point { layers, .. } => layers.last().map(|r| r.post.as_slice()),
            Trace::Interval { .. } => None,
        }
    }

    /// Output box of an interval tape.
    pub fn output_box(&self) -> Option<&IntervalBox> {
        match &self.trace {
            Trace::Interval { layers, .. } => layers.last().map(|r| &r.post),
            Trace::Point { .. } => None,
        }
    }

    /// Pre- and post-activation values of a concrete tape, one pair per layer.
    pub fn point_records(&self) -> Option<Vec<(&[f64], &[f64])>> {
        match &self.trace {
            Trace::Point { layers, .. } => Some(
                layers
                    .iter()
                    .map(|r| (r.pre.as_slice(), r.post.as_slice()))
                    .collect(),
            ),
            Trace::Interval { .. } => None,
        }
    }

    /// Pre- and post-activation boxes of an interval tape, one pair per layer.
    pub fn interval_records(&self) -> Option<Vec<(&IntervalBox, &IntervalBox)>> {
        match &self.trace {
            Trace::Interval { layers, .. } => {
                Some(layers.iter().map(|r| (&r.pre, &r.post)).collect())
            }
            Trace::Point { .. } => None,
        }
    }

    pub fn loss(&self) -> Option<f64> {
        self.head.as_ref().map(|h| match h {
            LossHead::Point { value, .. } | LossHead::Interval { value, .. } => *value,
        })
    }

    /// Terminates a concrete tape in a scalar loss with the given gradient
    /// with respect to the network output.
    pub fn attach_point_loss(&mut self, value: f64, grad: Vec<f64>) -> Result<()> {
        if !matches!(self.trace, Trace::Point { .. }) {
            return Err(ArtError::Usage(
                "point loss attached to an interval tape".into(),
            ));
        }
        if grad.len() != self.net.output_dim() {
            return Err(ArtError::dims(
                "loss gradient",
                self.net.output_dim(),
                grad.len(),
            ));
        }
        self.head = Some(LossHead::Point { value, grad });
        Ok(())
    }

    /// Terminates an interval tape in a scalar loss with the given gradients
    /// with respect to the lower and upper output bounds.
    pub fn attach_interval_loss(
        &mut self,
        value: f64,
        grad_lower: Vec<f64>,
        grad_upper: Vec<f64>,
    ) -> Result<()> {
        if !matches!(self.trace, Trace::Interval { .. }) {
            return Err(ArtError::Usage(
                "interval loss attached to a concrete tape".into(),
            ));
        }
        let e = self.net.output_dim();
        if grad_lower.len() != e || grad_upper.len() != e {
            return Err(ArtError::dims("loss gradient", e, grad_lower.len()));
        }
        self.head = Some(LossHead::Interval {
            value,
            grad_lower,
            grad_upper,
        });
        Ok(())
    }

    /// Re-runs the recorded computation from the stored input and checks that
    /// every intermediate matches bit for bit.
    pub fn replays_exactly(&self) -> bool {
        match &self.trace {
            Trace::Point { input, layers } => {
                let fresh = record_point(self.net, input);
                fresh.len() == layers.len()
                    && fresh
                        .iter()
                        .zip(layers)
                        .all(|(a, b)| bits_eq(&a.pre, &b.pre) && bits_eq(&a.post, &b.post))
            }
            Trace::Interval { input, layers } => {
                let fresh = crate::interval::record_box(self.net, input);
                fresh.len() == layers.len()
                    && fresh
                        .iter()
                        .zip(layers)
                        .all(|(a, b)| box_bits_eq(&a.pre, &b.pre) && box_bits_eq(&a.post, &b.post))
            }
        }
    }
}

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn box_bits_eq(a: &IntervalBox, b: &IntervalBox) -> bool {
    bits_eq(a.lower(), b.lower()) && bits_eq(a.upper(), b.upper())
}

pub(crate) fn record_point(net: &Network, x: &[f64]) -> Vec<Record<Vec<f64>>> {
    let mut records: Vec<Record<Vec<f64>>> = Vec::with_capacity(net.layers().len());
    for layer in net.layers() {
        let input = records.last().map_or(x, |r| r.post.as_slice());
        let pre = layer.affine(input);
        let post = if layer.apply_relu() {
            pre.iter().map(|v| v.max(0.0)).collect()
        } else {
            pre.clone()
        };
        records.push(Record { pre, post });
    }
    records
}

/// Concrete forward pass `y = F(x)`, recording every intermediate.
pub fn forward<'n>(net: &'n Network, x: &[f64]) -> Result<(Vec<f64>, Tape<'n>)> {
    net.check_input(x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ArtError::NonFinite("network input".into()));
    }
    let layers = record_point(net, x);
    let y = layers.last().map(|r| r.post.clone()).unwrap_or_default();
    Ok((
        y,
        Tape::new(
            net,
            Trace::Point {
                input: x.to_vec(),
                layers,
            },
        ),
    ))
}

/// Gradients of a scalar loss with respect to every weight and bias, and
/// for interval tapes also with respect to the input box bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub d_weights: Vec<Vec<f64>>,
    pub d_bias: Vec<Vec<f64>>,
    pub d_input: Option<Vec<f64>>,
    pub d_input_lower: Option<Vec<f64>>,
    pub d_input_upper: Option<Vec<f64>>,
}

impl GradientBundle {
    pub fn zeros(net: &Network) -> Self {
        Self {
            d_weights: net
                .layers()
                .iter()
                .map(|l| vec![0.0; l.weights().len()])
                .collect(),
            d_bias: net
                .layers()
                .iter()
                .map(|l| vec![0.0; l.out_dim()])
                .collect(),
            d_input: None,
            d_input_lower: None,
            d_input_upper: None,
        }
    }

    /// Adds `scale * other` into the parameter gradients. Input gradients
    /// describe a particular tape and are dropped.
    pub fn accumulate(&mut self, other: &GradientBundle, scale: f64) {
        for (dst, src) in self
            .d_weights
            .iter_mut()
            .chain(self.d_bias.iter_mut())
            .zip(other.d_weights.iter().chain(other.d_bias.iter()))
        {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
        self.d_input = None;
        self.d_input_lower = None;
        self.d_input_upper = None;
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.d_weights
            .iter()
            .zip(&self.d_bias)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    pub fn shape_matches(&self, net: &Network) -> bool {
        self.d_weights.len() == net.layers().len()
            && net.layers().iter().enumerate().all(|(k, l)| {
                self.d_weights[k].len() == l.weights().len() && self.d_bias[k].len() == l.out_dim()
            })
    }
}

/// One reverse sweep over `tape`, scaling the attached loss gradient by `seed`.
pub fn backward(tape: &Tape<'_>, seed: f64) -> Result<GradientBundle> {
    if !seed.is_finite() {
        return Err(ArtError::NonFinite("backward seed".into()));
    }
    let Some(head) = &tape.head else {
        return Err(ArtError::Usage(
            "tape is not terminated in a scalar loss".into(),
        ));
    };
    let net = tape.net;
    let mut grads = GradientBundle::zeros(net);
    match (&tape.trace, head) {
        (Trace::Point { input, layers }, LossHead::Point { grad, .. }) => {
            let mut g: Vec<f64> = grad.iter().map(|v| v * seed).collect();
            for (k, layer) in net.layers().iter().enumerate().rev() {
                if layer.apply_relu() {
                    relu_back(&mut g, &layers[k].pre);
                }
                let x = if k == 0 { input } else { &layers[k - 1].post };
                g = point_affine_back(layer, x, &g, &mut grads.d_weights[k], &mut grads.d_bias[k]);
            }
            grads.d_input = Some(g);
        }
        (
            Trace::Interval { input, layers },
            LossHead::Interval {
                grad_lower,
                grad_upper,
                ..
            },
        ) => {
            let mut gl: Vec<f64> = grad_lower.iter().map(|v| v * seed).collect();
            let mut gu: Vec<f64> = grad_upper.iter().map(|v| v * seed).collect();
            for (k, layer) in net.layers().iter().enumerate().rev() {
                if layer.apply_relu() {
                    relu_back(&mut gl, layers[k].pre.lower());
                    relu_back(&mut gu, layers[k].pre.upper());
                }
                let x = if k == 0 { input } else { &layers[k - 1].post };
                (gl, gu) = interval_affine_back(
                    layer,
                    x,
                    &gl,
                    &gu,
                    &mut grads.d_weights[k],
                    &mut grads.d_bias[k],
                );
            }
            grads.d_input_lower = Some(gl);
            grads.d_input_upper = Some(gu);
        }
        _ => unreachable!("loss heads are checked against the trace when attached"),
    }
    Ok(grads)
}

/// ReLU subgradient: 1 where the pre-activation is strictly positive, else 0.
fn relu_back(g: &mut [f64], pre: &[f64]) {
    for (gi, z) in g.iter_mut().zip(pre) {
        if *z <= 0.0 {
            *gi = 0.0;
        }
    }
}

fn point_affine_back(
    layer: &LayerSpec,
    x: &[f64],
    g: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let n = layer.in_dim();
    let mut gx = vec![0.0; n];
    for (j, &gj) in g.iter().enumerate() {
        db[j] += gj;
        if gj == 0.0 {
            continue;
        }
        let row = layer.row(j);
        let drow = &mut dw[j * n..(j + 1) * n];
        for i in 0..n {
            drow[i] += gj * x[i];
            gx[i] += gj * row[i];
        }
    }
    gx
}

/// Reverse of the interval affine transformer. For a non-negative weight the
/// lower output bound reads the lower input bound and the upper reads the
/// upper; a negative weight swaps them.
fn interval_affine_back(
    layer: &LayerSpec,
    x: &IntervalBox,
    gl: &[f64],
    gu: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = layer.in_dim();
    let (lo, hi) = (x.lower(), x.upper());
    let mut gl_in = vec![0.0; n];
    let mut gu_in = vec![0.0; n];
    for j in 0..layer.out_dim() {
        let (a, b) = (gl[j], gu[j]);
        db[j] += a + b;
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let row = layer.row(j);
        let drow = &mut dw[j * n..(j + 1) * n];
        for i in 0..n {
            let w = row[i];
            if w >= 0.0 {
                drow[i] += a * lo[i] + b * hi[i];
                gl_in[i] += a * w;
                gu_in[i] += b * w;
            } else {
                drow[i] += a * hi[i] + b * lo[i];
                gu_in[i] += a * w;
                gl_in[i] += b * w;
            }
        }
    }
    (gl_in, gu_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_linear_neuron_gradient() {
        let net = Network::new(vec![LayerSpec::from_rows(&[&[3.0]], false).unwrap()]).unwrap();
        let (y, mut tape) = forward(&net, &[2.0]).unwrap();
        assert_eq!(y, vec![6.0]);
        tape.attach_point_loss(y[0], vec![1.0]).unwrap();
        let g = backward(&tape, 1.0).unwrap();
        assert_eq!(g.d_weights[0], vec![2.0]);
        assert_eq!(g.d_bias[0], vec![1.0]);
        assert_eq!(g.d_input, Some(vec![3.0]));
    }

    #[test]
    fn relu_at_zero_passes_no_gradient() {
        let net = Network::new(vec![
            LayerSpec::from_rows(&[&[1.0]], true).unwrap(),
            LayerSpec::from_rows(&[&[1.0]], false).unwrap(),
        ])
        .unwrap();
        let (_, mut tape) = forward(&net, &[0.0]).unwrap();
        tape.attach_point_loss(0.0, vec![1.0]).unwrap();
        let g = backward(&tape, 1.0).unwrap();
        assert_eq!(g.d_weights[0], vec![0.0]);
        assert_eq!(g.d_bias[0], vec![0.0]);
    }

    #[test]
    fn backward_without_loss_is_usage_error() {
        let net = Network::random(&[2, 2], 0).unwrap();
        let (_, tape) = forward(&net, &[1.0, 2.0]).unwrap();
        assert!(matches!(backward(&tape, 1.0), Err(ArtError::Usage(_))));
    }

    #[test]
    fn seed_scales_gradient() {
        let net = Network::random(&[2, 3, 2], 4).unwrap();
        let (_, mut tape) = forward(&net, &[0.3, -0.7]).unwrap();
        tape.attach_point_loss(0.0, vec![1.0, -2.0]).unwrap();
        let g1 = backward(&tape, 1.0).unwrap();
        let g3 = backward(&tape, 3.0).unwrap();
        for (a, b) in g1.params().zip(g3.params()) {
            assert!((3.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn input_shape_error() {
        let net = Network::random(&[3, 2], 0).unwrap();
        assert!(matches!(
            forward(&net, &[1.0]),
            Err(ArtError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn point_tape_replays() {
        let net = Network::random(&[3, 5, 2], 9).unwrap();
        let (_, tape) = forward(&net, &[0.1, 0.2, -0.4]).unwrap();
        assert!(tape.replays_exactly());
    }
}
