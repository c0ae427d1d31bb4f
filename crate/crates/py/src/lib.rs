//! Python bindings for `art-core`.

use art_core::diffnet::{parse_network, write_network};
use art_core::oracle::{
    label_with_oracle, read_dataset_csv, sample_violations, write_dataset_csv, LabelPolarity,
};
use art_core::property::{dist_abstract_with, parse_properties, write_properties};
use art_core::{
    art_train, certify_only, dist_concrete, forward_box, satisfies, ArtError, CertifyOutcome,
    CorrectnessProperty, Dataset as CoreDataset, IntervalBox, LossOptions, LrDecay,
    Network as CoreNetwork, OptimizerKind, RegionSet, TrainConfig, TrainReport,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(
    art_py,
    ArtPyError,
    PyException,
    "Raised for any error from the core library."
);

fn err(e: ArtError) -> PyErr {
    ArtPyError::new_err(e.to_string())
}

fn make_box(lower: Vec<f64>, upper: Vec<f64>) -> PyResult<IntervalBox> {
    IntervalBox::new(lower, upper).map_err(err)
}

type BoxPair = (Vec<f64>, Vec<f64>);

/// A fully-connected ReLU network.
#[pyclass(module = "art_py")]
#[derive(Clone)]
struct Network {
    inner: CoreNetwork,
}

#[pymethods]
impl Network {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_network(text).map_err(err)?,
        })
    }

    /// The two-input radar example network.
    #[staticmethod]
    fn demo() -> Self {
        Self {
            inner: art_core::demo::demo_network(),
        }
    }

    /// Uniform ±1/√fan_in weights, zero biases, ReLU on hidden layers.
    #[staticmethod]
    #[pyo3(signature = (dims, seed = 0))]
    fn random(dims: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: CoreNetwork::random(&dims, seed).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        write_network(&self.inner)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.eval(&x).map_err(err)
    }

    /// Interval image of the box `[lower, upper]`, as `(lower, upper)`.
    fn forward_box(&self, lower: Vec<f64>, upper: Vec<f64>) -> PyResult<BoxPair> {
        let (out, _) = forward_box(&self.inner, &make_box(lower, upper)?).map_err(err)?;
        Ok((out.lower().to_vec(), out.upper().to_vec()))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let dims: Vec<String> = std::iter::once(self.inner.input_dim())
            .chain(self.inner.layers().iter().map(|l| l.out_dim()))
            .map(|d| d.to_string())
            .collect();
        format!("Network({})", dims.join("-"))
    }
}

/// An input box paired with an output predicate.
#[pyclass(module = "art_py")]
#[derive(Clone)]
struct Property {
    inner: CorrectnessProperty,
}

#[pymethods]
impl Property {
    /// Parses a property document (a file object, a single property, or a list).
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Vec<Property>> {
        Ok(parse_properties(text)
            .map_err(err)?
            .into_iter()
            .map(|inner| Property { inner })
            .collect())
    }

    /// `y_report > y_ignore` on `v ∈ [0, 5]`, `θ ∈ [0.5, 2.5]`.
    #[staticmethod]
    fn demo() -> Self {
        Self {
            inner: art_core::demo::demo_property(),
        }
    }

    fn to_json(&self) -> String {
        write_properties(std::slice::from_ref(&self.inner))
    }

    #[getter]
    fn input_box(&self) -> BoxPair {
        (
            self.inner.input.lower().to_vec(),
            self.inner.input.upper().to_vec(),
        )
    }

    fn satisfies(&self, y: Vec<f64>) -> PyResult<bool> {
        self.inner.output.check_dim(y.len()).map_err(err)?;
        Ok(satisfies(&y, &self.inner.output))
    }

    fn dist_concrete(&self, y: Vec<f64>) -> PyResult<f64> {
        self.inner.output.check_dim(y.len()).map_err(err)?;
        Ok(dist_concrete(&y, &self.inner.output))
    }

    /// Abstract loss of the network over the whole input box.
    #[pyo3(signature = (net, margin = 0.0))]
    fn dist_abstract(&self, net: &Network, margin: f64) -> PyResult<f64> {
        self.inner
            .check_network(net.inner.input_dim(), net.inner.output_dim())
            .map_err(err)?;
        let (out, _) = forward_box(&net.inner, &self.inner.input).map_err(err)?;
        Ok(dist_abstract_with(
            &out,
            &self.inner.output,
            LossOptions { margin },
        ))
    }

    fn __repr__(&self) -> String {
        format!("Property(dim={})", self.inner.input.dim())
    }
}

/// Labelled inputs for the accuracy loss.
#[pyclass(module = "art_py")]
#[derive(Clone)]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    #[new]
    fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: CoreDataset::new(inputs, labels).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: read_dataset_csv(text).map_err(err)?,
        })
    }

    fn to_csv(&self) -> PyResult<String> {
        let d = self.inner.inputs.first().map_or(0, Vec::len);
        write_dataset_csv(&self.inner, d).map_err(err)
    }

    #[getter]
    fn inputs(&self) -> Vec<Vec<f64>> {
        self.inner.inputs.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    fn accuracy(&self, net: &Network) -> PyResult<f64> {
        self.inner.check_network(&net.inner).map_err(err)?;
        Ok(self.inner.accuracy(&net.inner))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Outcome of a training run.
#[pyclass(module = "art_py")]
struct TrainResult {
    #[pyo3(get)]
    network: Network,
    report: TrainReport,
    config: TrainConfig,
    split_log: String,
}

#[pymethods]
impl TrainResult {
    #[getter]
    fn certified(&self) -> bool {
        self.report.certified()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.report.optimizer_steps
    }

    #[getter]
    fn regions(&self) -> usize {
        self.report.final_regions
    }

    #[getter]
    fn splits(&self) -> usize {
        self.report.splits
    }

    #[getter]
    fn loss_d(&self) -> f64 {
        self.report.final_loss_d
    }

    #[getter]
    fn loss_a(&self) -> f64 {
        self.report.final_loss_a
    }

    /// `(epoch, loss_d, loss_a, regions)` per evaluated epoch.
    #[getter]
    fn epochs(&self) -> Vec<(usize, f64, f64, usize)> {
        self.report
            .epochs
            .iter()
            .map(|e| (e.epoch, e.loss_d, e.loss_a, e.regions))
            .collect()
    }

    #[pyo3(signature = (wall_clock = false))]
    fn report_csv(&self, wall_clock: bool) -> String {
        self.report.to_csv(wall_clock)
    }

    #[pyo3(signature = (wall_clock = false))]
    fn summary_json(&self, wall_clock: bool) -> String {
        self.report.summary_json(&self.config, wall_clock)
    }

    fn split_log_csv(&self) -> String {
        self.split_log.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainResult(certified={}, steps={}, regions={})",
            self.report.certified(),
            self.report.optimizer_steps,
            self.report.final_regions
        )
    }
}

fn parse_optimizer(name: &str) -> PyResult<OptimizerKind> {
    match name {
        "sgd" => Ok(OptimizerKind::Sgd),
        "adam" => Ok(OptimizerKind::Adam),
        other => Err(ArtPyError::new_err(format!(
            "unknown optimizer `{other}`; use sgd or adam"
        ))),
    }
}

fn run_training(
    py: Python<'_>,
    net: CoreNetwork,
    props: Vec<CorrectnessProperty>,
    data: CoreDataset,
    cfg: TrainConfig,
    margin: f64,
) -> PyResult<TrainResult> {
    let (trained, report, split_log) = py
        .allow_threads(|| {
            let mut set = RegionSet::new(props).with_options(LossOptions { margin });
            art_train(net, &mut set, &data, &cfg).map(|(n, r)| (n, r, set.split_log_csv()))
        })
        .map_err(err)?;
    Ok(TrainResult {
        network: Network { inner: trained },
        report,
        config: cfg,
        split_log,
    })
}

/// Trains `net` until every property is proven and the accuracy loss on
/// `data` is at most `eps_accuracy`, or the epoch budget runs out.
#[pyfunction]
#[pyo3(signature = (
    net, properties, data = None, *, lr = 0.001, k = 200, region_cap = 5000,
    eps_accuracy = 0.3, max_epochs = 100, optimizer = "adam", decay = true,
    refine = true, margin = 0.0
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    net: &Network,
    properties: Vec<Property>,
    data: Option<&Dataset>,
    lr: f64,
    k: usize,
    region_cap: usize,
    eps_accuracy: f64,
    max_epochs: usize,
    optimizer: &str,
    decay: bool,
    refine: bool,
    margin: f64,
) -> PyResult<TrainResult> {
    let cfg = TrainConfig {
        lr,
        k,
        region_cap,
        eps_accuracy,
        max_epochs,
        optimizer: parse_optimizer(optimizer)?,
        lr_decay: if decay {
            TrainConfig::default().lr_decay
        } else {
            LrDecay::None
        },
        refine,
        ..TrainConfig::default()
    };
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(ArtPyError::new_err("margin must be a non-negative number"));
    }
    run_training(
        py,
        net.inner.clone(),
        properties.into_iter().map(|p| p.inner).collect(),
        data.map(|d| d.inner.clone()).unwrap_or_default(),
        cfg,
        margin,
    )
}

/// Runs the radar example with its default settings.
#[pyfunction]
#[pyo3(signature = (refine = true))]
fn demo(py: Python<'_>, refine: bool) -> PyResult<TrainResult> {
    let cfg = TrainConfig {
        refine,
        ..art_core::demo::demo_config()
    };
    run_training(
        py,
        art_core::demo::demo_network(),
        vec![art_core::demo::demo_property()],
        CoreDataset::default(),
        cfg,
        0.0,
    )
}

/// Tries to prove the properties by bisection alone. Returns
/// `(certified, splits, max_loss)`; `max_loss` is 0 when certified.
#[pyfunction]
#[pyo3(signature = (net, properties, budget = 10_000))]
fn certify(
    py: Python<'_>,
    net: &Network,
    properties: Vec<Property>,
    budget: usize,
) -> PyResult<(bool, usize, f64)> {
    let net = net.inner.clone();
    let props: Vec<CorrectnessProperty> = properties.into_iter().map(|p| p.inner).collect();
    let out = py
        .allow_threads(|| certify_only(&net, &mut RegionSet::new(props), budget))
        .map_err(err)?;
    Ok(match out {
        CertifyOutcome::Certified { splits } => (true, splits, 0.0),
        CertifyOutcome::Unknown { max_loss, splits } => (false, splits, max_loss),
    })
}

/// Sampled counterexamples as `(input, output, distance)` triples.
/// (input, output, distance) triple returned by `audit`.
type Counterexample = (Vec<f64>, Vec<f64>, f64);

#[pyfunction]
#[pyo3(signature = (net, property, samples = 10_000, seed = 0))]
fn audit(
    py: Python<'_>,
    net: &Network,
    property: &Property,
    samples: usize,
    seed: u64,
) -> PyResult<Vec<Counterexample>> {
    let (net, prop) = (net.inner.clone(), property.inner.clone());
    let found = py
        .allow_threads(|| sample_violations(&net, &prop, samples, seed))
        .map_err(err)?;
    Ok(found
        .into_iter()
        .map(|c| (c.input, c.output, c.distance))
        .collect())
}

/// Samples `n_train + n_test` inputs from the property's box and labels
/// them with the oracle's argmax (or argmin) output.
#[pyfunction]
#[pyo3(signature = (oracle, property, n_train, n_test, seed = 0, polarity = "argmax"))]
fn gen_data(
    oracle: &Network,
    property: &Property,
    n_train: usize,
    n_test: usize,
    seed: u64,
    polarity: &str,
) -> PyResult<(Dataset, Dataset)> {
    let polarity = match polarity {
        "argmax" => LabelPolarity::ArgMax,
        "argmin" => LabelPolarity::ArgMin,
        other => return Err(ArtPyError::new_err(format!("unknown polarity `{other}`"))),
    };
    let (a, b) = label_with_oracle(
        &oracle.inner,
        n_train,
        n_test,
        &property.inner.input,
        seed,
        polarity,
    )
    .map_err(err)?;
    Ok((Dataset { inner: a }, Dataset { inner: b }))
}

#[pymodule]
fn art_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ArtError", m.py().get_type::<ArtPyError>())?;
    m.add_class::<Network>()?;
    m.add_class::<Property>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<TrainResult>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(demo, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add_function(wrap_pyfunction!(gen_data, m)?)?;
    Ok(())
}
