//! The two-input radar advisory example: a 2-2-2 ReLU network without
//! biases that scores the actions Report and Ignore from relative speed `v`
//! and angle `θ`, and the property that objects ahead which are stationary
//! or approaching (`v ∈ [0, 5]`, `θ ∈ [0.5, 2.5]`) must be reported
//! (`y_report > y_ignore`).

use crate::diffnet::{LayerSpec, Network};
use crate::interval::IntervalBox;
use crate::property::{CorrectnessProperty, OutputPredicate};
use crate::trainer::{LrDecay, OptimizerKind, TrainConfig};

pub fn demo_network() -> Network {
    Network::new(vec![
        LayerSpec::from_rows(&[&[1.0, 0.5], &[1.0, -1.0]], true).expect("valid layer"),
        LayerSpec::from_rows(&[&[1.0, -1.0], &[0.5, 1.0]], false).expect("valid layer"),
    ])
    .expect("valid network")
}

/// `y_report > y_ignore`, i.e. `¬(y_report - y_ignore ≤ 0)`.
pub fn report_predicate() -> OutputPredicate {
    OutputPredicate::atom(vec![1.0, -1.0], 0.0)
        .expect("valid atom")
        .negate()
}

pub fn demo_input_box() -> IntervalBox {
    IntervalBox::from_pairs(&[(0.0, 5.0), (0.5, 2.5)]).expect("valid box")
}

pub fn demo_property() -> CorrectnessProperty {
    CorrectnessProperty::new(demo_input_box(), report_predicate()).expect("valid property")
}

/// Training settings for the example: learning rate 0.01 and a 200-epoch,
/// 500-region budget.
pub fn demo_config() -> TrainConfig {
    TrainConfig {
        lr: 0.01,
        k: 200,
        region_cap: 500,
        max_epochs: 200,
        optimizer: OptimizerKind::Sgd,
        lr_decay: LrDecay::None,
        ..TrainConfig::default()
    }
}
