//! Correct-by-construction training for small fully-connected ReLU networks.
//!
//! Networks are trained against input/output correctness properties by
//! minimizing a differentiable worst-case loss computed over interval
//! abstractions of the network, while the input space is bisected wherever
//! the abstraction is too coarse to make progress. A network whose abstract
//! loss reaches exactly zero on every region is proven to satisfy its
//! properties.
//!
//! Module map:
//! - [`diffnet`]: networks, concrete evaluation, tapes, reverse-mode gradients, optimizers
//! - [`interval`]: boxes and the interval abstract transformers
//! - [`property`]: the output predicate grammar and correctness losses
//! - [`refine`]: input space abstractions and gradient-guided bisection
//! - [`trainer`]: the joint training loop and the refinement-only certifier
//! - [`oracle`]: independent Monte-Carlo and grid checkers, dataset labeling

pub mod demo;
pub mod diffnet;
pub mod error;
pub mod interval;
pub mod oracle;
pub mod property;
pub mod refine;
pub mod trainer;

pub use diffnet::{
    backward, forward, sgd_step, AdamConfig, AdamState, GradientBundle, LayerSpec, Network,
    Revision, Tape,
};
pub use error::{ArtError, Result};
pub use interval::{affine_abs, bisect, forward_box, relu_abs, IntervalBox};
pub use property::{
    dist_abstract, dist_concrete, satisfies, Atom, CorrectnessProperty, LossOptions,
    OutputPredicate,
};
pub use refine::{region_losses, score_dimensions, Region, RegionSet, SplitRecord};
pub use trainer::{
    accuracy_loss, art_train, certify_only, CertifyOutcome, Dataset, LrDecay, OptimizerKind,
    TrainConfig, TrainOutcome, TrainReport,
};
