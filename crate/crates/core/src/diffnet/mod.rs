//! Fully-connected ReLU networks with concrete evaluation, recorded tapes and
//! reverse-mode gradients.
//!
//! The ReLU subgradient at exactly zero is taken to be 0, both for concrete
//! and interval tapes. All arithmetic is `f64` with the default rounding mode.

mod network;
mod optim;
mod tape;
mod text;

pub use network::{LayerSpec, Network, Revision};
pub use optim::{adam_step, sgd_step, AdamConfig, AdamState};
pub use tape::{backward, forward, GradientBundle, Tape};
pub(crate) use tape::{Record, Trace};
pub use text::{parse_network, write_network, NETWORK_HEADER};
