//! Interference-safe carrier sensing under the SINR model.
//!
//! The modules build on each other: [`channel`] holds the propagation and
//! reception model, [`bounds`] the worst-case interference series,
//! [`carrier_sense`] the static sensing rules derived from them, and
//! [`adaptive`] the per-node threshold controller. [`sim`] runs saturated
//! CSMA/CA over any of these, [`metrics`] summarizes the runs, [`verify`]
//! checks small topologies exhaustively and sweeps thresholds, and
//! [`config`] reads scenario files.

pub mod adaptive;
pub mod bounds;
pub mod carrier_sense;
pub mod channel;
pub mod config;
pub mod error;
pub mod metrics;
pub mod sim;
pub mod topology;
pub mod verify;

pub use adaptive::{AdaptiveParams, HnWarning, NodeAdaptiveState, SlotOutcome};
pub use bounds::{i_bar_1, i_bar_2, BoundResult, Dimension};
pub use carrier_sense::{AdmissionSequence, CsConfig, Mechanism};
pub use channel::{ChannelParams, FadingGain, Link, LinkId, Point};
pub use error::{Error, Result};
pub use metrics::{jain_index, starvation_ratio, MetricReport};
pub use sim::{run, SimConfig, SimOutput};
pub use topology::{TopologyKind, TopologySpec};

/// The book's snippets, compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/static-sensing.md")]
    mod static_sensing {}
    #[doc = include_str!("../../../book/src/safety.md")]
    mod safety {}
    #[doc = include_str!("../../../book/src/adaptive.md")]
    mod adaptive {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
