//! Link-level simulation of coexisting wireless body area networks.
//!
//! A victim network (hub, two relays, up to three sensors) shares the
//! channel with uncoordinated neighbours that pick random TDMA offsets every
//! superframe. Each sensor packet reaches the hub directly and through the
//! better of two decode-and-forward relays; the crate measures how much that
//! cooperation improves SINR outage probability and level crossing rate.
//!
//! - [`channel`]: block-fading gain traces, resampling, path-loss removal,
//!   overlay, and a seeded AR(1) log-normal generator
//! - [`network`]: topology and the random-offset TDMA schedule
//! - [`relaying`]: SINR, max-min relay selection and hub combining
//! - [`metrics`]: outage curves, quantiles, level crossing rate
//! - [`engine`]: channel assembly, runs and sweeps
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod channel;
pub mod engine;
pub mod metrics;
pub mod network;
pub mod relaying;

pub use channel::{
    BodyLocation, ChannelSet, ChannelTrace, Endpoint, LinkId, SubjectId, SyntheticChannelParams,
};
pub use engine::{
    run, sweep, EngineError, ExperimentConfig, RunResult, Scheme, SweepPlan, SweepResult,
};
pub use metrics::{MetricsCurve, SinrSeries};
pub use network::{MacConfig, NodeSpec, Role, WbanConfig};
pub use relaying::NoiseModel;
