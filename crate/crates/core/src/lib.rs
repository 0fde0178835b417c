//! Adaptive context-length selection for cooperative multi-agent reinforcement
//! learning.
//!
//! A central agent looks at a low-frequency spectral summary of the global
//! state history and picks how many past steps the decentralized agents get to
//! see. The crate is split by subsystem:
//!
//! - [`spectral`]: DFT, dyadic window banks, band decomposition and the central
//!   agent's truncated spectral state.
//! - [`approx`]: dense networks with hand-written backprop, masked categorical
//!   policies, multi-head attention scoring and Adam.
//! - [`central`]: the step-dependent dyadic action schedule, context selection,
//!   attention-weighted central reward and central updates.
//! - [`marl`]: rollout collection, GAE, clipped-surrogate updates and the
//!   training loop.
//! - [`envs`]: the cooperative spread particle world and the latent
//!   Ornstein-Uhlenbeck process.
//! - [`theory`]: Kalman posterior oracle, information loss and the
//!   fixed-vs-adaptive regret experiment.
//! - [`par`]: data-parallel helpers with a sequential fallback.

pub mod approx;
pub mod central;
pub mod envs;
mod error;
pub mod marl;
pub mod par;
pub mod spectral;
pub mod theory;

pub use error::{Error, Result};
