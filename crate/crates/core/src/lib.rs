//! Deterministic engine for FSM-specified web environments.
//!
//! The crate turns an `fsm.json` environment description into verified
//! GUI-agent trajectories: [`spec`] parses and validates the document,
//! [`engine`] implements the transition semantics over `(page, signature)`
//! states, [`search`] enumerates the state graph breadth-first, [`replay`]
//! grounds and strictly replays trajectories against a headless page model,
//! [`datagen`] exports datasets and statistics, and [`reward`] scores agent
//! completions with the composite action/coordinate/format reward.
//!
//! Everything here is pure and `no_std` + `alloc`. The `parallel` feature
//! enables a rayon-backed frontier expansion mode in [`search`].

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod datagen;
pub mod digest;
pub mod engine;
pub mod replay;
pub mod reward;
pub mod search;
pub mod spec;
pub mod value;

#[cfg(feature = "testkit")]
pub mod testkit;

pub use engine::{State, StateKey, StepOutcome};
pub use spec::{FsmSpec, ValidationReport};
pub use value::{Literal, Number, SignatureValue};

/// Version stamped into every structured document this crate emits.
pub const FORMAT_VERSION: u32 = 1;
