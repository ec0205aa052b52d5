//! Keystroke-timing PIN inference: keypad geometry, Fitts-law timing models,
//! timing dictionaries, ranking attacks, PIN strength levels, a synthetic
//! typist and an experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod dictionary;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod model;
pub mod pin;
pub mod seeds;
pub mod simulator;
pub mod stats;
pub mod strength;

pub use error::{Error, Result};
pub use geometry::{KeyId, KeypadLayout};
pub use model::{ExtendedModel, FittsModel};
pub use pin::{DigitConstraint, Pin, TimingSequence};
