//! Reversed travelling waves for a harvested bistable reaction-diffusion equation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod cooperation;
pub mod error;
pub mod export;
pub mod numerics;
pub mod pde;
pub mod phase_plane;
pub mod profile;
pub mod wave;

pub use error::{Error, Result};
