//! Joint waveform estimation and sparse scene reconstruction for passive
//! bistatic SAR.
//!
//! A proximal-gradient solver for the sparse imaging problem is unrolled into
//! a recurrent auto-encoder whose only learnable parameters are the unknown
//! transmitted waveform `w` and the soft threshold `tau`. The network is trained
//! without image labels by matching the measurements it re-synthesizes to the
//! measurements it was given, using analytic complex (Wirtinger) gradients.

pub mod backprop;
pub mod cli;
pub mod commands;
pub mod error;
pub mod forward_model;
pub mod geometry;
pub mod gradcheck;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod network;
pub mod scene;
pub mod trainer;
pub mod waveform;

pub use error::{Error, Result};
