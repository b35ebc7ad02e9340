//! Densely-connected recurrent co-attentive network (DRCN) for semantic
//! sentence matching: natural language inference, paraphrase identification
//! and answer-sentence selection.
//!
//! The crate is self-contained: a small reverse-mode autodiff tensor engine
//! ([`tensor`]), corpus/vocabulary/batching machinery ([`data`]), the network
//! itself ([`model`]), the training and evaluation harness ([`train`]), and
//! checkpoint / visualization plumbing used by the `drcn` binary.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod model;
pub mod params;
pub mod rng;
pub mod runconfig;
pub mod tensor;
pub mod train;
pub mod viz;

pub use error::DrcnError;
