//! Unsupervised temporal action segmentation.
//!
//! The pipeline learns a temporal embedding of per-frame features
//! ([`embednet`]), clusters frames inside each video with a spatio-temporal
//! affinity and spectral relaxation of the normalized cut ([`videocluster`]),
//! groups the per-video clusters into corpus-wide clusters
//! ([`globalassign`]), and decodes every video into ordered coherent segments
//! ([`decoder`]). [`metrics`] implements the evaluation protocol.
//!
//! The crate is `no_std` (with `alloc`); file formats and the command line
//! live in the `tempseg` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod decoder;
pub mod embednet;
mod error;
pub mod globalassign;
pub mod matrix;
pub mod metrics;
pub mod rng;
pub mod seqgrad;
pub mod videocluster;

pub use error::{Error, Result};
pub use matrix::Matrix;
