//! Optic disc and cup segmentation toolkit.
//!
//! A small CPU tensor library with reverse-mode differentiation, the U-shaped
//! generator and conditioned feature-extractor networks, dice and multi-scale
//! feature-matching losses, Adam, raster I/O with mask encodings, synthetic
//! fundus data and the challenge metrics (per-class dice, vertical CDR).

pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
mod kernels;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod runtime;
pub mod tensor;

pub use autodiff::{Activation, BnState, ConvSpec, Graph, Mode, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
