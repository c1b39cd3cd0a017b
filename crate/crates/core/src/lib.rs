//! Protein stability change (ΔΔG) prediction by fusing per-residue structural and
//! sequence embeddings ("latent transfusion").

pub mod amino;
pub mod analysis;
pub mod cli;
pub mod embeddings;
pub mod error;
pub mod features;
pub mod fusion_models;
pub mod io;
pub mod metrics;
pub mod nncore;
pub mod scan_service;
pub mod structure_io;
pub mod training;

pub use error::{Error, Result};
