//! Heterogeneous deep-learning compiler framework.
//!
//! A model graph is optimized, grouped into pattern composites, partitioned
//! between the host and accelerator targets, processed per target, compiled
//! into a single blob and executed by a runtime that dispatches accelerator
//! regions to pluggable engines.

pub mod accel;
pub mod codec;
pub mod codegen;
pub mod error;
pub mod fixtures;
pub mod interp;
pub mod ir;
pub mod kernels;
pub mod ops;
pub mod partition;
pub mod passes;
pub mod patterns;
pub mod pipeline;
pub mod runtime;
pub mod sim;

pub use error::{Error, Result};
