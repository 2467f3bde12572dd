//! Cluster-latent guided Gaussian diffusion for multi-table relational data.
//!
//! The crate is `no_std` (with `alloc`). It holds every algorithmic piece of the
//! pipeline: the foreign-key constraint graph, mixed-type encoding, relationship-aware
//! GMM clustering with majority voting, the Gaussian diffusion backbone, classifier
//! guidance, group-size models, multi-table synthesis with multi-parent matching, and
//! the multi-table fidelity metrics. File formats, persistence and the command-line
//! driver live in the `clava` crate.
//!
//! Pipeline in three phases:
//!
//! 1. [`cluster::augment_tables`] learns one latent label column per foreign-key edge
//!    and appends it to both the parent and the child table.
//! 2. [`synthesis::train_all`] trains one denoiser per augmented table and one
//!    classifier plus one group-size model per edge.
//! 3. [`synthesis::synthesize`] samples roots unconditionally, then walks the edges
//!    top-down, sampling group sizes and classifier-guided child rows.

#![cfg_attr(not(test), no_std)]
#![deny(rustdoc::broken_intra_doc_links)]

extern crate alloc;

pub mod cluster;
pub mod diffusion;
pub mod encode;
mod error;
pub mod groupsize;
pub mod guidance;
pub mod math;
pub mod matrix;
pub mod metrics;
pub mod neighbors;
pub mod nn;
pub mod rng;
pub mod schema;
pub mod synthesis;

pub use error::{Error, Result};
pub use matrix::{Matrix, UnifiedMatrix};
pub use schema::{ColumnData, ColumnKind, ColumnSpec, ConstraintGraph, Database, ForeignKeyEdge, TableData};
