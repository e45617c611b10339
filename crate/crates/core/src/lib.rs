//! Critical-exponent workbench: lattice percolation, a sequence-space immune
//! automaton, a spin-1 lattice, and molecular-dynamics fragmentation, all
//! feeding one power-law fitting pipeline.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cluster;
pub mod error;
pub mod ecra;
pub mod events;
pub mod exponent;
pub mod hiv;
pub mod lattice;
pub mod md;
pub mod percolation;
pub mod pipeline;
pub mod rng;
pub mod spin;

pub use cluster::{label_clusters, label_clusters_where, Adjacency, ClusterPartition, Hypercube, UnionFind};
pub use error::{Error, Result};
pub use events::EventRecord;
pub use exponent::{FitRange, PowerLawFit, SizeHistogram, TauGrid};
pub use lattice::{Axis, Boundary, Dims, Lattice3D};
pub use rng::RngStream;
