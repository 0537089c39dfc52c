//! Hierarchical motion-skill analysis of sampled tool-tip trajectories.
//!
//! The levels mirror a multi-loop view of guided motion:
//!
//! - [`stats`]: task-level speed-curvature distributions and their
//!   symmetric KL divergences between skill groups;
//! - [`primitives`]: kinematic classification into motion primitives;
//! - [`pwarx`]: identification of piecewise affine dynamic modes;
//! - [`planning`]: spatial organization of those modes via a Fisher
//!   discriminant.
//!
//! [`ingest`] turns CSV recordings into kinematic profiles and [`synth`]
//! generates labelled synthetic data used as a ground-truth oracle.

pub mod ingest;
pub mod primitives;
pub mod pwarx;
pub mod stats;
pub mod planning;
pub mod synth;
