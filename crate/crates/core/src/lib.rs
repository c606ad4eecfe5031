//! Joint image-region / CAD-view embeddings for shape retrieval, quaternion
//! pose estimation by bin classification plus refinement, and the 3D
//! evaluation suite (Chamfer, normal consistency, F1, box/mask/mesh AP).

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN.

pub mod data;
pub mod embedding;
pub mod eval;
pub mod error;
pub mod geometry;
pub mod image;
pub mod learner;
pub mod metrics;
pub mod pose;

pub use embedding::HyperParams;
pub use error::{Error, Result};
