//! Automated left-ventricle ejection-fraction estimation from time-ordered
//! 3D segmentation masks.
//!
//! The crate covers the whole chain from a series of thresholded (or
//! probabilistic) segmentations to an EF estimate:
//!
//! * [`volgrid`]: voxel grids, resampling, normalization, volume and slice areas
//! * [`morph`]: binary opening and cavity filling used as postprocessing
//! * [`mesh`]: marching-cubes surface extraction and surface area
//! * [`cycle`]: per-phase metric series (volume, surface area, mid-slice area)
//! * [`fitting`]: quartic and Gaussian-process cycle fits, ED/ES selection, EF
//!
//! plus the evaluation toolkit used to judge segmentations and EF agreement
//! ([`metrics`], [`noise`], [`agreement`]), a synthetic beating-ventricle
//! generator ([`phantom`]) and raw-volume serialization ([`stackio`]).
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default). Every parallel entry point has a `*_with` variant taking an
//! [`Exec`] so callers can force sequential execution; both paths produce
//! bit-identical results.

// `!(x > 0.0)` rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agreement;
pub mod cycle;
mod error;
pub mod fitting;
pub mod fmt;
mod linalg;
pub mod mesh;
pub mod metrics;
pub mod morph;
pub mod noise;
mod par;
pub mod phantom;
pub mod stackio;
pub mod volgrid;

pub use error::{Error, Result};
pub use par::Exec;
