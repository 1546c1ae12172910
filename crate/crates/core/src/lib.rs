//! Dynamic FDG PET kinetic modeling.
//!
//! The crate covers the image side of a Ki-map pipeline: blood input
//! functions derived from an arterial region and corrected for partial
//! volume, voxel-wise Patlak slope maps, SUV maps, rigid mutual-information
//! registration, and extraction of multi-modal tumor tensors. A
//! two-tissue-compartment phantom provides ground truth for all of it.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blood_input;
pub mod error;
pub mod nifti;
pub mod optim;
pub mod parametric;
pub mod phantom;
pub mod registration;
pub mod tumor;
pub mod volume;

pub use error::{Error, Result};
