//! Blood input functions: the ICA region, the image-derived curve it yields,
//! and its model-based correction for partial volume and spillover.

mod ica;
mod mcif;
mod tac;

pub use ica::{extract_idif, segment_ica, tissue_reference, tissue_shell};
pub use mcif::{
    fit_mcif, parse_plasma_samples, render_plasma_samples, McifConfig, McifResult, PlasmaSample, MIN_FRAMES,
};
pub use tac::TimeActivityCurve;
