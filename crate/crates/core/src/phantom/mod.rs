//! Synthetic ground truth: an analytic plasma input, irreversible
//! two-tissue-compartment tissue curves, frame integration, and noise.

mod input;
mod kinetics;
mod simulate;
mod spec;

pub use input::InputModel;
pub use kinetics::{tissue_response, KineticParams, OdeConfig, TissueCurve, DEFAULT_STEP_MIN, MAX_ALLOWED_STEP_MIN};
pub use simulate::{
    apply_frame_motion, region_curves, region_map, region_mask, render_mr, simulate_dynamic, simulate_mr, RegionCurves,
    SimulatedPet,
};
pub use spec::{parse_blocks, PhantomSpec, Region, RegionLabel};

/// Convenience for the equivalent `InputModel::concentration`.
pub fn input_concentration(model: &InputModel, t: f64) -> f64 {
    model.concentration(t)
}
