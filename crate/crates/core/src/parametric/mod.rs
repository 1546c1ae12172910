//! Graphical Patlak analysis and SUV.

mod input;
mod patlak;
mod suv;

pub use input::BloodInputCurve;
pub use patlak::{patlak_fit, patlak_map, patlak_transform, ParametricMap, PatlakFit, PatlakPoints, DEFAULT_T_STAR};
pub use suv::{static_frame_average, suv_map, SuvConfig, DEFAULT_STATIC_WINDOW};
