//! Voxel grids, geometry, and the image operations shared by every stage:
//! resampling, smoothing, dilation, component labeling, and cropping.
//!
//! Volumes are kept in LPS voxel order internally; images loaded in any
//! other axis order are permuted/flipped with [`Volume3D::to_lps`].

mod filter;
mod geometry;
mod image;
mod labeling;
mod resample;

pub use filter::{dilate, gaussian_smooth};
pub use geometry::{Connectivity, Geometry};
pub use image::{DynamicVolume, FrameSchedule, Mask, Unit, Volume3D};
pub use labeling::{
    bounding_box, center_crop, center_crop_mask, center_pad, connected_components, crop_window, BoundingBox,
    Components,
};
pub use resample::{downsample2, resample_nearest, resample_trilinear, Identity, PointTransform};
