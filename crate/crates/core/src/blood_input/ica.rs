use super::TimeActivityCurve;
use crate::error::{Error, Result};
use crate::volume::{connected_components, dilate, Connectivity, DynamicVolume, Mask};

/// Threshold-and-island segmentation of the carotid in an early frame.
///
/// Voxels at or above `threshold_fraction` of the frame maximum are split
/// into 26-connected components; the largest one whose size lies in
/// `size_bounds` (inclusive) is returned.
pub fn segment_ica(
    dynamic: &DynamicVolume,
    early_frame: usize,
    threshold_fraction: f64,
    size_bounds: (usize, usize),
) -> Result<Mask> {
    if early_frame >= dynamic.n_frames() {
        return Err(Error::ConfigInvalid(format!(
            "early frame {early_frame} out of range 0..{}",
            dynamic.n_frames()
        )));
    }
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(Error::ConfigInvalid(format!(
            "threshold fraction must lie in (0, 1), got {threshold_fraction}"
        )));
    }
    let frame = dynamic.frame(early_frame);
    let peak = frame.max();
    if !(peak > 0.0) {
        return Err(Error::VolumeInvalid(format!("frame {early_frame} has no positive voxel")));
    }
    let cut = threshold_fraction * peak;
    let bright = Mask::new(frame.geometry().clone(), frame.data().iter().map(|&v| v >= cut).collect())?;
    let comps = connected_components(&bright, Connectivity::TwentySix);
    let (lo, hi) = size_bounds;
    // components come largest first
    match comps.sizes().iter().position(|s| (lo..=hi).contains(s)) {
        Some(i) => Ok(comps.mask(i as u32 + 1)),
        None => Err(Error::NoComponentInBounds {
            min: lo,
            max: hi,
            candidates: comps.sizes().to_vec(),
        }),
    }
}

/// Mean over `mask` of every frame.
pub fn extract_idif(dynamic: &DynamicVolume, mask: &Mask) -> Result<TimeActivityCurve> {
    dynamic.geometry().ensure_same(mask.geometry(), "mask")?;
    let idx: Vec<usize> = mask.indices().collect();
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = idx.len() as f64;
    let values = dynamic
        .frames()
        .iter()
        .map(|f| idx.iter().map(|&i| f.data()[i]).sum::<f64>() / n)
        .collect();
    TimeActivityCurve::from_schedule(dynamic.schedule(), values)
}

/// Shell of `width` voxels (26-neighbour dilation) around `ica`, excluding
/// the ICA itself.
pub fn tissue_shell(ica: &Mask, width: usize) -> Result<Mask> {
    dilate(ica, width, Connectivity::TwentySix).difference(ica)
}

/// Default spillover surrogate: the mean TAC of a 2-voxel shell.
pub fn tissue_reference(dynamic: &DynamicVolume, ica: &Mask) -> Result<TimeActivityCurve> {
    extract_idif(dynamic, &tissue_shell(ica, 2)?)
}
