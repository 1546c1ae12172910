use log::warn;
use rayon::prelude::*;

use super::{register_rigid, MiConfig, RigidTransform};
use crate::error::{Error, Result};
use crate::volume::{resample_trilinear, DynamicVolume};

/// Frames shorter than this (minutes) are not registered themselves.
pub const MIN_REGISTERED_DURATION_MIN: f64 = 0.25;

/// Result of [`motion_correct`].
#[derive(Debug, Clone, PartialEq)]
pub struct MotionCorrection {
    pub dynamic: DynamicVolume,
    /// Per frame, the estimated correction: maps a point of the frame as
    /// acquired onto the reference frame. A frame whose object moved by +3 mm
    /// in x gets a -3 mm correction.
    pub corrections: Vec<RigidTransform>,
    /// Frames whose registration failed (identity used) or did not converge
    /// (best-so-far used).
    pub flagged: Vec<bool>,
    /// Frames that inherited a neighbour's transform instead of being
    /// registered.
    pub inherited: Vec<bool>,
}

/// Register every frame to `reference` and resample it onto the reference.
///
/// Frames shorter than 15 s take the transform of the registered frame
/// nearest in time. Frames are registered concurrently.
pub fn motion_correct(dynamic: &DynamicVolume, reference: usize, cfg: &MiConfig) -> Result<MotionCorrection> {
    cfg.validate()?;
    let n = dynamic.n_frames();
    if reference >= n {
        return Err(Error::ConfigInvalid(format!("reference frame {reference} out of range 0..{n}")));
    }
    let fixed = dynamic.frame(reference);
    if !(fixed.sum() > 0.0) {
        return Err(Error::VolumeInvalid(format!("reference frame {reference} has no signal")));
    }
    let schedule = dynamic.schedule();
    let center = fixed.geometry().center();
    let registered: Vec<bool> = (0..n)
        .map(|i| i == reference || schedule.duration()[i] >= MIN_REGISTERED_DURATION_MIN)
        .collect();

    // (fixed->frame transform, flagged)
    let estimates: Vec<(RigidTransform, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let identity = RigidTransform::identity(center);
            if i == reference || !registered[i] {
                return (identity, false);
            }
            match register_rigid(fixed, dynamic.frame(i), cfg, &identity) {
                Ok(r) => (r.transform, !r.converged),
                Err(e) => {
                    warn!("frame {i}: registration failed ({e}); identity used");
                    (identity, true)
                }
            }
        })
        .collect();

    let mids = schedule.mids();
    let mut forward = Vec::with_capacity(n);
    let mut inherited = vec![false; n];
    for i in 0..n {
        if registered[i] {
            forward.push(estimates[i].0);
            continue;
        }
        // nearest registered frame in time; later frame on ties
        let src = (0..n)
            .filter(|&j| registered[j])
            .min_by(|&a, &b| {
                let da = (mids[a] - mids[i]).abs();
                let db = (mids[b] - mids[i]).abs();
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("the reference frame is registered");
        forward.push(estimates[src].0);
        inherited[i] = true;
    }

    let frames = (0..n)
        .into_par_iter()
        .map(|i| {
            if i == reference {
                Ok(fixed.clone())
            } else {
                resample_trilinear(dynamic.frame(i), fixed.geometry(), &forward[i])
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MotionCorrection {
        dynamic: DynamicVolume::new(dynamic.geometry().clone(), schedule.clone(), frames)?,
        corrections: forward.iter().map(RigidTransform::inverse).collect(),
        flagged: estimates.iter().map(|e| e.1).collect(),
        inherited,
    })
}
