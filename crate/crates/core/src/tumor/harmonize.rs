use crate::error::{Error, Result};
use crate::registration::{register_rigid, MiConfig, Registration, RigidTransform};
use crate::volume::{resample_nearest, resample_trilinear, Geometry, Mask, Volume3D};

/// Default atlas grid: 240 x 240 x 155 voxels of 1 mm, centered on the
/// origin.
pub fn default_atlas_geometry() -> Geometry {
    Geometry::centered([240, 240, 155], [1.0; 3], [0.0; 3]).expect("valid constant geometry")
}

/// Subject images brought onto the atlas grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Harmonized {
    pub mr: Volume3D,
    /// The other modalities, in input order.
    pub others: Vec<Volume3D>,
    /// The masks, in input order.
    pub masks: Vec<Mask>,
    /// Maps subject (MR) points to atlas points.
    pub registration: Registration,
}

fn center_of_mass(v: &Volume3D) -> Option<[f64; 3]> {
    let g = v.geometry();
    let mut acc = [0.0; 3];
    let mut total = 0.0;
    for (idx, &w) in v.data().iter().enumerate() {
        if w > 0.0 {
            let p = g.index_to_point(g.coords(idx).map(|x| x as f64));
            for a in 0..3 {
                acc[a] += w * p[a];
            }
            total += w;
        }
    }
    (total > 0.0).then(|| acc.map(|x| x / total))
}

/// Register the subject MR to `atlas` and carry every modality and mask
/// onto the atlas grid with the same rigid transform.
///
/// The MR is the fixed image, so the estimate maps subject points to atlas
/// points; outputs sample the subject at its inverse. Intensities are
/// interpolated trilinearly, the mask by nearest neighbour. The search
/// starts from the translation that aligns intensity centers of mass.
pub fn harmonize_to_atlas(
    mr: &Volume3D,
    others: &[Volume3D],
    masks: &[Mask],
    atlas: &Volume3D,
    cfg: &MiConfig,
) -> Result<Harmonized> {
    let g = mr.geometry();
    for (i, o) in others.iter().enumerate() {
        g.ensure_same(o.geometry(), &format!("modality {i} is not on the MR grid"))?;
    }
    for (i, m) in masks.iter().enumerate() {
        g.ensure_same(m.geometry(), &format!("mask {i} is not on the MR grid"))?;
    }
    let (Some(cm), Some(ca)) = (center_of_mass(mr), center_of_mass(atlas)) else {
        return Err(Error::VolumeInvalid("MR or atlas has no positive intensity".into()));
    };
    let init = RigidTransform::new([0.0; 3], [0, 1, 2].map(|a| ca[a] - cm[a]), g.center());
    let registration = register_rigid(mr, atlas, cfg, &init)?;
    let back = registration.transform.inverse();
    let target = atlas.geometry();
    Ok(Harmonized {
        mr: resample_trilinear(mr, target, &back)?,
        others: others
            .iter()
            .map(|o| resample_trilinear(o, target, &back))
            .collect::<Result<_>>()?,
        masks: masks
            .iter()
            .map(|m| resample_nearest(m, target, &back))
            .collect::<Result<_>>()?,
        registration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Unit;

    #[test]
    fn atlas_defaults() {
        let g = default_atlas_geometry();
        assert_eq!(g.dims(), [240, 240, 155]);
        assert_eq!(g.axis_codes(), "LPS");
    }

    #[test]
    fn center_of_mass_of_point() {
        let g = Geometry::centered([5, 5, 5], [2.0; 3], [0.0; 3]).unwrap();
        let v = Volume3D::from_fn(g.clone(), Unit::Unitless, |c| if c == [4, 2, 2] { 3.0 } else { 0.0 }).unwrap();
        assert_eq!(center_of_mass(&v).unwrap(), g.index_to_point([4.0, 2.0, 2.0]));
        assert!(center_of_mass(&Volume3D::filled(g, 0.0, Unit::Unitless)).is_none());
    }

    #[test]
    fn rejects_misaligned_inputs() {
        let g = Geometry::centered([8; 3], [2.0; 3], [0.0; 3]).unwrap();
        let other = Geometry::centered([8; 3], [1.0; 3], [0.0; 3]).unwrap();
        let mr = Volume3D::filled(g.clone(), 1.0, Unit::Unitless);
        let bad = Volume3D::filled(other, 1.0, Unit::Unitless);
        let r = harmonize_to_atlas(&mr, &[bad], &[Mask::full(g)], &mr, &MiConfig::default());
        assert!(matches!(r, Err(Error::GeometryMismatch(_))));
    }
}
