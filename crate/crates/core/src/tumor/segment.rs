use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::volume::{gaussian_smooth, Connectivity, Geometry, Mask, Volume3D};

/// Default threshold of the smoothed mask; above 0.5 so the mask shrinks.
pub const DEFAULT_CONSERVATIVE_LEVEL: f64 = 0.6;

/// Flood fill from `seed` over 26-connected voxels with values in
/// `[low, high]`.
pub fn region_grow(src: &Volume3D, seed: [usize; 3], low: f64, high: f64) -> Result<Mask> {
    let g = src.geometry();
    let dims = g.dims();
    if (0..3).any(|a| seed[a] >= dims[a]) {
        return Err(Error::SeedOutOfBounds(seed));
    }
    let inside = |v: f64| v >= low && v <= high;
    let value = src.get(seed[0], seed[1], seed[2]);
    if !inside(value) {
        return Err(Error::SeedOutOfRange { value, low, high });
    }
    let offsets = Geometry::neighbor_offsets(Connectivity::TwentySix);
    let mut out = Mask::empty(g.clone());
    let start = g.index(seed[0], seed[1], seed[2]);
    out.data_mut()[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(idx) = queue.pop_front() {
        let c = g.coords(idx);
        for &d in &offsets {
            if let Some(nb) = g.offset(c, d) {
                if !out.data()[nb] && inside(src.data()[nb]) {
                    out.data_mut()[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    Ok(out)
}

/// Smooth the 0/1 rasterization of `raw` and keep voxels at or above
/// `level`, restricted to `raw`.
pub fn conservative_mask(raw: &Mask, sigma_mm: f64, level: f64) -> Result<Mask> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::ConfigInvalid(format!("conservative level must lie in (0, 1), got {level}")));
    }
    let smooth = gaussian_smooth(&raw.to_volume(), sigma_mm)?;
    let data = smooth
        .data()
        .iter()
        .zip(raw.data())
        .map(|(&v, &r)| r && v >= level)
        .collect();
    Mask::new(raw.geometry().clone(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Unit;

    fn g(n: usize) -> Geometry {
        Geometry::centered([n; 3], [1.0; 3], [0.0; 3]).unwrap()
    }

    #[test]
    fn uniform_volume_fills() {
        let v = Volume3D::filled(g(5), 3.0, Unit::Unitless);
        assert_eq!(region_grow(&v, [2, 2, 2], 2.0, 4.0).unwrap().count(), 125);
    }

    #[test]
    fn sphere_is_recovered() {
        let v = Volume3D::from_fn(g(15), Unit::Unitless, |[i, j, k]| {
            let r2 = [i, j, k].iter().map(|&x| (x as f64 - 7.0).powi(2)).sum::<f64>();
            if r2 <= 16.0 {
                10.0
            } else {
                1.0
            }
        })
        .unwrap();
        let m = region_grow(&v, [7, 7, 7], 5.0, 20.0).unwrap();
        assert_eq!(m, Mask::from_volume(&v.map(|x| if x > 5.0 { 1.0 } else { 0.0 }).unwrap()));
    }

    #[test]
    fn diagonal_neighbors_connect() {
        let mut v = Volume3D::filled(g(3), 0.0, Unit::Unitless).into_data();
        v[0] = 1.0;
        v[13] = 1.0;
        v[26] = 1.0;
        let v = Volume3D::new(g(3), v, Unit::Unitless).unwrap();
        assert_eq!(region_grow(&v, [0, 0, 0], 0.5, 1.5).unwrap().count(), 3);
    }

    #[test]
    fn seed_errors() {
        let v = Volume3D::filled(g(3), 3.0, Unit::Unitless);
        assert!(matches!(region_grow(&v, [1, 1, 1], 4.0, 5.0), Err(Error::SeedOutOfRange { .. })));
        assert!(matches!(region_grow(&v, [3, 0, 0], 0.0, 5.0), Err(Error::SeedOutOfBounds(_))));
    }

    #[test]
    fn zero_sigma_keeps_mask() {
        let m = Mask::from_fn(g(6), |[i, j, _]| i > 1 && j < 4);
        assert_eq!(conservative_mask(&m, 0.0, 0.99).unwrap(), m);
    }

    #[test]
    fn cube_shrinks_at_faces() {
        let m = Mask::from_fn(g(16), |c| c.iter().all(|&x| (3..13).contains(&x)));
        let out = conservative_mask(&m, 1.0, 0.6).unwrap();
        assert!(out.is_subset_of(&m));
        // per axis a boundary voxel keeps about 0.70 of the kernel mass:
        // faces survive at 0.6, edges (0.49) and corners (0.34) do not
        assert!(out.get(3, 8, 8));
        assert!(!out.get(3, 3, 8));
        assert!(!out.get(12, 12, 12));
        assert!(out.get(8, 8, 8));
        assert!(out.count() < m.count());
    }

    #[test]
    fn isolated_voxel_vanishes() {
        let m = Mask::from_fn(g(15), |c| c == [7, 7, 7]);
        assert_eq!(conservative_mask(&m, 2.0, 0.6).unwrap().count(), 0);
    }

    #[test]
    fn level_must_be_fractional() {
        let m = Mask::full(g(3));
        assert!(conservative_mask(&m, 1.0, 1.0).is_err());
        assert!(conservative_mask(&m, 1.0, 0.0).is_err());
    }
}
