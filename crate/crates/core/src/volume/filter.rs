use rayon::prelude::*;

use super::{Connectivity, Geometry, Mask, Volume3D};
use crate::error::{Error, Result};

fn gaussian_kernel(sigma_vox: f64) -> Vec<f64> {
    let radius = (3.0 * sigma_vox).ceil() as i64;
    let k: Vec<f64> = (-radius..=radius)
        .map(|o| (-(o as f64).powi(2) / (2.0 * sigma_vox * sigma_vox)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|w| w / s).collect()
}

/// Convolve along one axis; weights falling outside the grid are dropped and
/// the remaining ones renormalized.
fn convolve_axis(data: &[f64], g: &Geometry, axis: usize, kernel: &[f64]) -> Vec<f64> {
    let d = g.dims();
    let r = (kernel.len() / 2) as i64;
    let stride = match axis {
        0 => 1,
        1 => d[0],
        _ => d[0] * d[1],
    };
    let n = d[axis] as i64;
    let mut out = vec![0.0; data.len()];
    out.par_iter_mut().enumerate().for_each(|(idx, o)| {
        let pos = g.coords(idx)[axis] as i64;
        let lo = (-r).max(-pos);
        let hi = r.min(n - 1 - pos);
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for off in lo..=hi {
            let w = kernel[(off + r) as usize];
            let src = (idx as i64 + off * stride as i64) as usize;
            acc += w * data[src];
            wsum += w;
        }
        *o = acc / wsum;
    });
    out
}

/// Separable Gaussian smoothing with standard deviation `sigma_mm`.
///
/// The kernel is truncated at +-3 sigma per axis and renormalized to sum 1;
/// at the volume boundary the in-bounds part of the kernel is renormalized,
/// so constant fields stay constant.
pub fn gaussian_smooth(src: &Volume3D, sigma_mm: f64) -> Result<Volume3D> {
    if !(sigma_mm >= 0.0) || !sigma_mm.is_finite() {
        return Err(Error::ConfigInvalid(format!("sigma must be >= 0, got {sigma_mm}")));
    }
    if sigma_mm == 0.0 {
        return Ok(src.clone());
    }
    let g = src.geometry();
    let mut data = src.data().to_vec();
    for axis in 0..3 {
        if g.dims()[axis] == 1 {
            continue;
        }
        let kernel = gaussian_kernel(sigma_mm / g.voxel_size()[axis]);
        if kernel.len() == 1 {
            continue;
        }
        data = convolve_axis(&data, g, axis, &kernel);
    }
    Volume3D::new(g.clone(), data, src.unit())
}

/// Binary dilation by `iterations` steps of the given connectivity.
pub fn dilate(mask: &Mask, iterations: usize, connectivity: Connectivity) -> Mask {
    let g = mask.geometry().clone();
    let offsets = Geometry::neighbor_offsets(connectivity);
    let mut cur = mask.clone();
    for _ in 0..iterations {
        let next: Vec<bool> = (0..g.len())
            .into_par_iter()
            .map(|idx| {
                if cur.data()[idx] {
                    return true;
                }
                let c = g.coords(idx);
                offsets
                    .iter()
                    .any(|&d| g.offset(c, d).is_some_and(|n| cur.data()[n]))
            })
            .collect();
        cur = Mask::new(g.clone(), next).expect("same geometry");
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Unit;

    fn g(d: [usize; 3]) -> Geometry {
        Geometry::lps(d, [1.0; 3], [0.0; 3]).unwrap()
    }

    #[test]
    fn sigma_zero_is_identity() {
        let v = Volume3D::from_fn(g([4, 4, 4]), Unit::Unitless, |[i, j, k]| (i * j + k) as f64).unwrap();
        assert_eq!(gaussian_smooth(&v, 0.0).unwrap(), v);
    }

    #[test]
    fn impulse_mass_is_conserved() {
        let v = Volume3D::from_fn(g([15, 15, 15]), Unit::Unitless, |c| if c == [7, 7, 7] { 1.0 } else { 0.0 }).unwrap();
        let s = gaussian_smooth(&v, 1.0).unwrap();
        assert!((s.sum() - 1.0).abs() < 1e-6);
        assert!(s.get(7, 7, 7) < 0.07 && s.get(7, 7, 7) > 0.05);
    }

    #[test]
    fn constant_is_preserved_at_edges() {
        let v = Volume3D::filled(g([6, 5, 9]), 3.25, Unit::Unitless);
        let s = gaussian_smooth(&v, 2.0).unwrap();
        for &x in s.data() {
            assert!((x - 3.25).abs() < 1e-6);
        }
    }

    #[test]
    fn anisotropic_voxels_use_mm_sigma() {
        let geom = Geometry::lps([21, 21, 21], [1.0, 2.0, 1.0], [0.0; 3]).unwrap();
        let v = Volume3D::from_fn(geom, Unit::Unitless, |c| if c == [10, 10, 10] { 1.0 } else { 0.0 }).unwrap();
        let s = gaussian_smooth(&v, 2.0).unwrap();
        // 2 mm is one voxel along y but two along x, so y falls off faster
        assert!(s.get(11, 10, 10) > s.get(10, 11, 10));
    }

    #[test]
    fn rejects_negative_sigma() {
        let v = Volume3D::filled(g([2, 2, 2]), 1.0, Unit::Unitless);
        assert!(gaussian_smooth(&v, -1.0).is_err());
    }

    #[test]
    fn dilation_grows_by_one_shell() {
        let m = Mask::from_fn(g([7, 7, 7]), |c| c == [3, 3, 3]);
        assert_eq!(dilate(&m, 1, Connectivity::Six).count(), 7);
        assert_eq!(dilate(&m, 1, Connectivity::TwentySix).count(), 27);
        assert_eq!(dilate(&m, 2, Connectivity::TwentySix).count(), 125);
    }
}
