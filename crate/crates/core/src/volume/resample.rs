use rayon::prelude::*;

use super::{Geometry, Mask, Volume3D};
use crate::error::Result;

/// Maps a physical point of the output grid to the physical point that is
/// sampled in the source image.
pub trait PointTransform: Sync {
    fn apply(&self, p: [f64; 3]) -> [f64; 3];
}

/// The identity mapping.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl PointTransform for Identity {
    fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        p
    }
}

/// Continuous indices within this distance of a lattice point are snapped
/// onto it, so lattice-aligned resampling reproduces values exactly.
const SNAP: f64 = 1e-9;

#[inline]
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < SNAP {
        r
    } else {
        x
    }
}

/// Trilinear sample at a continuous index; `None` outside the grid.
#[inline]
fn trilinear_at(dims: [usize; 3], data: &[f64], ijk: [f64; 3]) -> Option<f64> {
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let x = snap(ijk[a]);
        let max = (dims[a] - 1) as f64;
        if !(x >= 0.0 && x <= max) {
            return None;
        }
        let f = x.floor();
        let mut b = f as usize;
        let mut t = x - f;
        if b == dims[a] - 1 {
            // on the upper face: interpolate from the cell below with weight 1
            if b > 0 {
                b -= 1;
                t = 1.0;
            } else {
                t = 0.0;
            }
        }
        base[a] = b;
        frac[a] = t;
    }
    let nx = dims[0];
    let nxy = dims[0] * dims[1];
    let step = [
        usize::from(dims[0] > 1),
        if dims[1] > 1 { nx } else { 0 },
        if dims[2] > 1 { nxy } else { 0 },
    ];
    let i0 = base[0] + nx * base[1] + nxy * base[2];
    let mut acc = 0.0;
    for corner in 0..8usize {
        let mut w = 1.0;
        let mut idx = i0;
        for a in 0..3 {
            if corner >> a & 1 == 1 {
                if frac[a] == 0.0 {
                    w = 0.0;
                    break;
                }
                w *= frac[a];
                idx += step[a];
            } else {
                w *= 1.0 - frac[a];
            }
        }
        if w != 0.0 {
            acc += w * data[idx];
        }
    }
    Some(acc)
}

/// Resample `src` onto `target` by trilinear interpolation. Each output voxel
/// at physical point `p` takes the value of `src` at `transform.apply(p)`;
/// samples outside the source grid are 0.
pub fn resample_trilinear(src: &Volume3D, target: &Geometry, transform: &dyn PointTransform) -> Result<Volume3D> {
    let target = Geometry::new(target.dims(), target.voxel_size(), target.origin(), *target.direction())?;
    let sg = src.geometry();
    let dims = sg.dims();
    let data: Vec<f64> = (0..target.len())
        .into_par_iter()
        .map(|idx| {
            let c = target.coords(idx);
            let p = target.index_to_point(c.map(|x| x as f64));
            let q = transform.apply(p);
            trilinear_at(dims, src.data(), sg.point_to_index(q)).unwrap_or(0.0)
        })
        .collect();
    Volume3D::new(target, data, src.unit())
}

/// Nearest-neighbor resampling of a mask; outside samples are false.
pub fn resample_nearest(src: &Mask, target: &Geometry, transform: &dyn PointTransform) -> Result<Mask> {
    let target = Geometry::new(target.dims(), target.voxel_size(), target.origin(), *target.direction())?;
    let sg = src.geometry();
    let dims = sg.dims();
    let data: Vec<bool> = (0..target.len())
        .into_par_iter()
        .map(|idx| {
            let c = target.coords(idx);
            let p = target.index_to_point(c.map(|x| x as f64));
            let q = sg.point_to_index(transform.apply(p));
            let mut n = [0usize; 3];
            for a in 0..3 {
                let r = q[a].round();
                if !(r >= 0.0 && r <= (dims[a] - 1) as f64) {
                    return false;
                }
                n[a] = r as usize;
            }
            src.get(n[0], n[1], n[2])
        })
        .collect();
    Mask::new(target, data)
}

/// Average non-overlapping 2x2x2 blocks (a trailing odd plane is averaged
/// alone). The output grid's voxel centers sit at the block centers.
pub fn downsample2(src: &Volume3D) -> Result<Volume3D> {
    let g = src.geometry();
    let d = g.dims();
    let nd = d.map(|n| n.div_ceil(2));
    let vs = g.voxel_size();
    let origin = g.index_to_point([0, 1, 2].map(|a| if d[a] > 1 { 0.5 } else { 0.0 }));
    let ng = Geometry::new(nd, [0, 1, 2].map(|a| if d[a] > 1 { vs[a] * 2.0 } else { vs[a] }), origin, *g.direction())?;
    let mut data = vec![0.0; ng.len()];
    for k in 0..nd[2] {
        for j in 0..nd[1] {
            for i in 0..nd[0] {
                let mut sum = 0.0;
                let mut n = 0usize;
                for dk in 0..2 {
                    for dj in 0..2 {
                        for di in 0..2 {
                            let (x, y, z) = (2 * i + di, 2 * j + dj, 2 * k + dk);
                            if x < d[0] && y < d[1] && z < d[2] {
                                sum += src.get(x, y, z);
                                n += 1;
                            }
                        }
                    }
                }
                data[ng.index(i, j, k)] = sum / n as f64;
            }
        }
    }
    // trailing half blocks on odd axes are off-center by half a voxel
    Volume3D::new(ng, data, src.unit())
}
