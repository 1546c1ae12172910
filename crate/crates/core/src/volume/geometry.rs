use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-6;

/// Spatial layout of a voxel grid in LPS physical coordinates (mm).
///
/// A voxel index `(i, j, k)` maps to the physical point
/// `origin + direction * diag(voxel_size) * (i, j, k)`. Columns of
/// `direction` are the unit axis directions of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    dims: [usize; 3],
    voxel_size: [f64; 3],
    origin: [f64; 3],
    direction: Matrix3<f64>,
}

impl Geometry {
    pub fn new(
        dims: [usize; 3],
        voxel_size: [f64; 3],
        origin: [f64; 3],
        direction: Matrix3<f64>,
    ) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::GeometryInvalid(format!("dims must be >= 1, got {dims:?}")));
        }
        if voxel_size.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::GeometryInvalid(format!(
                "voxel sizes must be positive, got {voxel_size:?}"
            )));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::GeometryInvalid(format!("origin not finite: {origin:?}")));
        }
        let gram = direction.transpose() * direction;
        if (gram - Matrix3::identity()).abs().max() > ORTHO_TOL {
            return Err(Error::GeometryInvalid("direction matrix is not orthonormal".into()));
        }
        if (direction.determinant().abs() - 1.0).abs() > ORTHO_TOL {
            return Err(Error::GeometryInvalid("direction determinant is not +-1".into()));
        }
        Ok(Self {
            dims,
            voxel_size,
            origin,
            direction,
        })
    }

    /// Axis-aligned LPS grid.
    pub fn lps(dims: [usize; 3], voxel_size: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        Self::new(dims, voxel_size, origin, Matrix3::identity())
    }

    /// Axis-aligned LPS grid whose physical center is `center`.
    pub fn centered(dims: [usize; 3], voxel_size: [f64; 3], center: [f64; 3]) -> Result<Self> {
        let origin = [0, 1, 2].map(|a| center[a] - 0.5 * (dims[a] as f64 - 1.0) * voxel_size[a]);
        Self::lps(dims, voxel_size, origin)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        self.voxel_size
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn direction(&self) -> &Matrix3<f64> {
        &self.direction
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear (x-fastest) index of a voxel.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Physical position (mm) of a continuous voxel index.
    pub fn index_to_point(&self, ijk: [f64; 3]) -> [f64; 3] {
        let scaled = Vector3::new(
            ijk[0] * self.voxel_size[0],
            ijk[1] * self.voxel_size[1],
            ijk[2] * self.voxel_size[2],
        );
        let p = self.direction * scaled + Vector3::from(self.origin);
        [p.x, p.y, p.z]
    }

    /// Continuous voxel index of a physical position.
    pub fn point_to_index(&self, p: [f64; 3]) -> [f64; 3] {
        let rel = Vector3::from(p) - Vector3::from(self.origin);
        let local = self.direction.transpose() * rel;
        [
            local.x / self.voxel_size[0],
            local.y / self.voxel_size[1],
            local.z / self.voxel_size[2],
        ]
    }

    /// Physical center of the grid.
    pub fn center(&self) -> [f64; 3] {
        self.index_to_point([0, 1, 2].map(|a| 0.5 * (self.dims[a] as f64 - 1.0)))
    }

    /// Same spacing and orientation, new dims, origin moved to voxel `offset`
    /// of this grid. `offset` may be negative (padding).
    pub fn subgrid(&self, offset: [i64; 3], dims: [usize; 3]) -> Result<Self> {
        let origin = self.index_to_point(offset.map(|o| o as f64));
        Self::new(dims, self.voxel_size, origin, self.direction)
    }

    /// Three-letter orientation code, e.g. `"LPS"`, giving the anatomical
    /// direction each voxel axis increases toward.
    pub fn axis_codes(&self) -> String {
        (0..3)
            .map(|c| {
                let col = self.direction.column(c);
                let (row, v) = (0..3)
                    .map(|r| (r, col[r]))
                    .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                    .unwrap();
                match (row, v >= 0.0) {
                    (0, true) => 'L',
                    (0, false) => 'R',
                    (1, true) => 'P',
                    (1, false) => 'A',
                    (2, true) => 'S',
                    _ => 'I',
                }
            })
            .collect()
    }

    /// True when `other` describes the same lattice within `tol` mm.
    pub fn approx_eq(&self, other: &Geometry, tol: f64) -> bool {
        self.dims == other.dims
            && (0..3).all(|a| (self.voxel_size[a] - other.voxel_size[a]).abs() <= tol)
            && (0..3).all(|a| (self.origin[a] - other.origin[a]).abs() <= tol)
            && (self.direction - other.direction).abs().max() <= tol
    }

    pub(crate) fn ensure_same(&self, other: &Geometry, what: &str) -> Result<()> {
        if self.approx_eq(other, 1e-6) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(what.to_string()))
        }
    }

    /// Neighbor offsets for 6- or 26-connectivity.
    pub(crate) fn neighbor_offsets(connectivity: Connectivity) -> Vec<[i64; 3]> {
        let mut out = Vec::with_capacity(26);
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let n = dx.abs() + dy.abs() + dz.abs();
                    let keep = match connectivity {
                        Connectivity::Six => n == 1,
                        Connectivity::TwentySix => n >= 1,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    #[inline]
    pub(crate) fn offset(&self, c: [usize; 3], d: [i64; 3]) -> Option<usize> {
        let mut n = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as i64 + d[a];
            if v < 0 || v >= self.dims[a] as i64 {
                return None;
            }
            n[a] = v as usize;
        }
        Some(self.index(n[0], n[1], n[2]))
    }
}

/// Voxel adjacency used by labeling and region growing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            6 => Some(Connectivity::Six),
            26 => Some(Connectivity::TwentySix),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dims_and_spacing() {
        assert!(Geometry::lps([0, 1, 1], [1.0; 3], [0.0; 3]).is_err());
        assert!(Geometry::lps([1, 1, 1], [1.0, -1.0, 1.0], [0.0; 3]).is_err());
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Geometry::new([2, 2, 2], [1.0; 3], [0.0; 3], skew).is_err());
    }

    #[test]
    fn point_index_round_trip() {
        let rot = nalgebra::Rotation3::from_euler_angles(0.1, -0.2, 0.3);
        let g = Geometry::new([5, 6, 7], [1.5, 2.0, 0.7], [3.0, -4.0, 10.0], *rot.matrix()).unwrap();
        let p = g.index_to_point([1.25, 4.0, 2.5]);
        let ijk = g.point_to_index(p);
        assert!((ijk[0] - 1.25).abs() < 1e-12);
        assert!((ijk[1] - 4.0).abs() < 1e-12);
        assert!((ijk[2] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn axis_codes() {
        let g = Geometry::lps([2, 2, 2], [1.0; 3], [0.0; 3]).unwrap();
        assert_eq!(g.axis_codes(), "LPS");
        let ras = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        let g = Geometry::new([2, 2, 2], [1.0; 3], [0.0; 3], ras).unwrap();
        assert_eq!(g.axis_codes(), "RAS");
    }

    #[test]
    fn neighbor_counts() {
        assert_eq!(Geometry::neighbor_offsets(Connectivity::Six).len(), 6);
        assert_eq!(Geometry::neighbor_offsets(Connectivity::TwentySix).len(), 26);
    }
}
