use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::volume::PointTransform;

/// Rigid motion about a fixed center: `T(p) = R (p - c) + c + t`.
///
/// `R = Rz(angles[2]) * Ry(angles[1]) * Rx(angles[0])` with angles in
/// degrees. As used by the resamplers, a registration result maps points of
/// the fixed grid to the points sampled in the moving image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub angles: [f64; 3],
    pub translation: [f64; 3],
    pub center: [f64; 3],
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity([0.0; 3])
    }
}

impl RigidTransform {
    pub fn identity(center: [f64; 3]) -> Self {
        Self {
            angles: [0.0; 3],
            translation: [0.0; 3],
            center,
        }
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Self {
            translation: t,
            ..Self::default()
        }
    }

    pub fn new(angles: [f64; 3], translation: [f64; 3], center: [f64; 3]) -> Self {
        Self {
            angles,
            translation,
            center,
        }
    }

    /// `[rx, ry, rz, tx, ty, tz]`, the optimizer's parameter vector.
    pub fn params(&self) -> [f64; 6] {
        let [a, b, c] = self.angles;
        let [x, y, z] = self.translation;
        [a, b, c, x, y, z]
    }

    pub fn with_params(&self, p: &[f64]) -> Self {
        Self {
            angles: [p[0], p[1], p[2]],
            translation: [p[3], p[4], p[5]],
            center: self.center,
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        let [ax, ay, az] = self.angles.map(f64::to_radians);
        let (sx, cx) = ax.sin_cos();
        let (sy, cy) = ay.sin_cos();
        let (sz, cz) = az.sin_cos();
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
        let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
        let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
        rz * ry * rx
    }

    fn from_matrix(r: &Matrix3<f64>, translation: Vector3<f64>, center: [f64; 3]) -> Self {
        // r = Rz Ry Rx: r[(2,0)] = -sin(ry)
        let sy = (-r[(2, 0)]).clamp(-1.0, 1.0);
        let ay = sy.asin();
        let (ax, az) = if sy.abs() < 1.0 - 1e-12 {
            (r[(2, 1)].atan2(r[(2, 2)]), r[(1, 0)].atan2(r[(0, 0)]))
        } else {
            // gimbal lock: fold the x rotation into z
            (0.0, (-r[(0, 1)]).atan2(r[(1, 1)]))
        };
        Self {
            angles: [ax.to_degrees(), ay.to_degrees(), az.to_degrees()],
            translation: translation.into(),
            center,
        }
    }

    /// `self` after `first`: `p -> self(first(p))`, expressed about
    /// `first`'s center.
    pub fn compose(&self, first: &RigidTransform) -> RigidTransform {
        let r1 = first.rotation();
        let r2 = self.rotation();
        let c1 = Vector3::from(first.center);
        let c2 = Vector3::from(self.center);
        let t1 = Vector3::from(first.translation);
        let t2 = Vector3::from(self.translation);
        let t = r2 * (c1 + t1 - c2) + c2 + t2 - c1;
        Self::from_matrix(&(r2 * r1), t, first.center)
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation().transpose();
        let t = -(rt * Vector3::from(self.translation));
        Self::from_matrix(&rt, t, self.center)
    }

    /// Largest absolute angle (degrees) and translation component (mm).
    pub fn magnitude(&self) -> (f64, f64) {
        let a = self.angles.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let t = self.translation.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (a, t)
    }

    pub fn render(&self) -> String {
        let mut s = String::from("dpet-rigid-transform 1\n");
        let line = |s: &mut String, key: &str, v: [f64; 3]| {
            let _ = writeln!(s, "{key} {:?} {:?} {:?}", v[0], v[1], v[2]);
        };
        line(&mut s, "angles_deg", self.angles);
        line(&mut s, "translation_mm", self.translation);
        line(&mut s, "center_mm", self.center);
        s.push_str("order zyx\n");
        s.push_str("maps fixed->moving\n");
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let bad = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        if lines.len() != 6 {
            return Err(bad(lines.len().min(6), "transform file must have 6 lines"));
        }
        if lines[0] != "dpet-rigid-transform 1" {
            return Err(bad(1, "missing 'dpet-rigid-transform 1' header"));
        }
        let triple = |n: usize, key: &str| -> Result<[f64; 3]> {
            let mut it = lines[n].split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(n + 1, &format!("expected '{key}'")));
            }
            let v: Vec<f64> = it
                .map(|t| t.parse::<f64>().map_err(|e| bad(n + 1, &e.to_string())))
                .collect::<Result<_>>()?;
            if v.len() != 3 || v.iter().any(|x| !x.is_finite()) {
                return Err(bad(n + 1, "expected three finite numbers"));
            }
            Ok([v[0], v[1], v[2]])
        };
        let t = Self {
            angles: triple(1, "angles_deg")?,
            translation: triple(2, "translation_mm")?,
            center: triple(3, "center_mm")?,
        };
        if lines[4] != "order zyx" {
            return Err(bad(5, "only 'order zyx' is supported"));
        }
        if lines[5] != "maps fixed->moving" {
            return Err(bad(6, "expected 'maps fixed->moving'"));
        }
        Ok(t)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

impl PointTransform for RigidTransform {
    fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let c = Vector3::from(self.center);
        let q = self.rotation() * (Vector3::from(p) - c) + c + Vector3::from(self.translation);
        q.into()
    }
}

/// A transform with its rotation matrix precomputed, for inner loops.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CompiledTransform {
    r: Matrix3<f64>,
    offset: Vector3<f64>,
}

impl CompiledTransform {
    pub(crate) fn new(t: &RigidTransform) -> Self {
        let r = t.rotation();
        let c = Vector3::from(t.center);
        Self {
            r,
            offset: c + Vector3::from(t.translation) - r * c,
        }
    }
}

impl PointTransform for CompiledTransform {
    #[inline]
    fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        (self.r * Vector3::from(p) + self.offset).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng) -> RigidTransform {
        let mut v = || rng.gen_range(-20.0..20.0);
        RigidTransform::new([v(), v(), v()], [v(), v(), v()], [v(), v(), v()])
    }

    fn close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn identity_fixes_points() {
        let t = RigidTransform::identity([3.0, -1.0, 2.0]);
        assert_eq!(t.apply([1.0, 2.0, 3.0]), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn rotation_about_z_by_90() {
        let t = RigidTransform::new([0.0, 0.0, 90.0], [0.0; 3], [0.0; 3]);
        assert!(close(t.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], 1e-12));
        let t = RigidTransform::new([0.0, 0.0, 90.0], [0.0; 3], [1.0, 0.0, 0.0]);
        assert!(close(t.apply([1.0, 0.0, 0.0]), [1.0, 0.0, 0.0], 1e-12));
    }

    #[test]
    fn inverse_round_trips_points_and_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let t = random(&mut rng);
            let p = [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)];
            assert!(close(t.inverse().apply(t.apply(p)), p, 1e-6));
            let id = t.compose(&t.inverse());
            assert!(id.params().iter().all(|v| v.abs() < 1e-9), "{id:?}");
        }
    }

    #[test]
    fn compose_applies_in_order_and_associates() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let (a, b, c) = (random(&mut rng), random(&mut rng), random(&mut rng));
            let p = [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)];
            assert!(close(a.compose(&b).apply(p), a.apply(b.apply(p)), 1e-9));
            let left = a.compose(&b).compose(&c).apply(p);
            let right = a.compose(&b.compose(&c)).apply(p);
            assert!(close(left, right, 1e-9));
        }
    }

    #[test]
    fn compiled_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = random(&mut rng);
        let c = CompiledTransform::new(&t);
        let p = [4.0, -7.0, 1.5];
        assert!(close(c.apply(p), t.apply(p), 1e-12));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let t = RigidTransform::new([0.1, -2.0 / 3.0, 5.0], [1e-17, 3.25, -4.0], [1.0, 2.0, 3.0]);
        let text = t.render();
        assert_eq!(text.lines().count(), 6);
        assert_eq!(RigidTransform::parse(&text).unwrap(), t);
        assert!(RigidTransform::parse(&text.replace("order zyx", "order xyz")).is_err());
        assert!(RigidTransform::parse("dpet-rigid-transform 1\n").is_err());
    }
}
