use log::{debug, warn};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::transform::CompiledTransform;
use super::RigidTransform;
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::volume::{downsample2, gaussian_smooth, PointTransform, Volume3D};

/// Mutual-information registration settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MiConfig {
    /// Histogram bins per axis.
    pub bins: usize,
    /// Fraction of fixed voxels used, chosen by a fixed hash of the index.
    pub sample_fraction: f64,
    /// Nelder-Mead iterations per resolution level.
    pub max_iter: usize,
    /// Simplex size (deg and mm) at which a level stops.
    pub param_tolerance: f64,
    /// Pyramid depth; 2 means half resolution then full resolution.
    pub levels: usize,
    /// Initial simplex edge for angles (deg) and translations (mm).
    pub initial_step: f64,
    /// Gaussian pre-smoothing, in voxels of each pyramid level, applied to
    /// both images while optimizing; 0 disables it. Hard-binned MI is flat
    /// over sub-voxel moves of piecewise-constant images without it.
    pub smoothing: f64,
}

impl Default for MiConfig {
    fn default() -> Self {
        Self {
            bins: 32,
            sample_fraction: 1.0,
            max_iter: 600,
            param_tolerance: 0.01,
            levels: 2,
            initial_step: 5.0,
            smoothing: 1.0,
        }
    }
}

impl MiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 8 {
            return Err(Error::ConfigInvalid(format!("bins must be >= 8, got {}", self.bins)));
        }
        if self.max_iter < 1 {
            return Err(Error::ConfigInvalid("max_iter must be >= 1".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::ConfigInvalid(format!(
                "sample_fraction must lie in (0, 1], got {}",
                self.sample_fraction
            )));
        }
        if self.levels < 1 {
            return Err(Error::ConfigInvalid("levels must be >= 1".into()));
        }
        if !(self.smoothing >= 0.0) {
            return Err(Error::ConfigInvalid(format!("smoothing must be >= 0, got {}", self.smoothing)));
        }
        if !(self.param_tolerance > 0.0) || !(self.initial_step > 0.0) {
            return Err(Error::ConfigInvalid("param_tolerance and initial_step must be > 0".into()));
        }
        Ok(())
    }
}

/// Least share of fixed samples that must map inside the moving image.
pub const MIN_OVERLAP: f64 = 0.10;

/// Joint intensity histogram of fixed (rows) against moving (columns).
///
/// Moving values are interpolated trilinearly and counted in the bin
/// they fall in.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    bins: usize,
    counts: Vec<u64>,
    overlap: usize,
    sampled: usize,
}

impl JointHistogram {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Samples that landed inside the moving image.
    pub fn overlap(&self) -> usize {
        self.overlap
    }

    /// Fixed voxels considered.
    pub fn sampled(&self) -> usize {
        self.sampled
    }

    pub fn transposed(&self) -> Self {
        let n = self.bins;
        let mut counts = vec![0; n * n];
        for a in 0..n {
            for b in 0..n {
                counts[b * n + a] = self.counts[a * n + b];
            }
        }
        Self { counts, ..*self }
    }

    /// `sum p(a,b) ln(p(a,b) / (p(a) p(b)))` in nats.
    pub fn mutual_information(&self) -> f64 {
        let n = self.bins;
        let total = self.counts.iter().sum::<u64>() as f64;
        if total == 0.0 {
            return 0.0;
        }
        let mut pa = vec![0.0; n];
        let mut pb = vec![0.0; n];
        for a in 0..n {
            for b in 0..n {
                let c = self.counts[a * n + b] as f64;
                pa[a] += c;
                pb[b] += c;
            }
        }
        let mut mi = 0.0;
        for a in 0..n {
            for b in 0..n {
                let c = self.counts[a * n + b] as f64;
                if c > 0.0 {
                    mi += c / total * (c * total / (pa[a] * pb[b])).ln();
                }
            }
        }
        mi.max(0.0)
    }
}

fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let b = ((v - lo) / (hi - lo) * bins as f64).floor();
    (b.max(0.0) as usize).min(bins - 1)
}

fn sampled(idx: usize, fraction: f64) -> bool {
    if fraction >= 1.0 {
        return true;
    }
    let h = (idx as u64 ^ 0x5851_f42d_4c95_7f2d).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    ((h >> 11) as f64 / (1u64 << 53) as f64) < fraction
}

/// Lower corner and fractional offsets of a continuous index inside the
/// grid `[0, n-1]^3`; offsets within 1e-9 of a lattice point snap to it.
#[inline]
fn cell(dims: [usize; 3], q: [f64; 3]) -> Option<([usize; 3], [f64; 3])> {
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let mut x = q[a];
        let r = x.round();
        if (x - r).abs() < 1e-9 {
            x = r;
        }
        let max = (dims[a] - 1) as f64;
        if !(x >= 0.0 && x <= max) {
            return None;
        }
        let f = x.floor();
        base[a] = f as usize;
        frac[a] = x - f;
        if base[a] == dims[a] - 1 {
            frac[a] = 0.0;
        }
    }
    Some((base, frac))
}

/// Samples per parallel work unit.
const CHUNK: usize = 4096;

/// Fixed-image samples and moving-image lookup, prepared once per level.
struct Problem<'a> {
    moving: &'a Volume3D,
    bins: usize,
    mov_range: (f64, f64),
    /// (continuous fixed index, fixed bin)
    samples: Vec<([f64; 3], u16)>,
}

impl<'a> Problem<'a> {
    fn new(fixed: &Volume3D, moving: &'a Volume3D, cfg: &MiConfig) -> Self {
        let (flo, fhi) = (fixed.min(), fixed.max());
        let g = fixed.geometry();
        let samples = (0..g.len())
            .filter(|&i| sampled(i, cfg.sample_fraction))
            .map(|i| {
                let c = g.coords(i).map(|c| c as f64);
                (c, bin_of(fixed.data()[i], flo, fhi, cfg.bins) as u16)
            })
            .collect();
        Self {
            moving,
            bins: cfg.bins,
            mov_range: (moving.min(), moving.max()),
            samples,
        }
    }

    fn histogram(&self, fixed_geom: &crate::volume::Geometry, t: &RigidTransform) -> JointHistogram {
        // fixed index -> fixed point -> T -> moving continuous index, as one affine map
        let fg = fixed_geom;
        let mg = self.moving.geometry();
        let to_fixed = fg.direction() * Matrix3::from_diagonal(&Vector3::from(fg.voxel_size()));
        let ct = CompiledTransform::new(t);
        let origin = Vector3::from(ct.apply(fg.origin()));
        let r = t.rotation();
        let inv_spacing = Matrix3::from_diagonal(&Vector3::from(mg.voxel_size().map(|s| 1.0 / s)));
        let to_moving = inv_spacing * mg.direction().transpose();
        let m = to_moving * r * to_fixed;
        let v = to_moving * (origin - Vector3::from(mg.origin()));

        let n = self.bins;
        let dims = mg.dims();
        let (nx, nxy) = (dims[0], dims[0] * dims[1]);
        let data = self.moving.data();
        let (lo, hi) = self.mov_range;
        let partial: Vec<(Vec<u64>, usize)> = self
            .samples
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut h = vec![0u64; n * n];
                let mut k = 0;
                for (ijk, fb) in chunk {
                    let q = m * Vector3::from(*ijk) + v;
                    let Some((b, f)) = cell(dims, q.into()) else { continue };
                    k += 1;
                    let i0 = b[0] + nx * b[1] + nxy * b[2];
                    let mut val = 0.0;
                    for corner in 0..8usize {
                        let mut w = 1.0;
                        let mut idx = i0;
                        for a in 0..3 {
                            if corner >> a & 1 == 1 {
                                w *= f[a];
                                idx += [1, nx, nxy][a];
                            } else {
                                w *= 1.0 - f[a];
                            }
                        }
                        if w > 0.0 {
                            val += w * data[idx];
                        }
                    }
                    h[*fb as usize * n + bin_of(val, lo, hi, n)] += 1;
                }
                (h, k)
            })
            .collect();
        let mut counts = vec![0u64; n * n];
        let mut overlap = 0;
        for (h, k) in partial {
            counts.iter_mut().zip(&h).for_each(|(x, y)| *x += y);
            overlap += k;
        }
        JointHistogram {
            bins: n,
            counts,
            overlap,
            sampled: self.samples.len(),
        }
    }

    fn mi(&self, fixed_geom: &crate::volume::Geometry, t: &RigidTransform) -> Result<f64> {
        let h = self.histogram(fixed_geom, t);
        check_overlap(&h)?;
        Ok(h.mutual_information())
    }
}

fn check_overlap(h: &JointHistogram) -> Result<()> {
    if (h.overlap as f64) < MIN_OVERLAP * h.sampled as f64 || h.overlap == 0 {
        return Err(Error::InsufficientOverlap {
            overlap: h.overlap,
            total: h.sampled,
        });
    }
    Ok(())
}

/// Joint histogram of `fixed` against `moving` sampled trilinearly at
/// `t(p)` for every (sampled) fixed voxel center `p`. Bin ranges span each
/// image's full intensity range.
pub fn joint_histogram(fixed: &Volume3D, moving: &Volume3D, t: &RigidTransform, cfg: &MiConfig) -> Result<JointHistogram> {
    cfg.validate()?;
    let h = Problem::new(fixed, moving, cfg).histogram(fixed.geometry(), t);
    check_overlap(&h)?;
    Ok(h)
}

pub fn mutual_information(fixed: &Volume3D, moving: &Volume3D, t: &RigidTransform, cfg: &MiConfig) -> Result<f64> {
    Ok(joint_histogram(fixed, moving, t, cfg)?.mutual_information())
}

/// Nelder-Mead restarts per pyramid level.
const MAX_RESTARTS: usize = 3;
/// Simplex edge (deg and mm) of the final full-resolution pass.
const REFINE_STEP: f64 = 0.5;

fn opts(cfg: &MiConfig) -> NelderMeadOptions {
    NelderMeadOptions {
        max_iter: cfg.max_iter,
        param_tolerance: cfg.param_tolerance,
        ..Default::default()
    }
}

/// Outcome of [`register_rigid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    /// Maps fixed-grid points to moving-image points.
    pub transform: RigidTransform,
    /// MI at `transform`, full resolution.
    pub mi: f64,
    /// False when the last level hit `max_iter` with the simplex still
    /// larger than `param_tolerance`; `transform` is then the best found.
    pub converged: bool,
    pub evaluations: usize,
}

/// Maximize MI over the six rigid parameters, coarse to fine.
pub fn register_rigid(fixed: &Volume3D, moving: &Volume3D, cfg: &MiConfig, init: &RigidTransform) -> Result<Registration> {
    cfg.validate()?;
    // refuse a starting point with no usable overlap
    let full = Problem::new(fixed, moving, cfg);
    full.mi(fixed.geometry(), init)?;

    let prepare = |v: &Volume3D| -> Result<Volume3D> {
        if cfg.smoothing > 0.0 {
            gaussian_smooth(v, cfg.smoothing * v.geometry().voxel_size()[0])
        } else {
            Ok(v.clone())
        }
    };
    let mut pyramid = vec![(fixed.clone(), moving.clone())];
    for _ in 1..cfg.levels {
        let (f, m) = pyramid.last().expect("nonempty");
        if f.dims().iter().chain(m.dims().iter()).any(|&d| d < 16) {
            break;
        }
        let next = (downsample2(f)?, downsample2(m)?);
        pyramid.push(next);
    }

    let mut x = init.params().to_vec();
    let mut evaluations = 0;
    let mut converged = false;
    let coarsest = pyramid.len() - 1;
    for (level, (f, m)) in pyramid.iter().enumerate().rev() {
        let (f, m) = (prepare(f)?, prepare(m)?);
        let p = Problem::new(&f, &m, cfg);
        let geom = f.geometry();
        let cost = |v: &[f64]| p.mi(geom, &init.with_params(v)).map_or(f64::INFINITY, |mi| -mi);
        let step = cfg.initial_step * 0.5f64.powi((coarsest - level) as i32);
        let mut best = nelder_mead(cost, &x, &[step; 6], opts(cfg));
        evaluations += best.evaluations;
        // restarting from a fresh full-size simplex escapes early collapse
        for _ in 0..MAX_RESTARTS {
            let again = nelder_mead(cost, &best.x, &[step; 6], opts(cfg));
            evaluations += again.evaluations;
            let gained = best.value - again.value;
            if gained >= 0.0 {
                best = again;
            }
            if gained <= 1e-6 {
                break;
            }
        }
        debug!("registration level {level}: MI {:.5} after {} iterations", -best.value, best.iterations);
        x = best.x;
        converged = best.converged;
    }
    if cfg.smoothing > 0.0 {
        // the pyramid's smoothing biases fine rotations; polish with half of it
        let sharpen = |v: &Volume3D| gaussian_smooth(v, 0.5 * cfg.smoothing * v.geometry().voxel_size()[0]);
        let (fs, ms) = (sharpen(fixed)?, sharpen(moving)?);
        let p = Problem::new(&fs, &ms, cfg);
        let cost = |v: &[f64]| p.mi(fs.geometry(), &init.with_params(v)).map_or(f64::INFINITY, |mi| -mi);
        let best = nelder_mead(cost, &x, &[REFINE_STEP; 6], opts(cfg));
        evaluations += best.evaluations;
        debug!("registration refinement: MI {:.5} after {} iterations", -best.value, best.iterations);
        x = best.x;
        converged = best.converged;
    }
    let transform = init.with_params(&x);
    let mi = full.mi(fixed.geometry(), &transform)?;
    if !converged {
        warn!("registration stopped at max_iter before the simplex shrank below {}", cfg.param_tolerance);
    }
    Ok(Registration {
        transform,
        mi,
        converged,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Geometry, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blocks() -> Volume3D {
        let g = Geometry::centered([24, 24, 24], [2.0; 3], [0.0; 3]).unwrap();
        Volume3D::from_fn(g, Unit::Unitless, |[i, j, k]| {
            let mut v = 10.0;
            if (4..14).contains(&i) && (6..18).contains(&j) && (5..19).contains(&k) {
                v += 50.0;
            }
            if (10..20).contains(&i) && (12..20).contains(&j) && (3..12).contains(&k) {
                v += 25.0;
            }
            if (i + 2 * j + 3 * k) % 11 == 0 {
                v += 5.0;
            }
            v
        })
        .unwrap()
    }

    #[test]
    fn self_mi_is_marginal_entropy() {
        let f = blocks();
        let cfg = MiConfig::default();
        let h = joint_histogram(&f, &f, &RigidTransform::default(), &cfg).unwrap();
        let n = f.data().len() as f64;
        let mut counts = vec![0usize; cfg.bins];
        for &v in f.data() {
            counts[bin_of(v, f.min(), f.max(), cfg.bins)] += 1;
        }
        let entropy: f64 = counts.iter().filter(|&&c| c > 0).map(|&c| -(c as f64 / n) * (c as f64 / n).ln()).sum();
        assert!((h.mutual_information() - entropy).abs() < 1e-12);
        let shifted = mutual_information(&f, &f, &RigidTransform::translation([4.0, 0.0, 0.0]), &cfg).unwrap();
        assert!(shifted < entropy);
    }

    #[test]
    fn swapping_axes_leaves_mi_unchanged() {
        let f = blocks();
        let t = RigidTransform::new([3.0, 0.0, -2.0], [1.3, 0.2, -0.7], [0.0; 3]);
        let h = joint_histogram(&f, &f, &t, &MiConfig::default()).unwrap();
        assert!((h.mutual_information() - h.transposed().mutual_information()).abs() < 1e-12);
    }

    #[test]
    fn independent_noise_has_small_mi() {
        let g = Geometry::centered([48; 3], [1.0; 3], [0.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Volume3D::new(g.clone(), (0..g.len()).map(|_| rng.gen::<f64>()).collect(), Unit::Unitless).unwrap();
        let b = Volume3D::new(g.clone(), (0..g.len()).map(|_| rng.gen::<f64>()).collect(), Unit::Unitless).unwrap();
        let mi = mutual_information(&a, &b, &RigidTransform::default(), &MiConfig::default()).unwrap();
        assert!(mi < 0.05, "{mi}");
    }

    #[test]
    fn affine_remap_keeps_mi() {
        let f = blocks();
        let m = f.map(|v| 2.0 * v + 5.0).unwrap();
        let cfg = MiConfig::default();
        let a = mutual_information(&f, &f, &RigidTransform::default(), &cfg).unwrap();
        let b = mutual_information(&f, &m, &RigidTransform::default(), &cfg).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn no_overlap_is_an_error() {
        let f = blocks();
        let e = mutual_information(&f, &f, &RigidTransform::translation([500.0, 0.0, 0.0]), &MiConfig::default());
        assert!(matches!(e, Err(Error::InsufficientOverlap { overlap: 0, .. })));
    }

    #[test]
    fn config_validation() {
        assert!(MiConfig { bins: 4, ..Default::default() }.validate().is_err());
        assert!(MiConfig { sample_fraction: 0.0, ..Default::default() }.validate().is_err());
        assert!(MiConfig { max_iter: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn self_registration_stays_at_identity() {
        let f = blocks();
        let r = register_rigid(&f, &f, &MiConfig::default(), &RigidTransform::identity(f.geometry().center())).unwrap();
        let (a, t) = r.transform.magnitude();
        assert!(a < 0.1 && t < 0.1, "{:?}", r.transform);
    }

    #[test]
    fn subsampling_is_deterministic() {
        let f = blocks();
        let cfg = MiConfig {
            sample_fraction: 0.3,
            ..Default::default()
        };
        let h1 = joint_histogram(&f, &f, &RigidTransform::default(), &cfg).unwrap();
        let h2 = joint_histogram(&f, &f, &RigidTransform::default(), &cfg).unwrap();
        assert_eq!(h1, h2);
        let frac = h1.sampled() as f64 / f.data().len() as f64;
        assert!((frac - 0.3).abs() < 0.03, "{frac}");
    }
}
