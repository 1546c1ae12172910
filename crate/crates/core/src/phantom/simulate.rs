use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{tissue_response, OdeConfig, PhantomSpec, RegionLabel};
use crate::error::Result;
use crate::registration::RigidTransform;
use crate::volume::{resample_trilinear, DynamicVolume, FrameSchedule, Geometry, Mask, Unit, Volume3D};

/// Output of [`simulate_dynamic`].
#[derive(Debug, Clone)]
pub struct SimulatedPet {
    pub dynamic: DynamicVolume,
    /// Ground-truth Ki per voxel (1/min); 0 for artery and empty voxels.
    pub true_ki: Volume3D,
}

/// Index of the topmost region covering each voxel center of `geometry`.
pub fn region_map(spec: &PhantomSpec, geometry: &Geometry) -> Vec<Option<usize>> {
    (0..geometry.len())
        .into_par_iter()
        .map(|idx| {
            let p = geometry.index_to_point(geometry.coords(idx).map(|c| c as f64));
            spec.regions.iter().rposition(|r| r.contains(p))
        })
        .collect()
}

/// Topmost non-artery region under each voxel (what the artery hides).
fn tissue_map(spec: &PhantomSpec, geometry: &Geometry) -> Vec<Option<usize>> {
    (0..geometry.len())
        .into_par_iter()
        .map(|idx| {
            let p = geometry.index_to_point(geometry.coords(idx).map(|c| c as f64));
            spec.regions
                .iter()
                .rposition(|r| r.label != RegionLabel::Artery && r.contains(p))
        })
        .collect()
}

/// Voxels whose topmost region carries `label`.
pub fn region_mask(spec: &PhantomSpec, label: RegionLabel) -> Mask {
    let map = region_map(spec, &spec.geometry);
    Mask::new(
        spec.geometry.clone(),
        map.iter().map(|r| r.is_some_and(|i| spec.regions[i].label == label)).collect(),
    )
    .expect("map built on the spec geometry")
}

/// Time grid with spacing <= `step` that hits every frame boundary, plus the
/// grid index of each frame's start and end.
fn frame_grid(schedule: &FrameSchedule, step: f64) -> (Vec<f64>, Vec<(usize, usize)>) {
    let mut bounds: Vec<f64> = std::iter::once(0.0)
        .chain((0..schedule.len()).flat_map(|i| [schedule.start()[i], schedule.end(i)]))
        .collect();
    bounds.sort_by(f64::total_cmp);
    bounds.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut grid = vec![bounds[0]];
    let mut at = vec![0usize];
    for w in bounds.windows(2) {
        let n = ((w[1] - w[0]) / step).ceil().max(1.0) as usize;
        for i in 1..=n {
            grid.push(if i == n { w[1] } else { w[0] + (w[1] - w[0]) * i as f64 / n as f64 });
        }
        at.push(grid.len() - 1);
    }
    let find = |t: f64| at[bounds.iter().position(|&b| (b - t).abs() < 1e-12).expect("boundary on grid")];
    let frames = (0..schedule.len())
        .map(|i| (find(schedule.start()[i]), find(schedule.end(i))))
        .collect();
    (grid, frames)
}

fn frame_averages(grid: &[f64], frames: &[(usize, usize)], curve: &[f64]) -> Vec<f64> {
    frames
        .iter()
        .map(|&(a, b)| {
            let area: f64 = (a..b)
                .map(|i| 0.5 * (curve[i] + curve[i + 1]) * (grid[i + 1] - grid[i]))
                .sum();
            area / (grid[b] - grid[a])
        })
        .collect()
}

/// Frame-averaged noiseless curves: one per region, plus the plasma input.
pub struct RegionCurves {
    pub tissue: Vec<Vec<f64>>,
    pub plasma: Vec<f64>,
}

pub fn region_curves(spec: &PhantomSpec) -> Result<RegionCurves> {
    let cfg = OdeConfig::default();
    let (grid, frames) = frame_grid(&spec.schedule, cfg.max_step);
    let tissue = spec
        .regions
        .par_iter()
        .map(|r| {
            let c = tissue_response(&r.kinetics, &spec.input, &grid, cfg)?;
            Ok(frame_averages(&grid, &frames, &c.ct))
        })
        .collect::<Result<Vec<_>>>()?;
    let cp: Vec<f64> = grid.iter().map(|&t| spec.input.concentration(t)).collect();
    Ok(RegionCurves {
        tissue,
        plasma: frame_averages(&grid, &frames, &cp),
    })
}

/// Synthesize the dynamic PET study described by `spec`.
///
/// Each voxel's frame value is the frame-average of its region's tissue
/// curve. Artery voxels carry `recovery * Cp + spillover * C_tissue`, where
/// `C_tissue` is the region the artery is painted over. Noise is Gaussian
/// with per-frame standard deviation `noise_scale * sqrt(mean / duration)`,
/// drawn from a per-voxel stream so results do not depend on threading.
pub fn simulate_dynamic(spec: &PhantomSpec) -> Result<SimulatedPet> {
    spec.validate()?;
    let g = &spec.geometry;
    let curves = region_curves(spec)?;
    let top = region_map(spec, g);
    let under = tissue_map(spec, g);
    let nf = spec.schedule.len();
    let durations = spec.schedule.duration();

    // voxel-major values, transposed into frames below
    let tacs: Vec<Vec<f64>> = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let mut tac = match top[idx] {
                None => vec![0.0; nf],
                Some(r) => {
                    let region = &spec.regions[r];
                    if region.label == RegionLabel::Artery {
                        let surround = under[idx].map(|u| &curves.tissue[u]);
                        (0..nf)
                            .map(|f| {
                                region.recovery * curves.plasma[f]
                                    + surround.map_or(0.0, |s| region.spillover * s[f])
                            })
                            .collect()
                    } else {
                        curves.tissue[r].clone()
                    }
                }
            };
            if spec.noise_scale > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
                rng.set_stream(idx as u64);
                for (f, v) in tac.iter_mut().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += spec.noise_scale * (v.max(0.0) / durations[f]).sqrt() * z;
                }
            }
            tac
        })
        .collect();

    let frames = (0..nf)
        .map(|f| Volume3D::new(g.clone(), tacs.iter().map(|t| t[f]).collect(), Unit::Activity))
        .collect::<Result<Vec<_>>>()?;
    let true_ki = Volume3D::new(
        g.clone(),
        top.iter()
            .map(|r| match r {
                Some(i) if spec.regions[*i].label != RegionLabel::Artery => spec.regions[*i].kinetics.ki(),
                _ => 0.0,
            })
            .collect(),
        Unit::PerMinute,
    )?;
    Ok(SimulatedPet {
        dynamic: DynamicVolume::new(g.clone(), spec.schedule.clone(), frames)?,
        true_ki,
    })
}

/// Noise-free piecewise-constant MR contrast of `spec` sampled on any grid.
pub fn render_mr(spec: &PhantomSpec, geometry: &Geometry) -> Result<Volume3D> {
    let top = region_map(spec, geometry);
    Volume3D::new(
        geometry.clone(),
        top.iter().map(|r| r.map_or(0.0, |i| spec.regions[i].mr_intensity)).collect(),
        Unit::Unitless,
    )
}

/// Synthetic T1 image on the PET grid with Gaussian noise of `mr_noise`.
pub fn simulate_mr(spec: &PhantomSpec) -> Result<Volume3D> {
    spec.validate()?;
    let clean = render_mr(spec, &spec.geometry)?;
    if spec.mr_noise == 0.0 {
        return Ok(clean);
    }
    let data = clean
        .data()
        .par_iter()
        .enumerate()
        .map(|(idx, &v)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.noise_seed ^ 0x4d52_4d52_4d52_4d52);
            rng.set_stream(idx as u64);
            let z: f64 = StandardNormal.sample(&mut rng);
            v + spec.mr_noise * z
        })
        .collect();
    Volume3D::new(spec.geometry.clone(), data, Unit::Unitless)
}

/// Move the imaged object by `motion` in every frame from `first_frame` on.
pub fn apply_frame_motion(dynamic: &DynamicVolume, first_frame: usize, motion: &RigidTransform) -> Result<DynamicVolume> {
    let back = motion.inverse();
    let frames = dynamic
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if i >= first_frame {
                resample_trilinear(f, f.geometry(), &back)
            } else {
                Ok(f.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    DynamicVolume::new(dynamic.geometry().clone(), dynamic.schedule().clone(), frames)
}
