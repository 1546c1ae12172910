use nalgebra::Matrix3;

use super::Geometry;
use crate::error::{Error, Result};

/// Physical unit carried by a volume's values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Unit {
    /// Tracer activity concentration, Bq/mL.
    Activity,
    /// Unitless intensity (MR, masks, SUV, intercepts).
    #[default]
    Unitless,
    /// Rate constant, 1/min (Ki maps).
    PerMinute,
}

/// Scalar 3D image. Values are stored x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    geometry: Geometry,
    data: Vec<f64>,
    unit: Unit,
}

impl Volume3D {
    pub fn new(geometry: Geometry, data: Vec<f64>, unit: Unit) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::VolumeInvalid(format!(
                "{} values for {} voxels",
                data.len(),
                geometry.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::VolumeInvalid(format!("non-finite value at voxel {i}")));
        }
        Ok(Self { geometry, data, unit })
    }

    pub fn filled(geometry: Geometry, value: f64, unit: Unit) -> Self {
        let data = vec![value; geometry.len()];
        Self { geometry, data, unit }
    }

    pub fn from_fn(geometry: Geometry, unit: Unit, mut f: impl FnMut([usize; 3]) -> f64) -> Result<Self> {
        let data = (0..geometry.len()).map(|i| f(geometry.coords(i))).collect();
        Self::new(geometry, data, unit)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn with_unit(mut self, unit: Unit) -> Self {
        self.unit = unit;
        self
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.geometry.index(i, j, k)]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Apply `f` to every value, keeping geometry and unit.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.geometry.clone(), self.data.iter().map(|&v| f(v)).collect(), self.unit)
    }

    /// Zero every voxel outside `mask`.
    pub fn masked(&self, mask: &Mask) -> Result<Self> {
        self.geometry.ensure_same(mask.geometry(), "mask vs volume")?;
        let data = self
            .data
            .iter()
            .zip(mask.data())
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        Ok(Self {
            geometry: self.geometry.clone(),
            data,
            unit: self.unit,
        })
    }

    /// Permute and flip axes so the direction matrix is as close to
    /// identity (LPS) as possible. Values are moved, not interpolated.
    pub fn to_lps(&self) -> Result<Self> {
        let plan = LpsPlan::new(&self.geometry);
        if plan.is_identity() {
            return Ok(self.clone());
        }
        let geometry = plan.target_geometry(&self.geometry)?;
        let mut data = vec![0.0; self.data.len()];
        for (src_idx, &v) in self.data.iter().enumerate() {
            data[plan.map_index(&self.geometry, &geometry, src_idx)] = v;
        }
        Ok(Self {
            geometry,
            data,
            unit: self.unit,
        })
    }
}

/// Axis permutation + flips taking a grid to LPS order.
struct LpsPlan {
    // perm[target_axis] = source axis; flip[target_axis]
    perm: [usize; 3],
    flip: [bool; 3],
}

impl LpsPlan {
    fn new(g: &Geometry) -> Self {
        let d = g.direction();
        let mut perm = [0usize; 3];
        let mut flip = [false; 3];
        let mut used = [false; 3];
        // assign each physical axis the source column best aligned with it,
        // strongest alignments first
        let mut pairs: Vec<(usize, usize, f64)> = (0..3)
            .flat_map(|r| (0..3).map(move |c| (r, c, d[(r, c)])))
            .collect();
        pairs.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()));
        let mut assigned = [false; 3];
        for (r, c, v) in pairs {
            if assigned[r] || used[c] {
                continue;
            }
            perm[r] = c;
            flip[r] = v < 0.0;
            assigned[r] = true;
            used[c] = true;
        }
        Self { perm, flip }
    }

    fn is_identity(&self) -> bool {
        self.perm == [0, 1, 2] && self.flip == [false; 3]
    }

    fn target_geometry(&self, g: &Geometry) -> Result<Geometry> {
        let src_dims = g.dims();
        let dims = self.perm.map(|s| src_dims[s]);
        let vs = g.voxel_size();
        let voxel_size = self.perm.map(|s| vs[s]);
        let mut dir = Matrix3::zeros();
        let mut corner = [0.0; 3];
        for t in 0..3 {
            let s = self.perm[t];
            let sign = if self.flip[t] { -1.0 } else { 1.0 };
            dir.set_column(t, &(g.direction().column(s) * sign));
            if self.flip[t] {
                corner[s] = (src_dims[s] - 1) as f64;
            }
        }
        let origin = g.index_to_point(corner);
        Geometry::new(dims, voxel_size, origin, dir)
    }

    fn map_index(&self, src: &Geometry, dst: &Geometry, src_idx: usize) -> usize {
        let c = src.coords(src_idx);
        let dd = dst.dims();
        let mut t = [0usize; 3];
        for a in 0..3 {
            let v = c[self.perm[a]];
            t[a] = if self.flip[a] { dd[a] - 1 - v } else { v };
        }
        dst.index(t[0], t[1], t[2])
    }
}

/// Boolean voxel membership on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    geometry: Geometry,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(geometry: Geometry, data: Vec<bool>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::VolumeInvalid(format!(
                "{} mask entries for {} voxels",
                data.len(),
                geometry.len()
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn empty(geometry: Geometry) -> Self {
        let data = vec![false; geometry.len()];
        Self { geometry, data }
    }

    pub fn full(geometry: Geometry) -> Self {
        let data = vec![true; geometry.len()];
        Self { geometry, data }
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut([usize; 3]) -> bool) -> Self {
        let data = (0..geometry.len()).map(|i| f(geometry.coords(i))).collect();
        Self { geometry, data }
    }

    /// Voxels where `vol` is nonzero.
    pub fn from_volume(vol: &Volume3D) -> Self {
        Self {
            geometry: vol.geometry().clone(),
            data: vol.data().iter().map(|&v| v != 0.0).collect(),
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[self.geometry.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: bool) {
        let idx = self.geometry.index(i, j, k);
        self.data[idx] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn to_volume(&self) -> Volume3D {
        Volume3D {
            geometry: self.geometry.clone(),
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            unit: Unit::Unitless,
        }
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.geometry.ensure_same(other.geometry(), "mask union")?;
        Ok(Mask {
            geometry: self.geometry.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect(),
        })
    }

    pub fn intersect(&self, other: &Mask) -> Result<Mask> {
        self.geometry.ensure_same(other.geometry(), "mask intersection")?;
        Ok(Mask {
            geometry: self.geometry.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        })
    }

    /// Voxels in `self` but not in `other`.
    pub fn difference(&self, other: &Mask) -> Result<Mask> {
        self.geometry.ensure_same(other.geometry(), "mask difference")?;
        Ok(Mask {
            geometry: self.geometry.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && !*b).collect(),
        })
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| !*a || *b)
    }
}

/// Frame timing of a dynamic acquisition, minutes after injection.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSchedule {
    start: Vec<f64>,
    duration: Vec<f64>,
}

/// Slack for accumulated rounding when checking frame overlap (minutes).
const SCHEDULE_SLACK: f64 = 1e-9;

impl FrameSchedule {
    pub fn new(start: Vec<f64>, duration: Vec<f64>) -> Result<Self> {
        if start.is_empty() {
            return Err(Error::ScheduleInvalid("no frames".into()));
        }
        if start.len() != duration.len() {
            return Err(Error::ScheduleInvalid(format!(
                "{} starts vs {} durations",
                start.len(),
                duration.len()
            )));
        }
        if !(start[0] >= 0.0) {
            return Err(Error::ScheduleInvalid(format!("negative first start {}", start[0])));
        }
        for (i, (&s, &d)) in start.iter().zip(&duration).enumerate() {
            if !(d > 0.0) || !d.is_finite() || !s.is_finite() {
                return Err(Error::ScheduleInvalid(format!("frame {i}: duration {d} not positive")));
            }
            if let Some(&next) = start.get(i + 1) {
                if s + d > next + SCHEDULE_SLACK {
                    return Err(Error::ScheduleInvalid(format!(
                        "frame {i} [{s}, {}] overlaps frame {} starting at {next}",
                        s + d,
                        i + 1
                    )));
                }
            }
        }
        Ok(Self { start, duration })
    }

    /// Contiguous schedule from `(count, duration_minutes)` blocks starting at 0.
    pub fn contiguous(blocks: &[(usize, f64)]) -> Result<Self> {
        let mut start = Vec::new();
        let mut duration = Vec::new();
        let mut t = 0.0;
        for &(n, d) in blocks {
            for _ in 0..n {
                start.push(t);
                duration.push(d);
                t += d;
            }
        }
        Self::new(start, duration)
    }

    /// The default 60-minute, 39-frame protocol:
    /// 12x5 s, 8x30 s, 10x60 s, 9x300 s.
    pub fn standard_60min() -> Self {
        Self::contiguous(&[(12, 5.0 / 60.0), (8, 0.5), (10, 1.0), (9, 5.0)])
            .expect("static schedule is valid")
    }

    pub fn len(&self) -> usize {
        self.start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start.is_empty()
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn duration(&self) -> &[f64] {
        &self.duration
    }

    pub fn end(&self, i: usize) -> f64 {
        self.start[i] + self.duration[i]
    }

    pub fn mid(&self, i: usize) -> f64 {
        self.start[i] + 0.5 * self.duration[i]
    }

    pub fn mids(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.mid(i)).collect()
    }

    pub fn total_end(&self) -> f64 {
        self.end(self.len() - 1)
    }
}

/// 4D activity series: one [`Volume3D`] per scheduled frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicVolume {
    geometry: Geometry,
    schedule: FrameSchedule,
    frames: Vec<Volume3D>,
}

impl DynamicVolume {
    pub fn new(geometry: Geometry, schedule: FrameSchedule, frames: Vec<Volume3D>) -> Result<Self> {
        if frames.len() != schedule.len() {
            return Err(Error::VolumeInvalid(format!(
                "{} frames for a {}-frame schedule",
                frames.len(),
                schedule.len()
            )));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.geometry() != &geometry {
                return Err(Error::GeometryMismatch(format!("frame {i} geometry differs")));
            }
        }
        Ok(Self {
            geometry,
            schedule,
            frames,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn schedule(&self) -> &FrameSchedule {
        &self.schedule
    }

    pub fn frames(&self) -> &[Volume3D] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &Volume3D {
        &self.frames[i]
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn into_frames(self) -> Vec<Volume3D> {
        self.frames
    }

    /// Time-activity curve of one voxel.
    pub fn tac(&self, idx: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f.data()[idx]).collect()
    }

    pub fn to_lps(&self) -> Result<Self> {
        let frames = self.frames.iter().map(Volume3D::to_lps).collect::<Result<Vec<_>>>()?;
        let geometry = frames[0].geometry().clone();
        Self::new(geometry, self.schedule.clone(), frames)
    }
}
