use super::{Connectivity, Geometry, Mask, Volume3D};
use crate::error::{Error, Result};

/// Result of connected-component labeling.
///
/// `labels[i]` is 0 for background and `1..=n` otherwise. Component 1 is the
/// largest; equal sizes are ordered by their smallest linear voxel index.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    geometry: Geometry,
    labels: Vec<u32>,
    sizes: Vec<usize>,
}

impl Components {
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Voxel counts, indexed by `label - 1`.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Mask of one component (`label` is 1-based).
    pub fn mask(&self, label: u32) -> Mask {
        Mask::new(self.geometry.clone(), self.labels.iter().map(|&l| l == label).collect())
            .expect("labels match geometry")
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so roots are visitation-order independent
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Label connected foreground regions of `mask` (two-pass union-find).
pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> Components {
    let g = mask.geometry();
    let n = g.len();
    // only backward neighbors are needed in a raster scan
    let back: Vec<[i64; 3]> = Geometry::neighbor_offsets(connectivity)
        .into_iter()
        .filter(|d| (d[2], d[1], d[0]) < (0, 0, 0))
        .collect();
    let mut provisional = vec![u32::MAX; n];
    let mut ds = DisjointSet { parent: Vec::new() };
    for idx in mask.indices() {
        let c = g.coords(idx);
        let mut label = u32::MAX;
        for &d in &back {
            if let Some(nb) = g.offset(c, d) {
                let l = provisional[nb];
                if l != u32::MAX {
                    if label == u32::MAX {
                        label = l;
                    } else {
                        ds.union(label, l);
                    }
                }
            }
        }
        if label == u32::MAX {
            label = ds.parent.len() as u32;
            ds.parent.push(label);
        }
        provisional[idx] = label;
    }

    // resolve roots; first-seen order of roots equals smallest voxel index
    let mut root_slot = vec![u32::MAX; ds.parent.len()];
    let mut first_index = Vec::new();
    let mut sizes = Vec::new();
    let mut slot_of = vec![u32::MAX; n];
    for idx in 0..n {
        let p = provisional[idx];
        if p == u32::MAX {
            continue;
        }
        let r = ds.find(p) as usize;
        if root_slot[r] == u32::MAX {
            root_slot[r] = sizes.len() as u32;
            sizes.push(0usize);
            first_index.push(idx);
        }
        let s = root_slot[r];
        sizes[s as usize] += 1;
        slot_of[idx] = s;
    }

    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(first_index[a].cmp(&first_index[b])));
    let mut rank = vec![0u32; sizes.len()];
    for (r, &s) in order.iter().enumerate() {
        rank[s] = r as u32 + 1;
    }
    let labels = slot_of
        .iter()
        .map(|&s| if s == u32::MAX { 0 } else { rank[s as usize] })
        .collect();
    let sizes = order.iter().map(|&s| sizes[s]).collect();
    Components {
        geometry: g.clone(),
        labels,
        sizes,
    }
}

/// Inclusive voxel index range per axis.
pub type BoundingBox = [(usize, usize); 3];

/// Tightest axis-aligned box around the true voxels.
pub fn bounding_box(mask: &Mask) -> Result<BoundingBox> {
    let g = mask.geometry();
    let mut bb: Option<BoundingBox> = None;
    for idx in mask.indices() {
        let c = g.coords(idx);
        let b = bb.get_or_insert([(c[0], c[0]), (c[1], c[1]), (c[2], c[2])]);
        for a in 0..3 {
            b[a].0 = b[a].0.min(c[a]);
            b[a].1 = b[a].1.max(c[a]);
        }
    }
    bb.ok_or(Error::EmptyMask)
}

/// Low-side margin of a centered crop; the odd voxel goes to the high side.
pub fn crop_window(dims: [usize; 3], crop: [usize; 3]) -> Result<BoundingBox> {
    if (0..3).any(|a| crop[a] > dims[a] || crop[a] == 0) {
        return Err(Error::CropTooLarge { crop, dims });
    }
    Ok([0, 1, 2].map(|a| {
        let lo = (dims[a] - crop[a]) / 2;
        (lo, lo + crop[a] - 1)
    }))
}

/// Centered crop to `crop` dims; the origin follows the first kept voxel.
pub fn center_crop(src: &Volume3D, crop: [usize; 3]) -> Result<Volume3D> {
    let w = crop_window(src.dims(), crop)?;
    let g = src.geometry().subgrid(w.map(|r| r.0 as i64), crop)?;
    let mut data = Vec::with_capacity(g.len());
    for k in w[2].0..=w[2].1 {
        for j in w[1].0..=w[1].1 {
            for i in w[0].0..=w[0].1 {
                data.push(src.get(i, j, k));
            }
        }
    }
    Volume3D::new(g, data, src.unit())
}

pub fn center_crop_mask(src: &Mask, crop: [usize; 3]) -> Result<Mask> {
    let w = crop_window(src.dims(), crop)?;
    let g = src.geometry().subgrid(w.map(|r| r.0 as i64), crop)?;
    let mut data = Vec::with_capacity(g.len());
    for k in w[2].0..=w[2].1 {
        for j in w[1].0..=w[1].1 {
            for i in w[0].0..=w[0].1 {
                data.push(src.get(i, j, k));
            }
        }
    }
    Mask::new(g, data)
}

/// Inverse of [`center_crop`]: embed `src` centered in a zero volume of
/// `dims`, using the same margin split.
pub fn center_pad(src: &Volume3D, dims: [usize; 3]) -> Result<Volume3D> {
    let w = crop_window(dims, src.dims())?;
    let g = src.geometry().subgrid(w.map(|r| -(r.0 as i64)), dims)?;
    let sd = src.dims();
    let mut out = vec![0.0; g.len()];
    for k in 0..sd[2] {
        for j in 0..sd[1] {
            for i in 0..sd[0] {
                out[g.index(i + w[0].0, j + w[1].0, k + w[2].0)] = src.get(i, j, k);
            }
        }
    }
    Volume3D::new(g, out, src.unit())
}
