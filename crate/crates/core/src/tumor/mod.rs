//! Tumor segmentation, atlas harmonization, and export of masked,
//! cropped multi-modal samples.

mod harmonize;
mod sample;
mod segment;

pub use harmonize::{default_atlas_geometry, harmonize_to_atlas, Harmonized};
pub use sample::{
    export_samples, extract_sample, load_samples, write_sample, Manifest, ManifestRow, Modalities, Provenance, TumorSample,
    DEFAULT_CROP, MANIFEST_FILE, MANIFEST_HEADER,
};
pub use segment::{conservative_mask, region_grow, DEFAULT_CONSERVATIVE_LEVEL};
