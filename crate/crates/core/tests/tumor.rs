use dpet_core::nifti::ClassLabel;
use dpet_core::phantom::{region_mask, render_mr, simulate_mr, PhantomSpec, RegionLabel};
use dpet_core::registration::MiConfig;
use dpet_core::tumor::{
    conservative_mask, default_atlas_geometry, export_samples, extract_sample, harmonize_to_atlas, load_samples,
    region_grow, Manifest, Modalities, DEFAULT_CROP, MANIFEST_FILE,
};
use dpet_core::volume::{Mask, Unit, Volume3D};

/// Desk phantom plus its atlas: the same anatomy on the 1 mm atlas grid,
/// displaced by `offset` mm.
fn subject_and_atlas(offset: [f64; 3]) -> (PhantomSpec, Volume3D, PhantomSpec, Volume3D) {
    let mut spec = PhantomSpec::desk(5);
    spec.mr_noise = 2.0;
    let mr = simulate_mr(&spec).unwrap();
    let mut atlas_spec = spec.clone();
    atlas_spec.geometry = default_atlas_geometry();
    for r in &mut atlas_spec.regions {
        for a in 0..3 {
            r.center[a] += offset[a];
        }
    }
    let atlas = render_mr(&atlas_spec, &atlas_spec.geometry).unwrap();
    (spec, mr, atlas_spec, atlas)
}

fn dice(a: &Mask, b: &Mask) -> f64 {
    let both = a.data().iter().zip(b.data()).filter(|(x, y)| **x && **y).count();
    2.0 * both as f64 / (a.count() + b.count()) as f64
}

fn centroid(v: &Volume3D) -> [f64; 3] {
    let g = v.geometry();
    let mut acc = [0.0; 3];
    let mut total = 0.0;
    for (idx, &w) in v.data().iter().enumerate() {
        let p = g.index_to_point(g.coords(idx).map(|x| x as f64));
        for a in 0..3 {
            acc[a] += w * p[a];
        }
        total += w;
    }
    acc.map(|x| x / total)
}

#[test]
fn known_offset_is_undone_by_harmonization() {
    let offset = [4.0, 0.0, 0.0];
    let (spec, mr, atlas_spec, atlas) = subject_and_atlas(offset);
    let tumor = region_mask(&spec, RegionLabel::TumorTp);
    let ki = tumor.to_volume().with_unit(Unit::PerMinute);
    let h = harmonize_to_atlas(&mr, &[ki], &[tumor], &atlas, &MiConfig::default()).unwrap();

    let t = h.registration.transform;
    let (angle, _) = t.magnitude();
    assert!(angle < 0.5, "{t:?}");
    for a in 0..3 {
        assert!((t.translation[a] - offset[a]).abs() < 0.5, "{t:?}");
    }
    assert_eq!(h.mr.geometry().dims(), [240, 240, 155]);
    assert!(h.masks[0].geometry().approx_eq(atlas.geometry(), 0.0));
    let expected = region_mask(&atlas_spec, RegionLabel::TumorTp);
    assert!(dice(&h.masks[0], &expected) > 0.9, "dice {}", dice(&h.masks[0], &expected));
    // every modality lands on the atlas anatomy
    let want = centroid(&expected.to_volume());
    for v in [&h.others[0], &h.masks[0].to_volume()] {
        let got = centroid(v);
        assert!((0..3).all(|a| (got[a] - want[a]).abs() < 0.5), "{got:?} vs {want:?}");
    }
}

#[test]
fn segmented_tumor_exports_masked_crops() {
    let (spec, mr, _, atlas) = subject_and_atlas([0.0; 3]);
    let g = &spec.geometry;
    let center = spec.region(RegionLabel::TumorTp).unwrap().center;
    let seed = g.point_to_index(center).map(|x| x.round() as usize);
    let raw = region_grow(&mr, seed, 100.0, 120.0).unwrap();
    let truth = region_mask(&spec, RegionLabel::TumorTp);
    assert!(dice(&raw, &truth) > 0.9);
    let mask = conservative_mask(&raw, 2.0, 0.6).unwrap();
    assert!(mask.is_subset_of(&raw) && mask.count() > 0);

    let suv = mr.map(|v| v / 40.0).unwrap();
    let h = harmonize_to_atlas(&mr, &[suv.clone(), suv], &[mask], &atlas, &MiConfig::default()).unwrap();
    let m = Modalities {
        mr: h.mr.clone(),
        suv: h.others[0].clone(),
        ki: h.others[1].clone(),
    };
    let samples = extract_sample(&m, &h.masks[0], DEFAULT_CROP, "s1-tp", "s1", ClassLabel::Tp, h.registration.transform).unwrap();
    assert_eq!(samples.len(), 1);
    let s = &samples[0];
    assert_eq!(s.mask.dims(), [170, 170, 120]);
    assert_eq!(s.voxel_count(), h.masks[0].count());
    for v in [&s.modalities.mr, &s.modalities.suv, &s.modalities.ki] {
        assert_eq!(v.dims(), [170, 170, 120]);
        assert!(v.data().iter().zip(s.mask.data()).all(|(x, &inside)| inside || *x == 0.0));
    }

    let dir = tempfile::tempdir().unwrap();
    let manifest = export_samples(&samples, dir.path()).unwrap();
    assert_eq!(manifest.rows.len(), 1);
    assert_eq!(Manifest::read(&dir.path().join(MANIFEST_FILE)).unwrap(), manifest);
    let back = load_samples(dir.path()).unwrap();
    assert_eq!(back[0].mask, s.mask);
    assert_eq!(back[0].provenance, s.provenance);
    for (a, b) in back[0].modalities.mr.data().iter().zip(s.modalities.mr.data()) {
        assert_eq!(*a, *b as f32 as f64);
    }

    // re-export is byte-identical
    let again = tempfile::tempdir().unwrap();
    export_samples(&samples, again.path()).unwrap();
    for row in &manifest.rows {
        for p in [&row.mr_path, &row.suv_path, &row.ki_path, &row.mask_path] {
            assert_eq!(std::fs::read(dir.path().join(p)).unwrap(), std::fs::read(again.path().join(p)).unwrap());
        }
    }
}

#[test]
fn file_counts_scale_with_samples() {
    let g = dpet_core::volume::Geometry::centered([40, 8, 8], [1.0; 3], [0.0; 3]).unwrap();
    let mask = Mask::from_fn(g.clone(), |[i, j, k]| i % 2 == 0 && (3..5).contains(&j) && (3..5).contains(&k) && (2..38).contains(&i));
    let one = Volume3D::filled(g.clone(), 1.0, Unit::Unitless);
    let m = Modalities {
        mr: one.clone(),
        suv: one.clone(),
        ki: one,
    };
    let samples = extract_sample(&m, &mask, [36, 6, 6], "s", "subj", ClassLabel::Tn, Default::default()).unwrap();
    assert_eq!(samples.len(), 18);
    let dir = tempfile::tempdir().unwrap();
    let manifest = export_samples(&samples, dir.path()).unwrap();
    assert_eq!(manifest.rows.len(), 18);
    let nii = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "nii"))
        .count();
    assert_eq!(nii, 18 * 4);

    let empty = tempfile::tempdir().unwrap();
    export_samples(&[], empty.path()).unwrap();
    let text = std::fs::read_to_string(empty.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(text.lines().count(), 1);
}
