use std::path::Path;

use dpet_core::nifti::{decode_nifti, encode_nifti, read_volume, write_volume, DataType, Endianness, Image};
use dpet_core::volume::{Geometry, Unit, Volume3D};
use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_volume(rng: &mut ChaCha8Rng) -> Volume3D {
    let dims = [rng.gen_range(1..7), rng.gen_range(1..7), rng.gen_range(1..7)];
    let vs = [0.5, 0.5, 0.5].map(|b: f64| b + rng.gen_range(0.0..3.0));
    let origin = [0; 3].map(|_| rng.gen_range(-100.0..100.0));
    let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    // small rotations keep the volume nearest to LPS, so no reordering
    let rot = Rotation3::from_scaled_axis(axis.normalize() * rng.gen_range(0.0..0.4));
    let g = Geometry::new(dims, vs, origin, *rot.matrix()).unwrap();
    let data = (0..g.len()).map(|_| rng.gen_range(-1e4f32..1e4) as f64).collect();
    Volume3D::new(g, data, Unit::Activity).unwrap()
}

#[test]
fn float32_round_trips_in_both_byte_orders() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..1000 {
        let v = random_volume(&mut rng);
        let order = if trial % 2 == 0 { Endianness::Little } else { Endianness::Big };
        let bytes = encode_nifti(&Image::Static(v.clone()), DataType::Float32, order);
        let back = decode_nifti(&bytes, None).unwrap().0.into_static().unwrap();
        assert_eq!(back.data(), v.data(), "trial {trial}");
        assert_eq!(back.unit(), Unit::Activity);
        assert!(back.geometry().approx_eq(v.geometry(), 1e-4), "trial {trial}");
    }
}

#[test]
fn int16_round_trip_within_one_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..200 {
        let v = random_volume(&mut rng);
        let bytes = encode_nifti(&Image::Static(v.clone()), DataType::Int16, Endianness::Big);
        let back = decode_nifti(&bytes, None).unwrap().0.into_static().unwrap();
        let step = (v.max() - v.min()).max(1e-12) / 65534.0;
        for (a, b) in back.data().iter().zip(v.data()) {
            assert!((a - b).abs() <= 1.01 * step, "{a} vs {b}");
        }
    }
}

#[test]
fn file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let dir = tempfile::tempdir().unwrap();
    for i in 0..20 {
        let v = random_volume(&mut rng);
        let p = dir.path().join(format!("v{i}.nii"));
        write_volume(&v, &p).unwrap();
        assert_eq!(read_volume(&p).unwrap().data(), v.data());
    }
}

#[test]
fn big_endian_ras_fixture() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/be_int16_ras.nii");
    let v = read_volume(&path).unwrap();
    // RAS on disk: x and y are flipped into LPS order
    assert_eq!(v.dims(), [4, 3, 2]);
    assert_eq!(v.geometry().voxel_size(), [2.0, 3.0, 4.0]);
    assert_eq!(v.geometry().axis_codes(), "LPS");
    let o = v.geometry().origin();
    assert!((o[0] + 16.0).abs() < 1e-9 && (o[1] + 26.0).abs() < 1e-9 && (o[2] - 30.0).abs() < 1e-9, "{o:?}");
    for k in 0..2 {
        for j in 0..3 {
            for i in 0..4 {
                let raw = (3 - i) + 4 * (2 - j) + 12 * k;
                let want = 0.5 * (raw as f64 - 5.0) + 1.0;
                assert_eq!(v.get(i, j, k), want);
            }
        }
    }
}

#[test]
fn endian_twins_parse_identically() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let be = read_volume(dir.join("be_int16_ras.nii")).unwrap();
    let le = read_volume(dir.join("le_int16_ras.nii")).unwrap();
    assert_eq!(be.geometry(), le.geometry());
    assert_eq!(be.data(), le.data());
}
