use std::fs;
use std::path::{Path, PathBuf};

use dpet_core::blood_input::{
    extract_idif, fit_mcif, parse_plasma_samples, render_plasma_samples, segment_ica, tissue_shell, McifConfig,
    McifResult, PlasmaSample, TimeActivityCurve,
};
use dpet_core::nifti::{
    meta_path, read_dynamic, read_meta, read_volume, write_meta, write_nifti, write_volume, ClassLabel, DataType, Image,
    Modality, StudyMeta,
};
use dpet_core::parametric::{patlak_map, static_frame_average, suv_map, BloodInputCurve, SuvConfig};
use dpet_core::phantom::{render_mr, simulate_dynamic, simulate_mr, InputModel, PhantomSpec, RegionLabel};
use dpet_core::registration::{motion_correct, MiConfig, RigidTransform};
use dpet_core::tumor::{
    conservative_mask, default_atlas_geometry, export_samples, extract_sample, harmonize_to_atlas, load_samples,
    region_grow, write_sample, Manifest, Modalities, MANIFEST_FILE,
};
use dpet_core::volume::Mask;
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cli::*;
use crate::provenance::{sidecar_for, Record};
use crate::CliError;

/// Stage context shared by every command.
pub struct Ctx {
    pub seed: u64,
    pub workers: usize,
    pub config: Vec<(String, String)>,
}

impl Ctx {
    fn record(&self, command: &str) -> Record {
        Record::new(command, self.config.clone())
    }
}

fn stage<T>(name: &'static str, r: dpet_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|source| CliError::Core { stage: name, source })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn ensure_parent(file: &Path) -> Result<(), CliError> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn read_mask(path: &Path) -> Result<Mask, CliError> {
    Ok(Mask::from_volume(&stage("read mask", read_volume(path))?))
}

fn write_mask(mask: &Mask, path: &Path) -> Result<(), CliError> {
    stage("write mask", write_nifti(&Image::Static(mask.to_volume()), path, DataType::Uint8))
}

/// Population plasma curve used to start the input-function fit.
fn population_input() -> InputModel {
    InputModel::standard_fdg()
}

pub fn phantom_generate(a: &GenerateArgs, ctx: &Ctx) -> Result<(), CliError> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            stage("phantom spec", PhantomSpec::parse(&text))?
        }
        None => PhantomSpec::desk(ctx.seed),
    };
    spec.noise_seed = ctx.seed;
    if let Some(v) = a.noise_scale {
        spec.noise_scale = v;
    }
    if let Some(v) = a.mr_noise {
        spec.mr_noise = v;
    }
    if let Some(artery) = spec.region_mut(RegionLabel::Artery) {
        if let Some(v) = a.artery_recovery {
            artery.recovery = v;
        }
        if let Some(v) = a.artery_spillover {
            artery.spillover = v;
        }
    }
    stage("phantom spec", spec.validate())?;
    if !(a.plasma_noise >= 0.0) || a.plasma_times.iter().any(|t| !(*t >= 0.0)) {
        return Err(CliError::Usage("plasma times and noise must be >= 0".into()));
    }
    create_dir(&a.out)?;
    let mut rec = ctx.record("phantom generate");
    if let Some(p) = &a.spec {
        rec.input(p);
    }

    let pet = stage("simulate PET", simulate_dynamic(&spec))?;
    let out = |name: &str| a.out.join(name);
    stage("write PET", write_nifti(&Image::Dynamic(pet.dynamic), out("pet.nii"), DataType::Float32))?;
    let meta = StudyMeta {
        injected_dose: spec.injected_dose,
        body_weight: spec.body_weight,
        injection_time_offset: 0.0,
        modality: Modality::PetDynamic,
        class_label: None,
    };
    stage("write meta", write_meta(&meta, meta_path(&out("pet.nii"))))?;
    stage("write truth", write_volume(&pet.true_ki, out("true_ki.nii")))?;
    stage("write MR", write_volume(&stage("simulate MR", simulate_mr(&spec))?, out("mr.nii")))?;

    let mut atlas_spec = spec.clone();
    atlas_spec.geometry = default_atlas_geometry();
    let atlas = stage("render atlas", render_mr(&atlas_spec, &atlas_spec.geometry))?;
    stage("write atlas", write_volume(&atlas, out("atlas.nii")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x706c_6173_6d61);
    let samples: Vec<PlasmaSample> = a
        .plasma_times
        .iter()
        .map(|&t| {
            let z: f64 = StandardNormal.sample(&mut rng);
            PlasmaSample {
                t,
                value: spec.input.concentration(t) * (1.0 + a.plasma_noise * z),
            }
        })
        .collect();
    fs::write(out("plasma_samples.csv"), render_plasma_samples(&samples)).map_err(|e| CliError::io(&out("plasma_samples.csv"), e))?;
    let spec_text = stage("render spec", spec.render())?;
    fs::write(out("phantom.txt"), spec_text).map_err(|e| CliError::io(&out("phantom.txt"), e))?;

    for name in ["pet.nii", "pet.sched.csv", "pet.meta.txt", "true_ki.nii", "mr.nii", "atlas.nii", "plasma_samples.csv", "phantom.txt"] {
        rec.output(&out(name));
    }
    rec.write(&out("provenance.txt"))
}

fn mi_config(bins: usize, smoothing: f64) -> MiConfig {
    MiConfig {
        bins,
        smoothing,
        ..MiConfig::default()
    }
}

pub fn motion(a: &MotionCorrectArgs, ctx: &Ctx) -> Result<(), CliError> {
    let dynamic = stage("read PET", read_dynamic(&a.input))?;
    let reference = a.reference.unwrap_or(dynamic.n_frames() - 1);
    let mc = stage("motion correction", motion_correct(&dynamic, reference, &mi_config(a.bins, a.smoothing)))?;
    for (i, f) in mc.flagged.iter().enumerate() {
        if *f {
            warn!("frame {i}: registration flagged");
        }
    }
    ensure_parent(&a.out)?;
    stage("write PET", write_nifti(&Image::Dynamic(mc.dynamic), &a.out, DataType::Float32))?;
    let meta_in = meta_path(&a.input);
    if meta_in.exists() {
        fs::copy(&meta_in, meta_path(&a.out)).map_err(|e| CliError::io(&meta_in, e))?;
    }
    let mut csv = String::from("frame,flagged,inherited,rx_deg,ry_deg,rz_deg,tx_mm,ty_mm,tz_mm\n");
    for (i, t) in mc.corrections.iter().enumerate() {
        let p = t.params().map(|v| v.to_string()).join(",");
        csv.push_str(&format!("{i},{},{},{p}\n", mc.flagged[i], mc.inherited[i]));
    }
    let table = PathBuf::from(format!("{}.motion.csv", a.out.display()));
    fs::write(&table, csv).map_err(|e| CliError::io(&table, e))?;
    let mut rec = ctx.record("motion-correct");
    rec.input(&a.input);
    rec.output(&a.out);
    rec.output(&table);
    rec.write(&sidecar_for(&a.out))
}

pub fn segment_ica_cmd(a: &SegmentIcaArgs, ctx: &Ctx) -> Result<(), CliError> {
    let dynamic = stage("read PET", read_dynamic(&a.input))?;
    let mask = stage("segment ICA", segment_ica(&dynamic, a.early_frame, a.threshold, (a.min_size, a.max_size)))?;
    info!("ICA mask: {} voxels", mask.count());
    ensure_parent(&a.out)?;
    write_mask(&mask, &a.out)?;
    let mut rec = ctx.record("segment-ica");
    rec.input(&a.input);
    rec.output(&a.out);
    rec.write(&sidecar_for(&a.out))
}

pub fn idif(a: &IdifArgs, ctx: &Ctx) -> Result<(), CliError> {
    let dynamic = stage("read PET", read_dynamic(&a.input))?;
    let mask = read_mask(&a.mask)?;
    let curve = stage("IDIF", extract_idif(&dynamic, &mask))?;
    let shell = stage("tissue shell", tissue_shell(&mask, a.shell_width))?;
    let tissue = stage("tissue reference", extract_idif(&dynamic, &shell))?;
    ensure_parent(&a.out)?;
    ensure_parent(&a.tissue_out)?;
    stage("write IDIF", curve.write(&a.out))?;
    stage("write tissue", tissue.write(&a.tissue_out))?;
    let mut rec = ctx.record("idif");
    rec.input(&a.input);
    rec.input(&a.mask);
    rec.output(&a.out);
    rec.output(&a.tissue_out);
    rec.write(&sidecar_for(&a.out))
}

pub fn mcif(a: &McifArgs, ctx: &Ctx) -> Result<(), CliError> {
    let idif = stage("read IDIF", TimeActivityCurve::read(&a.idif))?;
    let tissue = stage("read tissue", TimeActivityCurve::read(&a.tissue))?;
    let anchors = match &a.plasma_samples {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            stage("plasma samples", parse_plasma_samples(&text))?
        }
        None => {
            warn!("no plasma samples: recovery held at {}", a.init_rc);
            vec![]
        }
    };
    let cfg = McifConfig {
        rc_bounds: (a.rc_min, a.rc_max),
        sp_bounds: (a.sp_min, a.sp_max),
        init_rc: a.init_rc,
        init_sp: a.init_sp,
        anchors,
        anchor_weight: a.anchor_weight,
        max_iter: a.max_iter,
        ..McifConfig::default()
    };
    let fit = stage("MCIF fit", fit_mcif(&idif, &tissue, &population_input(), &cfg))?;
    if !fit.converged {
        warn!("MCIF fit did not converge; best parameters kept");
    }
    info!("rc {:.4} sp {:.4} residual rms {:.4}", fit.rc, fit.sp, fit.residual_rms);
    ensure_parent(&a.out)?;
    stage("write MCIF", fit.write(&a.out))?;
    let mut rec = ctx.record("mcif");
    rec.input(&a.idif);
    rec.input(&a.tissue);
    if let Some(p) = &a.plasma_samples {
        rec.input(p);
    }
    rec.output(&a.out);
    rec.write(&sidecar_for(&a.out))
}

pub fn patlak(a: &PatlakArgs, ctx: &Ctx) -> Result<(), CliError> {
    let dynamic = stage("read PET", read_dynamic(&a.input))?;
    let mut rec = ctx.record("patlak");
    rec.input(&a.input);
    let input = match (&a.mcif, &a.idif) {
        (Some(p), _) => {
            rec.input(p);
            BloodInputCurve::from(&stage("read MCIF", McifResult::read(p))?)
        }
        (None, Some(p)) => {
            rec.input(p);
            BloodInputCurve::Sampled(stage("read IDIF", TimeActivityCurve::read(p))?)
        }
        (None, None) => unreachable!("clap requires one input curve"),
    };
    let mask = match &a.mask {
        Some(p) => {
            rec.input(p);
            Some(read_mask(p)?)
        }
        None => None,
    };
    let map = stage("Patlak", patlak_map(&dynamic, &input, a.t_star, mask.as_ref(), ctx.workers))?;
    create_dir(&a.out_dir)?;
    for (name, v) in [("ki.nii", &map.ki), ("v.nii", &map.v), ("r2.nii", &map.r2)] {
        let p = a.out_dir.join(name);
        stage("write map", write_volume(v, &p))?;
        rec.output(&p);
    }
    let p = a.out_dir.join("fit_mask.nii");
    write_mask(&map.mask, &p)?;
    rec.output(&p);
    rec.write(&a.out_dir.join("provenance.txt"))
}

pub fn suv(a: &SuvArgs, ctx: &Ctx) -> Result<(), CliError> {
    let dynamic = stage("read PET", read_dynamic(&a.input))?;
    let mut rec = ctx.record("suv");
    rec.input(&a.input);
    let meta = meta_path(&a.input);
    let (dose, weight) = match (a.dose, a.weight) {
        (Some(d), Some(w)) => (d, w),
        (d, w) => {
            if !meta.exists() {
                return Err(CliError::Usage(format!("--dose/--weight missing and no {}", meta.display())));
            }
            rec.input(&meta);
            let m = stage("read meta", read_meta(&meta))?;
            (d.unwrap_or(m.injected_dose), w.unwrap_or(m.body_weight))
        }
    };
    let cfg = stage("SUV config", SuvConfig::new(dose, weight))?;
    let avg = stage("static window", static_frame_average(&dynamic, (a.window_start, a.window_end)))?;
    let out = stage("SUV", suv_map(&avg, &cfg))?;
    ensure_parent(&a.out)?;
    stage("write SUV", write_volume(&out, &a.out))?;
    rec.output(&a.out);
    rec.write(&sidecar_for(&a.out))
}

/// `--opt x,y,z` as exactly three values.
fn triple<T: Copy + std::fmt::Debug>(opt: &str, v: &[T]) -> Result<[T; 3], CliError> {
    <[T; 3]>::try_from(v).map_err(|_| CliError::Usage(format!("--{opt} takes three comma-separated values, got {v:?}")))
}

pub fn segment_tumor(a: &SegmentTumorArgs, ctx: &Ctx) -> Result<(), CliError> {
    let mr = stage("read MR", read_volume(&a.input))?;
    let g = mr.geometry();
    let seed = match (&a.seed_voxel, &a.seed_mm) {
        (Some(v), _) => triple("seed-voxel", v)?,
        (None, Some(p)) => {
            let p = triple("seed-mm", p)?;
            let idx = g.point_to_index([p[0], p[1], p[2]]);
            if idx.iter().zip(g.dims()).any(|(&x, d)| !(x.round() >= 0.0 && x.round() < d as f64)) {
                return Err(CliError::Usage(format!("seed point {p:?} mm lies outside the image")));
            }
            idx.map(|x| x.round() as usize)
        }
        (None, None) => unreachable!("clap requires a seed"),
    };
    let raw = stage("region growing", region_grow(&mr, seed, a.low, a.high))?;
    let mask = stage("conservative mask", conservative_mask(&raw, a.sigma_mm, a.level))?;
    info!("tumor mask: {} of {} grown voxels kept", mask.count(), raw.count());
    if mask.count() == 0 {
        return Err(CliError::Core {
            stage: "conservative mask",
            source: dpet_core::Error::EmptyMask,
        });
    }
    ensure_parent(&a.out)?;
    write_mask(&mask, &a.out)?;
    let mut rec = ctx.record("segment-tumor");
    rec.input(&a.input);
    rec.output(&a.out);
    rec.write(&sidecar_for(&a.out))
}

const TRANSFORM_FILE: &str = "transform.txt";

fn file_name(p: &Path) -> Result<String, CliError> {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| CliError::Usage(format!("{} has no file name", p.display())))
}

pub fn harmonize(a: &HarmonizeArgs, ctx: &Ctx) -> Result<(), CliError> {
    let mr = stage("read MR", read_volume(&a.mr))?;
    let atlas = stage("read atlas", read_volume(&a.atlas))?;
    let suv = stage("read SUV", read_volume(&a.suv))?;
    let ki = stage("read Ki", read_volume(&a.ki))?;
    let masks = a.mask.iter().map(|p| read_mask(p)).collect::<Result<Vec<_>, _>>()?;
    let names = a.mask.iter().map(|p| file_name(p)).collect::<Result<Vec<_>, _>>()?;
    for n in &names {
        if ["mr.nii", "suv.nii", "ki.nii"].contains(&n.as_str()) {
            return Err(CliError::Usage(format!("mask file name {n} collides with a modality output")));
        }
    }
    let h = stage(
        "harmonize",
        harmonize_to_atlas(&mr, &[suv, ki], &masks, &atlas, &mi_config(a.bins, a.smoothing)),
    )?;
    if !h.registration.converged {
        warn!("atlas registration did not converge; best transform kept");
    }
    create_dir(&a.out_dir)?;
    let mut rec = ctx.record("harmonize");
    for p in [&a.mr, &a.atlas, &a.suv, &a.ki].into_iter().chain(&a.mask) {
        rec.input(p);
    }
    for (name, v) in [("mr.nii", &h.mr), ("suv.nii", &h.others[0]), ("ki.nii", &h.others[1])] {
        let p = a.out_dir.join(name);
        stage("write", write_volume(v, &p))?;
        rec.output(&p);
    }
    for (n, m) in names.iter().zip(&h.masks) {
        let p = a.out_dir.join(n);
        write_mask(m, &p)?;
        rec.output(&p);
    }
    let p = a.out_dir.join(TRANSFORM_FILE);
    stage("write transform", h.registration.transform.write(&p))?;
    rec.output(&p);
    rec.write(&a.out_dir.join("provenance.txt"))
}

pub fn extract(a: &ExtractArgs, ctx: &Ctx) -> Result<(), CliError> {
    let label: ClassLabel = a.label.parse().map_err(CliError::Usage)?;
    let read = |n: &str| stage("read harmonized", read_volume(a.dir.join(n)));
    let modalities = Modalities {
        mr: read("mr.nii")?,
        suv: read("suv.nii")?,
        ki: read("ki.nii")?,
    };
    let mask_path = a.dir.join(&a.mask);
    let mask = read_mask(&mask_path)?;
    let transform = stage("read transform", RigidTransform::read(&a.dir.join(TRANSFORM_FILE)))?;
    let crop = triple("crop", &a.crop)?;
    let samples = stage(
        "extract",
        extract_sample(&modalities, &mask, crop, &a.sample_id, &a.subject, label, transform),
    )?;
    create_dir(&a.out_dir)?;
    let manifest_path = a.out_dir.join(MANIFEST_FILE);
    let mut manifest = if manifest_path.exists() {
        stage("read manifest", Manifest::read(&manifest_path))?
    } else {
        Manifest::default()
    };
    let mut rec = ctx.record("extract");
    for n in ["mr.nii", "suv.nii", "ki.nii", TRANSFORM_FILE] {
        rec.input(&a.dir.join(n));
    }
    rec.input(&mask_path);
    for s in &samples {
        let row = stage("write sample", write_sample(s, &a.out_dir))?;
        for p in [&row.mr_path, &row.suv_path, &row.ki_path, &row.mask_path] {
            rec.output(&a.out_dir.join(p));
        }
        manifest.rows.retain(|r| r.sample_id != row.sample_id);
        manifest.rows.push(row);
    }
    manifest.rows.sort_by(|x, y| x.sample_id.cmp(&y.sample_id));
    stage("write manifest", manifest.write(&manifest_path))?;
    info!("{} sample(s) from {}", samples.len(), a.mask);
    rec.write(&a.out_dir.join(format!("{}.extract.prov.txt", a.sample_id)))
}

pub fn export(a: &ExportArgs, ctx: &Ctx) -> Result<(), CliError> {
    let mut samples = stage("load samples", load_samples(&a.from))?;
    if a.verified {
        for s in &mut samples {
            s.verified = true;
        }
    }
    let manifest = stage("export", export_samples(&samples, &a.out_dir))?;
    let mut rec = ctx.record("export");
    rec.input(&a.from.join(MANIFEST_FILE));
    for r in &manifest.rows {
        for p in [&r.mr_path, &r.suv_path, &r.ki_path, &r.mask_path] {
            rec.output(&a.out_dir.join(p));
        }
    }
    rec.output(&a.out_dir.join(MANIFEST_FILE));
    info!("exported {} sample(s)", manifest.rows.len());
    rec.write(&a.out_dir.join("provenance.txt"))
}
