use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const CONFIG_NOTE: &str = "Every option can also be set in the --config file as `<command>.<option>=value` \
(for example `patlak.t-star=25` or `phantom.generate.noise-scale=2`); \
global options use their bare name (`workers=4`). Command-line values win.";

/// Dynamic FDG PET kinetic modeling: input functions, Patlak Ki maps, SUV
/// and tumor tensor export.
#[derive(Debug, Parser)]
#[command(name = "dpet", version, after_help = CONFIG_NOTE)]
pub struct Cli {
    /// key=value file supplying option values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for data-parallel stages
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    /// Seed for every random draw (phantom noise, plasma sample noise)
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic studies
    #[command(subcommand)]
    Phantom(PhantomCommand),
    /// Register every frame to a reference frame and resample
    MotionCorrect(MotionCorrectArgs),
    /// Segment the internal carotid in an early frame
    SegmentIca(SegmentIcaArgs),
    /// Image-derived input function and its tissue reference
    Idif(IdifArgs),
    /// Fit the model-corrected input function
    Mcif(McifArgs),
    /// Voxel-wise Patlak Ki, V and r2 maps
    Patlak(PatlakArgs),
    /// SUV map from the late static window
    Suv(SuvArgs),
    /// Seeded region growing plus the conservative mask
    SegmentTumor(SegmentTumorArgs),
    /// Bring MR, SUV, Ki and tumor masks into atlas space
    Harmonize(HarmonizeArgs),
    /// Mask and crop harmonized tensors into tumor samples
    Extract(ExtractArgs),
    /// Write the final sample set and manifest
    Export(ExportArgs),
}

#[derive(Debug, Subcommand)]
pub enum PhantomCommand {
    /// Write a simulated PET study, MR, atlas, truth maps and plasma samples
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Phantom description file; the built-in desk phantom when absent
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// PET noise scale (0 = noiseless)
    #[arg(long)]
    pub noise_scale: Option<f64>,
    /// MR noise standard deviation
    #[arg(long)]
    pub mr_noise: Option<f64>,
    /// Fraction of plasma signal kept in artery voxels
    #[arg(long)]
    pub artery_recovery: Option<f64>,
    /// Fraction of surrounding tissue spilling into artery voxels
    #[arg(long)]
    pub artery_spillover: Option<f64>,
    /// Plasma sample times in minutes
    #[arg(long, value_delimiter = ',', default_value = "20,40,60")]
    pub plasma_times: Vec<f64>,
    /// Relative noise on the plasma samples
    #[arg(long, default_value_t = 0.01)]
    pub plasma_noise: f64,
}

#[derive(Debug, Args)]
pub struct MotionCorrectArgs {
    /// Dynamic PET image
    #[arg(long)]
    pub input: PathBuf,
    /// Corrected dynamic image
    #[arg(long)]
    pub out: PathBuf,
    /// Reference frame index (default: last frame)
    #[arg(long)]
    pub reference: Option<usize>,
    /// Histogram bins for mutual information
    #[arg(long, default_value_t = 32)]
    pub bins: usize,
    /// Gaussian smoothing (voxels) for the search
    #[arg(long, default_value_t = 1.0)]
    pub smoothing: f64,
}

#[derive(Debug, Args)]
pub struct SegmentIcaArgs {
    /// Dynamic PET image
    #[arg(long)]
    pub input: PathBuf,
    /// Output mask
    #[arg(long)]
    pub out: PathBuf,
    /// Frame in which the bolus is brightest
    #[arg(long, default_value_t = 6)]
    pub early_frame: usize,
    /// Threshold as a fraction of the frame maximum
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Smallest accepted component (voxels)
    #[arg(long, default_value_t = 10)]
    pub min_size: usize,
    /// Largest accepted component (voxels)
    #[arg(long, default_value_t = 2000)]
    pub max_size: usize,
}

#[derive(Debug, Args)]
pub struct IdifArgs {
    /// Dynamic PET image
    #[arg(long)]
    pub input: PathBuf,
    /// Carotid mask
    #[arg(long)]
    pub mask: PathBuf,
    /// IDIF curve (CSV)
    #[arg(long)]
    pub out: PathBuf,
    /// Tissue reference curve from a shell around the mask (CSV)
    #[arg(long)]
    pub tissue_out: PathBuf,
    /// Shell width in voxels
    #[arg(long, default_value_t = 2)]
    pub shell_width: usize,
}

#[derive(Debug, Args)]
pub struct McifArgs {
    /// IDIF curve (CSV)
    #[arg(long)]
    pub idif: PathBuf,
    /// Tissue reference curve (CSV)
    #[arg(long)]
    pub tissue: PathBuf,
    /// Fitted model
    #[arg(long)]
    pub out: PathBuf,
    /// Plasma samples pinning the scale (CSV `t_min,value`); without them
    /// the recovery stays at --init-rc
    #[arg(long)]
    pub plasma_samples: Option<PathBuf>,
    /// Lower bound on the recovery coefficient
    #[arg(long, default_value_t = 0.05)]
    pub rc_min: f64,
    /// Upper bound on the recovery coefficient
    #[arg(long, default_value_t = 1.5)]
    pub rc_max: f64,
    /// Lower bound on the tissue spillover fraction
    #[arg(long, default_value_t = 0.0)]
    pub sp_min: f64,
    /// Upper bound on the tissue spillover fraction
    #[arg(long, default_value_t = 0.95)]
    pub sp_max: f64,
    /// Starting recovery coefficient
    #[arg(long, default_value_t = 1.0)]
    pub init_rc: f64,
    /// Starting spillover fraction
    #[arg(long, default_value_t = 0.0)]
    pub init_sp: f64,
    /// Weight of the plasma-sample misfit
    #[arg(long, default_value_t = 1.0)]
    pub anchor_weight: f64,
    /// Simplex iteration limit
    #[arg(long, default_value_t = 4000)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct PatlakArgs {
    /// Dynamic PET image
    #[arg(long)]
    pub input: PathBuf,
    /// Fitted model input (from `mcif`)
    #[arg(long, conflicts_with = "idif", required_unless_present = "idif")]
    pub mcif: Option<PathBuf>,
    /// Sampled input curve (CSV, from `idif`)
    #[arg(long)]
    pub idif: Option<PathBuf>,
    /// Output directory for ki.nii, v.nii, r2.nii and fit_mask.nii
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Start of the linear phase (minutes)
    #[arg(long, default_value_t = 20.0)]
    pub t_star: f64,
    /// Restrict fitting to this mask
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SuvArgs {
    /// Dynamic PET image
    #[arg(long)]
    pub input: PathBuf,
    /// SUV image
    #[arg(long)]
    pub out: PathBuf,
    /// Injected dose in MBq (default: the image's .meta sidecar)
    #[arg(long)]
    pub dose: Option<f64>,
    /// Body weight in kg (default: the image's .meta sidecar)
    #[arg(long)]
    pub weight: Option<f64>,
    /// Static window start (minutes)
    #[arg(long, default_value_t = 40.0)]
    pub window_start: f64,
    /// Static window end (minutes)
    #[arg(long, default_value_t = 60.0)]
    pub window_end: f64,
}

#[derive(Debug, Args)]
pub struct SegmentTumorArgs {
    /// MR image
    #[arg(long)]
    pub input: PathBuf,
    /// Output mask
    #[arg(long)]
    pub out: PathBuf,
    /// Seed voxel index `i,j,k`
    #[arg(long, value_delimiter = ',', conflicts_with = "seed_mm", required_unless_present = "seed_mm")]
    pub seed_voxel: Option<Vec<usize>>,
    /// Seed point `x,y,z` in LPS millimetres
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub seed_mm: Option<Vec<f64>>,
    /// Lower intensity bound
    #[arg(long, allow_negative_numbers = true)]
    pub low: f64,
    /// Upper intensity bound
    #[arg(long, allow_negative_numbers = true)]
    pub high: f64,
    /// Smoothing for the conservative mask (mm)
    #[arg(long, default_value_t = 2.0)]
    pub sigma_mm: f64,
    /// Threshold of the smoothed mask
    #[arg(long, default_value_t = 0.6)]
    pub level: f64,
}

#[derive(Debug, Args)]
pub struct HarmonizeArgs {
    /// Subject MR (fixed image)
    #[arg(long)]
    pub mr: PathBuf,
    /// Atlas MR (moving image); its grid is the output grid
    #[arg(long)]
    pub atlas: PathBuf,
    /// SUV image on the MR grid
    #[arg(long)]
    pub suv: PathBuf,
    /// Ki image on the MR grid
    #[arg(long)]
    pub ki: PathBuf,
    /// Tumor mask(s) on the MR grid; each keeps its file name
    #[arg(long, required = true)]
    pub mask: Vec<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Histogram bins for mutual information
    #[arg(long, default_value_t = 32)]
    pub bins: usize,
    /// Gaussian smoothing (voxels) for the search
    #[arg(long, default_value_t = 1.0)]
    pub smoothing: f64,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Directory written by `harmonize`
    #[arg(long)]
    pub dir: PathBuf,
    /// Mask file name inside --dir
    #[arg(long)]
    pub mask: String,
    /// TP or TN
    #[arg(long)]
    pub label: String,
    /// Subject identifier
    #[arg(long)]
    pub subject: String,
    /// Sample identifier; `-1`, `-2`, ... are appended when the mask has
    /// several components
    #[arg(long)]
    pub sample_id: String,
    /// Staging directory; its manifest is updated in place
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Crop dims `x,y,z`
    #[arg(long, value_delimiter = ',', default_value = "170,170,120")]
    pub crop: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Staging directory written by `extract`
    #[arg(long)]
    pub from: PathBuf,
    /// Final directory
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Mark every exported sample as expert-verified
    #[arg(long)]
    pub verified: bool,
}
