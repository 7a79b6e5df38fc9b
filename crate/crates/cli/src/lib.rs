//! Subcommands of the `instloc` binary, callable as functions.

use std::fmt;
use std::path::{Path, PathBuf};

use instloc::eval::{evaluate_run, EvalReport, EvalThresholds};
use instloc::ingest::synth::{gen_synth_scene, parse_synth_sequence, SceneSpec, SYNTH_PRODUCER};
use instloc::ingest::tum::{dataset_intrinsics, parse_tum_frames, DEFAULT_MAX_DT};
use instloc::ingest::{build_memory, load_detections, DetectionFile, DetectionFilter, FrameSampling, PosedFrame};
use instloc::instance_map::store::{load_memory, save_memory};
use instloc::instance_map::ClusteringConfig;
use instloc::localizer::{localize_frames, save_predictions, Prediction, PredictionStatus, PreparedMap, RegistrationConfig};
use instloc_fusion::gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
use instloc_fusion::toy::{toy_train, ToyConfig, ToyReport};
use serde::{Deserialize, Serialize};

/// Exit status 1: the inputs could not be used.
pub const EXIT_INPUT: i32 = 1;
/// Exit status 2: inputs were fine but localization or a check failed.
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Failure(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<instloc::Error> for CliError {
    fn from(e: instloc::Error) -> Self {
        use instloc::Error as E;
        match e {
            E::NotEnoughDetections { .. } | E::DegenerateInput(_) | E::LocalizationFailed(_) => {
                CliError::Failure(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<instloc_fusion::FusionError> for CliError {
    fn from(e: instloc_fusion::FusionError) -> Self {
        use instloc_fusion::FusionError as E;
        match e {
            E::Numerical(_) => CliError::Failure(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Tum,
    Synth,
}

/// Guesses the layout from the detection file's producer.
pub fn detect_format(detections: &DetectionFile) -> DatasetFormat {
    if detections.header.producer == SYNTH_PRODUCER {
        DatasetFormat::Synth
    } else {
        DatasetFormat::Tum
    }
}

/// Frames of a dataset directory; poses are read only when `posed`.
pub fn load_frames(dir: &Path, format: DatasetFormat, posed: bool) -> CliResult<Vec<PosedFrame>> {
    Ok(match format {
        DatasetFormat::Synth => parse_synth_sequence(dir, posed)?,
        DatasetFormat::Tum => parse_tum_frames(dir, DEFAULT_MAX_DT, dataset_intrinsics(dir)?, posed)?,
    })
}

#[derive(Debug, Clone)]
pub struct BuildMapArgs {
    pub dataset: PathBuf,
    pub format: DatasetFormat,
    pub detections: PathBuf,
    pub stride: usize,
    pub voxel: f64,
    pub eps_iou: f64,
    pub eps_l2: f64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildMapSummary {
    pub frames: usize,
    pub mapped_frames: usize,
    pub objects: usize,
    pub points: usize,
}

pub fn build_map(args: &BuildMapArgs) -> CliResult<BuildMapSummary> {
    let detections = load_detections(&args.detections)?;
    let frames = load_frames(&args.dataset, args.format, true)?;
    let sampling = FrameSampling::new(args.stride, 0)?;
    let clustering = ClusteringConfig {
        eps_iou: args.eps_iou,
        eps_l2: args.eps_l2,
        voxel: args.voxel,
        ..ClusteringConfig::default()
    };
    clustering.validate()?;
    let filter = DetectionFilter {
        cloud_voxel: Some(args.voxel),
        ..DetectionFilter::default()
    };
    let memory = build_memory(&frames, &detections.records, &clustering, sampling, &filter)?;
    save_memory(&args.out, &memory)?;
    Ok(BuildMapSummary {
        frames: frames.len(),
        mapped_frames: sampling.select(&frames).len(),
        objects: memory.len(),
        points: memory.objects.iter().map(|o| o.cloud.len()).sum(),
    })
}

#[derive(Debug, Clone)]
pub struct LocalizeArgs {
    pub map: PathBuf,
    pub dataset: PathBuf,
    pub detections: PathBuf,
    pub format: Option<DatasetFormat>,
    pub stride: usize,
    pub offset: usize,
    pub k_best: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalizeSummary {
    pub queries: usize,
    pub localized: usize,
}

/// Writes one prediction per query frame. Fails (exit 2) only when no
/// query frame could be localized.
pub fn localize(args: &LocalizeArgs) -> CliResult<LocalizeSummary> {
    let memory = load_memory(&args.map)?;
    let detections = load_detections(&args.detections)?;
    let format = args.format.unwrap_or_else(|| detect_format(&detections));
    let frames = load_frames(&args.dataset, format, false)?;
    let sampling = FrameSampling::new(args.stride, args.offset)?;
    let queries = sampling.select(&frames);
    if queries.is_empty() {
        return Err(CliError::Input(format!(
            "no frames selected by stride {} offset {}",
            args.stride, args.offset
        )));
    }
    let config = RegistrationConfig {
        k_best: args.k_best,
        ..RegistrationConfig::default()
    };
    config.validate()?;
    let map = PreparedMap::new(&memory, &config)?;
    let preds = localize_frames(&queries, &detections.records, &map, &DetectionFilter::default(), &config);
    save_predictions(&args.out, &preds)?;
    let summary = LocalizeSummary {
        queries: preds.len(),
        localized: count_ok(&preds),
    };
    if summary.localized == 0 {
        return Err(CliError::Failure(format!("none of {} query frames localized", summary.queries)));
    }
    Ok(summary)
}

fn count_ok(preds: &[Prediction]) -> usize {
    preds.iter().filter(|p| p.status == PredictionStatus::Ok).count()
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub te_max: f64,
    pub re_max: f64,
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<EvalReport> {
    let thresholds = EvalThresholds {
        te_max: args.te_max,
        re_max: args.re_max,
    };
    thresholds.validate()?;
    let report = evaluate_run(&args.pred, &args.gt, thresholds)?;
    if let Some(p) = &args.report {
        write_json(p, &report)?;
    }
    if let Some(p) = &args.csv {
        std::fs::write(p, report.to_csv()).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct GenSynthSummary {
    pub frames: usize,
    pub skipped: usize,
    pub objects: usize,
    pub detections: usize,
}

pub fn gen_synth(config: &Path, seed: u64, out: &Path) -> CliResult<GenSynthSummary> {
    let text = std::fs::read_to_string(config).map_err(|e| CliError::Input(format!("{}: {e}", config.display())))?;
    let spec: SceneSpec =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", config.display())))?;
    let ds = gen_synth_scene(&spec, seed)?;
    ds.write(out)?;
    Ok(GenSynthSummary {
        frames: ds.frames.len(),
        skipped: ds.skipped.len(),
        objects: ds.objects.len(),
        detections: ds.detections.records.iter().map(|r| r.detections.len()).sum(),
    })
}

/// Pass/fail thresholds for the toy training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyCriteria {
    pub fused_rank1: f64,
    pub fused_map: f64,
    pub single_modality_rank1: f64,
}

impl Default for ToyCriteria {
    fn default() -> Self {
        Self {
            fused_rank1: 1.0,
            fused_map: 0.99,
            single_modality_rank1: 0.875,
        }
    }
}

impl ToyCriteria {
    pub fn accepts(&self, r: &ToyReport) -> bool {
        r.fused.rank1 >= self.fused_rank1
            && r.fused.map >= self.fused_map
            && r.rgb_only.rank1 >= self.single_modality_rank1
            && r.depth_only.rank1 >= self.single_modality_rank1
            && r.final_loss < r.initial_loss
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ToySection {
    pub criteria: ToyCriteria,
    pub report: ToyReport,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FusionCheckReport {
    pub grad_check: GradCheckReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub toy: Option<ToySection>,
    pub passed: bool,
}

pub fn fusion_check(seed: u64, eps: f64, train_toy: bool, save_params: Option<&Path>) -> CliResult<FusionCheckReport> {
    let cfg = GradCheckConfig {
        eps,
        ..GradCheckConfig::default()
    };
    let grad = grad_check(seed, &cfg)?;
    let toy = if train_toy {
        let (params, report) = toy_train(&ToyConfig::default(), seed)?;
        if let Some(p) = save_params {
            instloc_fusion::save_params(&params, p)?;
        }
        let criteria = ToyCriteria::default();
        Some(ToySection {
            passed: criteria.accepts(&report),
            criteria,
            report,
        })
    } else {
        None
    };
    let passed = grad.passed && toy.as_ref().is_none_or(|t| t.passed);
    Ok(FusionCheckReport {
        grad_check: grad,
        toy,
        passed,
    })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
