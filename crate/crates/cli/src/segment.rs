//! `egoflow segment`: ego-motion compensation, thresholding and evaluation.
//!
//! The predicted camera-induced flow comes either from the plane model
//! (`--calib` and `--oxts`) or from precomputed flow files (`--predicted`),
//! for example the exact rigid flow written by `egoflow synth`. Masks go to
//! `masks/<frame>.png`; `report.txt` and `report.kv` summarize the run.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use egoflow_core::keyvalue::KeyValues;
use egoflow_core::kitti::{load_calib_dir, yaw_only, Calibration, OxtsSequence};
use egoflow_core::segment::{compensate, evaluate, threshold_segment};
use egoflow_core::{ego_field, EvalReport, FlowImage, MotionField, SegMask};
use rayon::prelude::*;

use crate::config::{JobConfig, NormSpec, Overrides};
use crate::io::{frame_stem, list_frames, read_flow, require_dir, write_file};
use crate::{usage, CliError, CliResult, FieldOptions};

#[derive(Debug, Clone, Args)]
pub struct SegmentArgs {
    /// Directory of observed flow, one `<frame>.png` (KITTI) or
    /// `<frame>.flo` per frame.
    #[arg(long, value_name = "DIR")]
    pub flow: PathBuf,
    #[arg(long, value_name = "DIR", requires = "oxts")]
    pub calib: Option<PathBuf>,
    #[arg(long, value_name = "PATH", requires = "calib")]
    pub oxts: Option<PathBuf>,
    /// Directory of predicted camera-induced flow, replacing the plane model.
    #[arg(long, value_name = "DIR", conflicts_with_all = ["calib", "oxts", "yaw_only"])]
    pub predicted: Option<PathBuf>,
    /// Ground-truth masks, `<frame>.png`, nonzero meaning moving.
    #[arg(long, value_name = "DIR")]
    pub gt: Option<PathBuf>,
    /// Residual magnitude in pixels above which a pixel is moving.
    #[arg(long, value_name = "PIXELS")]
    pub tau: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Apply a 3x3 majority filter to the masks.
    #[arg(long)]
    pub majority: bool,
    /// Predict with the yaw rotation only.
    #[arg(long)]
    pub yaw_only: bool,
    #[command(flatten)]
    pub field: FieldOptions,
}

enum Predictor {
    Plane { calib: Calibration, seq: OxtsSequence, yaw_only: bool },
    Files(BTreeMap<usize, PathBuf>),
}

/// Why a frame produced no result.
enum FrameError {
    /// Inputs that cannot belong together, such as mismatched sizes.
    Invalid(String),
    Failed(String),
    /// Frame 0 under the plane model.
    Skipped,
}

struct FrameResult {
    moving_pixels: usize,
    report: Option<EvalReport>,
}

fn check_size(what: &str, flow: &FlowImage, width: usize, height: usize) -> Result<(), FrameError> {
    if flow.width() == width && flow.height() == height {
        Ok(())
    } else {
        Err(FrameError::Invalid(format!(
            "observed flow is {}x{} but {what} is {width}x{height}",
            flow.width(),
            flow.height()
        )))
    }
}

impl Predictor {
    fn predict(&self, t: usize, observed: &FlowImage, job: &JobConfig) -> Result<MotionField, FrameError> {
        match self {
            Predictor::Plane { calib, seq, yaw_only: yaw } => {
                if t == 0 {
                    return Err(FrameError::Skipped);
                }
                let i = &calib.intrinsics;
                check_size("the calibrated image", observed, i.width(), i.height())?;
                let ego = seq.egomotion(t, &calib.imu_to_cam).map_err(|e| FrameError::Failed(e.to_string()))?;
                let ego = if *yaw { yaw_only(&ego) } else { ego };
                ego_field(i, &ego, &job.depth).map_err(|e| FrameError::Failed(e.to_string()))
            }
            Predictor::Files(files) => {
                let path = files.get(&t).ok_or_else(|| FrameError::Failed("no predicted flow for this frame".into()))?;
                let predicted = read_flow(path).map_err(|e| FrameError::Failed(e.to_string()))?;
                check_size("the predicted flow", observed, predicted.width(), predicted.height())?;
                Ok(predicted.into_field())
            }
        }
    }
}

fn process(
    t: usize,
    path: &Path,
    predictor: &Predictor,
    gt: Option<&BTreeMap<usize, PathBuf>>,
    job: &JobConfig,
    majority: bool,
) -> Result<FrameResult, FrameError> {
    let observed = read_flow(path).map_err(|e| FrameError::Failed(e.to_string()))?;
    let predicted = predictor.predict(t, &observed, job)?;
    let residual = compensate(&observed, &predicted).map_err(|e| FrameError::Invalid(e.to_string()))?;
    let mut mask = threshold_segment(&residual, job.tau).map_err(|e| FrameError::Failed(e.to_string()))?;
    if majority {
        mask = mask.majority_filtered();
    }
    let png = mask.to_png().map_err(|e| FrameError::Failed(e.to_string()))?;
    write_file(&job.out.join("masks").join(format!("{}.png", frame_stem(t))), &png)
        .map_err(|e| FrameError::Failed(e.to_string()))?;
    let report = match gt {
        None => None,
        Some(files) => {
            let gt_path = files.get(&t).ok_or_else(|| FrameError::Failed("no ground-truth mask".into()))?;
            let bytes = std::fs::read(gt_path).map_err(|e| FrameError::Failed(format!("{}: {e}", gt_path.display())))?;
            let truth = SegMask::from_png(&bytes).map_err(|e| FrameError::Failed(format!("{}: {e}", gt_path.display())))?;
            Some(evaluate(&mask, &truth).map_err(|e| FrameError::Invalid(format!("ground truth: {e}")))?)
        }
    };
    Ok(FrameResult { moving_pixels: mask.moving_count(), report })
}

pub fn run(base: &Overrides, args: SegmentArgs) -> CliResult<()> {
    require_dir(&args.flow, "flow")?;
    let job = JobConfig::resolve(base, &args.field, None, NormSpec::Auto, args.tau, args.out.clone())?;
    let predictor = match (&args.predicted, &args.calib, &args.oxts) {
        (Some(dir), _, _) => {
            require_dir(dir, "predicted flow")?;
            Predictor::Files(list_frames(dir, &["png", "flo"])?.into_iter().collect())
        }
        (None, Some(calib), Some(oxts)) => {
            require_dir(calib, "calibration")?;
            if !oxts.exists() {
                return Err(usage(format!("OXTS path {} does not exist", oxts.display())));
            }
            Predictor::Plane {
                calib: load_calib_dir(calib, job.camera).map_err(|e| usage(format!("{}: {e}", calib.display())))?,
                seq: OxtsSequence::load(oxts).map_err(|e| usage(format!("{}: {e}", oxts.display())))?,
                yaw_only: args.yaw_only,
            }
        }
        _ => return Err(usage("give either --predicted or both --calib and --oxts")),
    };
    let gt = match &args.gt {
        None => None,
        Some(dir) => {
            require_dir(dir, "ground truth")?;
            Some(list_frames(dir, &["png"])?.into_iter().collect::<BTreeMap<_, _>>())
        }
    };
    let frames = list_frames(&args.flow, &["png", "flo"])?;
    if frames.is_empty() {
        return Err(usage(format!("no flow frames in {}", args.flow.display())));
    }

    let pool = job.pool()?;
    let results: Vec<Result<FrameResult, FrameError>> = pool.install(|| {
        frames.par_iter().map(|(t, path)| process(*t, path, &predictor, gt.as_ref(), &job, args.majority)).collect()
    });

    let mut text = String::new();
    let mut kv = KeyValues::new();
    kv.push("tau", job.tau);
    kv.push("predictor", if args.predicted.is_some() { "files" } else { "plane" });
    if args.predicted.is_none() {
        kv.push("depth", job.depth.depth());
    }
    let _ = writeln!(text, "tau {} px", job.tau);
    let (mut invalid, mut failed, mut done) = (0, 0, 0);
    let mut reports = Vec::new();
    for ((t, _), result) in frames.iter().zip(&results) {
        let stem = frame_stem(*t);
        match result {
            Ok(r) => {
                done += 1;
                kv.push(format!("frame.{stem}.moving_pixels"), r.moving_pixels);
                match &r.report {
                    Some(rep) => {
                        let _ = writeln!(text, "frame {stem}: {} moving px, {rep}", r.moving_pixels);
                        for (k, v) in rep.to_key_values(&format!("frame.{stem}.")).iter() {
                            kv.push(k, v);
                        }
                        reports.push(*rep);
                    }
                    None => {
                        let _ = writeln!(text, "frame {stem}: {} moving px", r.moving_pixels);
                    }
                }
            }
            Err(FrameError::Skipped) => {
                log::info!("frame {stem} has no predecessor and is skipped");
            }
            Err(FrameError::Invalid(e)) => {
                invalid += 1;
                log::error!("frame {stem}: {e}");
                let _ = writeln!(text, "frame {stem}: invalid input: {e}");
            }
            Err(FrameError::Failed(e)) => {
                failed += 1;
                log::error!("frame {stem}: {e}");
                let _ = writeln!(text, "frame {stem}: failed: {e}");
            }
        }
    }
    kv.push("frames", done);
    if !reports.is_empty() {
        let total = EvalReport::aggregate(&reports);
        let _ = writeln!(text, "total over {} frames: {total}", reports.len());
        for (k, v) in total.to_key_values("total.").iter() {
            kv.push(k, v);
        }
    }
    let write = |name: &str, body: &str| {
        write_file(&job.out.join(name), body.as_bytes()).map_err(|e| CliError::Failed(format!("{name}: {e}")))
    };
    write("report.txt", &text)?;
    write("report.kv", &kv.to_string())?;

    if invalid > 0 {
        Err(usage(format!("{invalid} frames had inconsistent inputs")))
    } else if failed > 0 {
        Err(CliError::Failed(format!("{failed} of {} frames failed", frames.len())))
    } else {
        log::info!("segmented {done} frames into {}", job.out.display());
        Ok(())
    }
}
