//! `egoflow vmt`: one vehicle motion tensor per OXTS frame.
//!
//! Frame `t` uses the ego-motion between records `t - 1` and `t`, matching
//! optical flow defined from `t - 1` to `t`. Frame 0 has no predecessor and
//! produces nothing. Per frame the command writes
//!
//! * `vmt/<frame>.png`, the color wheel image
//! * `field/<frame>.flo`, the underlying motion field
//! * with `--planes`: `planes/<frame>_<component>.png` for the six
//!   single-parameter fields and `tensor/<frame>.vmt` holding all six as a
//!   12-channel tensor
//!
//! plus `egomotion.txt` listing the camera-frame motion of every frame.

use std::fmt::Write;
use std::path::PathBuf;

use clap::Args;
use egoflow_core::codec::write_flo;
use egoflow_core::kitti::{load_calib_dir, yaw_only, Calibration, OxtsSequence};
use egoflow_core::vmt::write_tensor;
use egoflow_core::{build_vmt, decompose_vmt, ego_field, Component, EgoMotion, FlowImage, Normalization};
use rayon::prelude::*;

use crate::config::{JobConfig, NormSpec, Overrides};
use crate::io::{frame_stem, require_dir, write_file};
use crate::{usage, CliError, CliResult, FieldOptions};

#[derive(Debug, Clone, Args)]
pub struct VmtArgs {
    /// Directory with the KITTI calibration files.
    #[arg(long, value_name = "DIR")]
    pub calib: PathBuf,
    /// OXTS directory (`data/*.txt` and `timestamps.txt`) or a file with one
    /// record per line.
    #[arg(long, value_name = "PATH")]
    pub oxts: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Keep only the rotation about the camera y axis.
    #[arg(long)]
    pub yaw_only: bool,
    /// auto (per-frame maximum), pNN (sequence quantile, default p98) or
    /// fixed:SCALE in pixels.
    #[arg(long, value_name = "MODE")]
    pub norm: Option<NormSpec>,
    /// Also write the six per-component images and the stacked tensor.
    #[arg(long)]
    pub planes: bool,
    #[command(flatten)]
    pub field: FieldOptions,
}

pub const DEFAULT_NORM: NormSpec = NormSpec::Quantile(98.0);

pub fn run(base: &Overrides, args: VmtArgs) -> CliResult<()> {
    require_dir(&args.calib, "calibration")?;
    if !args.oxts.exists() {
        return Err(usage(format!("OXTS path {} does not exist", args.oxts.display())));
    }
    let job = JobConfig::resolve(base, &args.field, args.norm, DEFAULT_NORM, None, args.out.clone())?;
    let calib = load_calib_dir(&args.calib, job.camera).map_err(|e| usage(format!("{}: {e}", args.calib.display())))?;
    let seq = OxtsSequence::load(&args.oxts).map_err(|e| usage(format!("{}: {e}", args.oxts.display())))?;
    if seq.is_empty() {
        return Err(usage(format!("{} holds no OXTS records", args.oxts.display())));
    }
    log::info!("frame 0 has no predecessor and produces no output");
    let pool = job.pool()?;
    let frames: Vec<usize> = (1..seq.len()).collect();

    let egos: Vec<Result<EgoMotion, String>> = frames
        .iter()
        .map(|&t| {
            seq.egomotion(t, &calib.imu_to_cam)
                .map(|e| if args.yaw_only { yaw_only(&e) } else { e })
                .map_err(|e| e.to_string())
        })
        .collect();

    let norm = pool.install(|| -> CliResult<Normalization> {
        let mut samples: Vec<f64> = egos
            .par_iter()
            .filter_map(|e| e.as_ref().ok())
            .map(|ego| match ego_field(&calib.intrinsics, ego, &job.depth) {
                Ok(f) => job.norm.samples(&f),
                Err(_) => Vec::new(),
            })
            .collect::<Vec<_>>()
            .concat();
        if samples.is_empty() && matches!(job.norm, NormSpec::Quantile(_)) {
            return Ok(Normalization::Fixed(1.0));
        }
        job.norm.resolve(&mut samples)
    })?;
    log::info!("{} frames, normalization {norm:?}, plane depth {} m", frames.len(), job.depth.depth());

    let results: Vec<Result<(), String>> = pool.install(|| {
        frames
            .par_iter()
            .zip(&egos)
            .map(|(&t, ego)| {
                let ego = ego.as_ref().map_err(Clone::clone)?;
                write_frame(&job, &calib, t, ego, norm, args.planes).map_err(|e| e.to_string())
            })
            .collect()
    });

    let mut summary = String::from("# frame wx wy wz tx ty tz dt\n");
    for (&t, ego) in frames.iter().zip(&egos) {
        if let Ok(e) = ego {
            let p = e.parameters();
            let _ = writeln!(
                summary,
                "{} {:?} {:?} {:?} {:?} {:?} {:?} {:?}",
                frame_stem(t),
                p[0],
                p[1],
                p[2],
                p[3],
                p[4],
                p[5],
                e.frame_interval().unwrap_or(f64::NAN)
            );
        }
    }
    write_file(&job.out.join("egomotion.txt"), summary.as_bytes())
        .map_err(|e| CliError::Failed(format!("{}: {e}", job.out.display())))?;

    let failed: Vec<usize> = frames
        .iter()
        .zip(&results)
        .filter_map(|(&t, r)| {
            r.as_ref().err().map(|e| {
                log::error!("frame {t}: {e}");
                t
            })
        })
        .collect();
    if failed.is_empty() {
        log::info!("wrote {} frames to {}", frames.len(), job.out.display());
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} of {} frames failed", failed.len(), frames.len())))
    }
}

fn write_frame(
    job: &JobConfig,
    calib: &Calibration,
    t: usize,
    ego: &EgoMotion,
    norm: Normalization,
    planes: bool,
) -> Result<(), Box<dyn std::error::Error>> {
    let intr = &calib.intrinsics;
    let stem = frame_stem(t);
    let image = build_vmt(intr, ego, &job.depth, norm)?;
    write_file(&job.out.join("vmt").join(format!("{stem}.png")), &image.to_png()?)?;
    let field = ego_field(intr, ego, &job.depth)?;
    write_file(&job.out.join("field").join(format!("{stem}.flo")), &write_flo(&FlowImage::dense(field))?)?;
    if planes {
        let d = decompose_vmt(intr, ego, &job.depth, norm)?;
        for c in Component::ALL {
            let path = job.out.join("planes").join(format!("{stem}_{}.png", c.name()));
            write_file(&path, &d.image(c).to_png()?)?;
        }
        let fields: Vec<_> = d.fields().iter().collect();
        write_file(&job.out.join("tensor").join(format!("{stem}.vmt")), &write_tensor(&fields)?)?;
    }
    Ok(())
}
