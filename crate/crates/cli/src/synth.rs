//! `egoflow synth`: a seeded synthetic suite laid out like KITTI raw data.
//!
//! Each scene `scene_NNNN/` (and the extra `parallax/` scene) holds
//!
//! * the three calibration files and `oxts/` with two records (frames 0
//!   and 1)
//! * `flow/0000000001.png`, exact observed flow in KITTI format
//! * `gt/0000000001.png`, the moving-object mask
//! * `rigid/0000000001.png`, the flow the scene would show with every object
//!   at rest, i.e. the camera-induced flow under the true depth
//! * `scene.txt`, the scene in the synth text format
//!
//! The ego-motion stored in `scene.txt` is the one read back from the
//! written OXTS and calibration files, so re-ingesting them is lossless.
//! `suite.txt` collects the numbered scenes.

use std::path::{Path, PathBuf};

use clap::Args;
use egoflow_core::codec::write_kitti_flow_png;
use egoflow_core::keyvalue::KeyValues;
use egoflow_core::kitti::{load_calib_dir, write_calib_dir, OxtsRecord, OxtsSequence, RigidTransform};
use egoflow_core::synth::{make_suite, parallax_ambiguity_scene, render_flow, render_flow_noisy, write_suite, SceneSpec};
use egoflow_core::{CameraIntrinsics, EgoMotion};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::config::Overrides;
use crate::io::{frame_stem, write_file};
use crate::{usage, CliError, CliResult};

/// Camera used for the written calibration.
pub const SYNTH_CAMERA: u8 = 2;
/// Time between the two OXTS records, seconds.
pub const SYNTH_FRAME_INTERVAL: f64 = 0.1;
/// Background and object depth of the parallax scene, meters.
pub const PARALLAX_DEPTHS: (f64, f64) = (20.0, 8.0);

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    /// Number of generated scenes, at least 1.
    #[arg(long)]
    pub count: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Standard deviation of additive Gaussian noise on the observed flow,
    /// pixels.
    #[arg(long, default_value_t = 0.0, value_name = "PIXELS")]
    pub noise: f64,
}

/// IMU axes (x forward, y left, z up) in camera axes (x right, y down,
/// z forward).
pub fn ideal_imu_to_cam() -> RigidTransform {
    let r = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
    RigidTransform::new(r, Vector3::zeros()).expect("permutation is a rotation")
}

/// Writes calibration and OXTS files encoding `ego` and returns the
/// ego-motion as read back from them.
fn write_kitti_inputs(dir: &Path, intr: &CameraIntrinsics, ego: &EgoMotion) -> Result<EgoMotion, Box<dyn std::error::Error>> {
    let imu_to_cam = ideal_imu_to_cam();
    let to_imu = imu_to_cam.inverse();
    let rate = to_imu.rotate(&ego.omega()) / SYNTH_FRAME_INTERVAL;
    let velocity = to_imu.rotate(&ego.translation()) / SYNTH_FRAME_INTERVAL;
    let record = OxtsRecord::from_motion(velocity.into(), rate.into())?;
    let seq = OxtsSequence {
        records: vec![record.clone().with_timestamp(0.0), record.with_timestamp(SYNTH_FRAME_INTERVAL)],
    };
    write_calib_dir(dir, &imu_to_cam, intr, SYNTH_CAMERA)?;
    seq.write_dir(&dir.join("oxts"))?;
    let calib = load_calib_dir(dir, SYNTH_CAMERA)?;
    let seq = OxtsSequence::load(&dir.join("oxts"))?;
    Ok(seq.egomotion(1, &calib.imu_to_cam)?)
}

fn write_scene(dir: &Path, scene: &SceneSpec, noise: f64, seed: u64) -> Result<(), Box<dyn std::error::Error>> {
    let stem = frame_stem(1);
    let (flow, mask) = if noise > 0.0 { render_flow_noisy(scene, noise, seed)? } else { render_flow(scene) };
    let (rigid, _) = render_flow(&scene.frozen());
    write_file(&dir.join("flow").join(format!("{stem}.png")), &write_kitti_flow_png(&flow)?)?;
    write_file(&dir.join("gt").join(format!("{stem}.png")), &mask.to_png()?)?;
    write_file(&dir.join("rigid").join(format!("{stem}.png")), &write_kitti_flow_png(&rigid)?)?;
    write_file(&dir.join("scene.txt"), scene.to_text().as_bytes())?;
    Ok(())
}

fn generated_scene(dir: &Path, scene: &SceneSpec, noise: f64, seed: u64) -> Result<SceneSpec, Box<dyn std::error::Error>> {
    let ego = write_kitti_inputs(dir, scene.intrinsics(), scene.ego())?;
    let scene = scene.with_ego(ego);
    write_scene(dir, &scene, noise, seed)?;
    Ok(scene)
}

/// The motion-parallax case: a mover whose flow equals that of the plane
/// behind it.
fn parallax_scene(dir: &Path, noise: f64, seed: u64) -> Result<SceneSpec, Box<dyn std::error::Error>> {
    let intr = CameraIntrinsics::new(186.0, 186.0, 159.5, 48.0, 320, 97)?;
    let ego = EgoMotion::new([0.0, 0.004, 0.0], [0.05, 0.0, 0.18])?;
    let ego = write_kitti_inputs(dir, &intr, &ego)?;
    let (plane, object) = PARALLAX_DEPTHS;
    let scene = parallax_ambiguity_scene(intr, ego, plane, object)?;
    write_scene(dir, &scene, noise, seed)?;
    Ok(scene)
}

pub fn scene_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("scene_{index:04}"))
}

pub fn run(base: &Overrides, args: SynthArgs) -> CliResult<()> {
    if args.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    if !(args.noise.is_finite() && args.noise >= 0.0) {
        return Err(usage(format!("--noise must be nonnegative, got {}", args.noise)));
    }
    let threads = base.threads()?;
    let suite = make_suite(args.seed, args.count).map_err(|e| usage(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let noise_seed = |i: u64| args.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i);

    let results: Vec<Result<SceneSpec, String>> = pool.install(|| {
        suite
            .par_iter()
            .enumerate()
            .map(|(i, s)| generated_scene(&scene_dir(&args.out, i), s, args.noise, noise_seed(i as u64)).map_err(|e| e.to_string()))
            .collect()
    });
    let parallax = parallax_scene(&args.out.join("parallax"), args.noise, noise_seed(u64::MAX));

    let mut written = Vec::new();
    let mut failures = 0;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => written.push(s),
            Err(e) => {
                failures += 1;
                log::error!("scene {i}: {e}");
            }
        }
    }
    if let Err(e) = &parallax {
        failures += 1;
        log::error!("parallax scene: {e}");
    }
    let mut manifest = KeyValues::new();
    manifest.push("seed", args.seed);
    manifest.push("count", args.count);
    manifest.push("noise", args.noise);
    manifest.push("camera", SYNTH_CAMERA);
    manifest.push("parallax_plane_depth", PARALLAX_DEPTHS.0);
    let io = |e: std::io::Error| CliError::Failed(e.to_string());
    write_file(&args.out.join("suite.txt"), write_suite(&written).as_bytes()).map_err(io)?;
    write_file(&args.out.join("synth.kv"), manifest.to_string().as_bytes()).map_err(io)?;
    if failures > 0 {
        return Err(CliError::Failed(format!("{failures} scenes failed")));
    }
    log::info!("wrote {} scenes and the parallax scene to {}", args.count, args.out.display());
    Ok(())
}
