//! `egoflow bench`: single-threaded latency of VMT generation.
//!
//! Percentiles are printed to standard error; `--out` also writes them as
//! `key=value` lines.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use egoflow_core::keyvalue::KeyValues;
use egoflow_core::vmt::quantile;
use egoflow_core::{build_vmt, CameraIntrinsics, DepthModel, EgoMotion, Normalization};

use crate::config::Overrides;
use crate::io::write_file;
use crate::{usage, CliError, CliResult};

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 1224)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    /// Timed runs, at least 100.
    #[arg(long, default_value_t = 200)]
    pub iterations: usize,
    /// Untimed runs before measuring.
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub const MIN_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchStats {
    pub iterations: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    pub max_ms: f64,
}

/// KITTI rectified intrinsics rescaled to `width` x `height`.
pub fn kitti_scaled(width: usize, height: usize) -> CliResult<CameraIntrinsics> {
    let (sx, sy) = (width as f64 / 1242.0, height as f64 / 375.0);
    CameraIntrinsics::new(721.5377 * sx, 721.5377 * sy, 609.5593 * sx, 172.854 * sy, width, height)
        .map_err(|e| usage(e.to_string()))
}

/// Times `build_vmt` with per-frame normalization on a turning, forward
/// moving camera.
pub fn measure(width: usize, height: usize, iterations: usize, warmup: usize) -> CliResult<BenchStats> {
    if iterations == 0 {
        return Err(usage("iterations must be positive"));
    }
    let intr = kitti_scaled(width, height)?;
    let ego = EgoMotion::new([0.001, -0.012, 0.0005], [0.02, -0.01, 1.1]).expect("finite motion");
    let depth = DepthModel::default();
    let run = || build_vmt(&intr, &ego, &depth, Normalization::PerFrameMax).map_err(|e| CliError::Failed(e.to_string()));
    for _ in 0..warmup {
        run()?;
    }
    let mut ms = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let start = Instant::now();
        std::hint::black_box(run()?);
        ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mean_ms = ms.iter().sum::<f64>() / ms.len() as f64;
    let max_ms = ms.iter().copied().fold(0.0, f64::max);
    let q = |p: f64, v: &mut Vec<f64>| quantile(v, p).expect("samples present");
    Ok(BenchStats { iterations, p50_ms: q(0.5, &mut ms), p95_ms: q(0.95, &mut ms), mean_ms, max_ms })
}

pub fn run(_base: &Overrides, args: BenchArgs) -> CliResult<()> {
    if args.iterations < MIN_ITERATIONS {
        return Err(usage(format!("--iterations must be at least {MIN_ITERATIONS}")));
    }
    let s = measure(args.width, args.height, args.iterations, args.warmup)?;
    eprintln!(
        "build_vmt {}x{}: {} runs, p50 {:.3} ms, p95 {:.3} ms, mean {:.3} ms, max {:.3} ms",
        args.width, args.height, s.iterations, s.p50_ms, s.p95_ms, s.mean_ms, s.max_ms
    );
    if let Some(path) = args.out {
        let mut kv = KeyValues::new();
        kv.push("width", args.width);
        kv.push("height", args.height);
        kv.push("iterations", s.iterations);
        kv.push("p50_ms", s.p50_ms);
        kv.push("p95_ms", s.p95_ms);
        kv.push("mean_ms", s.mean_ms);
        kv.push("max_ms", s.max_ms);
        write_file(&path, kv.to_string().as_bytes()).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
