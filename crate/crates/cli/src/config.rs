//! Job settings resolved from flags, the environment and a config file.
//!
//! Precedence, highest first: command-line flag, `EGOFLOW_THREADS` (thread
//! count only), `--config` file, built-in default. The config file uses the
//! same `key=value` grammar as the report files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use egoflow_core::keyvalue::KeyValues;
use egoflow_core::segment::DEFAULT_TAU;
use egoflow_core::vmt::{magnitude_samples, quantile};
use egoflow_core::{DepthModel, MotionField, Normalization};

use crate::{usage, CliError, CliResult, FieldOptions};

pub const THREADS_ENV: &str = "EGOFLOW_THREADS";

/// Keys accepted in a config file.
pub const CONFIG_KEYS: [&str; 5] = ["threads", "depth", "norm", "tau", "camera"];

/// Camera used when none is configured (the left color camera on KITTI).
pub const DEFAULT_CAMERA: u8 = 2;

/// Pixel stride of the samples behind a sequence quantile.
const QUANTILE_STRIDE: usize = 4;

/// How VMT images are scaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormSpec {
    /// Per-frame maximum magnitude.
    Auto,
    /// A magnitude quantile taken over the whole sequence, in percent.
    Quantile(f64),
    /// A fixed scale in pixels.
    Fixed(f64),
}

impl NormSpec {
    /// Resolves to a per-frame normalization. `samples` are sequence-wide
    /// magnitudes and only consulted for a quantile.
    pub fn resolve(self, samples: &mut [f64]) -> CliResult<Normalization> {
        Ok(match self {
            NormSpec::Auto => Normalization::PerFrameMax,
            NormSpec::Fixed(s) => Normalization::Fixed(s),
            NormSpec::Quantile(p) => {
                let q = quantile(samples, p / 100.0).map_err(|e| usage(e.to_string()))?;
                Normalization::Fixed(if q > 0.0 { q } else { 1.0 })
            }
        })
    }

    /// Sequence-wide magnitude samples of one frame, empty unless needed.
    pub fn samples(self, field: &MotionField) -> Vec<f64> {
        let mut out = Vec::new();
        if matches!(self, NormSpec::Quantile(_)) {
            magnitude_samples(field, QUANTILE_STRIDE, &mut out).expect("stride is positive");
        }
        out
    }
}

impl FromStr for NormSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("normalization must be auto, pNN or fixed:SCALE, got {s:?}");
        if s == "auto" {
            return Ok(NormSpec::Auto);
        }
        if let Some(scale) = s.strip_prefix("fixed:") {
            let v: f64 = scale.parse().map_err(|_| bad())?;
            return if v.is_finite() && v > 0.0 { Ok(NormSpec::Fixed(v)) } else { Err(bad()) };
        }
        if let Some(p) = s.strip_prefix('p') {
            let v: f64 = p.parse().map_err(|_| bad())?;
            return if v > 0.0 && v <= 100.0 { Ok(NormSpec::Quantile(v)) } else { Err(bad()) };
        }
        Err(bad())
    }
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormSpec::Auto => write!(f, "auto"),
            NormSpec::Quantile(p) => write!(f, "p{p}"),
            NormSpec::Fixed(s) => write!(f, "fixed:{s}"),
        }
    }
}

/// Global flags plus the parsed config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    threads: Option<usize>,
    file: KeyValues,
}

impl Overrides {
    pub fn load(config: Option<&Path>, threads: Option<usize>) -> CliResult<Self> {
        let file = match config {
            None => KeyValues::new(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
                let kv = KeyValues::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                if let Some(k) = kv.keys().find(|k| !CONFIG_KEYS.contains(k)) {
                    return Err(usage(format!("{}: unknown key {k:?}", path.display())));
                }
                kv
            }
        };
        Ok(Self { threads, file })
    }

    fn file_value<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        self.file.get_parsed(key).map_err(|e| usage(format!("config: {e}")))
    }

    pub fn threads(&self) -> CliResult<usize> {
        let n = match self.threads {
            Some(n) => n,
            None => match std::env::var(THREADS_ENV) {
                Ok(v) => v.trim().parse().map_err(|_| usage(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
                Err(_) => match self.file_value("threads")? {
                    Some(n) => n,
                    None => std::thread::available_parallelism().map_or(1, |n| n.get()),
                },
            },
        };
        if n == 0 {
            return Err(usage("thread count must be at least 1"));
        }
        Ok(n)
    }

    pub fn depth(&self, flag: Option<f64>) -> CliResult<DepthModel> {
        let z = match flag {
            Some(z) => z,
            None => self.file_value("depth")?.unwrap_or(egoflow_core::geometry::DEFAULT_PLANE_DEPTH),
        };
        DepthModel::constant(z).map_err(|e| usage(e.to_string()))
    }

    pub fn norm(&self, flag: Option<NormSpec>, default: NormSpec) -> CliResult<NormSpec> {
        match flag {
            Some(n) => Ok(n),
            None => match self.file.get("norm") {
                Some(v) => v.parse().map_err(|e| usage(format!("config: {e}"))),
                None => Ok(default),
            },
        }
    }

    pub fn tau(&self, flag: Option<f64>) -> CliResult<f64> {
        let tau = match flag {
            Some(t) => t,
            None => self.file_value("tau")?.unwrap_or(DEFAULT_TAU),
        };
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(usage(format!("tau must be nonnegative, got {tau}")));
        }
        Ok(tau)
    }

    pub fn camera(&self, flag: Option<u8>) -> CliResult<u8> {
        Ok(match flag {
            Some(c) => c,
            None => self.file_value("camera")?.unwrap_or(DEFAULT_CAMERA),
        })
    }
}

/// Fully resolved settings of one batch job.
#[derive(Debug, Clone)]
pub struct JobConfig {
    pub threads: usize,
    pub depth: DepthModel,
    pub norm: NormSpec,
    pub tau: f64,
    pub camera: u8,
    pub out: PathBuf,
}

impl JobConfig {
    pub fn resolve(
        base: &Overrides,
        field: &FieldOptions,
        norm: Option<NormSpec>,
        default_norm: NormSpec,
        tau: Option<f64>,
        out: PathBuf,
    ) -> CliResult<Self> {
        Ok(Self {
            threads: base.threads()?,
            depth: base.depth(field.depth)?,
            norm: base.norm(norm, default_norm)?,
            tau: base.tau(tau)?,
            camera: base.camera(field.camera)?,
            out,
        })
    }

    /// A dedicated pool so concurrent jobs do not share workers.
    pub fn pool(&self) -> CliResult<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| CliError::Failed(format!("cannot start {} worker threads: {e}", self.threads)))
    }
}
