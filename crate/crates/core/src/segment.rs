//! Ego-motion compensated motion segmentation and IoU evaluation.
//!
//! Observed flow minus the predicted ego-motion field leaves a residual that
//! is near zero on static scene points and large on independently moving
//! ones. A fixed threshold on its magnitude gives a binary moving mask.

use std::fmt;

use crate::codec::{pngio, FlowImage};
use crate::error::{format, param, Result};
use crate::geometry::MotionField;
use crate::keyvalue::KeyValues;

/// Residual magnitude above which a pixel is labelled moving, in pixels.
pub const DEFAULT_TAU: f64 = 0.5;

/// Binary per-pixel moving/static labels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    width: usize,
    height: usize,
    moving: Vec<bool>,
}

impl SegMask {
    pub fn new(width: usize, height: usize, moving: Vec<bool>) -> Result<Self> {
        if moving.len() != width * height {
            return Err(param(format!("{width}x{height} mask needs {} labels, got {}", width * height, moving.len())));
        }
        Ok(Self { width, height, moving })
    }

    pub fn all_static(width: usize, height: usize) -> Self {
        Self { width, height, moving: vec![false; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[bool] {
        &self.moving
    }

    pub fn is_moving(&self, col: usize, row: usize) -> bool {
        self.moving[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, moving: bool) {
        self.moving[row * self.width + col] = moving;
    }

    pub fn moving_count(&self) -> usize {
        self.moving.iter().filter(|&&m| m).count()
    }

    /// 8-bit grayscale PNG, 0 for static and 255 for moving.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let gray: Vec<u8> = self.moving.iter().map(|&m| if m { 255 } else { 0 }).collect();
        pngio::write_gray8(self.width, self.height, &gray)
    }

    /// Any nonzero sample counts as moving.
    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let (w, h, gray) = pngio::read_gray8(bytes)?;
        Self::new(w, h, gray.into_iter().map(|g| g != 0).collect())
    }

    /// 3x3 majority vote; pixels outside the image do not vote.
    pub fn majority_filtered(&self) -> SegMask {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = Vec::with_capacity(self.moving.len());
        for row in 0..h {
            for col in 0..w {
                let (mut votes, mut total) = (0, 0);
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let (r, c) = (row + dr, col + dc);
                        if r >= 0 && r < h && c >= 0 && c < w {
                            total += 1;
                            votes += self.moving[(r * w + c) as usize] as usize;
                        }
                    }
                }
                out.push(2 * votes > total);
            }
        }
        SegMask { width: self.width, height: self.height, moving: out }
    }
}

/// Observed flow minus predicted ego-motion flow. Invalid observed pixels
/// keep a zero residual and stay invalid.
pub fn compensate(observed: &FlowImage, predicted: &MotionField) -> Result<FlowImage> {
    let obs = observed.field();
    if !obs.same_shape(predicted) {
        return Err(param(format!(
            "observed flow is {}x{}, predicted field is {}x{}",
            obs.width(),
            obs.height(),
            predicted.width(),
            predicted.height()
        )));
    }
    let mut i = 0;
    let residual = MotionField::from_fn(obs.width(), obs.height(), |_, _| {
        let r = if observed.is_valid(i) {
            (obs.u()[i] - predicted.u()[i], obs.v()[i] - predicted.v()[i])
        } else {
            (0.0, 0.0)
        };
        i += 1;
        r
    });
    match observed.validity() {
        Some(valid) => FlowImage::with_validity(residual, valid.to_vec()),
        None => Ok(FlowImage::dense(residual)),
    }
}

/// Labels a pixel moving when its residual magnitude exceeds `tau`.
/// Invalid pixels are static.
pub fn threshold_segment(residual: &FlowImage, tau: f64) -> Result<SegMask> {
    if !(tau >= 0.0) {
        return Err(param(format!("threshold must be nonnegative, got {tau}")));
    }
    let field = residual.field();
    let moving = field
        .iter()
        .enumerate()
        .map(|(i, (u, v))| residual.is_valid(i) && (u * u + v * v).sqrt() > tau)
        .collect();
    SegMask::new(field.width(), field.height(), moving)
}

/// Confusion counts for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ClassCounts {
    /// `tp / (tp + fp + fn)`; a class absent from both masks scores 1.
    pub fn iou(&self) -> f64 {
        let denom = self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            self.tp as f64 / denom as f64
        }
    }

    fn merge(&mut self, other: &ClassCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Two-class segmentation quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub moving_iou: f64,
    pub static_iou: f64,
    /// Unweighted mean of the moving and static IoU.
    pub mean_iou: f64,
    pub moving: ClassCounts,
    pub static_: ClassCounts,
}

impl EvalReport {
    pub fn from_counts(moving: ClassCounts, static_: ClassCounts) -> Self {
        let (m, s) = (moving.iou(), static_.iou());
        Self { moving_iou: m, static_iou: s, mean_iou: (m + s) / 2.0, moving, static_ }
    }

    /// Pools pixel counts over many frames in the given order.
    pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> EvalReport {
        let (mut m, mut s) = (ClassCounts::default(), ClassCounts::default());
        for r in reports {
            m.merge(&r.moving);
            s.merge(&r.static_);
        }
        Self::from_counts(m, s)
    }

    pub fn to_key_values(&self, prefix: &str) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.push(format!("{prefix}moving_iou"), self.moving_iou);
        kv.push(format!("{prefix}static_iou"), self.static_iou);
        kv.push(format!("{prefix}mean_iou"), self.mean_iou);
        for (name, c) in [("moving", &self.moving), ("static", &self.static_)] {
            kv.push(format!("{prefix}{name}_tp"), c.tp);
            kv.push(format!("{prefix}{name}_fp"), c.fp);
            kv.push(format!("{prefix}{name}_fn"), c.fn_);
        }
        kv
    }

    pub fn from_key_values(kv: &KeyValues, prefix: &str) -> Result<Self> {
        let count = |k: &str| -> Result<u64> {
            kv.get_parsed(&format!("{prefix}{k}"))?
                .ok_or_else(|| format(format!("report is missing {prefix}{k}")))
        };
        let moving = ClassCounts { tp: count("moving_tp")?, fp: count("moving_fp")?, fn_: count("moving_fn")? };
        let static_ = ClassCounts { tp: count("static_tp")?, fp: count("static_fp")?, fn_: count("static_fn")? };
        Ok(Self::from_counts(moving, static_))
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "moving IoU {:.4}  static IoU {:.4}  mIoU {:.4}  (moving tp {} fp {} fn {})",
            self.moving_iou, self.static_iou, self.mean_iou, self.moving.tp, self.moving.fp, self.moving.fn_
        )
    }
}

/// Compares a predicted mask against ground truth.
pub fn evaluate(pred: &SegMask, gt: &SegMask) -> Result<EvalReport> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(param(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let (mut moving, mut static_) = (ClassCounts::default(), ClassCounts::default());
    for (&p, &g) in pred.moving.iter().zip(&gt.moving) {
        match (p, g) {
            (true, true) => moving.tp += 1,
            (false, false) => static_.tp += 1,
            (true, false) => {
                moving.fp += 1;
                static_.fn_ += 1;
            }
            (false, true) => {
                moving.fn_ += 1;
                static_.fp += 1;
            }
        }
    }
    Ok(EvalReport::from_counts(moving, static_))
}
