//! Ego-motion induced motion fields for automotive cameras.
//!
//! The crate turns a vehicle's six-degree-of-freedom frame-to-frame motion
//! into a dense per-pixel motion field under a constant-depth plane model,
//! encodes it as a color wheel image (a *vehicle motion tensor*, VMT), and
//! uses it to compensate observed optical flow for camera motion so that
//! independently moving objects stand out.
//!
//! Modules:
//! * [`geometry`]: camera model, ego-motion and the closed-form fields
//! * [`codec`]: `.flo`, KITTI flow PNG and color wheel rasters
//! * [`kitti`]: OXTS/IMU records and calibration files
//! * [`vmt`]: end-to-end tensor generation and per-component decomposition
//! * [`segment`]: residual-flow segmentation and IoU evaluation
//! * [`synth`]: reprojection renderer producing exact ground-truth flow
//! * [`keyvalue`]: the `key=value` text grammar shared by reports and configs

pub mod codec;
mod error;
pub mod geometry;
pub mod keyvalue;
pub mod kitti;
pub mod segment;
pub mod synth;
pub mod vmt;

pub use codec::{FlowImage, Normalization, VmtImage};
pub use error::{Error, Location, Result};
pub use geometry::{
    compose_field, ego_field, rotational_field, translational_field, CameraIntrinsics, DepthModel, EgoMotion,
    MotionField,
};
pub use segment::{EvalReport, SegMask};
pub use vmt::{build_vmt, decompose_vmt, dominant_component, Component};
