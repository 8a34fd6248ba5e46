//! Closed-form motion fields induced by camera ego-motion.
//!
//! Pixel coordinates are centered on the principal point: `x = col - cx`
//! grows rightward and `y = row - cy` grows downward. Focal lengths are in
//! pixels. For a camera rotating with angular velocity `(wx, wy, wz)` the
//! rotational field is
//!
//! ```text
//! u_r = -wy*fx + wz*(fx/fy)*y + (wx/fy)*x*y - (wy/fx)*x^2
//! v_r =  wx*fy - wz*(fy/fx)*x - (wy/fx)*x*y + (wx/fy)*y^2
//! ```
//!
//! and a camera translating by `(tx, ty, tz)` in front of a fronto-parallel
//! plane at depth `Z` induces
//!
//! ```text
//! u_t = (tz*x - tx*fx) / Z
//! v_t = (tz*y - ty*fy) / Z
//! ```
//!
//! With `fx == fy == f` both reduce to the familiar single-focal-length
//! textbook form. Every field is accumulated one motion parameter at a time
//! in a fixed order, so summing the six single-parameter fields reproduces
//! the full field bit for bit.

use nalgebra::Vector3;

use crate::error::{param, Result};

/// Plane depth used when none is configured, in meters.
pub const DEFAULT_PLANE_DEPTH: f64 = 10.0;

/// Pinhole camera parameters for a rectified image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(param(format!("image size must be nonzero, got {width}x{height}")));
        }
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(param(format!("focal lengths must be positive, got fx={fx} fy={fy}")));
        }
        if !(cx.is_finite() && (0.0..width as f64).contains(&cx)) {
            return Err(param(format!("principal x {cx} outside [0, {width})")));
        }
        if !(cy.is_finite() && (0.0..height as f64).contains(&cy)) {
            return Err(param(format!("principal y {cy} outside [0, {height})")));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }

    /// Square-pixel camera with a single focal length.
    pub fn isotropic(f: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(f, f, cx, cy, width, height)
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }

    pub fn fy(&self) -> f64 {
        self.fy
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Principal-point-centered coordinates of a pixel.
    #[inline]
    pub fn centered(&self, col: usize, row: usize) -> (f64, f64) {
        (col as f64 - self.cx, row as f64 - self.cy)
    }
}

/// Differential camera motion between two consecutive frames, expressed in
/// the camera frame of the earlier one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoMotion {
    omega: Vector3<f64>,
    translation: Vector3<f64>,
    frame_interval: Option<f64>,
}

impl EgoMotion {
    /// `omega` in radians per frame, `translation` in meters per frame.
    pub fn new(omega: [f64; 3], translation: [f64; 3]) -> Result<Self> {
        Self::from_vectors(Vector3::from(omega), Vector3::from(translation))
    }

    pub fn from_vectors(omega: Vector3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if omega.iter().chain(translation.iter()).any(|c| !c.is_finite()) {
            return Err(param(format!(
                "ego-motion components must be finite, got omega={:?} translation={:?}",
                omega.as_slice(),
                translation.as_slice()
            )));
        }
        Ok(Self { omega, translation, frame_interval: None })
    }

    pub fn zero() -> Self {
        Self { omega: Vector3::zeros(), translation: Vector3::zeros(), frame_interval: None }
    }

    /// Attaches the time between the two frames, in seconds.
    pub fn with_frame_interval(mut self, seconds: f64) -> Result<Self> {
        if !(seconds.is_finite() && seconds > 0.0) {
            return Err(param(format!("frame interval must be positive, got {seconds}")));
        }
        self.frame_interval = Some(seconds);
        Ok(self)
    }

    pub fn omega(&self) -> Vector3<f64> {
        self.omega
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn frame_interval(&self) -> Option<f64> {
        self.frame_interval
    }

    /// The six motion parameters in `[wx, wy, wz, tx, ty, tz]` order.
    pub fn parameters(&self) -> [f64; 6] {
        let (w, t) = (self.omega, self.translation);
        [w.x, w.y, w.z, t.x, t.y, t.z]
    }

    pub(crate) fn with_parameters(&self, p: [f64; 6]) -> Self {
        Self {
            omega: Vector3::new(p[0], p[1], p[2]),
            translation: Vector3::new(p[3], p[4], p[5]),
            frame_interval: self.frame_interval,
        }
    }
}

/// Depth of the virtual fronto-parallel plane standing in for scene structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthModel {
    constant_depth: f64,
}

impl DepthModel {
    pub fn constant(depth: f64) -> Result<Self> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(param(format!("plane depth must be positive and finite, got {depth}")));
        }
        Ok(Self { constant_depth: depth })
    }

    pub fn depth(&self) -> f64 {
        self.constant_depth
    }
}

impl Default for DepthModel {
    fn default() -> Self {
        Self { constant_depth: DEFAULT_PLANE_DEPTH }
    }
}

/// Dense per-pixel 2D motion, row-major, in pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl MotionField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let n = width * height;
        if width == 0 || height == 0 {
            return Err(param(format!("field size must be nonzero, got {width}x{height}")));
        }
        if u.len() != n || v.len() != n {
            return Err(param(format!(
                "field of {width}x{height} needs {n} samples per component, got u={} v={}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(v.iter()).any(|c| !c.is_finite()) {
            return Err(param("field contains non-finite values"));
        }
        Ok(Self { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self { width, height, u: vec![0.0; n], v: vec![0.0; n] }
    }

    /// Builds a field from a per-pixel closure taking `(col, row)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let n = width * height;
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for row in 0..height {
            for col in 0..width {
                let (a, b) = f(col, row);
                u.push(a);
                v.push(b);
            }
        }
        Self { width, height, u, v }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    #[inline]
    pub fn at(&self, col: usize, row: usize) -> (f64, f64) {
        let i = row * self.width + col;
        (self.u[i], self.v[i])
    }

    pub fn set(&mut self, col: usize, row: usize, value: (f64, f64)) {
        let i = row * self.width + col;
        self.u[i] = value.0;
        self.v[i] = value.1;
    }

    pub fn magnitude_at(&self, col: usize, row: usize) -> f64 {
        let (a, b) = self.at(col, row);
        (a * a + b * b).sqrt()
    }

    /// Iterates `(u, v)` pairs in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.u.iter().copied().zip(self.v.iter().copied())
    }

    pub fn max_magnitude(&self) -> f64 {
        self.iter().map(|(a, b)| (a * a + b * b).sqrt()).fold(0.0, f64::max)
    }

    pub fn same_shape(&self, other: &MotionField) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> MotionField {
        let (u, v) = self.iter().map(|(a, b)| f(a, b)).unzip();
        MotionField { width: self.width, height: self.height, u, v }
    }

    /// Expresses the field in focal-length units (`u / fx`, `v / fy`), the
    /// `f = 1` convention used for visualizing image-plane motion.
    pub fn in_focal_units(&self, intr: &CameraIntrinsics) -> MotionField {
        let (fx, fy) = (intr.fx, intr.fy);
        self.map(|a, b| (a / fx, b / fy))
    }
}

/// Scalars of the rotational field that do not vary per pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RotationTerms {
    wx: f64,
    wy: f64,
    wz: f64,
    fx: f64,
    fy: f64,
    wx_over_fy: f64,
    wy_over_fx: f64,
    fx_over_fy: f64,
    fy_over_fx: f64,
}

impl RotationTerms {
    pub(crate) fn new(intr: &CameraIntrinsics, omega: &Vector3<f64>) -> Self {
        Self {
            wx: omega.x,
            wy: omega.y,
            wz: omega.z,
            fx: intr.fx,
            fy: intr.fy,
            wx_over_fy: omega.x / intr.fy,
            wy_over_fx: omega.y / intr.fx,
            fx_over_fy: intr.fx / intr.fy,
            fy_over_fx: intr.fy / intr.fx,
        }
    }

    /// Contributions of rotation about x, y and z, in that order.
    #[inline(always)]
    pub(crate) fn per_axis(&self, x: f64, y: f64) -> [(f64, f64); 3] {
        [
            (self.wx_over_fy * x * y, self.wx * self.fy + self.wx_over_fy * y * y),
            (-(self.wy * self.fx) - self.wy_over_fx * x * x, -(self.wy_over_fx * x * y)),
            (self.wz * self.fx_over_fy * y, -(self.wz * self.fy_over_fx * x)),
        ]
    }

    #[inline(always)]
    pub(crate) fn at(&self, x: f64, y: f64) -> (f64, f64) {
        sum3(self.per_axis(x, y))
    }
}

/// Scalars of the plane-induced translational field.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TranslationTerms {
    tz: f64,
    depth: f64,
    shift_u: f64,
    shift_v: f64,
}

impl TranslationTerms {
    pub(crate) fn new(intr: &CameraIntrinsics, t: &Vector3<f64>, depth: &DepthModel) -> Self {
        let z = depth.constant_depth;
        Self {
            tz: t.z,
            depth: z,
            shift_u: -(t.x * intr.fx) / z,
            shift_v: -(t.y * intr.fy) / z,
        }
    }

    /// Contributions of translation along x, y and z, in that order.
    #[inline(always)]
    pub(crate) fn per_axis(&self, x: f64, y: f64) -> [(f64, f64); 3] {
        [
            (self.shift_u, 0.0),
            (0.0, self.shift_v),
            ((self.tz * x) / self.depth, (self.tz * y) / self.depth),
        ]
    }

    #[inline(always)]
    pub(crate) fn at(&self, x: f64, y: f64) -> (f64, f64) {
        sum3(self.per_axis(x, y))
    }
}

/// Left-to-right sum of three contributions. The trailing `+ 0.0` maps a
/// negative zero to positive zero so equal fields also compare equal bitwise.
#[inline(always)]
pub(crate) fn sum3(t: [(f64, f64); 3]) -> (f64, f64) {
    ((t[0].0 + t[1].0) + t[2].0 + 0.0, (t[0].1 + t[1].1) + t[2].1 + 0.0)
}

#[inline(always)]
pub(crate) fn add(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 + b.0 + 0.0, a.1 + b.1 + 0.0)
}

fn check_finite3(name: &str, v: &Vector3<f64>) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(param(format!("{name} must be finite, got {:?}", v.as_slice())))
    }
}

fn field_over(intr: &CameraIntrinsics, f: impl Fn(f64, f64) -> (f64, f64)) -> MotionField {
    MotionField::from_fn(intr.width, intr.height, |col, row| {
        let (x, y) = intr.centered(col, row);
        f(x, y)
    })
}

/// Motion field induced by pure camera rotation. Independent of depth.
pub fn rotational_field(intr: &CameraIntrinsics, omega: &Vector3<f64>) -> Result<MotionField> {
    check_finite3("omega", omega)?;
    let terms = RotationTerms::new(intr, omega);
    Ok(field_over(intr, |x, y| terms.at(x, y)))
}

/// Motion field induced by pure camera translation in front of a plane.
pub fn translational_field(
    intr: &CameraIntrinsics,
    translation: &Vector3<f64>,
    depth: &DepthModel,
) -> Result<MotionField> {
    check_finite3("translation", translation)?;
    let terms = TranslationTerms::new(intr, translation, depth);
    Ok(field_over(intr, |x, y| terms.at(x, y)))
}

/// Per-pixel sum of a rotational and a translational field.
pub fn compose_field(rot: &MotionField, trans: &MotionField) -> Result<MotionField> {
    if !rot.same_shape(trans) {
        return Err(param(format!(
            "cannot compose {}x{} field with {}x{} field",
            rot.width, rot.height, trans.width, trans.height
        )));
    }
    let (u, v) = rot
        .iter()
        .zip(trans.iter())
        .map(|(a, b)| add(a, b))
        .unzip();
    Ok(MotionField { width: rot.width, height: rot.height, u, v })
}

/// Full ego-motion field: rotational plus plane-induced translational part.
pub fn ego_field(intr: &CameraIntrinsics, ego: &EgoMotion, depth: &DepthModel) -> Result<MotionField> {
    let rot = rotational_field(intr, &ego.omega)?;
    let trans = translational_field(intr, &ego.translation, depth)?;
    compose_field(&rot, &trans)
}

/// Per-pixel evaluation of [`ego_field`] without materializing the
/// intermediate fields. Produces identical bits.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EgoFieldKernel {
    rot: RotationTerms,
    trans: TranslationTerms,
}

impl EgoFieldKernel {
    pub(crate) fn new(intr: &CameraIntrinsics, ego: &EgoMotion, depth: &DepthModel) -> Self {
        Self {
            rot: RotationTerms::new(intr, &ego.omega),
            trans: TranslationTerms::new(intr, &ego.translation, depth),
        }
    }

    #[inline(always)]
    pub(crate) fn at(&self, x: f64, y: f64) -> (f64, f64) {
        add(self.rot.at(x, y), self.trans.at(x, y))
    }
}
