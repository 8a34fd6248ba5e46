//! Brute-force synthetic scenes with exact ground-truth flow and masks.
//!
//! Every pixel is back-projected with its true depth, moved by its own
//! object velocity, viewed from the camera pose after the ego-motion and
//! projected again. Flow is the finite displacement between the two
//! projections, so it shares no code with the closed-form fields in
//! [`crate::geometry`] and can serve as their oracle.
//!
//! Scenes serialize to a line-oriented text format:
//!
//! ```text
//! # comment
//! scene
//! intrinsics <fx> <fy> <cx> <cy> <width> <height>
//! ego <wx> <wy> <wz> <tx> <ty> <tz>
//! plane <depth>
//! object <col> <row> <width> <height> <depth> <vx> <vy> <vz>
//! end
//! ```
//!
//! `plane <depth>` may be replaced by `grid` followed by one
//! `depths <d0> <d1> ...` line per image row. Any number of `object` lines
//! may appear and a file may hold several scenes.

use std::fmt::Write;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::codec::FlowImage;
use crate::error::{param, Error, Location, Result};
use crate::geometry::{CameraIntrinsics, EgoMotion, MotionField};
use crate::segment::SegMask;

/// Scene structure behind the objects.
#[derive(Debug, Clone, PartialEq)]
pub enum Background {
    /// Fronto-parallel plane at a fixed depth in meters.
    Plane(f64),
    /// Row-major per-pixel depth in meters.
    Grid(Vec<f64>),
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub col: usize,
    pub row: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn contains(&self, col: usize, row: usize) -> bool {
        col >= self.col && col < self.col + self.width && row >= self.row && row < self.row + self.height
    }

    pub fn center(&self) -> (usize, usize) {
        (self.col + self.width / 2, self.row + self.height / 2)
    }
}

/// A fronto-parallel patch translating with its own velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub rect: Rect,
    /// Depth in meters.
    pub depth: f64,
    /// Displacement between the two frames in meters, camera axes of the
    /// first frame.
    pub velocity: [f64; 3],
}

impl SceneObject {
    pub fn is_moving(&self) -> bool {
        self.velocity.iter().any(|&c| c != 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    intr: CameraIntrinsics,
    ego: EgoMotion,
    background: Background,
    objects: Vec<SceneObject>,
}

fn positive(what: &str, z: f64) -> Result<()> {
    if z.is_finite() && z > 0.0 {
        Ok(())
    } else {
        Err(param(format!("{what} must be positive, got {z}")))
    }
}

impl SceneSpec {
    pub fn new(
        intr: CameraIntrinsics,
        ego: EgoMotion,
        background: Background,
        objects: Vec<SceneObject>,
    ) -> Result<Self> {
        match &background {
            Background::Plane(z) => positive("background depth", *z)?,
            Background::Grid(d) => {
                if d.len() != intr.pixel_count() {
                    return Err(param(format!(
                        "depth grid has {} values for a {}x{} image",
                        d.len(),
                        intr.width(),
                        intr.height()
                    )));
                }
                for &z in d {
                    positive("background depth", z)?;
                }
            }
        }
        for (i, o) in objects.iter().enumerate() {
            let r = o.rect;
            if r.width == 0 || r.height == 0 || r.col + r.width > intr.width() || r.row + r.height > intr.height() {
                return Err(param(format!("object {i} rectangle {r:?} is empty or leaves the image")));
            }
            positive("object depth", o.depth)?;
            if o.velocity.iter().any(|c| !c.is_finite()) {
                return Err(param(format!("object {i} velocity must be finite")));
            }
        }
        Ok(Self { intr, ego, background, objects })
    }

    /// A static scene made of a single plane.
    pub fn plane(intr: CameraIntrinsics, ego: EgoMotion, depth: f64) -> Result<Self> {
        Self::new(intr, ego, Background::Plane(depth), Vec::new())
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intr
    }

    pub fn ego(&self) -> &EgoMotion {
        &self.ego
    }

    pub fn background(&self) -> &Background {
        &self.background
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn with_ego(&self, ego: EgoMotion) -> Self {
        Self { ego, ..self.clone() }
    }

    pub fn with_background(&self, background: Background) -> Result<Self> {
        Self::new(self.intr, self.ego, background, self.objects.clone())
    }

    /// Same geometry with every object at rest.
    pub fn frozen(&self) -> Self {
        let objects = self.objects.iter().map(|o| SceneObject { velocity: [0.0; 3], ..*o }).collect();
        Self { objects, ..self.clone() }
    }

    /// The background alone.
    pub fn background_only(&self) -> Self {
        Self { objects: Vec::new(), ..self.clone() }
    }

    /// Depth of the background plane, if the background is one.
    pub fn plane_depth(&self) -> Option<f64> {
        match self.background {
            Background::Plane(z) => Some(z),
            Background::Grid(_) => None,
        }
    }

    /// Nearest surface at a pixel and the object it belongs to, if any.
    pub fn surface_at(&self, col: usize, row: usize) -> (f64, Option<&SceneObject>) {
        let mut depth = match &self.background {
            Background::Plane(z) => *z,
            Background::Grid(d) => d[row * self.intr.width() + col],
        };
        let mut hit = None;
        for o in &self.objects {
            if o.rect.contains(col, row) && o.depth < depth {
                depth = o.depth;
                hit = Some(o);
            }
        }
        (depth, hit)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let i = &self.intr;
        let p = self.ego.parameters();
        let _ = writeln!(s, "scene");
        let _ = writeln!(s, "intrinsics {:?} {:?} {:?} {:?} {} {}", i.fx(), i.fy(), i.cx(), i.cy(), i.width(), i.height());
        let _ = writeln!(s, "ego {:?} {:?} {:?} {:?} {:?} {:?}", p[0], p[1], p[2], p[3], p[4], p[5]);
        match &self.background {
            Background::Plane(z) => {
                let _ = writeln!(s, "plane {z:?}");
            }
            Background::Grid(d) => {
                let _ = writeln!(s, "grid");
                for row in d.chunks(i.width()) {
                    s.push_str("depths");
                    for z in row {
                        let _ = write!(s, " {z:?}");
                    }
                    s.push('\n');
                }
            }
        }
        for o in &self.objects {
            let (r, v) = (o.rect, o.velocity);
            let _ = writeln!(
                s,
                "object {} {} {} {} {:?} {:?} {:?} {:?}",
                r.col, r.row, r.width, r.height, o.depth, v[0], v[1], v[2]
            );
        }
        s.push_str("end\n");
        s
    }

    /// Parses exactly one scene.
    pub fn parse(text: &str) -> Result<Self> {
        let mut scenes = parse_suite(text)?;
        match scenes.len() {
            1 => Ok(scenes.remove(0)),
            n => Err(Error::Format(format!("expected one scene, found {n}"))),
        }
    }
}

/// Serializes several scenes into one text document.
pub fn write_suite(scenes: &[SceneSpec]) -> String {
    scenes.iter().map(SceneSpec::to_text).collect()
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { location: Location::Line(line), message: message.into() }
}

fn numbers<T: std::str::FromStr>(line: usize, fields: &[&str], count: usize) -> Result<Vec<T>> {
    if count != usize::MAX && fields.len() != count {
        return Err(parse_error(line, format!("expected {count} values, found {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| f.parse().map_err(|_| parse_error(line, format!("cannot parse {f:?}"))))
        .collect()
}

#[derive(Default)]
struct Partial {
    start: usize,
    intr: Option<CameraIntrinsics>,
    ego: Option<EgoMotion>,
    plane: Option<f64>,
    grid: Option<Vec<f64>>,
    objects: Vec<SceneObject>,
}

/// Parses a document of zero or more scenes.
pub fn parse_suite(text: &str) -> Result<Vec<SceneSpec>> {
    let mut scenes = Vec::new();
    let mut cur: Option<Partial> = None;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut words = line.split_whitespace();
        let key = words.next().unwrap_or_default();
        let rest: Vec<&str> = words.collect();
        if key == "scene" {
            if cur.is_some() {
                return Err(parse_error(n, "scene opened before the previous one ended"));
            }
            cur = Some(Partial { start: n, ..Default::default() });
            continue;
        }
        let p = cur.as_mut().ok_or_else(|| parse_error(n, format!("{key:?} outside of a scene")))?;
        match key {
            "intrinsics" => {
                if rest.len() != 6 {
                    return Err(parse_error(n, format!("expected 6 values, found {}", rest.len())));
                }
                let f: Vec<f64> = numbers(n, &rest[..4], 4)?;
                let s: Vec<usize> = numbers(n, &rest[4..], 2)?;
                p.intr = Some(
                    CameraIntrinsics::new(f[0], f[1], f[2], f[3], s[0], s[1]).map_err(|e| parse_error(n, e.to_string()))?,
                );
            }
            "ego" => {
                let v: Vec<f64> = numbers(n, &rest, 6)?;
                p.ego = Some(EgoMotion::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]).map_err(|e| parse_error(n, e.to_string()))?);
            }
            "plane" => p.plane = Some(numbers::<f64>(n, &rest, 1)?[0]),
            "grid" => p.grid = Some(Vec::new()),
            "depths" => {
                let g = p.grid.as_mut().ok_or_else(|| parse_error(n, "depths line without a preceding grid"))?;
                g.extend(numbers::<f64>(n, &rest, usize::MAX)?);
            }
            "object" => {
                if rest.len() != 8 {
                    return Err(parse_error(n, format!("expected 8 values, found {}", rest.len())));
                }
                let r: Vec<usize> = numbers(n, &rest[..4], 4)?;
                let f: Vec<f64> = numbers(n, &rest[4..], 4)?;
                p.objects.push(SceneObject {
                    rect: Rect { col: r[0], row: r[1], width: r[2], height: r[3] },
                    depth: f[0],
                    velocity: [f[1], f[2], f[3]],
                });
            }
            "end" => {
                let p = cur.take().expect("scene is open");
                let intr = p.intr.ok_or_else(|| parse_error(n, "scene has no intrinsics line"))?;
                let ego = p.ego.ok_or_else(|| parse_error(n, "scene has no ego line"))?;
                let background = match (p.plane, p.grid) {
                    (Some(z), None) => Background::Plane(z),
                    (None, Some(g)) => Background::Grid(g),
                    _ => return Err(parse_error(n, "scene needs exactly one of plane or grid")),
                };
                let scene = SceneSpec::new(intr, ego, background, p.objects)
                    .map_err(|e| parse_error(p.start, e.to_string()))?;
                scenes.push(scene);
            }
            other => return Err(parse_error(n, format!("unknown record {other:?}"))),
        }
    }
    if let Some(p) = cur {
        return Err(parse_error(p.start, "scene is not terminated by end"));
    }
    Ok(scenes)
}

/// Maps a first-frame 3D point to the second camera.
struct Reprojector {
    rt: Matrix3<f64>,
    t: Vector3<f64>,
    intr: CameraIntrinsics,
}

impl Reprojector {
    fn new(scene: &SceneSpec) -> Self {
        let rt = Rotation3::new(scene.ego.omega()).inverse().into_inner();
        Self { rt, t: scene.ego.translation(), intr: scene.intr }
    }

    /// Displacement of the surface seen at a pixel, or `None` when it ends
    /// behind the camera or outside the image.
    fn displacement(&self, col: usize, row: usize, depth: f64, velocity: [f64; 3]) -> Option<(f64, f64)> {
        let i = &self.intr;
        let (x, y) = i.centered(col, row);
        let p = Vector3::new(x * depth / i.fx(), y * depth / i.fy(), depth);
        // Work with the 3D offset so that a point which does not move
        // relative to the camera yields exactly zero flow.
        let d = (self.rt * p - p) + self.rt * (Vector3::from(velocity) - self.t);
        let z2 = depth + d.z;
        if !(z2 > 0.0) {
            return None;
        }
        let du = (i.fx() * d.x - x * d.z) / z2;
        let dv = (i.fy() * d.y - y * d.z) / z2;
        let (c2, r2) = (col as f64 + du, row as f64 + dv);
        let inside = c2 >= -0.5 && c2 < i.width() as f64 - 0.5 && r2 >= -0.5 && r2 < i.height() as f64 - 0.5;
        inside.then_some((du, dv))
    }
}

/// Exact displacement flow from the first to the second frame and the
/// moving-object mask. Pixels that leave the image or pass behind the
/// camera are invalid and carry zero flow.
pub fn render_flow(scene: &SceneSpec) -> (FlowImage, SegMask) {
    let proj = Reprojector::new(scene);
    let (w, h) = (scene.intr.width(), scene.intr.height());
    let mut valid = Vec::with_capacity(w * h);
    let mut mask = SegMask::all_static(w, h);
    let field = MotionField::from_fn(w, h, |col, row| {
        let (depth, hit) = scene.surface_at(col, row);
        let velocity = hit.map_or([0.0; 3], |o| o.velocity);
        if hit.is_some_and(SceneObject::is_moving) {
            mask.set(col, row, true);
        }
        let d = proj.displacement(col, row, depth, velocity);
        valid.push(d.is_some());
        d.unwrap_or((0.0, 0.0))
    });
    let flow = FlowImage::with_validity(field, valid).expect("validity matches field size");
    (flow, mask)
}

/// [`render_flow`] with seeded zero-mean Gaussian noise of standard
/// deviation `sigma` pixels added to every valid flow component.
pub fn render_flow_noisy(scene: &SceneSpec, sigma: f64, seed: u64) -> Result<(FlowImage, SegMask)> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(param(format!("noise sigma must be finite and nonnegative, got {sigma}")));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| param(e.to_string()))?;
    let (flow, mask) = render_flow(scene);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let valid = flow.validity().map(<[bool]>::to_vec);
    let mut i = 0;
    let noisy = flow.field().map(|u, v| {
        let keep = valid.as_ref().is_none_or(|m| m[i]);
        i += 1;
        if keep {
            (u + normal.sample(&mut rng), v + normal.sample(&mut rng))
        } else {
            (u, v)
        }
    });
    let flow = match valid {
        Some(m) => FlowImage::with_validity(noisy, m)?,
        None => FlowImage::dense(noisy),
    };
    Ok((flow, mask))
}

/// Object velocity that keeps it fixed relative to a purely translating
/// camera, so it shows zero flow while still being a mover.
pub fn cancelling_velocity(ego: &EgoMotion) -> Result<[f64; 3]> {
    if ego.omega() != Vector3::zeros() {
        return Err(param("a rigid translation can only cancel a purely translational ego-motion"));
    }
    Ok(ego.translation().into())
}

/// Velocity that makes an object at `object_depth` produce exactly the flow
/// of the static plane at `plane_depth`.
pub fn parallax_velocity(ego: &EgoMotion, object_depth: f64, plane_depth: f64) -> Result<[f64; 3]> {
    positive("object depth", object_depth)?;
    positive("plane depth", plane_depth)?;
    Ok((ego.translation() * (1.0 - object_depth / plane_depth)).into())
}

/// A plane scene with one mover whose flow is indistinguishable from the
/// static background: translation-based compensation at the plane depth
/// cannot detect it.
pub fn parallax_ambiguity_scene(
    intr: CameraIntrinsics,
    ego: EgoMotion,
    plane_depth: f64,
    object_depth: f64,
) -> Result<SceneSpec> {
    let velocity = parallax_velocity(&ego, object_depth, plane_depth)?;
    if velocity.iter().all(|&c| c == 0.0) {
        return Err(param("the ambiguity needs a translating camera and an object off the plane"));
    }
    let rect = Rect {
        col: intr.width() / 4,
        row: intr.height() / 4,
        width: (intr.width() / 2).max(1),
        height: (intr.height() / 2).max(1),
    };
    SceneSpec::new(intr, ego, Background::Plane(plane_depth), vec![SceneObject { rect, depth: object_depth, velocity }])
}

/// Motion pattern of a generated scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// Rotation dominated by yaw, at least five times any other axis.
    YawTurn,
    /// Forward translation with little rotation.
    Forward,
    /// All six parameters random.
    Mixed6Dof,
}

impl SceneKind {
    pub const CYCLE: [SceneKind; 3] = [SceneKind::YawTurn, SceneKind::Forward, SceneKind::Mixed6Dof];

    /// Kind of the `index`-th scene of a suite.
    pub fn of_suite_index(index: usize) -> Self {
        Self::CYCLE[index % Self::CYCLE.len()]
    }
}

/// Largest rotation of a generated scene, in radians per frame.
pub const SUITE_MAX_ROTATION: f64 = 0.02;
/// Largest translation of a generated scene, in meters per frame.
pub const SUITE_MAX_TRANSLATION: f64 = 0.2;
/// Smallest residual any pixel of a generated mover shows against the
/// flow it would have at rest, in pixels.
pub const SUITE_MIN_MOVER_RESIDUAL: f64 = 1.0;

fn clamp_norm(v: Vector3<f64>, max: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

fn signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let m = rng.gen_range(lo..=hi);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

fn suite_ego(rng: &mut ChaCha8Rng, kind: SceneKind) -> Result<EgoMotion> {
    let (w, t) = match kind {
        SceneKind::YawTurn => {
            let wy = signed(rng, 0.004, 0.019);
            let side = wy.abs() / 6.0;
            let w = Vector3::new(rng.gen_range(-side..=side), wy, rng.gen_range(-side..=side));
            (w, Vector3::new(rng.gen_range(-0.02..=0.02), rng.gen_range(-0.01..=0.01), rng.gen_range(0.0..=0.15)))
        }
        SceneKind::Forward => {
            let w = Vector3::from_fn(|_, _| rng.gen_range(-0.002..=0.002));
            (w, Vector3::new(rng.gen_range(-0.02..=0.02), rng.gen_range(-0.02..=0.02), rng.gen_range(0.05..=0.19)))
        }
        SceneKind::Mixed6Dof => {
            let w = Vector3::from_fn(|_, _| rng.gen_range(-0.011..=0.011));
            (w, Vector3::from_fn(|_, _| rng.gen_range(-0.11..=0.11)))
        }
    };
    EgoMotion::from_vectors(clamp_norm(w, SUITE_MAX_ROTATION), clamp_norm(t, SUITE_MAX_TRANSLATION))
}

fn suite_intrinsics(rng: &mut ChaCha8Rng) -> Result<CameraIntrinsics> {
    // KITTI field of view at a reduced resolution.
    let width = rng.gen_range(160..=320usize);
    let height = ((width as f64 * 375.0 / 1242.0).round() as usize).max(32);
    let f = 721.5377 * width as f64 / 1242.0;
    CameraIntrinsics::new(f, f, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0, width, height)
}

fn suite_object(rng: &mut ChaCha8Rng, scene: &SceneSpec, plane: f64) -> Option<SceneObject> {
    let intr = scene.intr;
    let margin = 4usize;
    let (w, h) = (intr.width(), intr.height());
    let width = rng.gen_range(6..=(w / 4).max(6));
    let height = rng.gen_range(6..=(h / 3).max(6));
    let col = rng.gen_range(margin..=w - margin - width);
    let row = rng.gen_range(margin..=h - margin - height);
    let rect = Rect { col, row, width, height };
    let depth = rng.gen_range(0.3 * plane..=0.95 * plane);
    let dir = Vector3::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-0.2..=0.2), rng.gen_range(-1.0..=1.0));
    let dir = if dir.norm() > 1e-3 { dir.normalize() } else { Vector3::x() };
    let mut speed = rng.gen_range(0.1..=0.6);

    let proj = Reprojector::new(scene);
    'grow: for _ in 0..40 {
        let velocity: [f64; 3] = (dir * speed).into();
        speed *= 1.25;
        for row in rect.row..rect.row + rect.height {
            for col in rect.col..rect.col + rect.width {
                let (Some(a), Some(b)) =
                    (proj.displacement(col, row, depth, velocity), proj.displacement(col, row, depth, [0.0; 3]))
                else {
                    continue 'grow;
                };
                if ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() < SUITE_MIN_MOVER_RESIDUAL {
                    continue 'grow;
                }
            }
        }
        return Some(SceneObject { rect, depth, velocity });
    }
    None
}

/// `count` reproducible scenes. Kinds cycle through [`SceneKind::CYCLE`],
/// each scene has a background plane 10 to 30 m away and one to five
/// movers in front of it.
pub fn make_suite(seed: u64, count: usize) -> Result<Vec<SceneSpec>> {
    if count == 0 {
        return Err(param("suite needs at least one scene"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes = Vec::with_capacity(count);
    for index in 0..count {
        let intr = suite_intrinsics(&mut rng)?;
        let ego = suite_ego(&mut rng, SceneKind::of_suite_index(index))?;
        let plane = rng.gen_range(10.0..=30.0);
        let base = SceneSpec::plane(intr, ego, plane)?;
        let movers = rng.gen_range(1..=5);
        let mut objects = Vec::with_capacity(movers);
        while objects.len() < movers {
            if let Some(o) = suite_object(&mut rng, &base, plane) {
                objects.push(o);
            }
        }
        scenes.push(SceneSpec::new(intr, ego, Background::Plane(plane), objects)?);
    }
    Ok(scenes)
}
