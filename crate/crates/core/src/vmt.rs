//! Vehicle motion tensors: ego-motion fields encoded as color wheel images,
//! plus a per-parameter decomposition for diagnostics.

use std::fmt;

use crate::codec::colorwheel::{saturation, ColorWheel, WHEEL_BINS};
use crate::codec::{colorwheel_encode, hue_position, normalize_field, Normalization, VmtImage};
use crate::error::{format, param, Result};
use crate::geometry::{add, ego_field, sum3, CameraIntrinsics, DepthModel, EgoFieldKernel, EgoMotion, MotionField};

/// One of the six motion parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    RotationX,
    RotationY,
    RotationZ,
    TranslationX,
    TranslationY,
    TranslationZ,
}

impl Component {
    /// In parameter order `[wx, wy, wz, tx, ty, tz]`.
    pub const ALL: [Component; 6] = [
        Component::RotationX,
        Component::RotationY,
        Component::RotationZ,
        Component::TranslationX,
        Component::TranslationY,
        Component::TranslationZ,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::RotationX => "rot_x",
            Component::RotationY => "rot_y",
            Component::RotationZ => "rot_z",
            Component::TranslationX => "trans_x",
            Component::TranslationY => "trans_y",
            Component::TranslationZ => "trans_z",
        }
    }

    pub fn is_rotation(self) -> bool {
        self.index() < 3
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn validated_scale(norm: Normalization) -> Result<Option<f64>> {
    match norm {
        Normalization::Fixed(s) if !(s.is_finite() && s > 0.0) => {
            Err(param(format!("normalization scale must be positive, got {s}")))
        }
        Normalization::Fixed(s) => Ok(Some(s)),
        Normalization::PerFrameMax => Ok(None),
    }
}

/// Color wheel VMT of the ego-motion field.
///
/// Equal to `colorwheel_encode(normalize_field(ego_field(..), norm),
/// Fixed(1.0))`, computed in one or two passes without intermediate fields.
pub fn build_vmt(intr: &CameraIntrinsics, ego: &EgoMotion, depth: &DepthModel, norm: Normalization) -> Result<VmtImage> {
    let kernel = EgoFieldKernel::new(intr, ego, depth);
    let (w, h) = (intr.width(), intr.height());
    let xs: Vec<f64> = (0..w).map(|col| intr.centered(col, 0).0).collect();
    let (mut u, mut v) = (vec![0.0; w], vec![0.0; w]);
    let fill_row = |row: usize, u: &mut [f64], v: &mut [f64]| {
        let y = intr.centered(0, row).1;
        for ((x, u), v) in xs.iter().zip(u.iter_mut()).zip(v.iter_mut()) {
            (*u, *v) = kernel.at(*x, y);
        }
    };
    let scale = match validated_scale(norm)? {
        Some(s) => s,
        None => {
            // sqrt is monotonic and correctly rounded, so the largest
            // squared magnitude yields the largest magnitude exactly.
            let mut max_sq = 0.0f64;
            for row in 0..h {
                fill_row(row, &mut u, &mut v);
                max_sq = u.iter().zip(&v).map(|(a, b)| a * a + b * b).fold(max_sq, f64::max);
            }
            if max_sq > 0.0 {
                max_sq.sqrt()
            } else {
                1.0
            }
        }
    };
    let wheel = ColorWheel::standard();
    let mut rows = RowBuffers::new(w);
    let mut rgb = vec![0u8; w * h * 3];
    for (row, line) in rgb.chunks_exact_mut(w * 3).enumerate() {
        fill_row(row, &mut u, &mut v);
        rows.encode(&wheel, &u, &v, 1.0 / scale, line);
    }
    VmtImage::new(w, h, rgb)
}

/// Scratch space for encoding one image row in passes the compiler can
/// vectorize. Gives the same bytes as [`ColorWheel::color`] per pixel.
struct RowBuffers {
    rad: Vec<f64>,
    frac: Vec<f64>,
    bin: Vec<i32>,
    c0: [Vec<f64>; 3],
    c1: [Vec<f64>; 3],
    out: [Vec<u8>; 3],
}

impl RowBuffers {
    fn new(w: usize) -> Self {
        let f = || vec![0.0; w];
        let b = || vec![0u8; w];
        Self {
            rad: f(),
            frac: f(),
            bin: vec![0; w],
            c0: [f(), f(), f()],
            c1: [f(), f(), f()],
            out: [b(), b(), b()],
        }
    }

    fn encode(&mut self, wheel: &ColorWheel, u: &[f64], v: &[f64], inv: f64, line: &mut [u8]) {
        let w = u.len();
        let (rad, frac, bin) = (&mut self.rad[..w], &mut self.frac[..w], &mut self.bin[..w]);
        for ((((u, v), rad), frac), bin) in u.iter().zip(&v[..w]).zip(rad.iter_mut()).zip(frac.iter_mut()).zip(bin.iter_mut()) {
            let (a, b) = (u * inv, v * inv);
            *rad = saturation(a, b);
            let fk = hue_position(a, b);
            // fk lies in [0, 54], where truncation is floor
            let k = fk as i32;
            *bin = k;
            *frac = fk - k as f64;
        }
        let unit = wheel.unit_colors();
        let [c0r, c0g, c0b] = &mut self.c0;
        let [c1r, c1g, c1b] = &mut self.c1;
        for (i, &k) in bin.iter().enumerate() {
            let k0 = (k as usize).min(WHEEL_BINS - 1);
            let k1 = if k0 + 1 == WHEEL_BINS { 0 } else { k0 + 1 };
            let (a, b) = (unit[k0], unit[k1]);
            (c0r[i], c0g[i], c0b[i]) = (a[0], a[1], a[2]);
            (c1r[i], c1g[i], c1b[i]) = (b[0], b[1], b[2]);
        }
        for ch in 0..3 {
            let (c0, c1, out) = (&self.c0[ch][..w], &self.c1[ch][..w], &mut self.out[ch][..w]);
            for ((((out, c0), c1), f), r) in out.iter_mut().zip(c0).zip(c1).zip(&*frac).zip(&*rad) {
                let col = (1.0 - f) * c0 + f * c1;
                let col = 1.0 - r * (1.0 - col);
                *out = (255.0 * col) as u8;
            }
        }
        let [r, g, b] = &self.out;
        for (((px, r), g), b) in line.chunks_exact_mut(3).zip(&r[..w]).zip(&g[..w]).zip(&b[..w]) {
            px.copy_from_slice(&[*r, *g, *b]);
        }
    }
}

/// Reference composition of [`build_vmt`] from the individual operations.
pub fn build_vmt_composed(
    intr: &CameraIntrinsics,
    ego: &EgoMotion,
    depth: &DepthModel,
    norm: Normalization,
) -> Result<VmtImage> {
    let field = ego_field(intr, ego, depth)?;
    colorwheel_encode(&normalize_field(&field, norm)?, Normalization::Fixed(1.0))
}

/// The six single-parameter fields of an ego-motion and their images.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    fields: Vec<MotionField>,
    images: Vec<VmtImage>,
}

impl Decomposition {
    pub fn field(&self, c: Component) -> &MotionField {
        &self.fields[c.index()]
    }

    pub fn image(&self, c: Component) -> &VmtImage {
        &self.images[c.index()]
    }

    pub fn fields(&self) -> &[MotionField] {
        &self.fields
    }

    pub fn images(&self) -> &[VmtImage] {
        &self.images
    }

    /// Sums the components in the order the full field accumulates them:
    /// rotations x, y, z, then translations x, y, z, then rotation plus
    /// translation. Reproduces [`ego_field`] exactly.
    pub fn sum(&self) -> MotionField {
        let f = &self.fields;
        let (w, h) = (f[0].width(), f[0].height());
        let mut i = 0;
        MotionField::from_fn(w, h, |_, _| {
            let at = |k: usize| (f[k].u()[i], f[k].v()[i]);
            let rot = sum3([at(0), at(1), at(2)]);
            let trans = sum3([at(3), at(4), at(5)]);
            i += 1;
            add(rot, trans)
        })
    }

    /// Mean squared magnitude of each component field.
    pub fn energies(&self) -> [f64; 6] {
        let mut e = [0.0; 6];
        for (k, f) in self.fields.iter().enumerate() {
            e[k] = f.iter().map(|(u, v)| u * u + v * v).sum::<f64>() / f.len() as f64;
        }
        e
    }
}

/// Splits an ego-motion into its six single-parameter fields, each computed
/// with the other five parameters set to zero, and encodes each one.
pub fn decompose_vmt(
    intr: &CameraIntrinsics,
    ego: &EgoMotion,
    depth: &DepthModel,
    norm: Normalization,
) -> Result<Decomposition> {
    let params = ego.parameters();
    let mut fields = Vec::with_capacity(6);
    let mut images = Vec::with_capacity(6);
    for k in 0..6 {
        let mut only = [0.0; 6];
        only[k] = params[k];
        let single = ego.with_parameters(only);
        let field = ego_field(intr, &single, depth)?;
        images.push(colorwheel_encode(&normalize_field(&field, norm)?, Normalization::Fixed(1.0))?);
        fields.push(field);
    }
    Ok(Decomposition { fields, images })
}

/// Which component carries the most field energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dominance {
    /// `None` when every component is zero.
    pub dominant: Option<Component>,
    /// Share of the total energy per component, in [`Component::ALL`] order.
    pub fractions: [f64; 6],
}

impl Dominance {
    pub fn fraction(&self, c: Component) -> f64 {
        self.fractions[c.index()]
    }
}

pub fn dominant_component(decomposition: &Decomposition) -> Dominance {
    let energies = decomposition.energies();
    let total: f64 = energies.iter().sum();
    if total <= 0.0 {
        return Dominance { dominant: None, fractions: [0.0; 6] };
    }
    let mut fractions = [0.0; 6];
    let mut best = 0;
    for k in 0..6 {
        fractions[k] = energies[k] / total;
        if energies[k] > energies[best] {
            best = k;
        }
    }
    Dominance { dominant: Some(Component::ALL[best]), fractions }
}

/// Magic bytes of the raw tensor dump.
pub const TENSOR_MAGIC: [u8; 4] = *b"VMTF";

/// Serializes fields as a planar `f32` little-endian tensor behind a
/// 16-byte header: magic, channel count, width, height (`u32` LE). Each
/// field contributes a `u` plane followed by a `v` plane.
pub fn write_tensor(fields: &[&MotionField]) -> Result<Vec<u8>> {
    let first = fields.first().ok_or_else(|| param("tensor needs at least one field"))?;
    if fields.iter().any(|f| !f.same_shape(first)) {
        return Err(param("tensor fields must share one size"));
    }
    let channels = 2 * fields.len() as u32;
    let mut out = Vec::with_capacity(16 + 4 * channels as usize * first.len());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&(first.width() as u32).to_le_bytes());
    out.extend_from_slice(&(first.height() as u32).to_le_bytes());
    for f in fields {
        for plane in [f.u(), f.v()] {
            for &s in plane {
                out.extend_from_slice(&(s as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// A decoded tensor dump.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    /// Planar samples, `channels * height * width`.
    pub data: Vec<f32>,
}

pub fn read_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 16 || bytes[..4] != TENSOR_MAGIC {
        return Err(format("missing tensor header"));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as usize;
    let (channels, width, height) = (word(4), word(8), word(12));
    let n = channels
        .checked_mul(width)
        .and_then(|n| n.checked_mul(height))
        .ok_or_else(|| format("tensor size overflows"))?;
    if bytes.len() != 16 + 4 * n {
        return Err(format(format!("tensor payload should be {} bytes, got {}", 4 * n, bytes.len() - 16)));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Tensor { channels, width, height, data })
}

/// Appends the magnitude of every `stride`-th pixel (in both directions).
pub fn magnitude_samples(field: &MotionField, stride: usize, out: &mut Vec<f64>) -> Result<()> {
    if stride == 0 {
        return Err(param("sample stride must be positive"));
    }
    for row in (0..field.height()).step_by(stride) {
        for col in (0..field.width()).step_by(stride) {
            out.push(field.magnitude_at(col, row));
        }
    }
    Ok(())
}

/// Nearest-rank quantile `q` in `[0, 1]`; reorders `values`.
pub fn quantile(values: &mut [f64], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(param(format!("quantile must lie in [0, 1], got {q}")));
    }
    if values.is_empty() {
        return Err(param("no samples for quantile"));
    }
    values.sort_by(f64::total_cmp);
    let idx = ((values.len() - 1) as f64 * q).round() as usize;
    Ok(values[idx])
}

/// Magnitude at quantile `q` over every `stride`-th pixel of the given
/// fields. Used to pick a fixed normalization scale shared by a batch of
/// frames.
pub fn magnitude_quantile<'a>(fields: impl IntoIterator<Item = &'a MotionField>, q: f64, stride: usize) -> Result<f64> {
    let mut mags = Vec::new();
    for f in fields {
        magnitude_samples(f, stride, &mut mags)?;
    }
    quantile(&mut mags, q)
}
