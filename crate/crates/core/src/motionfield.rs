//! Dense anchor-mesh motion fields.
//!
//! For a pair of anchor frames sharing one mesh, every integer pixel centre
//! `x` covered by source triangle `k` receives `x − A_k(x)`, where `A_k` is
//! the rigid fit from source triangle `k` to destination triangle `k`. A
//! pixel on a shared edge belongs to the lowest-indexed triangle; pixels
//! outside the mesh get `(0, 0)`.

use std::io::{Read, Write};

use image::{Rgb, RgbImage};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{contains_point, estimate_rigid, Point2, RigidTransform2D, Triangle};
use crate::meshing::{reposition, triangulate, AnchorFrame, TriMesh};

/// `.flo` magic: the float 202021.25, little-endian, which spells "PIEH".
pub const FLO_MAGIC: [u8; 4] = *b"PIEH";

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn from_components(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let n = width * height;
        if u.len() != n || v.len() != n {
            return Err(Error::Shape(format!(
                "{width}x{height} field needs {n} entries per channel, got {} and {}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("flow values must be finite".into()));
        }
        Ok(Self { width, height, u, v })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn set(&mut self, x: usize, y: usize, value: (f64, f64)) {
        let i = y * self.width + x;
        self.u[i] = value.0;
        self.v[i] = value.1;
    }

    pub fn max_magnitude(&self) -> f64 {
        self.u.iter().zip(&self.v).map(|(u, v)| u.hypot(*v)).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.u.iter().chain(&self.v).all(|&x| x == 0.0)
    }

    /// Bitwise equality of both channels; distinguishes `0.0` from `-0.0`.
    pub fn bit_identical(&self, other: &FlowField) -> bool {
        let bits = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        self.width == other.width && self.height == other.height && bits(&self.u, &other.u) && bits(&self.v, &other.v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionReport {
    pub field: FlowField,
    pub covered_pixels: usize,
    /// Triangles whose rigid fit fell back to translation only.
    pub degenerate_triangles: Vec<usize>,
}

/// Per-triangle rigid fits from `src` positions to `dst` positions under the
/// mesh connectivity.
pub fn triangle_transforms(
    mesh: &TriMesh,
    src: &AnchorFrame,
    dst: &AnchorFrame,
) -> Result<(Vec<RigidTransform2D>, Vec<usize>)> {
    let src_mesh = reposition(mesh, src)?;
    let dst_mesh = reposition(mesh, dst)?;
    let mut transforms = Vec::with_capacity(mesh.len());
    let mut degenerate = Vec::new();
    for k in 0..mesh.len() {
        let fit = estimate_rigid(&src_mesh.triangle(k), &dst_mesh.triangle(k));
        if fit.fallback {
            degenerate.push(k);
        }
        transforms.push(fit.transform);
    }
    Ok((transforms, degenerate))
}

pub fn extract_motion(src: &AnchorFrame, dst: &AnchorFrame, mesh: &TriMesh) -> Result<MotionReport> {
    src.check_compatible(dst)?;
    let (transforms, degenerate_triangles) = triangle_transforms(mesh, src, dst)?;
    let (width, height) = (src.width, src.height);
    let src_mesh = reposition(mesh, src)?;
    let triangles: Vec<Triangle> = src_mesh.triangles().collect();
    let spans: Vec<Option<PixelBox>> = triangles.iter().map(|t| PixelBox::of(t, width, height)).collect();

    let rows: Vec<(Vec<f64>, Vec<f64>, usize)> = (0..height)
        .into_par_iter()
        .map(|y| {
            let mut u = vec![0.0; width];
            let mut v = vec![0.0; width];
            let mut owner: Vec<Option<usize>> = vec![None; width];
            for (k, span) in spans.iter().enumerate() {
                let Some(span) = span else { continue };
                if y < span.y0 || y > span.y1 {
                    continue;
                }
                for x in span.x0..=span.x1 {
                    if owner[x].is_some() {
                        continue;
                    }
                    let p = Point2::new(x as f64, y as f64);
                    if contains_point(&triangles[k], p) {
                        owner[x] = Some(k);
                        let mapped = transforms[k].apply(p);
                        u[x] = p.x - mapped.x;
                        v[x] = p.y - mapped.y;
                    }
                }
            }
            let covered = owner.iter().filter(|o| o.is_some()).count();
            (u, v, covered)
        })
        .collect();

    let mut field = FlowField::zeros(width, height);
    let mut covered_pixels = 0;
    for (y, (u, v, covered)) in rows.into_iter().enumerate() {
        field.u[y * width..(y + 1) * width].copy_from_slice(&u);
        field.v[y * width..(y + 1) * width].copy_from_slice(&v);
        covered_pixels += covered;
    }
    Ok(MotionReport {
        field,
        covered_pixels,
        degenerate_triangles,
    })
}

/// One report per adjacent frame pair. The mesh is built on the first frame
/// and repositioned onto the others.
pub fn extract_clip_motion(frames: &[AnchorFrame]) -> Result<Vec<MotionReport>> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 frames, got {}",
            frames.len()
        )));
    }
    for f in &frames[1..] {
        frames[0].check_compatible(f)?;
    }
    let mesh = triangulate(&frames[0])?;
    frames
        .par_windows(2)
        .map(|pair| extract_motion(&pair[0], &pair[1], &mesh))
        .collect()
}

/// Inclusive integer pixel bounds of a triangle, clipped to the raster.
#[derive(Debug, Clone, Copy)]
struct PixelBox {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

impl PixelBox {
    fn of(t: &Triangle, width: usize, height: usize) -> Option<PixelBox> {
        if width == 0 || height == 0 || t.is_degenerate() {
            return None;
        }
        let xs = [t.a.x, t.b.x, t.c.x];
        let ys = [t.a.y, t.b.y, t.c.y];
        let lo = |vals: [f64; 3]| vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = |vals: [f64; 3]| vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // One pixel of slack covers points admitted by the containment epsilon.
        let clip = |v: f64, max: usize| v.max(0.0).min((max - 1) as f64) as usize;
        let (x_lo, x_hi, y_lo, y_hi) = (lo(xs) - 1.0, hi(xs) + 1.0, lo(ys) - 1.0, hi(ys) + 1.0);
        if x_hi < 0.0 || y_hi < 0.0 || x_lo > (width - 1) as f64 || y_lo > (height - 1) as f64 {
            return None;
        }
        Some(PixelBox {
            x0: clip(x_lo.floor(), width),
            x1: clip(x_hi.ceil(), width),
            y0: clip(y_lo.floor(), height),
            y1: clip(y_hi.ceil(), height),
        })
    }
}

/// Middlebury `.flo`: magic, `i32` width, `i32` height, then row-major
/// interleaved `(u, v)` as little-endian `f32`.
pub fn write_flo<W: Write>(field: &FlowField, mut sink: W) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + 8 * field.u.len());
    buf.extend_from_slice(&FLO_MAGIC);
    buf.extend_from_slice(&dim_to_i32(field.width)?.to_le_bytes());
    buf.extend_from_slice(&dim_to_i32(field.height)?.to_le_bytes());
    for (u, v) in field.u.iter().zip(&field.v) {
        buf.extend_from_slice(&(*u as f32).to_le_bytes());
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    sink.write_all(&buf)?;
    Ok(())
}

fn dim_to_i32(d: usize) -> Result<i32> {
    i32::try_from(d).map_err(|_| Error::InvalidArgument(format!("dimension {d} exceeds i32")))
}

pub fn read_flo<R: Read>(mut source: R) -> Result<FlowField> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    parse_flo(&bytes)
}

pub fn parse_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 4 || bytes[..4] != FLO_MAGIC {
        let mut magic = [0u8; 4];
        let n = bytes.len().min(4);
        magic[..n].copy_from_slice(&bytes[..n]);
        return Err(Error::BadMagic(magic));
    }
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            expected: 12,
            actual: bytes.len(),
        });
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width < 0 || height < 0 {
        return Err(Error::InvalidArgument(format!(
            "negative flow dimensions {width}x{height}"
        )));
    }
    let (width, height) = (width as usize, height as usize);
    let n = width * height;
    let expected = 12 + 8 * n;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for px in bytes[12..].chunks_exact(8) {
        u.push(f32::from_le_bytes(px[..4].try_into().unwrap()) as f64);
        v.push(f32::from_le_bytes(px[4..].try_into().unwrap()) as f64);
    }
    FlowField::from_components(width, height, u, v)
}

/// Normalization for [`render_flow`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxMagnitude {
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for MaxMagnitude {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(MaxMagnitude::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(MaxMagnitude::Fixed(v)),
            _ => Err(Error::InvalidArgument(format!(
                "max magnitude must be `auto` or a positive number, got `{s}`"
            ))),
        }
    }
}

/// Colour-wheel rendering: hue from `atan2(v, u)`, full saturation, value
/// from magnitude over `max`.
pub fn render_flow(field: &FlowField, max: MaxMagnitude) -> Result<RgbImage> {
    let max = match max {
        MaxMagnitude::Fixed(m) if m > 0.0 && m.is_finite() => m,
        MaxMagnitude::Fixed(m) => return Err(Error::InvalidArgument(format!("max magnitude must be > 0, got {m}"))),
        MaxMagnitude::Auto => field.max_magnitude(),
    };
    let mut img = RgbImage::new(field.width as u32, field.height as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let (u, v) = field.get(x as usize, y as usize);
        let value = if max > 0.0 { (u.hypot(v) / max).min(1.0) } else { 0.0 };
        let hue = v.atan2(u).to_degrees().rem_euclid(360.0);
        *px = hsv_to_rgb(hue, 1.0, value);
    }
    Ok(img)
}

/// `hue` in degrees, `saturation` and `value` in `[0, 1]`.
pub fn hsv_to_rgb(hue: f64, saturation: f64, value: f64) -> Rgb<u8> {
    let c = value * saturation;
    let h = hue.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = value - c;
    let q = |ch: f64| ((ch + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    Rgb([q(r), q(g), q(b)])
}

/// `motion_%06d.flo`
pub fn flo_file_name(pair_index: usize) -> String {
    format!("motion_{pair_index:06}.flo")
}
