//! Synthetic faces for demos, fixtures and tests: a 68-point landmark layout
//! in the usual jaw/brows/nose/eyes/mouth order, seeded smooth motion, and
//! simple rendered frames.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::geometry::{contains_point, Matrix2, Point2};
use crate::meshing::{triangulate, AnchorFrame};
use crate::tensor::{Tensor2, Tensor3};

/// 68 landmarks in a unit-ish face box centred on the origin (x right,
/// y down): 17 jaw, 5+5 brows, 4 nose bridge, 5 nostrils, 6+6 eyes,
/// 12 outer lip, 8 inner lip.
pub fn canonical_landmarks_68() -> Vec<Point2> {
    let mut pts = Vec::with_capacity(68);
    // Jaw: left temple, around the chin, right temple.
    for i in 0..17 {
        let t = PI - i as f64 * PI / 16.0;
        pts.push(Point2::new(0.80 * t.cos(), 0.05 + 0.95 * t.sin()));
    }
    // Brows.
    for side in [-1.0, 1.0] {
        for i in 0..5 {
            let s = i as f64 / 4.0;
            let x = if side < 0.0 { -0.68 + 0.52 * s } else { 0.16 + 0.52 * s };
            let arch = (s * PI).sin() * 0.10;
            pts.push(Point2::new(x, -0.40 - arch));
        }
    }
    // Nose bridge.
    for i in 0..4 {
        pts.push(Point2::new(0.0, -0.22 + 0.10 * i as f64));
    }
    // Nostrils.
    for i in 0..5 {
        let s = (i as f64 - 2.0) / 2.0;
        pts.push(Point2::new(0.16 * s, 0.20 + 0.04 * (1.0 - s * s)));
    }
    // Eyes: outer corner, two top, inner corner, two bottom.
    for cx in [-0.36f64, 0.36] {
        let outward = cx.signum();
        for k in 0..6 {
            let t = PI + k as f64 * PI / 3.0;
            pts.push(Point2::new(cx - outward * 0.15 * t.cos(), -0.22 + 0.06 * t.sin()));
        }
    }
    // Outer lip, starting at the left corner, clockwise.
    for i in 0..12 {
        let t = PI + i as f64 * PI / 6.0;
        let ry = if t.sin() < 0.0 { 0.10 } else { 0.14 };
        pts.push(Point2::new(0.30 * t.cos(), 0.50 + ry * t.sin()));
    }
    // Inner lip.
    for i in 0..8 {
        let t = PI + i as f64 * PI / 4.0;
        pts.push(Point2::new(0.20 * t.cos(), 0.50 + 0.04 * t.sin()));
    }
    debug_assert_eq!(pts.len(), 68);
    pts
}

/// Places the canonical layout in a `width×height` raster, the face spanning
/// roughly `scale` of the smaller dimension.
pub fn landmarks_in_frame(width: usize, height: usize, scale: f64) -> Vec<Point2> {
    let half = 0.5 * scale * width.min(height) as f64;
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0 - 0.1 * half);
    canonical_landmarks_68()
        .into_iter()
        .map(|p| Point2::new(cx + half * p.x, cy + half * p.y))
        .collect()
}

/// Seeded anchor sequence: a slow global rotation and drift plus independent
/// Gaussian jitter of `sigma` pixels per anchor.
pub fn synthetic_clip(frames: usize, width: usize, height: usize, sigma: f64, seed: u64) -> Result<Vec<AnchorFrame>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = landmarks_in_frame(width, height, 0.6);
    let centre = Point2::new(width as f64 / 2.0, height as f64 / 2.0);
    let jitter = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let spin = rng.random_range(-0.02..0.02);
    let drift = Point2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
    (0..frames)
        .map(|i| {
            let rot = Matrix2::rotation(spin * i as f64);
            let anchors = base
                .iter()
                .map(|&p| {
                    let q = rot.apply(p - centre) + centre + drift * i as f64;
                    let noise = if i == 0 || sigma == 0.0 {
                        Point2::ZERO
                    } else {
                        Point2::new(jitter.sample(&mut rng), jitter.sample(&mut rng))
                    };
                    clamp_into(q + noise, width, height)
                })
                .collect();
            AnchorFrame::new(i, width, height, anchors)
        })
        .collect()
}

fn clamp_into(p: Point2, width: usize, height: usize) -> Point2 {
    Point2::new(p.x.clamp(0.0, width as f64 - 1.0), p.y.clamp(0.0, height as f64 - 1.0))
}

/// RGB frame in `[0, 1]`: a smooth background with a lit face region inside
/// the anchor mesh.
pub fn render_frame(anchors: &AnchorFrame, seed: u64) -> Result<Tensor3> {
    let mesh = triangulate(anchors)?;
    let tris: Vec<_> = mesh.triangles().collect();
    let phase = (seed % 1000) as f64 * 0.37;
    let (h, w) = (anchors.height, anchors.width);
    let mut img = Tensor3::zeros(h, w, 3);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64, y as f64);
            let p = Point2::new(fx, fy);
            let face = tris.iter().any(|t| contains_point(t, p));
            let tex = 0.5 + 0.25 * ((fx / 13.0 + phase).sin() * (fy / 17.0 - phase).cos());
            let rgb = if face {
                [0.80 * tex + 0.15, 0.60 * tex + 0.10, 0.45 * tex + 0.05]
            } else {
                [0.30 * tex, 0.35 * tex + 0.1, 0.50 * tex + 0.2]
            };
            for (ch, v) in rgb.iter().enumerate() {
                img.set(y, x, ch, v.clamp(0.0, 1.0));
            }
        }
    }
    Ok(img)
}

/// Binary mask of the mesh triangles touching any of `anchor_indices`.
pub fn region_mask(anchors: &AnchorFrame, anchor_indices: &[usize]) -> Result<Tensor2> {
    let mesh = triangulate(anchors)?;
    let tris: Vec<_> = mesh
        .connectivity
        .iter()
        .enumerate()
        .filter(|(_, t)| t.iter().any(|v| anchor_indices.contains(v)))
        .map(|(k, _)| mesh.triangle(k))
        .collect();
    let mut m = Tensor2::zeros(anchors.height, anchors.width);
    for y in 0..anchors.height {
        for x in 0..anchors.width {
            if tris.iter().any(|t| contains_point(t, Point2::new(x as f64, y as f64))) {
                m[(y, x)] = 1.0;
            }
        }
    }
    Ok(m)
}
