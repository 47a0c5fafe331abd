//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use anchormesh::geometry::{Matrix2, Point2, RigidTransform2D, Triangle};
use anchormesh::meshing::AnchorFrame;
use rand::Rng;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn amm() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_amm"))
}

/// Triangle with vertices in `[-scale, scale]²`, rejecting slivers whose
/// area is under 5% of the squared longest side.
pub fn random_triangle<R: Rng>(rng: &mut R, scale: f64) -> Triangle {
    loop {
        let mut p = || Point2::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale));
        let t = Triangle::new(p(), p(), p());
        let longest = t.a.distance(t.b).max(t.b.distance(t.c)).max(t.c.distance(t.a));
        if t.signed_area().abs() > 0.05 * longest * longest {
            return t;
        }
    }
}

pub fn random_rigid<R: Rng>(rng: &mut R, reach: f64) -> (f64, RigidTransform2D) {
    let angle = rng.random_range(-PI..PI);
    let t = Point2::new(rng.random_range(-reach..reach), rng.random_range(-reach..reach));
    (angle, RigidTransform2D::new(Matrix2::rotation(angle), t))
}

pub fn jitter<R: Rng>(rng: &mut R, t: &Triangle, sigma: f64) -> Triangle {
    let mut nudge = |p: Point2| p + Point2::new(rng.random_range(-sigma..sigma), rng.random_range(-sigma..sigma));
    Triangle::new(nudge(t.a), nudge(t.b), nudge(t.c))
}

/// `n` uniform points in `[0, w)×[0, h)`.
pub fn random_points<R: Rng>(rng: &mut R, n: usize, w: f64, h: f64) -> Vec<Point2> {
    (0..n)
        .map(|_| Point2::new(rng.random_range(0.0..w), rng.random_range(0.0..h)))
        .collect()
}

/// Random `w×h` clip of `frames` frames: a random anchor set, then each frame
/// moves every anchor by up to `step` pixels, kept inside the raster.
pub fn random_clip<R: Rng>(rng: &mut R, w: usize, h: usize, n: usize, frames: usize, step: f64) -> Vec<AnchorFrame> {
    let mut anchors = random_points(rng, n, w as f64, h as f64);
    let mut out = Vec::with_capacity(frames);
    for i in 0..frames {
        if i > 0 {
            for p in anchors.iter_mut() {
                let q = *p + Point2::new(rng.random_range(-step..step), rng.random_range(-step..step));
                *p = Point2::new(q.x.clamp(0.0, w as f64 - 1e-6), q.y.clamp(0.0, h as f64 - 1e-6));
            }
        }
        out.push(AnchorFrame::new(i, w, h, anchors.clone()).expect("anchors inside the raster"));
    }
    out
}
