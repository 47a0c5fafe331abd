//! Exact 2-D primitives and the per-triangle rigid fit.
//!
//! The rigid fit centralizes both vertex triples, forms their 2×2
//! cross-covariance `H`, and takes the rotation as the orthogonal polar
//! factor `R = (HᵀH)^{1/2} H^{-1}`. The translation moves the rotated source
//! centroid onto the destination centroid.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Signed areas below this magnitude (pixel²) mark a triangle as degenerate.
pub const AREA_EPSILON: f64 = 1e-9;
/// Barycentric slack for boundary inclusion.
pub const CONTAINMENT_EPSILON: f64 = 1e-9;
/// Tolerance for symmetry and eigenvalue sign in [`spd_sqrt2x2`], relative to
/// the matrix magnitude once it exceeds one.
pub const SYM_EPSILON: f64 = 1e-8;
/// Scale-normalized `|det H|` below which the rigid fit falls back.
pub const SINGULAR_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// z-component of the 2-D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm_sq().sqrt()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2::new(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub a: Point2,
    pub b: Point2,
    pub c: Point2,
}

impl Triangle {
    pub const fn new(a: Point2, b: Point2, c: Point2) -> Self {
        Self { a, b, c }
    }

    pub fn vertices(&self) -> [Point2; 3] {
        [self.a, self.b, self.c]
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(self)
    }

    pub fn is_degenerate(&self) -> bool {
        self.signed_area().abs() < AREA_EPSILON
    }

    pub fn centroid(&self) -> Point2 {
        Point2::new(
            (self.a.x + self.b.x + self.c.x) / 3.0,
            (self.a.y + self.b.y + self.c.y) / 3.0,
        )
    }

    pub fn map(&self, f: impl Fn(Point2) -> Point2) -> Triangle {
        Triangle::new(f(self.a), f(self.b), f(self.c))
    }
}

/// 2×2 real matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix2 {
    pub m: [[f64; 2]; 2],
}

impl Matrix2 {
    pub const IDENTITY: Matrix2 = Matrix2 {
        m: [[1.0, 0.0], [0.0, 1.0]],
    };
    pub const ZERO: Matrix2 = Matrix2 {
        m: [[0.0, 0.0], [0.0, 0.0]],
    };

    pub const fn new(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Self {
            m: [[m00, m01], [m10, m11]],
        }
    }

    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c, -s, s, c)
    }

    pub fn transpose(&self) -> Matrix2 {
        Matrix2::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn matmul(&self, rhs: &Matrix2) -> Matrix2 {
        let a = &self.m;
        let b = &rhs.m;
        Matrix2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::new(
            self.m[0][0] * p.x + self.m[0][1] * p.y,
            self.m[1][0] * p.x + self.m[1][1] * p.y,
        )
    }

    pub fn scale(&self, s: f64) -> Matrix2 {
        Matrix2::new(self.m[0][0] * s, self.m[0][1] * s, self.m[1][0] * s, self.m[1][1] * s)
    }

    pub fn inverse(&self) -> Option<Matrix2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Matrix2::new(self.m[1][1], -self.m[0][1], -self.m[1][0], self.m[0][0]).scale(1.0 / det))
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    /// Rotation angle in `(-π, π]`, meaningful for proper rotations.
    pub fn angle(&self) -> f64 {
        self.m[1][0].atan2(self.m[0][0])
    }
}

/// Rotation followed by translation: `p ↦ R·p + O`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform2D {
    pub rotation: Matrix2,
    pub translation: Point2,
}

impl RigidTransform2D {
    pub const IDENTITY: RigidTransform2D = RigidTransform2D {
        rotation: Matrix2::IDENTITY,
        translation: Point2::ZERO,
    };

    pub fn new(rotation: Matrix2, translation: Point2) -> Self {
        Self { rotation, translation }
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        apply_rigid(self, p)
    }

    /// Sum of squared vertex errors `Σ |T(src_j) − dst_j|²`.
    pub fn residual(&self, src: &Triangle, dst: &Triangle) -> f64 {
        src.vertices()
            .iter()
            .zip(dst.vertices().iter())
            .map(|(&s, &d)| (self.apply(s) - d).norm_sq())
            .sum()
    }
}

/// Result of [`estimate_rigid`]; `fallback` is set when the geometry was too
/// collapsed for a rotation and a translation-only transform was returned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidFit {
    pub transform: RigidTransform2D,
    pub fallback: bool,
}

pub fn signed_area(t: &Triangle) -> f64 {
    (t.b - t.a).cross(t.c - t.a) / 2.0
}

pub fn barycentric(t: &Triangle, p: Point2) -> Result<(f64, f64, f64)> {
    let ab = t.b - t.a;
    let ac = t.c - t.a;
    let denom = ab.cross(ac);
    if (denom / 2.0).abs() < AREA_EPSILON {
        return Err(Error::DegenerateTriangle);
    }
    let ap = p - t.a;
    let wb = ap.cross(ac) / denom;
    let wc = ab.cross(ap) / denom;
    Ok((1.0 - wb - wc, wb, wc))
}

/// Boundary points count as inside. Degenerate triangles contain nothing.
pub fn contains_point(t: &Triangle, p: Point2) -> bool {
    match barycentric(t, p) {
        Ok((wa, wb, wc)) => wa >= -CONTAINMENT_EPSILON && wb >= -CONTAINMENT_EPSILON && wc >= -CONTAINMENT_EPSILON,
        Err(_) => false,
    }
}

/// Returns the vertexes shifted so their centroid is the origin, and that
/// centroid.
pub fn centralize(t: &Triangle) -> (Triangle, Point2) {
    let g = t.centroid();
    let a = t.a - g;
    let b = t.b - g;
    let c = t.c - g;
    (Triangle::new(a, b, c), g)
}

/// `H = Σ_j s_j d_jᵀ` over the three vertex pairs.
pub fn cross_covariance(src: &Triangle, dst: &Triangle) -> Matrix2 {
    let mut h = Matrix2::ZERO;
    for (s, d) in src.vertices().iter().zip(dst.vertices().iter()) {
        h.m[0][0] += s.x * d.x;
        h.m[0][1] += s.x * d.y;
        h.m[1][0] += s.y * d.x;
        h.m[1][1] += s.y * d.y;
    }
    h
}

/// Principal square root of a symmetric positive semi-definite 2×2 matrix.
///
/// Closed form: with `s = √det M` and `t = √(tr M + 2s)`, the root is
/// `(M + s·I) / t` (Cayley–Hamilton).
pub fn spd_sqrt2x2(m: &Matrix2) -> Result<Matrix2> {
    if !m.is_finite() {
        return Err(Error::NotSpd("non-finite entry".into()));
    }
    let tol = SYM_EPSILON * m.max_abs().max(1.0);
    let off = 0.5 * (m.m[0][1] + m.m[1][0]);
    if (m.m[0][1] - m.m[1][0]).abs() > tol {
        return Err(Error::NotSpd(format!(
            "off-diagonal entries differ: {} vs {}",
            m.m[0][1], m.m[1][0]
        )));
    }
    let (p, q) = (m.m[0][0], m.m[1][1]);
    let half_gap = ((p - q) * 0.5).hypot(off);
    let min_eig = 0.5 * (p + q) - half_gap;
    if min_eig < -tol {
        return Err(Error::NotSpd(format!("negative eigenvalue {min_eig}")));
    }
    let sym = Matrix2::new(p, off, off, q);
    let det = sym.det().max(0.0);
    let s = det.sqrt();
    let t2 = sym.trace() + 2.0 * s;
    if t2 <= 0.0 {
        return Ok(Matrix2::ZERO);
    }
    let t = t2.sqrt();
    Ok(Matrix2::new((p + s) / t, off / t, off / t, (q + s) / t))
}

/// Least-squares rigid transform taking `src` onto `dst`.
pub fn estimate_rigid(src: &Triangle, dst: &Triangle) -> RigidFit {
    let (src_c, src_g) = centralize(src);
    let (dst_c, dst_g) = centralize(dst);
    let fallback = RigidFit {
        transform: RigidTransform2D::new(Matrix2::IDENTITY, dst_g - src_g),
        fallback: true,
    };
    if src.is_degenerate() {
        return fallback;
    }
    if src == dst {
        return RigidFit {
            transform: RigidTransform2D::IDENTITY,
            fallback: false,
        };
    }

    // R is invariant to positive scaling of H; normalizing keeps the
    // singularity test and the square root well-conditioned.
    let scale = frobenius(&src_c) * frobenius(&dst_c);
    if !scale.is_finite() || scale <= 0.0 {
        return fallback;
    }
    let h = cross_covariance(&src_c, &dst_c).scale(1.0 / scale);
    let det_h = h.det();
    if det_h.abs() < SINGULAR_EPSILON {
        return fallback;
    }
    let hth = h.transpose().matmul(&h);
    let Ok(mut root) = spd_sqrt2x2(&hth) else {
        return fallback;
    };
    if det_h < 0.0 {
        // (HᵀH)^{1/2}H^{-1} would be a reflection; negate the root along its
        // smaller eigen-direction so the product is a proper rotation.
        root = flip_smallest_direction(&root);
    }
    let Some(h_inv) = h.inverse() else {
        return fallback;
    };
    let rotation = root.matmul(&h_inv);
    let translation = dst_g - rotation.apply(src_g);
    RigidFit {
        transform: RigidTransform2D::new(rotation, translation),
        fallback: false,
    }
}

pub fn apply_rigid(t: &RigidTransform2D, p: Point2) -> Point2 {
    t.rotation.apply(p) + t.translation
}

fn frobenius(t: &Triangle) -> f64 {
    (t.a.norm_sq() + t.b.norm_sq() + t.c.norm_sq()).sqrt()
}

/// `S − 2·σ_min·P_min` for symmetric PSD `S`, with `P_min` the projector onto
/// the eigenvector of the smaller eigenvalue.
fn flip_smallest_direction(s: &Matrix2) -> Matrix2 {
    let (p, q, r) = (s.m[0][0], s.m[1][1], s.m[0][1]);
    let mean = 0.5 * (p + q);
    let half_gap = ((p - q) * 0.5).hypot(r);
    let small = mean - half_gap;
    let proj = if half_gap > 0.0 {
        // (S − σ_max I) / (σ_min − σ_max)
        let big = mean + half_gap;
        Matrix2::new(p - big, r, r, q - big).scale(-1.0 / (2.0 * half_gap))
    } else {
        Matrix2::new(0.0, 0.0, 0.0, 1.0)
    };
    let k = 2.0 * small;
    Matrix2::new(
        p - k * proj.m[0][0],
        r - k * proj.m[0][1],
        r - k * proj.m[1][0],
        q - k * proj.m[1][1],
    )
}
