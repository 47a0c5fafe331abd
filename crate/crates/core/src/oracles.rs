//! Slow, independent references for the fast paths.
//!
//! Nothing here calls into the code it checks except where noted: the motion
//! oracle takes the per-triangle transforms from the rigid estimator (their
//! correctness is the grid search's job) and re-does rasterization and
//! application with its own arithmetic.

use std::f64::consts::TAU;

use crate::attention::FaParams;
use crate::error::{Error, Result};
use crate::geometry::{estimate_rigid, Matrix2, Point2, RigidTransform2D, Triangle};
use crate::meshing::{AnchorFrame, TriMesh};
use crate::motionfield::FlowField;
use crate::tensor::{Tensor2, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Angular step of the rotation scan, radians.
    pub angle_resolution: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { angle_resolution: 1e-5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridFit {
    pub transform: RigidTransform2D,
    /// Best angle on the grid, in `[0, 2π)`.
    pub angle: f64,
    pub residual: f64,
}

/// Exhaustive scan over rotation angles with centroid-matching translation.
pub fn rigid_grid_search(src: &Triangle, dst: &Triangle, cfg: &OracleConfig) -> GridFit {
    assert!(cfg.angle_resolution > 0.0, "angle resolution must be positive");
    let s = [src.a, src.b, src.c];
    let d = [dst.a, dst.b, dst.c];
    let (sx, sy) = ((s[0].x + s[1].x + s[2].x) / 3.0, (s[0].y + s[1].y + s[2].y) / 3.0);
    let (dx, dy) = ((d[0].x + d[1].x + d[2].x) / 3.0, (d[0].y + d[1].y + d[2].y) / 3.0);

    // residual(θ) = base − 2·(A·cos θ + B·sin θ) over centred vertices.
    let (mut base, mut a, mut b) = (0.0, 0.0, 0.0);
    for j in 0..3 {
        let (px, py) = (s[j].x - sx, s[j].y - sy);
        let (qx, qy) = (d[j].x - dx, d[j].y - dy);
        base += px * px + py * py + qx * qx + qy * qy;
        a += qx * px + qy * py;
        b += qy * px - qx * py;
    }

    let step = cfg.angle_resolution;
    let steps = (TAU / step).ceil() as usize;
    let (sin_step, cos_step) = step.sin_cos();
    let (mut best_k, mut best_val) = (0usize, f64::INFINITY);
    let (mut sin_t, mut cos_t) = (0.0f64, 1.0f64);
    for k in 0..steps {
        if k % 1024 == 0 {
            (sin_t, cos_t) = (k as f64 * step).sin_cos();
        }
        let val = base - 2.0 * (a * cos_t + b * sin_t);
        if val < best_val {
            best_val = val;
            best_k = k;
        }
        (sin_t, cos_t) = (sin_t * cos_step + cos_t * sin_step, cos_t * cos_step - sin_t * sin_step);
    }

    let angle = best_k as f64 * step;
    let (st, ct) = angle.sin_cos();
    let rotation = Matrix2::new(ct, -st, st, ct);
    let translation = Point2::new(dx - (ct * sx - st * sy), dy - (st * sx + ct * sy));
    let mut residual = 0.0;
    for j in 0..3 {
        let mx = ct * s[j].x - st * s[j].y + translation.x;
        let my = st * s[j].x + ct * s[j].y + translation.y;
        residual += (mx - d[j].x).powi(2) + (my - d[j].y).powi(2);
    }
    GridFit {
        transform: RigidTransform2D::new(rotation, translation),
        angle,
        residual,
    }
}

/// Smallest absolute difference between two angles, in `[0, π]`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Per-pixel motion: for every pixel test every triangle in index order and
/// apply the first container's transform.
pub fn per_pixel_motion_oracle(src: &AnchorFrame, dst: &AnchorFrame, mesh: &TriMesh) -> FlowField {
    let tri = |frame: &AnchorFrame, k: usize| {
        let [i, j, l] = mesh.connectivity[k];
        Triangle::new(frame.anchors[i], frame.anchors[j], frame.anchors[l])
    };
    let transforms: Vec<RigidTransform2D> = (0..mesh.len())
        .map(|k| estimate_rigid(&tri(src, k), &tri(dst, k)).transform)
        .collect();
    let src_tris: Vec<Triangle> = (0..mesh.len()).map(|k| tri(src, k)).collect();

    let mut field = FlowField::zeros(src.width, src.height);
    for y in 0..src.height {
        for x in 0..src.width {
            let (px, py) = (x as f64, y as f64);
            for (k, t) in src_tris.iter().enumerate() {
                if inside(t, px, py) {
                    let r = &transforms[k].rotation.m;
                    let o = transforms[k].translation;
                    let mx = (r[0][0] * px + r[0][1] * py) + o.x;
                    let my = (r[1][0] * px + r[1][1] * py) + o.y;
                    field.set(x, y, (px - mx, py - my));
                    break;
                }
            }
        }
    }
    field
}

fn inside(t: &Triangle, px: f64, py: f64) -> bool {
    let (abx, aby) = (t.b.x - t.a.x, t.b.y - t.a.y);
    let (acx, acy) = (t.c.x - t.a.x, t.c.y - t.a.y);
    let denom = abx * acy - aby * acx;
    if (denom / 2.0).abs() < 1e-9 {
        return false;
    }
    let (apx, apy) = (px - t.a.x, py - t.a.y);
    let wb = (apx * acy - apy * acx) / denom;
    let wc = (abx * apy - aby * apx) / denom;
    let wa = 1.0 - wb - wc;
    wa >= -1e-9 && wb >= -1e-9 && wc >= -1e-9
}

/// Scalar-loop single attention head.
pub fn naive_attention(
    qtok: &Tensor2,
    ktok: &Tensor2,
    vtok: &Tensor2,
    qn: &Tensor2,
    kn: &Tensor2,
    vn: &Tensor2,
) -> Result<Tensor2> {
    let t = qtok.rows();
    let c = qtok.cols();
    let d = qn.cols();
    if ktok.rows() != t || vtok.rows() != t || ktok.cols() != c || vtok.cols() != c {
        return Err(Error::Shape("token blocks disagree".into()));
    }
    if qn.shape() != (c, d) || kn.shape() != (c, d) || vn.shape() != (c, d) {
        return Err(Error::Shape("projection shapes disagree".into()));
    }
    let project = |tok: &Tensor2, w: &Tensor2| {
        let mut out = vec![vec![0.0; d]; t];
        for i in 0..t {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..c {
                    s += tok[(i, k)] * w[(k, j)];
                }
                out[i][j] = s;
            }
        }
        out
    };
    let q = project(qtok, qn);
    let k = project(ktok, kn);
    let v = project(vtok, vn);
    let mut out = Tensor2::zeros(t, d);
    for i in 0..t {
        let mut logits = vec![0.0; t];
        for j in 0..t {
            let mut s = 0.0;
            for l in 0..d {
                s += q[i][l] * k[j][l];
            }
            logits[j] = s / (d as f64).sqrt();
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
        let total: f64 = exps.iter().sum();
        for l in 0..d {
            let mut s = 0.0;
            for j in 0..t {
                s += exps[j] / total * v[j][l];
            }
            out[(i, l)] = s;
        }
    }
    Ok(out)
}

/// Naive composition of the full fusion block.
pub fn naive_fa_forward(xf: &Tensor3, xm: &Tensor3, p: &FaParams) -> Result<Tensor3> {
    let (h, w, c) = xf.shape();
    if xm.shape() != (h, w, c) || c != p.channels {
        return Err(Error::Shape("inputs disagree with parameters".into()));
    }
    let t = h * w;
    let flat = |x: &Tensor3| {
        let mut m = Tensor2::zeros(t, c);
        for i in 0..h {
            for j in 0..w {
                for ch in 0..c {
                    m[(i * w + j, ch)] = x.get(i, j, ch);
                }
            }
        }
        m
    };
    let (mtok, ftok) = (flat(xm), flat(xf));
    let d = p.head_dim;
    let mut concat = vec![vec![0.0; c]; t];
    for n in 0..p.heads {
        let head = naive_attention(&mtok, &ftok, &ftok, &p.query[n], &p.key[n], &p.value[n])?;
        for (i, row) in concat.iter_mut().enumerate() {
            for l in 0..d {
                row[n * d + l] = head[(i, l)];
            }
        }
    }
    let mut out = Tensor3::zeros(h, w, c);
    for (tok, row) in concat.iter().enumerate() {
        let mut hidden = vec![0.0; p.hidden];
        for (u, hv) in hidden.iter_mut().enumerate() {
            let mut s = p.b1[u];
            for (ch, x) in row.iter().enumerate() {
                s += x * p.w1[(ch, u)];
            }
            *hv = s * 0.5 * (1.0 + libm::erf(s / std::f64::consts::SQRT_2));
        }
        for ch in 0..c {
            let mut s = p.b2[ch];
            for (u, hv) in hidden.iter().enumerate() {
                s += hv * p.w2[(u, ch)];
            }
            out.set(tok / w, tok % w, ch, s);
        }
    }
    Ok(out)
}

/// Central-difference gradient of `f` at `point`.
pub fn finite_diff(f: impl Fn(&[f64]) -> f64, point: &[f64], step: f64) -> Vec<f64> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let plus = f(&x);
            x[i] = orig - step;
            let minus = f(&x);
            x[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub coordinates: usize,
    pub max_relative_error: f64,
    /// `xf[i]`, `xm[i]` or `param[i]` (flatten order).
    pub worst: String,
}

/// Checks [`fa_gradient`](crate::attention::fa_gradient) on every input and
/// parameter coordinate of `sum(upstream ⊙ fused)`.
pub fn fa_gradient_check(
    xf: &Tensor3,
    xm: &Tensor3,
    p: &FaParams,
    upstream: &Tensor3,
    step: f64,
    floor: f64,
) -> Result<GradientCheck> {
    let analytic = crate::attention::fa_gradient(xf, xm, p, upstream)?;
    let config = p.config();
    let (h, w, c) = xf.shape();
    let objective = |xf: &Tensor3, xm: &Tensor3, p: &FaParams| -> f64 {
        let out = crate::attention::fa_forward(xf, xm, p).expect("shapes fixed by the caller");
        out.fused.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum()
    };
    let numeric_xf = finite_diff(
        |v| objective(&Tensor3::from_vec(h, w, c, v.to_vec()).unwrap(), xm, p),
        xf.data(),
        step,
    );
    let numeric_xm = finite_diff(
        |v| objective(xf, &Tensor3::from_vec(h, w, c, v.to_vec()).unwrap(), p),
        xm.data(),
        step,
    );
    let numeric_p = finite_diff(
        |v| objective(xf, xm, &FaParams::unflatten(config, v).unwrap()),
        &p.flatten(),
        step,
    );
    let mut check = GradientCheck {
        coordinates: 0,
        max_relative_error: 0.0,
        worst: String::new(),
    };
    let groups = [
        ("xf", analytic.xf.data().to_vec(), numeric_xf),
        ("xm", analytic.xm.data().to_vec(), numeric_xm),
        ("param", analytic.params.flatten(), numeric_p),
    ];
    for (name, a, n) in &groups {
        for (i, (&a, &n)) in a.iter().zip(n).enumerate() {
            let e = relative_error(a, n, floor);
            check.coordinates += 1;
            if e > check.max_relative_error || check.worst.is_empty() {
                check.max_relative_error = check.max_relative_error.max(e);
                check.worst = format!("{name}[{i}]");
            }
        }
    }
    Ok(check)
}

/// Relative error `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Indices of points on the convex hull boundary (corners and points inside
/// hull edges), by checking every candidate supporting line.
pub fn brute_force_hull(points: &[Point2]) -> Vec<usize> {
    let n = points.len();
    let orient = |a: Point2, b: Point2, c: Point2| (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    (0..n)
        .filter(|&i| {
            (0..n).any(|j| {
                j != i && {
                    let sides: Vec<f64> = (0..n).map(|k| orient(points[i], points[j], points[k])).collect();
                    sides.iter().all(|&s| s >= 0.0) || sides.iter().all(|&s| s <= 0.0)
                }
            })
        })
        .collect()
}

/// Shoelace area of the convex hull.
pub fn hull_area(points: &[Point2]) -> f64 {
    let hull = brute_force_hull(points);
    let cx = hull.iter().map(|&i| points[i].x).sum::<f64>() / hull.len() as f64;
    let cy = hull.iter().map(|&i| points[i].y).sum::<f64>() / hull.len() as f64;
    let mut ring: Vec<Point2> = hull.iter().map(|&i| points[i]).collect();
    ring.sort_by(|p, q| (p.y - cy).atan2(p.x - cx).total_cmp(&(q.y - cy).atan2(q.x - cx)));
    let mut twice = 0.0;
    for i in 0..ring.len() {
        let (p, q) = (ring[i], ring[(i + 1) % ring.len()]);
        twice += p.x * q.y - q.x * p.y;
    }
    twice.abs() / 2.0
}

/// Number of (triangle, point) pairs where the point lies strictly inside the
/// triangle's circumcircle by more than `tol` (relative to the radius²).
pub fn circumcircle_violations(points: &[Point2], connectivity: &[[usize; 3]], tol: f64) -> usize {
    let mut violations = 0;
    for tri in connectivity {
        let [a, b, c] = tri.map(|i| points[i]);
        let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
        let sq = |p: Point2| p.x * p.x + p.y * p.y;
        let ux = (sq(a) * (b.y - c.y) + sq(b) * (c.y - a.y) + sq(c) * (a.y - b.y)) / d;
        let uy = (sq(a) * (c.x - b.x) + sq(b) * (a.x - c.x) + sq(c) * (b.x - a.x)) / d;
        let r2 = (a.x - ux).powi(2) + (a.y - uy).powi(2);
        for (i, p) in points.iter().enumerate() {
            if tri.contains(&i) {
                continue;
            }
            let dist2 = (p.x - ux).powi(2) + (p.y - uy).powi(2);
            if dist2 < r2 * (1.0 - tol) {
                violations += 1;
            }
        }
    }
    violations
}
