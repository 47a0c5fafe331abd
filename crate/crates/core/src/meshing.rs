//! Triangle meshes over facial anchors.
//!
//! Connectivity is a Delaunay triangulation of the reference frame, built by
//! a lexicographic sweep followed by Lawson edge flips. Orientation and
//! in-circle tests use exact adaptive-precision predicates, so the result
//! does not depend on rounding. Later frames reuse the same connectivity via
//! [`reposition`], which keeps triangle `k` of one frame in correspondence
//! with triangle `k` of the next.

use std::collections::HashMap;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::geometry::{signed_area, Point2, Triangle};

/// Anchors of one frame, in correspondence order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorFrame {
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub anchors: Vec<Point2>,
}

impl AnchorFrame {
    pub fn new(index: usize, width: usize, height: usize, anchors: Vec<Point2>) -> Result<Self> {
        let frame = Self {
            index,
            width,
            height,
            anchors,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.len() < 3 {
            return Err(Error::InvalidFrame(format!(
                "frame {} has {} anchors, need at least 3",
                self.index,
                self.anchors.len()
            )));
        }
        for (j, p) in self.anchors.iter().enumerate() {
            let inside =
                p.is_finite() && p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64;
            if !inside {
                return Err(Error::InvalidFrame(format!(
                    "frame {} anchor {j} at ({}, {}) lies outside the {}x{} raster",
                    self.index, p.x, p.y, self.width, self.height
                )));
            }
        }
        Ok(())
    }

    /// Checks the cross-frame invariants of a clip: equal anchor counts and
    /// raster dimensions.
    pub fn check_compatible(&self, other: &AnchorFrame) -> Result<()> {
        if self.anchors.len() != other.anchors.len() {
            return Err(Error::InvalidFrame(format!(
                "frame {} has {} anchors but frame {} has {}",
                self.index,
                self.anchors.len(),
                other.index,
                other.anchors.len()
            )));
        }
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::InvalidFrame(format!(
                "frame {} is {}x{} but frame {} is {}x{}",
                self.index, self.width, self.height, other.index, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Shared triangle connectivity plus one frame's vertex positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub connectivity: Vec<[usize; 3]>,
    pub positions: Vec<Point2>,
}

impl TriMesh {
    pub fn new(connectivity: Vec<[usize; 3]>, positions: Vec<Point2>) -> Result<Self> {
        let n = positions.len();
        if let Some(bad) = connectivity.iter().flatten().find(|&&i| i >= n) {
            return Err(Error::InvalidArgument(format!(
                "vertex index {bad} out of range for {n} positions"
            )));
        }
        Ok(Self {
            connectivity,
            positions,
        })
    }

    /// Number of triangles, `K`.
    pub fn len(&self) -> usize {
        self.connectivity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.connectivity.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn triangle(&self, k: usize) -> Triangle {
        let [a, b, c] = self.connectivity[k];
        Triangle::new(self.positions[a], self.positions[b], self.positions[c])
    }

    pub fn triangles(&self) -> impl Iterator<Item = Triangle> + '_ {
        (0..self.len()).map(move |k| self.triangle(k))
    }

    /// Writes the text export: `K n`, then one zero-based index triple per line.
    pub fn write_connectivity<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.vertex_count())?;
        for [a, b, c] in &self.connectivity {
            writeln!(out, "{a} {b} {c}")?;
        }
        Ok(())
    }

    pub fn connectivity_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_connectivity(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Parses the text export written by [`TriMesh::write_connectivity`].
/// Returns the connectivity and the declared vertex count.
pub fn parse_connectivity(text: &str) -> Result<(Vec<[usize; 3]>, usize)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (line_no, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty mesh file".into(),
    })?;
    let nums = parse_usizes(header, line_no + 1)?;
    let [k, n] = nums[..] else {
        return Err(Error::Parse {
            line: line_no + 1,
            message: format!("expected `K n`, found {} fields", nums.len()),
        });
    };
    let mut tris = Vec::with_capacity(k);
    for (line_no, line) in lines {
        let v = parse_usizes(line, line_no + 1)?;
        match v[..] {
            [a, b, c] if a < n && b < n && c < n => tris.push([a, b, c]),
            [_, _, _] => {
                return Err(Error::Parse {
                    line: line_no + 1,
                    message: format!("vertex index out of range for {n} vertices"),
                })
            }
            _ => {
                return Err(Error::Parse {
                    line: line_no + 1,
                    message: format!("expected 3 indices, found {}", v.len()),
                })
            }
        }
    }
    if tris.len() != k {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: format!("header declares {k} triangles, found {}", tris.len()),
        });
    }
    Ok((tris, n))
}

fn parse_usizes(line: &str, line_no: usize) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|f| {
            f.parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("`{f}` is not a non-negative integer"),
            })
        })
        .collect()
}

/// Terms of the approximation bound `2λ/|V^c|² + L·A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub lambda: f64,
    pub contour_count: usize,
    pub mesh_area: f64,
    pub longest_side: f64,
    pub term1: f64,
    pub term2: f64,
    pub bound: f64,
}

/// Delaunay triangulation of the reference anchors.
pub fn triangulate(reference: &AnchorFrame) -> Result<TriMesh> {
    let connectivity = delaunay(&reference.anchors)?;
    TriMesh::new(connectivity, reference.anchors.clone())
}

/// Same connectivity, positions taken from `frame`.
pub fn reposition(mesh: &TriMesh, frame: &AnchorFrame) -> Result<TriMesh> {
    if frame.anchors.len() != mesh.vertex_count() {
        return Err(Error::InvalidFrame(format!(
            "frame {} has {} anchors but the mesh has {} vertices",
            frame.index,
            frame.anchors.len(),
            mesh.vertex_count()
        )));
    }
    Ok(TriMesh {
        connectivity: mesh.connectivity.clone(),
        positions: frame.anchors.clone(),
    })
}

pub fn mesh_area(mesh: &TriMesh) -> f64 {
    mesh.triangles().map(|t| signed_area(&t).abs()).sum()
}

pub fn longest_side(mesh: &TriMesh) -> f64 {
    mesh.triangles()
        .flat_map(|t| [t.a.distance(t.b), t.b.distance(t.c), t.c.distance(t.a)])
        .fold(0.0, f64::max)
}

pub fn evaluate_bound(
    src_mesh: &TriMesh,
    dst_mesh: &TriMesh,
    lambda: f64,
    contour_count: usize,
) -> Result<BoundReport> {
    if contour_count == 0 {
        return Err(Error::InvalidArgument("contour_count must be at least 1".into()));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    let contour = contour_count as f64;
    let term1 = 2.0 * lambda / (contour * contour);
    let mesh_area = mesh_area(src_mesh);
    let longest_side = longest_side(dst_mesh);
    let term2 = longest_side * mesh_area;
    Ok(BoundReport {
        lambda,
        contour_count,
        mesh_area,
        longest_side,
        term1,
        term2,
        bound: term1 + term2,
    })
}

/// Splits every triangle at its centroid into three, appending one vertex per
/// triangle. Triangle `k` becomes triangles `3k..3k+3`.
pub fn subdivide_centroid(mesh: &TriMesh) -> TriMesh {
    let mut positions = mesh.positions.clone();
    let mut connectivity = Vec::with_capacity(mesh.len() * 3);
    for (k, &[a, b, c]) in mesh.connectivity.iter().enumerate() {
        let g = positions.len();
        positions.push(mesh.triangle(k).centroid());
        connectivity.extend([[a, b, g], [b, c, g], [c, a, g]]);
    }
    TriMesh {
        connectivity,
        positions,
    }
}

/// Number of anchors lying on the convex hull boundary, including points in
/// the interior of hull edges.
pub fn hull_vertex_count(points: &[Point2]) -> usize {
    let mut boundary = vec![false; points.len()];
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| lex_cmp(points[i], points[j]).then(i.cmp(&j)));
    // Monotone chain keeping collinear boundary points.
    let mut chain: Vec<usize> = Vec::new();
    for pass in 0..2 {
        chain.clear();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(order.iter())
        } else {
            Box::new(order.iter().rev())
        };
        for &i in iter {
            while chain.len() >= 2
                && orient(
                    points[chain[chain.len() - 2]],
                    points[chain[chain.len() - 1]],
                    points[i],
                ) < 0.0
            {
                chain.pop();
            }
            chain.push(i);
        }
        for &i in &chain {
            boundary[i] = true;
        }
    }
    boundary.iter().filter(|&&b| b).count()
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    robust::orient2d(coord(a), coord(b), coord(c))
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counter-clockwise triangle `(a, b, c)`.
fn incircle(a: Point2, b: Point2, c: Point2, d: Point2) -> f64 {
    robust::incircle(coord(a), coord(b), coord(c), coord(d))
}

fn coord(p: Point2) -> robust::Coord<f64> {
    robust::Coord { x: p.x, y: p.y }
}

fn lex_cmp(p: Point2, q: Point2) -> std::cmp::Ordering {
    p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y))
}

fn delaunay(points: &[Point2]) -> Result<Vec<[usize; 3]>> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 anchors, got {n}")));
    }
    if let Some(bad) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument(format!("anchor {bad} is not finite")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| lex_cmp(points[i], points[j]).then(i.cmp(&j)));
    for w in order.windows(2) {
        if points[w[0]] == points[w[1]] {
            let (first, second) = (w[0].min(w[1]), w[0].max(w[1]));
            return Err(Error::DuplicateAnchors { first, second });
        }
    }

    let mut triangles = sweep(points, &order)?;
    lawson_flip(points, &mut triangles);

    for t in &mut triangles {
        let r = (0..3).min_by_key(|&i| t[i]).unwrap();
        t.rotate_left(r);
    }
    triangles.sort_unstable();
    Ok(triangles)
}

/// Initial triangulation: insert points in lexicographic order, joining each
/// new point to every hull edge it sees.
fn sweep(points: &[Point2], order: &[usize]) -> Result<Vec<[usize; 3]>> {
    let p = |i: usize| points[i];
    let (first, second) = (order[0], order[1]);
    let Some(pivot_pos) = (2..order.len()).find(|&k| orient(p(first), p(second), p(order[k])) != 0.0) else {
        return Err(Error::CollinearAnchors(points.len()));
    };
    let pivot = order[pivot_pos];

    let mut triangles = Vec::with_capacity(2 * points.len());
    // The points before the pivot are collinear and sorted along their line.
    let left_side = orient(p(first), p(second), p(pivot)) > 0.0;
    for w in order[..pivot_pos].windows(2) {
        if left_side {
            triangles.push([w[0], w[1], pivot]);
        } else {
            triangles.push([w[1], w[0], pivot]);
        }
    }

    // Counter-clockwise hull cycle.
    let mut hull: Vec<usize> = if left_side {
        order[..pivot_pos].iter().copied().chain([pivot]).collect()
    } else {
        [pivot]
            .into_iter()
            .chain(order[..pivot_pos].iter().rev().copied())
            .collect()
    };
    for &q in &order[pivot_pos + 1..] {
        let m = hull.len();
        let visible: Vec<bool> = (0..m)
            .map(|e| orient(p(hull[e]), p(hull[(e + 1) % m]), p(q)) < 0.0)
            .collect();
        // q is lexicographically beyond every inserted point, so it lies
        // outside the hull and sees a non-empty contiguous run of edges.
        let start = (0..m)
            .find(|&e| visible[e] && !visible[(e + m - 1) % m])
            .expect("new point must see the hull");
        let mut e = start;
        let mut count = 0;
        while visible[e] {
            triangles.push([hull[(e + 1) % m], hull[e], q]);
            e = (e + 1) % m;
            count += 1;
        }
        // Edges start..start+count are replaced by start -> q -> end.
        let mut next = Vec::with_capacity(m + 1);
        next.push(hull[start]);
        next.push(q);
        let mut i = (start + count) % m;
        while i != start {
            next.push(hull[i]);
            i = (i + 1) % m;
        }
        hull = next;
    }
    for t in &mut triangles {
        if orient(p(t[0]), p(t[1]), p(t[2])) < 0.0 {
            t.swap(1, 2);
        }
    }
    Ok(triangles)
}

fn lawson_flip(points: &[Point2], triangles: &mut [[usize; 3]]) {
    // Directed edge -> owning triangle.
    let mut owner: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 3);
    for (t, tri) in triangles.iter().enumerate() {
        for i in 0..3 {
            owner.insert((tri[i], tri[(i + 1) % 3]), t);
        }
    }
    let mut stack: Vec<(usize, usize)> = triangles
        .iter()
        .flat_map(|tri| (0..3).map(move |i| (tri[i], tri[(i + 1) % 3])))
        .filter(|&(a, b)| a < b)
        .collect();
    stack.sort_unstable();
    stack.reverse();

    while let Some((a, b)) = stack.pop() {
        let (Some(&t1), Some(&t2)) = (owner.get(&(a, b)), owner.get(&(b, a))) else {
            continue;
        };
        let c = third(&triangles[t1], a, b);
        let d = third(&triangles[t2], b, a);
        if incircle(points[a], points[b], points[c], points[d]) <= 0.0 {
            continue;
        }
        // (a, b, c) + (b, a, d) -> (a, d, c) + (d, b, c)
        for tri in [triangles[t1], triangles[t2]] {
            for i in 0..3 {
                owner.remove(&(tri[i], tri[(i + 1) % 3]));
            }
        }
        triangles[t1] = [a, d, c];
        triangles[t2] = [d, b, c];
        for (t, tri) in [(t1, triangles[t1]), (t2, triangles[t2])] {
            for i in 0..3 {
                owner.insert((tri[i], tri[(i + 1) % 3]), t);
            }
        }
        for (u, v) in [(a, d), (d, b), (b, c), (c, a)] {
            stack.push((u.min(v), u.max(v)));
        }
    }
}

fn third(tri: &[usize; 3], a: usize, b: usize) -> usize {
    *tri.iter()
        .find(|&&v| v != a && v != b)
        .expect("triangle has three distinct vertices")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(points: &[(f64, f64)]) -> AnchorFrame {
        AnchorFrame::new(0, 100, 100, points.iter().map(|&p| p.into()).collect()).unwrap()
    }

    #[test]
    fn three_points_one_triangle() {
        let mesh = triangulate(&frame(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])).unwrap();
        assert_eq!(mesh.connectivity, vec![[0, 1, 2]]);
        assert_eq!(mesh.connectivity_text(), "1 3\n0 1 2\n");
    }

    #[test]
    fn square_two_triangles() {
        let mesh = triangulate(&frame(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])).unwrap();
        assert_eq!(mesh.len(), 2);
        assert_eq!(mesh_area(&mesh), 1.0);
        assert_eq!(longest_side(&mesh), 2f64.sqrt());
        assert!(mesh.triangles().all(|t| t.signed_area() > 0.0));
    }

    #[test]
    fn collinear_and_duplicate_rejected() {
        let err = triangulate(&frame(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)])).unwrap_err();
        assert!(matches!(err, Error::CollinearAnchors(4)));
        let err = triangulate(&frame(&[(0.0, 0.0), (5.0, 1.0), (2.0, 2.0), (5.0, 1.0)])).unwrap_err();
        assert!(matches!(err, Error::DuplicateAnchors { first: 1, second: 3 }));
    }

    #[test]
    fn collinear_prefix_then_apex() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (1.5, 2.0)];
        let mesh = triangulate(&frame(&pts)).unwrap();
        assert_eq!(mesh.len(), 2 * 5 - 2 - hull_vertex_count(&mesh.positions));
        assert!((mesh_area(&mesh) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reposition_examples() {
        let f0 = frame(&[(10.0, 10.0), (50.0, 12.0), (30.0, 40.0), (60.0, 50.0), (20.0, 70.0)]);
        let mesh = triangulate(&f0).unwrap();
        assert_eq!(reposition(&mesh, &f0).unwrap(), mesh);

        let shifted = AnchorFrame::new(
            1,
            100,
            100,
            f0.anchors.iter().map(|&p| p + Point2::new(3.0, -2.0)).collect(),
        )
        .unwrap();
        let moved = reposition(&mesh, &shifted).unwrap();
        for k in 0..mesh.len() {
            let (t0, t1) = (mesh.triangle(k), moved.triangle(k));
            for (p, q) in t0.vertices().iter().zip(t1.vertices().iter()) {
                assert_eq!(*q - *p, Point2::new(3.0, -2.0));
            }
        }

        let mut one = f0.clone();
        one.anchors[2] = Point2::new(33.0, 44.0);
        let moved = reposition(&mesh, &one).unwrap();
        for (k, tri) in mesh.connectivity.iter().enumerate() {
            assert_eq!(tri.contains(&2), mesh.triangle(k) != moved.triangle(k));
        }

        let short = frame(&[(1.0, 1.0), (2.0, 1.0), (1.0, 2.0)]);
        assert!(reposition(&mesh, &short).is_err());
    }

    #[test]
    fn bound_examples() {
        let sq = triangulate(&frame(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])).unwrap();
        let r = evaluate_bound(&sq, &sq, 0.0, 68).unwrap();
        assert_eq!(r.term1, 0.0);
        assert!((r.bound - 2f64.sqrt()).abs() < 1e-15);

        let r = evaluate_bound(&sq, &sq, 1.0, 68).unwrap();
        assert_eq!(r.term1, 2.0 / 4624.0);
        assert!((r.term1 - 4.3253e-4).abs() < 1e-8);
        assert_eq!(r.bound, r.term1 + r.term2);

        assert!(evaluate_bound(&sq, &sq, 1.0, 0).is_err());
        assert!(evaluate_bound(&sq, &sq, -1.0, 4).is_err());
    }

    #[test]
    fn subdivision_shrinks_longest_side() {
        let tri = triangulate(&frame(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])).unwrap();
        let fine = subdivide_centroid(&tri);
        assert_eq!(fine.len(), 3);
        assert!(longest_side(&fine) <= longest_side(&tri));
        assert!((mesh_area(&fine) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn connectivity_text_round_trip() {
        let mesh = triangulate(&frame(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])).unwrap();
        let (tris, n) = parse_connectivity(&mesh.connectivity_text()).unwrap();
        assert_eq!((tris, n), (mesh.connectivity.clone(), 4));
        assert!(parse_connectivity("2 4\n0 1 2\n").is_err());
        assert!(parse_connectivity("1 3\n0 1 9\n").is_err());
    }

    #[test]
    fn frame_validation() {
        assert!(AnchorFrame::new(0, 10, 10, vec![Point2::new(0.0, 0.0); 2]).is_err());
        let pts = vec![Point2::new(1.0, 1.0), Point2::new(10.0, 1.0), Point2::new(1.0, 5.0)];
        assert!(AnchorFrame::new(0, 10, 10, pts).is_err());
    }
}
