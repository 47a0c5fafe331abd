//! Fits the rigid motion between two triangles and compares it with an
//! exhaustive angle scan.
//!
//! ```text
//! cargo run --example rigid_fit
//! ```

use anchormesh::geometry::{estimate_rigid, Matrix2, Point2, Triangle};
use anchormesh::oracles::{rigid_grid_search, OracleConfig};

fn main() {
    let src = Triangle::new(
        Point2::new(10.0, 10.0),
        Point2::new(40.0, 12.0),
        Point2::new(18.0, 35.0),
    );
    let rot = Matrix2::rotation(0.3);
    let shift = Point2::new(4.0, -2.5);
    let dst = src.map(|p| rot.apply(p) + shift);
    // Nudge one vertex so the fit is no longer exact.
    let noisy = Triangle::new(dst.a + Point2::new(0.4, -0.2), dst.b, dst.c);

    for (label, target) in [("exact", dst), ("noisy", noisy)] {
        let fit = estimate_rigid(&src, &target);
        let grid = rigid_grid_search(&src, &target, &OracleConfig::default());
        println!("{label}:");
        println!(
            "  closed form  angle {:.9} rad, t = ({:.6}, {:.6}), residual {:.3e}",
            fit.transform.rotation.angle(),
            fit.transform.translation.x,
            fit.transform.translation.y,
            fit.transform.residual(&src, &target)
        );
        println!(
            "  angle scan   angle {:.9} rad, residual {:.3e}",
            grid.angle, grid.residual
        );
    }

    let reflected = src.map(|p| Point2::new(p.x, -p.y));
    let fit = estimate_rigid(&src, &reflected);
    println!(
        "reflected target: det R = {:.12} (still a rotation)",
        fit.transform.rotation.det()
    );

    let flat = Triangle::new(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), Point2::new(2.0, 2.0));
    let fit = estimate_rigid(&flat, &src);
    println!("collinear source: fallback = {}, translation only", fit.fallback);
}
