//! Triangulates a 68-point face layout, checks the Euler relation and
//! evaluates the approximation bound for a range of λ.
//!
//! ```text
//! cargo run --example triangulate_landmarks [-- clip.txt]
//! ```

use anchormesh::clipfile::ClipFile;
use anchormesh::meshing::{evaluate_bound, hull_vertex_count, reposition, subdivide_centroid, triangulate};
use anchormesh::synth::synthetic_clip;

fn main() -> anchormesh::Result<()> {
    let frames = match std::env::args().nth(1) {
        Some(path) => ClipFile::read(path.as_ref())?.frames,
        None => synthetic_clip(2, 256, 256, 1.0, 1)?,
    };
    let mesh = triangulate(&frames[0])?;
    let n = mesh.vertex_count();
    let h = hull_vertex_count(&frames[0].anchors);
    println!(
        "n = {n}, hull = {h}, K = {} (2n - 2 - h = {})",
        mesh.len(),
        2 * n - 2 - h
    );
    println!("reference K for 68 landmarks: 90");

    let src = reposition(&mesh, &frames[0])?;
    let dst = reposition(&mesh, &frames[1])?;
    for lambda in [0.0, 1.0, 100.0] {
        let r = evaluate_bound(&src, &dst, lambda, n)?;
        println!(
            "lambda {lambda:>5}: term1 {:.4e}, term2 {:.4e} (L = {:.3}, A = {:.1}), bound {:.4e}",
            r.term1, r.term2, r.longest_side, r.mesh_area, r.bound
        );
    }
    let mut fine = dst;
    for level in 1..=3 {
        fine = subdivide_centroid(&fine);
        let r = evaluate_bound(&src, &fine, 1.0, n)?;
        println!(
            "dst subdivided x{level}: {} triangles, bound {:.4e}",
            fine.len(),
            r.bound
        );
    }
    println!(
        "\n{}",
        mesh.connectivity_text().lines().take(4).collect::<Vec<_>>().join("\n")
    );
    Ok(())
}
