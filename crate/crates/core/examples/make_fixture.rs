//! Regenerates the bundled 3-frame fixture and its golden outputs.
//!
//! ```text
//! cargo run --release --example make_fixture -- crates/core/tests/fixtures
//! ```
//!
//! Golden motion fields come from the per-pixel oracle, not the fast
//! rasterizer, so the regression tests compare two independent paths.

use std::fs;
use std::path::PathBuf;

use anchormesh::attention::{FaConfig, FaParams, DEFAULT_HEADS, DEFAULT_HIDDEN};
use anchormesh::cli::{frame_file_name, loc_file_name, mask_file_name, SCORES_FILE};
use anchormesh::clipfile::ClipFile;
use anchormesh::imageio;
use anchormesh::meshing::triangulate;
use anchormesh::motionfield::{flo_file_name, write_flo};
use anchormesh::oracles::per_pixel_motion_oracle;
use anchormesh::pipeline::{forward_clip_seeded, FaceClip, PipelineConfig};
use anchormesh::synth::{region_mask, render_frame, synthetic_clip};

const SEED: u64 = 7;
const SIZE: usize = 256;
/// Mouth anchors, the region marked as manipulated in the ground truth.
const MOUTH: std::ops::Range<usize> = 48..68;

fn main() -> anchormesh::Result<()> {
    let root = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "crates/core/tests/fixtures".into()),
    );
    let frames_dir = root.join("frames");
    let golden = root.join("golden");
    let gt_dir = root.join("gt").join("fixture");
    for d in [&frames_dir, &golden.join("motion"), &golden.join("pipeline"), &gt_dir] {
        fs::create_dir_all(d)?;
    }

    let anchors = synthetic_clip(3, SIZE, SIZE, 1.0, SEED)?;
    let clip = ClipFile::new("fixture", anchors.clone())?;
    fs::write(root.join("clip.txt"), clip.to_text())?;

    let mut frames = Vec::new();
    for a in &anchors {
        let img = render_frame(a, SEED + a.index as u64)?;
        imageio::write_rgb(&img, &frames_dir.join(frame_file_name(a.index)))?;
        // Store what a reader gets back after 8-bit quantization.
        frames.push(imageio::read_rgb(&frames_dir.join(frame_file_name(a.index)))?);
    }

    let mesh = triangulate(&anchors[0])?;
    fs::write(golden.join("mesh.txt"), mesh.connectivity_text())?;
    for (i, pair) in anchors.windows(2).enumerate() {
        let field = per_pixel_motion_oracle(&pair[0], &pair[1], &mesh);
        write_flo(&field, fs::File::create(golden.join("motion").join(flo_file_name(i)))?)?;
        let mask = region_mask(&pair[0], &MOUTH.collect::<Vec<_>>())?;
        imageio::write_gray(&mask, &gt_dir.join(mask_file_name(i)))?;
    }

    let fa = FaParams::init(
        FaConfig::new(32).with_heads(DEFAULT_HEADS).with_hidden(DEFAULT_HIDDEN),
        SEED,
    )?;
    let face = FaceClip::new(frames, anchors)?;
    let outputs = forward_clip_seeded(&face, &fa, PipelineConfig::default(), SEED)?;
    let mut scores = String::new();
    for (i, o) in outputs.iter().enumerate() {
        imageio::write_gray(&o.localization, &golden.join("pipeline").join(loc_file_name(i)))?;
        scores.push_str(&format!("{i} {}\n", o.score));
    }
    fs::write(golden.join("pipeline").join(SCORES_FILE), scores)?;
    println!("fixture written to {}", root.display());
    Ok(())
}
