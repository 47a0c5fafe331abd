//! Runs the toy detector over a synthetic clip and scores it with the joint
//! loss against a mouth-region ground truth.
//!
//! ```text
//! cargo run --release --example pipeline
//! ```

use anchormesh::attention::{FaConfig, FaParams};
use anchormesh::pipeline::{forward_clip_seeded, joint_loss, FaceClip, GroundTruth, PipelineConfig};
use anchormesh::synth::{region_mask, render_frame, synthetic_clip};

fn main() -> anchormesh::Result<()> {
    let seed = 3;
    let anchors = synthetic_clip(3, 128, 128, 1.0, seed)?;
    let frames = anchors
        .iter()
        .map(|a| render_frame(a, seed + a.index as u64))
        .collect::<anchormesh::Result<Vec<_>>>()?;
    let config = PipelineConfig {
        patch: 16,
        ..PipelineConfig::default()
    };
    let fa = FaParams::init(FaConfig::new(config.channels).with_heads(4).with_hidden(64), seed)?;
    let clip = FaceClip::new(frames, anchors.clone())?;
    let outputs = forward_clip_seeded(&clip, &fa, config, seed)?;

    let mouth: Vec<usize> = (48..68).collect();
    for (i, out) in outputs.iter().enumerate() {
        let gt = GroundTruth {
            mask: region_mask(&anchors[i], &mouth)?,
            label: true,
        };
        let mean = out.localization.data().iter().sum::<f64>() / out.localization.data().len() as f64;
        println!(
            "pair {i}: score {:.4}, mean localization {mean:.4}, joint loss {:.4}",
            out.score,
            joint_loss(out, &gt)?
        );
    }
    Ok(())
}
