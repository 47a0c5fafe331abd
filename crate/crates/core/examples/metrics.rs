//! Video- and pixel-level metrics on a handful of made-up predictions.
//!
//! ```text
//! cargo run --example metrics
//! ```

use anchormesh::metrics::{auc, evaluate, pixel_scores, FrameRecord, MaskPair, VideoRecord};
use anchormesh::tensor::Tensor2;

fn map(v: [f64; 4]) -> Tensor2 {
    Tensor2::from_vec(2, 2, v.to_vec()).unwrap()
}

fn main() -> anchormesh::Result<()> {
    let pred = map([0.9, 0.2, 0.6, 0.4]);
    let truth = map([1.0, 0.0, 0.0, 1.0]);
    let s = pixel_scores(&MaskPair::new(&pred, &truth))?;
    println!(
        "single frame: f1 {:.4}, iou {:.4}, 2iou/(1+iou) {:.4}",
        s.f1,
        s.iou,
        2.0 * s.iou / (1.0 + s.iou)
    );

    let ranked = [(0.9, true), (0.8, false), (0.7, true), (0.1, false)];
    println!("auc of {ranked:?} = {}", auc(&ranked)?);

    let frame = |score, loc: [f64; 4], mask: [f64; 4]| FrameRecord {
        score,
        localization: map(loc),
        mask: map(mask),
    };
    let videos = vec![
        VideoRecord {
            id: "fake_a".into(),
            label: true,
            frames: vec![frame(0.8, [1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0])],
        },
        VideoRecord {
            id: "fake_b".into(),
            label: true,
            frames: vec![frame(0.3, [0.0; 4], [0.0, 0.0, 0.0, 1.0])],
        },
        VideoRecord {
            id: "real".into(),
            label: false,
            frames: vec![frame(0.4, [0.0; 4], [0.0; 4])],
        },
    ];
    print!("{}", evaluate(&videos)?.to_text());
    Ok(())
}
