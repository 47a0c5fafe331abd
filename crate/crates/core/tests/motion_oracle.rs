mod common;

use anchormesh::geometry::Point2;
use anchormesh::meshing::{triangulate, AnchorFrame};
use anchormesh::motionfield::{extract_clip_motion, extract_motion, parse_flo, render_flow, write_flo, MaxMagnitude};
use anchormesh::oracles::per_pixel_motion_oracle;
use common::random_clip;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fast_path_matches_oracle_bitwise(seed in any::<u64>(), w in 4usize..96, h in 4usize..96, n in 3usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = random_clip(&mut rng, w, h, n, 3, 3.0);
        let mesh = triangulate(&frames[0]).unwrap();
        let clip = extract_clip_motion(&frames).unwrap();
        prop_assert_eq!(clip.len(), 2);
        for (i, report) in clip.iter().enumerate() {
            let oracle = per_pixel_motion_oracle(&frames[i], &frames[i + 1], &mesh);
            prop_assert!(report.field.bit_identical(&oracle));
        }
    }
}

#[test]
fn translation_chain_gives_constant_fields() {
    let base = [(10.0, 10.0), (40.0, 12.0), (25.0, 40.0), (45.0, 45.0)];
    let frames: Vec<AnchorFrame> = (0..5)
        .map(|i| {
            let pts = base.iter().map(|&(x, y)| Point2::new(x + i as f64, y)).collect();
            AnchorFrame::new(i, 64, 64, pts).unwrap()
        })
        .collect();
    let reports = extract_clip_motion(&frames).unwrap();
    assert_eq!(reports.len(), 4);
    for r in &reports {
        assert!(r.covered_pixels > 0);
        let f = &r.field;
        for y in 0..64 {
            for x in 0..64 {
                let m = f.get(x, y);
                assert!(
                    m == (0.0, 0.0) || ((m.0 + 1.0).abs() < 1e-9 && m.1.abs() < 1e-9),
                    "{m:?}"
                );
            }
        }
    }
}

#[test]
fn rendered_flow_and_file_agree_in_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let frames = random_clip(&mut rng, 48, 32, 12, 2, 2.0);
    let mesh = triangulate(&frames[0]).unwrap();
    let field = extract_motion(&frames[0], &frames[1], &mesh).unwrap().field;
    let mut bytes = Vec::new();
    write_flo(&field, &mut bytes).unwrap();
    assert_eq!(bytes.len(), 12 + 8 * 48 * 32);
    let img = render_flow(&parse_flo(&bytes).unwrap(), MaxMagnitude::Auto).unwrap();
    assert_eq!(img.dimensions(), (48, 32));
}
