//! Runs the fusion attention block, checks it against the naive composition
//! and verifies its gradients by central differences.
//!
//! ```text
//! cargo run --release --example fusion_attention
//! ```

use anchormesh::attention::{fa_attention_weights, fa_forward, FaConfig, FaParams};
use anchormesh::oracles::{fa_gradient_check, naive_fa_forward};
use anchormesh::tensor::Tensor3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anchormesh::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = FaConfig::new(16).with_heads(4).with_hidden(32);
    let params = FaParams::init(config, 5)?;
    let rgb = Tensor3::uniform(4, 4, 16, 1.0, &mut rng);
    let motion = Tensor3::uniform(4, 4, 16, 1.0, &mut rng);

    let out = fa_forward(&rgb, &motion, &params)?;
    let naive = naive_fa_forward(&rgb, &motion, &params)?;
    let diff = out
        .fused
        .data()
        .iter()
        .zip(naive.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!(
        "fused {:?}, {} heads, max diff vs naive {diff:.2e}",
        out.fused.shape(),
        out.per_head.len()
    );

    let weights = fa_attention_weights(&rgb, &motion, &params)?;
    let first = weights[0].row(0);
    println!(
        "head 0, query 0 attends most to token {}",
        first.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
    );

    let upstream = Tensor3::uniform(4, 4, 16, 1.0, &mut rng);
    let check = fa_gradient_check(&rgb, &motion, &params, &upstream, 1e-5, 1e-6)?;
    println!(
        "gradient check: {} coordinates, max relative error {:.2e} at {}",
        check.coordinates, check.max_relative_error, check.worst
    );

    let bytes = params.to_bytes();
    println!(
        "parameters serialize to {} bytes ({} values)",
        bytes.len(),
        params.len()
    );
    Ok(())
}
