//! The `amm` command line.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    attention_head, fa_attention_weights, fa_forward, tokenize, FaConfig, FaParams, DEFAULT_HEADS, DEFAULT_HIDDEN,
};
use crate::clipfile::ClipFile;
use crate::error::{Error, Result};
use crate::imageio;
use crate::meshing::{evaluate_bound, hull_vertex_count, reposition, triangulate};
use crate::metrics::{evaluate_with_threshold, FrameRecord, VideoRecord, DEFAULT_THRESHOLD};
use crate::motionfield::{extract_clip_motion, flo_file_name, read_flo, render_flow, write_flo, MaxMagnitude};
use crate::oracles::{fa_gradient_check, naive_attention, naive_fa_forward};
use crate::pipeline::{forward_clip, video_label, FaceClip, PipelineConfig, ToyNetwork};
use crate::tensor::Tensor3;

#[derive(Debug, Parser)]
#[command(name = "amm", version, about = "Anchor-mesh motion fields and friends")]
pub struct Cli {
    /// Worker threads (default: all cores). Output bytes do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Triangulate the first frame of a clip and write the connectivity.
    Mesh(MeshArgs),
    /// Write one .flo motion field per adjacent frame pair.
    Motion(MotionArgs),
    /// Render a .flo file on the HSV colour wheel.
    Viz(VizArgs),
    /// Evaluate the mesh approximation bound for every frame pair.
    Bound(BoundArgs),
    /// Self-check the fusion attention block on seeded inputs.
    FaCheck(FaCheckArgs),
    /// Run the toy detector over a clip of PNG frames.
    Pipeline(PipelineArgs),
    /// Score localization maps and clip scores against ground-truth masks.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    #[arg(long)]
    pub landmarks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Warn when the triangle count differs from this.
    #[arg(long)]
    pub expect_k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MotionArgs {
    #[arg(long)]
    pub landmarks: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    #[arg(long)]
    pub flo: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Magnitude mapped to full brightness, or `auto` for the field maximum.
    #[arg(long, default_value = "auto")]
    pub max_mag: MaxMagnitude,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub landmarks: PathBuf,
    /// The bound's constant; there is no default.
    #[arg(long)]
    pub lambda: f64,
    /// Contour anchor count (default: all anchors).
    #[arg(long)]
    pub contour_count: Option<usize>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct FaCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feature block as `HxWxC`.
    #[arg(long, default_value = "4x4x8")]
    pub shape: String,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    /// MLP hidden width.
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// Also write the seeded parameters here.
    #[arg(long)]
    pub save_params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Directory holding `frame_%06d.png`, numbered by clip frame index.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub landmarks: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Attention parameters written by `fa-check --save-params`; seeded
    /// from `--seed` when omitted.
    #[arg(long)]
    pub fa_params: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub patch: usize,
    #[arg(long, default_value_t = 32)]
    pub channels: usize,
    #[arg(long, default_value_t = DEFAULT_HEADS)]
    pub heads: usize,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    pub hidden: usize,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// One subdirectory per video with `loc_%06d.png` and `scores.txt`.
    #[arg(long)]
    pub pred: PathBuf,
    /// One subdirectory per video with `mask_%06d.png`.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

enum Failure {
    Usage(String),
    Failed(Error),
    ChecksFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Failed(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Failed(e.into())
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn main() -> i32 {
    run(Cli::parse())
}

pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Failure::Usage(format!("cannot start {n} threads: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Failed(e)) => {
            eprintln!("error: {e}");
            1
        }
        Err(Failure::ChecksFailed) => 1,
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Mesh(a) => cmd_mesh(&a),
        Command::Motion(a) => cmd_motion(&a),
        Command::Viz(a) => cmd_viz(&a),
        Command::Bound(a) => cmd_bound(&a),
        Command::FaCheck(a) => cmd_fa_check(&a),
        Command::Pipeline(a) => cmd_pipeline(&a),
        Command::Metrics(a) => cmd_metrics(&a),
    }
}

fn read_clip(path: &Path) -> Result<ClipFile> {
    ClipFile::read(path).map_err(|e| match e {
        Error::Io(io) => Error::InvalidArgument(format!("{}: {io}", path.display())),
        Error::Parse { line, message } => Error::InvalidArgument(format!("{}:{line}: {message}", path.display())),
        other => Error::InvalidArgument(format!("{}: {other}", path.display())),
    })
}

fn cmd_mesh(a: &MeshArgs) -> CmdResult {
    let clip = read_clip(&a.landmarks)?;
    let mesh = triangulate(&clip.frames[0])?;
    fs::write(&a.out, mesh.connectivity_text())?;
    let hull = hull_vertex_count(&clip.frames[0].anchors);
    println!("K = {}, n = {}, hull = {}", mesh.len(), mesh.vertex_count(), hull);
    if let Some(k) = a.expect_k {
        if k != mesh.len() {
            eprintln!("warning: expected K = {k}, triangulation produced {}", mesh.len());
        }
    }
    Ok(())
}

fn cmd_motion(a: &MotionArgs) -> CmdResult {
    let clip = read_clip(&a.landmarks)?;
    let reports = extract_clip_motion(&clip.frames)?;
    fs::create_dir_all(&a.out)?;
    let total = clip.width * clip.height;
    for (i, r) in reports.iter().enumerate() {
        let path = a.out.join(flo_file_name(i));
        write_flo(&r.field, BufWriter::new(fs::File::create(&path)?))?;
        println!(
            "{}: covered {}/{} pixels, max |m| = {}",
            path.display(),
            r.covered_pixels,
            total,
            r.field.max_magnitude()
        );
        if !r.degenerate_triangles.is_empty() {
            eprintln!(
                "warning: pair {i}: translation-only fallback for triangles {:?}",
                r.degenerate_triangles
            );
        }
    }
    Ok(())
}

fn cmd_viz(a: &VizArgs) -> CmdResult {
    let field = read_flo(fs::File::open(&a.flo)?)?;
    render_flow(&field, a.max_mag)?.save(&a.out).map_err(Error::from)?;
    Ok(())
}

/// Column header of the bound report.
pub const BOUND_HEADER: &str = "# src dst lambda contour_count mesh_area longest_side term1 term2 bound";

fn cmd_bound(a: &BoundArgs) -> CmdResult {
    if !a.lambda.is_finite() || a.lambda < 0.0 {
        return Err(Failure::Usage(format!(
            "--lambda must be finite and >= 0, got {}",
            a.lambda
        )));
    }
    let clip = read_clip(&a.landmarks)?;
    if clip.frames.len() < 2 {
        return Err(Error::InvalidArgument("bound needs at least 2 frames".into()).into());
    }
    let contour = a.contour_count.unwrap_or_else(|| clip.anchor_count());
    if contour == 0 {
        return Err(Failure::Usage("--contour-count must be at least 1".into()));
    }
    let mesh = triangulate(&clip.frames[0])?;
    let mut text = String::from(BOUND_HEADER);
    text.push('\n');
    for pair in clip.frames.windows(2) {
        let src = reposition(&mesh, &pair[0])?;
        let dst = reposition(&mesh, &pair[1])?;
        let r = evaluate_bound(&src, &dst, a.lambda, contour)?;
        writeln!(
            text,
            "{} {} {} {} {} {} {} {} {}",
            pair[0].index,
            pair[1].index,
            r.lambda,
            r.contour_count,
            r.mesh_area,
            r.longest_side,
            r.term1,
            r.term2,
            r.bound
        )
        .unwrap();
    }
    fs::write(&a.report, &text)?;
    print!("{text}");
    Ok(())
}

fn parse_shape(s: &str) -> std::result::Result<(usize, usize, usize), String> {
    let dims: Vec<usize> = s
        .split('x')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("--shape `{s}` is not HxWxC"))?;
    match dims[..] {
        [h, w, c] if h > 0 && w > 0 && c > 0 => Ok((h, w, c)),
        _ => Err(format!("--shape `{s}` is not HxWxC with positive sizes")),
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Finite-difference step and pass threshold used by `fa-check`.
pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

fn cmd_fa_check(a: &FaCheckArgs) -> CmdResult {
    let (h, w, c) = parse_shape(&a.shape).map_err(Failure::Usage)?;
    let config = FaConfig::new(c).with_heads(a.heads).with_hidden(a.hidden);
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let params = FaParams::init(config, a.seed)?;
    if let Some(path) = &a.save_params {
        fs::write(path, params.to_bytes())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    rng.set_stream(2);
    let xf = Tensor3::uniform(h, w, c, 1.0, &mut rng);
    let xm = Tensor3::uniform(h, w, c, 1.0, &mut rng);
    let upstream = Tensor3::uniform(h, w, c, 1.0, &mut rng);

    let out = fa_forward(&xf, &xm, &params)?;
    let shape_ok = out.fused.shape() == (h, w, c)
        && out.per_head.len() == a.heads
        && out.per_head.iter().all(|t| t.shape() == (h * w, c / a.heads));
    println!(
        "{} shape: fused {:?}, {} heads of {}x{}",
        verdict(shape_ok),
        out.fused.shape(),
        out.per_head.len(),
        h * w,
        c / a.heads
    );

    let weights = fa_attention_weights(&xf, &xm, &params)?;
    let mut worst_row = 0.0f64;
    let mut negative = false;
    for wts in &weights {
        for i in 0..wts.rows() {
            let row = wts.row(i);
            negative |= row.iter().any(|&v| v < 0.0);
            worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    let softmax_ok = worst_row <= 1e-12 && !negative;
    println!("{} softmax rows: max |sum - 1| = {worst_row:e}", verdict(softmax_ok));

    let (mtok, ftok) = (tokenize(&xm), tokenize(&xf));
    let mut head_diff = 0.0f64;
    for n in 0..a.heads {
        let fast = attention_head(&mtok, &ftok, &ftok, &params.query[n], &params.key[n], &params.value[n])?;
        let slow = naive_attention(&mtok, &ftok, &ftok, &params.query[n], &params.key[n], &params.value[n])?;
        head_diff = head_diff.max(fast.max_abs_diff(&slow));
    }
    let naive = naive_fa_forward(&xf, &xm, &params)?;
    let fa_diff = out
        .fused
        .data()
        .iter()
        .zip(naive.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let oracle_ok = head_diff <= 1e-10 && fa_diff <= 1e-10;
    println!(
        "{} oracle equivalence: heads {head_diff:e}, block {fa_diff:e}",
        verdict(oracle_ok)
    );

    let grad = fa_gradient_check(&xf, &xm, &params, &upstream, FD_STEP, FD_FLOOR)?;
    let grad_ok = grad.max_relative_error < FD_TOLERANCE;
    println!(
        "{} finite differences: {} coordinates, max rel err {:e} at {}",
        verdict(grad_ok),
        grad.coordinates,
        grad.max_relative_error,
        grad.worst
    );

    if shape_ok && softmax_ok && oracle_ok && grad_ok {
        Ok(())
    } else {
        Err(Failure::ChecksFailed)
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

pub fn loc_file_name(pair: usize) -> String {
    format!("loc_{pair:06}.png")
}

pub fn mask_file_name(pair: usize) -> String {
    format!("mask_{pair:06}.png")
}

pub const SCORES_FILE: &str = "scores.txt";

fn cmd_pipeline(a: &PipelineArgs) -> CmdResult {
    let clip = read_clip(&a.landmarks)?;
    let frames = clip
        .frames
        .iter()
        .map(|f| {
            let path = a.frames.join(frame_file_name(f.index));
            imageio::read_rgb(&path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let face = FaceClip::new(frames, clip.frames.clone())?;
    let config = PipelineConfig {
        patch: a.patch,
        channels: a.channels,
        ..PipelineConfig::default()
    };
    let fa = match &a.fa_params {
        Some(path) => FaParams::from_bytes(&fs::read(path)?)?,
        None => {
            let fa_config = FaConfig::new(a.channels).with_heads(a.heads).with_hidden(a.hidden);
            fa_config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            FaParams::init(fa_config, a.seed)?
        }
    };
    let outputs = forward_clip(&face, &fa, &ToyNetwork::seeded(config, a.seed))?;
    fs::create_dir_all(&a.out)?;
    let mut scores = String::new();
    for (i, o) in outputs.iter().enumerate() {
        imageio::write_gray(&o.localization, &a.out.join(loc_file_name(i)))?;
        writeln!(scores, "{i} {}", o.score).unwrap();
    }
    fs::write(a.out.join(SCORES_FILE), &scores)?;
    println!("{}: {} pairs", clip.id, outputs.len());
    print!("{scores}");
    Ok(())
}

fn sorted_entries(dir: &Path, prefix: &str, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with(prefix) && name.ends_with(suffix) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    let mut scores = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |message: String| Error::InvalidArgument(format!("{}:{}: {message}", path.display(), n + 1));
        let mut toks = line.split_whitespace();
        let pair: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("expected `<pair> <score>`".into()))?;
        if pair != scores.len() {
            return Err(bad(format!("pair {pair} out of order")));
        }
        let score: f64 = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("missing or malformed score".into()))?;
        scores.push(score);
    }
    Ok(scores)
}

fn cmd_metrics(a: &MetricsArgs) -> CmdResult {
    let mut videos = Vec::new();
    let mut ids: Vec<String> = fs::read_dir(&a.gt)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().map(str::to_owned))
        .collect();
    ids.sort();
    for id in ids {
        let gt_dir = a.gt.join(&id);
        let pred_dir = a.pred.join(&id);
        let masks = sorted_entries(&gt_dir, "mask_", ".png")?;
        let scores = read_scores(&pred_dir.join(SCORES_FILE))?;
        if masks.len() != scores.len() {
            return Err(Error::InvalidArgument(format!(
                "video {id}: {} masks but {} scores",
                masks.len(),
                scores.len()
            ))
            .into());
        }
        let mut frames = Vec::with_capacity(masks.len());
        let mut mask_maps = Vec::with_capacity(masks.len());
        for (i, (mask_path, score)) in masks.iter().zip(scores).enumerate() {
            if mask_path.file_name().and_then(|n| n.to_str()) != Some(mask_file_name(i).as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "video {id}: expected {}, found {}",
                    mask_file_name(i),
                    mask_path.display()
                ))
                .into());
            }
            let loc_path = pred_dir.join(loc_file_name(i));
            let localization = imageio::read_gray(&loc_path)
                .map_err(|e| Error::InvalidArgument(format!("{}: {e}", loc_path.display())))?;
            let mask = imageio::read_gray(mask_path)?;
            mask_maps.push(mask.clone());
            frames.push(FrameRecord {
                score,
                localization,
                mask,
            });
        }
        videos.push(VideoRecord {
            label: video_label(&mask_maps),
            id,
            frames,
        });
    }
    let report = evaluate_with_threshold(&videos, a.threshold)?;
    let text = report.to_text();
    fs::write(&a.report, &text)?;
    print!("{text}");
    Ok(())
}
