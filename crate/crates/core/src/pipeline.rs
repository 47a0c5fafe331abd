//! Desk-scale detection/localization forward pass.
//!
//! Per adjacent frame pair: anchor-mesh motion between the two frames, a
//! patch-pooling encoder on the RGB frame and on the motion field, fusion
//! attention (queries from motion, keys/values from RGB), then a decoder to a
//! full-resolution localization map and a pooled MLP classifier. The encoder,
//! decoder and classifier are fixed seeded stand-ins; only the attention block
//! carries gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attention::{fa_forward, FaParams};
use crate::error::{Error, Result};
use crate::meshing::AnchorFrame;
use crate::motionfield::{extract_clip_motion, FlowField};
use crate::tensor::{bce, gelu, matmul, sigmoid, Tensor2, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    /// Pooling patch edge, pixels.
    pub patch: usize,
    /// Feature channels produced by both encoders.
    pub channels: usize,
    /// Hidden width of the classifier MLP.
    pub classifier_hidden: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            patch: 32,
            channels: 32,
            classifier_hidden: 32,
        }
    }
}

/// RGB frames in `[0, 1]` plus their anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceClip {
    pub frames: Vec<Tensor3>,
    pub anchors: Vec<AnchorFrame>,
}

impl FaceClip {
    pub fn new(frames: Vec<Tensor3>, anchors: Vec<AnchorFrame>) -> Result<Self> {
        if frames.len() != anchors.len() {
            return Err(Error::InvalidArgument(format!(
                "{} frames but {} anchor sets",
                frames.len(),
                anchors.len()
            )));
        }
        for (img, a) in frames.iter().zip(&anchors) {
            if img.shape() != (a.height, a.width, 3) {
                return Err(Error::Shape(format!(
                    "frame {} raster is {:?}, anchors declare {}x{}x3",
                    a.index,
                    img.shape(),
                    a.height,
                    a.width
                )));
            }
        }
        Ok(Self { frames, anchors })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// `H×W` localization probabilities.
    pub localization: Tensor2,
    /// Forgery probability.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `H×W`, entries 0 or 1.
    pub mask: Tensor2,
    pub label: bool,
}

impl GroundTruth {
    pub fn label_value(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

/// Clip-level label: fake iff any frame mask is non-empty.
pub fn video_label(masks: &[Tensor2]) -> bool {
    masks.iter().any(|m| m.data().iter().any(|&v| v > 0.5))
}

/// Mean over `patch × patch` blocks, per channel.
pub fn average_pool(input: &Tensor3, patch: usize) -> Result<Tensor3> {
    let (h, w, c) = input.shape();
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::Shape(format!(
            "{h}x{w} raster is not divisible into {patch}x{patch} patches"
        )));
    }
    let (ph, pw) = (h / patch, w / patch);
    let mut out = Tensor3::zeros(ph, pw, c);
    let norm = 1.0 / (patch * patch) as f64;
    for bi in 0..ph {
        for bj in 0..pw {
            for ch in 0..c {
                let mut sum = 0.0;
                for i in bi * patch..(bi + 1) * patch {
                    for j in bj * patch..(bj + 1) * patch {
                        sum += input.get(i, j, ch);
                    }
                }
                out.set(bi, bj, ch, sum * norm);
            }
        }
    }
    Ok(out)
}

/// Patch pooling followed by a fixed dense channel projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    pub patch: usize,
    /// `in_channels × out_channels`
    pub projection: Tensor2,
}

impl ToyEncoder {
    pub fn seeded(in_channels: usize, out_channels: usize, patch: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            patch,
            projection: Tensor2::xavier(in_channels, out_channels, rng),
        }
    }

    pub fn encode(&self, input: &Tensor3) -> Result<Tensor3> {
        if input.channels() != self.projection.rows() {
            return Err(Error::Shape(format!(
                "encoder expects {} channels, got {}",
                self.projection.rows(),
                input.channels()
            )));
        }
        let pooled = average_pool(input, self.patch)?;
        let (ph, pw, c) = pooled.shape();
        let tokens = Tensor2::from_vec(ph * pw, c, pooled.data().to_vec())?;
        let projected = matmul(&tokens, &self.projection)?;
        Tensor3::from_vec(ph, pw, projected.cols(), projected.into_vec())
    }
}

/// Dense collapse to one channel, nearest-neighbour upsampling, logistic.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDecoder {
    pub patch: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ToyDecoder {
    pub fn seeded(channels: usize, patch: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            patch,
            weights: Tensor2::xavier(channels, 1, rng).into_vec(),
            bias: 0.0,
        }
    }

    pub fn decode(&self, xa: &Tensor3) -> Result<Tensor2> {
        let (h, w, c) = xa.shape();
        if c != self.weights.len() {
            return Err(Error::Shape(format!(
                "decoder expects {} channels, got {c}",
                self.weights.len()
            )));
        }
        let p = self.patch;
        let mut out = Tensor2::zeros(h * p, w * p);
        for i in 0..h {
            for j in 0..w {
                let logit = self.bias
                    + xa.pixel(i, j)
                        .iter()
                        .zip(&self.weights)
                        .map(|(x, w)| x * w)
                        .sum::<f64>();
                let prob = sigmoid(logit);
                for y in i * p..(i + 1) * p {
                    out.row_mut(y)[j * p..(j + 1) * p].fill(prob);
                }
            }
        }
        Ok(out)
    }
}

/// Global average pooling, one GELU hidden layer, logistic output.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyClassifier {
    /// `channels × hidden`
    pub w1: Tensor2,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl ToyClassifier {
    pub fn seeded(channels: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w1: Tensor2::xavier(channels, hidden, rng),
            b1: vec![0.0; hidden],
            w2: Tensor2::xavier(hidden, 1, rng).into_vec(),
            b2: 0.0,
        }
    }

    pub fn classify(&self, xa: &Tensor3) -> Result<f64> {
        let (h, w, c) = xa.shape();
        if c != self.w1.rows() {
            return Err(Error::Shape(format!(
                "classifier expects {} channels, got {c}",
                self.w1.rows()
            )));
        }
        let tokens = Tensor2::from_vec(h * w, c, xa.data().to_vec())?;
        let pooled = Tensor2::from_vec(1, c, tokens.column_means())?;
        let hidden = matmul(&pooled, &self.w1)?.add_row(&self.b1)?.map(gelu);
        let logit = self.b2 + hidden.data().iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>();
        Ok(sigmoid(logit))
    }
}

/// The fixed seeded stand-in components around the attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNetwork {
    pub config: PipelineConfig,
    pub rgb_encoder: ToyEncoder,
    pub motion_encoder: ToyEncoder,
    pub decoder: ToyDecoder,
    pub classifier: ToyClassifier,
}

impl ToyNetwork {
    /// Draws from stream 1 of the seeded generator, so sharing a seed with
    /// [`FaParams::init`] does not repeat its weights.
    pub fn seeded(config: PipelineConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let c = config.channels;
        Self {
            config,
            rgb_encoder: ToyEncoder::seeded(3, c, config.patch, &mut rng),
            motion_encoder: ToyEncoder::seeded(2, c, config.patch, &mut rng),
            decoder: ToyDecoder::seeded(c, config.patch, &mut rng),
            classifier: ToyClassifier::seeded(c, config.classifier_hidden, &mut rng),
        }
    }

    /// Two-channel raster of the motion field, scaled by `1/patch`.
    pub fn motion_raster(&self, field: &FlowField) -> Tensor3 {
        let s = 1.0 / self.config.patch as f64;
        let data = field
            .u()
            .iter()
            .zip(field.v())
            .flat_map(|(u, v)| [u * s, v * s])
            .collect();
        Tensor3::from_vec(field.height(), field.width(), 2, data).expect("field dimensions")
    }

    pub fn forward_pair(&self, frame: &Tensor3, motion: &FlowField, fa: &FaParams) -> Result<PipelineOutput> {
        let xf = self.rgb_encoder.encode(frame)?;
        let xm = self.motion_encoder.encode(&self.motion_raster(motion))?;
        let xa = fa_forward(&xf, &xm, fa)?.fused;
        Ok(PipelineOutput {
            localization: self.decoder.decode(&xa)?,
            score: self.classifier.classify(&xa)?,
        })
    }
}

/// One output per adjacent frame pair `(i, i+1)`, using frame `i` as the RGB
/// input.
pub fn forward_clip(clip: &FaceClip, fa: &FaParams, network: &ToyNetwork) -> Result<Vec<PipelineOutput>> {
    if clip.frames.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 frames, got {}",
            clip.frames.len()
        )));
    }
    if fa.channels != network.config.channels {
        return Err(Error::Shape(format!(
            "attention block has {} channels, encoders produce {}",
            fa.channels, network.config.channels
        )));
    }
    let motions = extract_clip_motion(&clip.anchors)?;
    motions
        .par_iter()
        .zip(clip.frames.par_iter())
        .map(|(m, frame)| network.forward_pair(frame, &m.field, fa))
        .collect()
}

/// Seeds the stand-in network from `seed` and runs [`forward_clip`].
pub fn forward_clip_seeded(
    clip: &FaceClip,
    fa: &FaParams,
    config: PipelineConfig,
    seed: u64,
) -> Result<Vec<PipelineOutput>> {
    forward_clip(clip, fa, &ToyNetwork::seeded(config, seed))
}

/// `−L_b(C, C_g) − mean_xy L_b(L, L_g)`; non-negative.
pub fn joint_loss(out: &PipelineOutput, gt: &GroundTruth) -> Result<f64> {
    if out.localization.shape() != gt.mask.shape() {
        return Err(Error::Shape(format!(
            "localization {:?} vs mask {:?}",
            out.localization.shape(),
            gt.mask.shape()
        )));
    }
    let n = out.localization.data().len();
    if n == 0 {
        return Err(Error::Shape("empty localization map".into()));
    }
    let pixel_sum: f64 = out
        .localization
        .data()
        .iter()
        .zip(gt.mask.data())
        .map(|(&l, &g)| bce(l, g))
        .sum();
    Ok(-bce(out.score, gt.label_value()) - pixel_sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn naive_encode(input: &Tensor3, patch: usize, proj: &Tensor2) -> Vec<f64> {
        let (h, w, c_in) = input.shape();
        let mut out = Vec::new();
        for bi in 0..h / patch {
            for bj in 0..w / patch {
                let mut mean = vec![0.0; c_in];
                for (ch, m) in mean.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for i in 0..patch {
                        for j in 0..patch {
                            s += input.get(bi * patch + i, bj * patch + j, ch);
                        }
                    }
                    *m = s / (patch * patch) as f64;
                }
                for o in 0..proj.cols() {
                    out.push((0..c_in).map(|ch| mean[ch] * proj[(ch, o)]).sum());
                }
            }
        }
        out
    }

    #[test]
    fn encoder_examples() {
        let enc = ToyEncoder::seeded(3, 5, 4, &mut rng(1));
        let constant = Tensor3::from_vec(8, 12, 3, [0.2, 0.5, 0.9].repeat(96)).unwrap();
        let feats = enc.encode(&constant).unwrap();
        assert_eq!(feats.shape(), (2, 3, 5));
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(feats.pixel(i, j), feats.pixel(0, 0));
            }
        }

        let mut r = rng(2);
        let x = Tensor3::uniform(8, 12, 3, 1.0, &mut r);
        let doubled = Tensor3::from_vec(8, 12, 3, x.data().iter().map(|v| 2.0 * v).collect()).unwrap();
        let (p1, p2) = (average_pool(&x, 4).unwrap(), average_pool(&doubled, 4).unwrap());
        for (a, b) in p1.data().iter().zip(p2.data()) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }

        let got = enc.encode(&x).unwrap();
        for (a, b) in got.data().iter().zip(naive_encode(&x, 4, &enc.projection)) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(enc.encode(&Tensor3::zeros(7, 8, 3)).is_err());
        assert!(enc.encode(&Tensor3::zeros(8, 8, 2)).is_err());
    }

    #[test]
    fn decoder_examples() {
        let dec = ToyDecoder::seeded(4, 8, &mut rng(3));
        let map = dec.decode(&Tensor3::zeros(2, 3, 4)).unwrap();
        assert_eq!(map.shape(), (16, 24));
        assert!(map.data().iter().all(|&v| v == 0.5));

        let mut r = rng(4);
        let xa = Tensor3::uniform(2, 2, 4, 1.0, &mut r);
        let mut bumped = xa.clone();
        for i in 0..2 {
            for j in 0..2 {
                for ch in 0..4 {
                    if dec.weights[ch] > 0.0 {
                        bumped.set(i, j, ch, xa.get(i, j, ch) + r.random_range(0.0..1.0));
                    }
                }
            }
        }
        let (a, b) = (dec.decode(&xa).unwrap(), dec.decode(&bumped).unwrap());
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| y >= x));

        let big = ToyDecoder::seeded(32, 32, &mut rng(5));
        assert_eq!(big.decode(&Tensor3::zeros(16, 16, 32)).unwrap().shape(), (512, 512));
    }

    #[test]
    fn classifier_examples() {
        let cls = ToyClassifier::seeded(4, 6, &mut rng(6));
        assert_eq!(cls.classify(&Tensor3::zeros(3, 3, 4)).unwrap(), 0.5);

        let mut r = rng(7);
        let xa = Tensor3::uniform(1, 4, 4, 1.0, &mut r);
        let mut data = Vec::new();
        for j in [2, 0, 3, 1] {
            data.extend_from_slice(xa.pixel(0, j));
        }
        let permuted = Tensor3::from_vec(1, 4, 4, data).unwrap();
        let (a, b) = (cls.classify(&xa).unwrap(), cls.classify(&permuted).unwrap());
        assert!((a - b).abs() < 1e-15);

        // Hand-rolled pooled MLP.
        let mut pooled = [0.0; 4];
        for j in 0..4 {
            for (ch, p) in pooled.iter_mut().enumerate() {
                *p += xa.get(0, j, ch) / 4.0;
            }
        }
        let mut logit = cls.b2;
        for u in 0..6 {
            let z: f64 = cls.b1[u] + (0..4).map(|ch| pooled[ch] * cls.w1[(ch, u)]).sum::<f64>();
            logit += cls.w2[u] * z * 0.5 * (1.0 + libm::erf(z / 2f64.sqrt()));
        }
        let expected = 1.0 / (1.0 + (-logit).exp());
        assert!((a - expected).abs() <= 1e-12);
    }

    fn uniform_output(h: usize, w: usize, loc: f64, score: f64) -> PipelineOutput {
        PipelineOutput {
            localization: Tensor2::from_vec(h, w, vec![loc; h * w]).unwrap(),
            score,
        }
    }

    #[test]
    fn loss_examples() {
        let mask = Tensor2::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        let gt = GroundTruth {
            mask: mask.clone(),
            label: true,
        };
        let perfect = PipelineOutput {
            localization: mask.clone(),
            score: 1.0,
        };
        let l = joint_loss(&perfect, &gt).unwrap();
        assert!((0.0..=2e-6).contains(&l));

        let half = uniform_output(2, 2, 0.5, 0.5);
        assert!((joint_loss(&half, &gt).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);

        let out = PipelineOutput {
            localization: Tensor2::from_rows(&[&[0.9, 0.1], &[0.2, 0.3]]).unwrap(),
            score: 0.8,
        };
        let pixel = (-(0.9f64.ln()) - 0.9f64.ln() - 0.8f64.ln() - 0.7f64.ln()) / 4.0;
        let expected = -(0.8f64.ln()) + pixel;
        assert!((joint_loss(&out, &gt).unwrap() - expected).abs() < 1e-12);

        assert!(joint_loss(&uniform_output(3, 2, 0.5, 0.5), &gt).is_err());
    }

    #[test]
    fn video_label_from_masks() {
        assert!(!video_label(&[Tensor2::zeros(2, 2), Tensor2::zeros(2, 2)]));
        let mut m = Tensor2::zeros(2, 2);
        m[(1, 1)] = 1.0;
        assert!(video_label(&[Tensor2::zeros(2, 2), m]));
    }
}
