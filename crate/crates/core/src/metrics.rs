//! Video-level F1/AUC and pixel-level F1/IoU.
//!
//! Aggregates are summed in sorted order so a report does not depend on the
//! order videos or frames are supplied in.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// `2tp / (2tp + fp + fn)`, or 0 when all counts are zero.
pub fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs where the
/// positive scores higher, ties counting one half.
pub fn auc(scores: &[(f64, bool)]) -> Result<f64> {
    let positives = scores.iter().filter(|s| s.1).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidArgument(format!(
            "AUC needs both classes, got {positives} positive and {negatives} negative"
        )));
    }
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Count, for each positive, the negatives strictly below it plus half the
    // tied ones, walking groups of equal scores.
    let mut below = 0u64;
    let mut twice_wins = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let group_pos = sorted[i..j].iter().filter(|s| s.1).count() as u64;
        let group_neg = (j - i) as u64 - group_pos;
        twice_wins += group_pos * (2 * below + group_neg);
        below += group_neg;
        i = j;
    }
    Ok(twice_wins as f64 / (2 * positives as u64 * negatives as u64) as f64)
}

/// Confusion counts of a binarized prediction against a binary mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PixelCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelScores {
    pub f1: f64,
    pub iou: f64,
}

/// Predicted probabilities against a ground-truth mask.
#[derive(Debug, Clone, Copy)]
pub struct MaskPair<'a> {
    pub predicted: &'a Tensor2,
    pub truth: &'a Tensor2,
    pub threshold: f64,
}

impl<'a> MaskPair<'a> {
    pub fn new(predicted: &'a Tensor2, truth: &'a Tensor2) -> Self {
        Self {
            predicted,
            truth,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    /// Prediction positive iff `p >= threshold`; truth positive iff `> 0.5`.
    pub fn counts(&self) -> Result<PixelCounts> {
        if self.predicted.shape() != self.truth.shape() {
            return Err(Error::Shape(format!(
                "prediction {:?} vs mask {:?}",
                self.predicted.shape(),
                self.truth.shape()
            )));
        }
        let mut c = PixelCounts::default();
        for (&p, &g) in self.predicted.data().iter().zip(self.truth.data()) {
            match (p >= self.threshold, g > 0.5) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }
}

/// F1 and IoU of one frame. Both masks empty scores `(1, 1)`.
pub fn pixel_scores(m: &MaskPair) -> Result<PixelScores> {
    let c = m.counts()?;
    let union = c.tp + c.fp + c.fn_;
    if union == 0 {
        return Ok(PixelScores { f1: 1.0, iou: 1.0 });
    }
    Ok(PixelScores {
        f1: f1(c.tp, c.fp, c.fn_),
        iou: c.tp as f64 / union as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub score: f64,
    pub localization: Tensor2,
    pub mask: Tensor2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    pub label: bool,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSummary {
    pub id: String,
    pub label: bool,
    pub score: f64,
    pub frames: usize,
    pub p_f1: f64,
    pub p_iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub v_f1: f64,
    /// `None` when only one class of video is present.
    pub v_auc: Option<f64>,
    pub p_f1: f64,
    pub p_iou: f64,
    /// Sorted by id.
    pub videos: Vec<VideoSummary>,
}

impl MetricsReport {
    /// `key = value` lines in a fixed order; floats use the shortest
    /// round-tripping representation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let auc = self.v_auc.map_or_else(|| "undefined".to_string(), |v| v.to_string());
        writeln!(s, "v_f1 = {}", self.v_f1).unwrap();
        writeln!(s, "v_auc = {auc}").unwrap();
        writeln!(s, "p_f1 = {}", self.p_f1).unwrap();
        writeln!(s, "p_iou = {}", self.p_iou).unwrap();
        writeln!(s, "videos = {}", self.videos.len()).unwrap();
        for v in &self.videos {
            writeln!(s, "video.{}.label = {}", v.id, u8::from(v.label)).unwrap();
            writeln!(s, "video.{}.score = {}", v.id, v.score).unwrap();
            writeln!(s, "video.{}.frames = {}", v.id, v.frames).unwrap();
            writeln!(s, "video.{}.p_f1 = {}", v.id, v.p_f1).unwrap();
            writeln!(s, "video.{}.p_iou = {}", v.id, v.p_iou).unwrap();
        }
        s
    }
}

/// Order-independent mean.
fn sorted_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn evaluate(videos: &[VideoRecord]) -> Result<MetricsReport> {
    evaluate_with_threshold(videos, DEFAULT_THRESHOLD)
}

/// [`evaluate`] with one decision threshold for both pixels and clip scores.
pub fn evaluate_with_threshold(videos: &[VideoRecord], threshold: f64) -> Result<MetricsReport> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside [0, 1]")));
    }
    if videos.is_empty() {
        return Err(Error::InvalidArgument("no videos to evaluate".into()));
    }
    let mut summaries = Vec::with_capacity(videos.len());
    let mut all_f1 = Vec::new();
    let mut all_iou = Vec::new();
    for v in videos {
        if v.frames.is_empty() {
            return Err(Error::InvalidArgument(format!("video {} has no frames", v.id)));
        }
        let mut scores: Vec<f64> = v.frames.iter().map(|f| f.score).collect();
        if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidArgument(format!(
                "video {} has a score outside [0, 1]",
                v.id
            )));
        }
        let mut f1s = Vec::with_capacity(v.frames.len());
        let mut ious = Vec::with_capacity(v.frames.len());
        for f in &v.frames {
            let pair = MaskPair {
                threshold,
                ..MaskPair::new(&f.localization, &f.mask)
            };
            let s = pixel_scores(&pair)?;
            f1s.push(s.f1);
            ious.push(s.iou);
        }
        all_f1.extend_from_slice(&f1s);
        all_iou.extend_from_slice(&ious);
        summaries.push(VideoSummary {
            id: v.id.clone(),
            label: v.label,
            score: sorted_mean(&mut scores),
            frames: v.frames.len(),
            p_f1: sorted_mean(&mut f1s),
            p_iou: sorted_mean(&mut ious),
        });
    }
    summaries.sort_by(|a, b| a.id.cmp(&b.id));

    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for s in &summaries {
        match (s.score >= threshold, s.label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let pairs: Vec<(f64, bool)> = summaries.iter().map(|s| (s.score, s.label)).collect();
    let both_classes = pairs.iter().any(|p| p.1) && pairs.iter().any(|p| !p.1);
    Ok(MetricsReport {
        v_f1: f1(tp, fp, fn_),
        v_auc: if both_classes { Some(auc(&pairs)?) } else { None },
        p_f1: sorted_mean(&mut all_f1),
        p_iou: sorted_mean(&mut all_iou),
        videos: summaries,
    })
}
