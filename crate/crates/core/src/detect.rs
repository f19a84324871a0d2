//! Detection bookkeeping: IoU, greedy matching, P/R/F1, confidence calibration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoxError {
    #[error("malformed bbox [{0}, {1}, {2}, {3}]: need x_min < x_max and y_min < y_max")]
    Malformed(f64, f64, f64, f64),
}

/// Axis-aligned box in absolute pixel corner coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, BoxError> {
        // also rejects NaN
        if x_min < x_max
            && y_min < y_max
            && x_min.is_finite()
            && y_max.is_finite()
            && x_max.is_finite()
            && y_min.is_finite()
        {
            Ok(Self {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        } else {
            Err(BoxError::Malformed(x_min, y_min, x_max, y_max))
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = BoxError;
    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub label: u32,
    pub confidence: f64,
}

/// A detection together with the feature vector the model produced for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturedDetection {
    #[serde(flatten)]
    pub detection: Detection,
    pub features: crate::oms::FeatureVector,
}

/// Strips features, keeping index alignment.
pub fn plain_detections(dets: &[FeaturedDetection]) -> Vec<Detection> {
    dets.iter().map(|d| d.detection).collect()
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub detection: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub pairs: Vec<MatchPair>,
}

impl MatchResult {
    pub fn is_correct(&self) -> bool {
        self.fp == 0 && self.fn_ == 0
    }
}

/// Greedy matching in descending confidence.
///
/// Detections below `tau_conf` are dropped first. Each survivor takes the
/// unmatched ground truth of highest IoU if that IoU reaches `tau_iou`. Ties go
/// to the lower index on both sides.
pub fn match_detections(
    dets: &[Detection],
    gts: &[BBox],
    tau_iou: f64,
    tau_conf: f64,
) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].confidence >= tau_conf)
        .collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .total_cmp(&dets[a].confidence)
            .then(a.cmp(&b))
    });

    let mut gt_taken = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for &d in &order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_taken[g] {
                continue;
            }
            let v = iou(&dets[d].bbox, gt);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            if v >= tau_iou {
                gt_taken[g] = true;
                pairs.push(MatchPair {
                    detection: d,
                    ground_truth: g,
                    iou: v,
                });
            }
        }
    }
    let tp = pairs.len();
    MatchResult {
        tp,
        fp: order.len() - tp,
        fn_: gts.len() - tp,
        pairs,
    }
}

/// `(precision, recall, f1)`, with every 0/0 taken as 0.
pub fn precision_recall_f1(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f1)
}

/// True iff the image has neither a false positive nor a false negative.
pub fn image_correct(dets: &[Detection], gts: &[BBox], tau_iou: f64, tau_conf: f64) -> bool {
    match_detections(dets, gts, tau_iou, tau_conf).is_correct()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when the validation set holds no detection at all.
    pub no_detections: bool,
}

/// Aggregate counts over a set of images at one confidence threshold.
pub fn aggregate_counts<'a, I>(images: I, tau_iou: f64, tau_conf: f64) -> (usize, usize, usize)
where
    I: IntoIterator<Item = (&'a [Detection], &'a [BBox])>,
{
    images.into_iter().fold((0, 0, 0), |(tp, fp, fn_), (d, g)| {
        let m = match_detections(d, g, tau_iou, tau_conf);
        (tp + m.tp, fp + m.fp, fn_ + m.fn_)
    })
}

/// Picks the confidence threshold maximizing aggregate F1.
///
/// Candidates are the distinct detection confidences plus 0; ties go to the
/// largest threshold.
pub fn calibrate_conf_threshold<'a, I>(images: I, tau_iou: f64) -> Calibration
where
    I: IntoIterator<Item = (&'a [Detection], &'a [BBox])>,
{
    let images: Vec<_> = images.into_iter().collect();
    let mut candidates: Vec<f64> = images
        .iter()
        .flat_map(|(d, _)| d.iter().map(|x| x.confidence))
        .collect();
    let no_detections = candidates.is_empty();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best: Option<Calibration> = None;
    for &c in &candidates {
        let (tp, fp, fn_) = aggregate_counts(images.iter().copied(), tau_iou, c);
        let (precision, recall, f1) = precision_recall_f1(tp, fp, fn_);
        // ascending candidates, so `>=` keeps the largest tied threshold
        if best.is_none_or(|b| f1 >= b.f1) {
            best = Some(Calibration {
                threshold: c,
                precision,
                recall,
                f1,
                no_detections,
            });
        }
    }
    best.expect("candidate set always contains 0")
}
