//! Out-of-model-scope monitor based on a box abstraction of feature vectors.
//!
//! Feature vectors of correctly detected objects (true positives) are
//! clustered into `k` groups and each group is enclosed in a tight
//! axis-aligned hyper-box. At runtime a detection whose feature vector lies in
//! none of the boxes is rejected, and an image is rejected when any of its
//! detections is. Images without detections are accepted: the monitor only
//! sees what the model outputs, so a silent miss is invisible to it.

mod kmeans;

pub use kmeans::{kmeans, within_cluster_ss, KMeans, MAX_ITERATIONS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{match_detections, plain_detections, BBox, FeaturedDetection};
use crate::verdict::{Stage, Verdict};

pub const ABSTRACTION_HEADER: &str = "box-abstraction v1";
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum OmsError {
    #[error("cannot partition {points} feature vectors into {k} subsets")]
    TooFewPoints { points: usize, k: usize },
    #[error("only {found} true-positive detections for k = {k}; use a smaller k")]
    TooFewTruePositives { found: usize, k: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("subset {0} is empty")]
    EmptySubset(usize),
    #[error("feature dimension {found} does not match {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("feature vector contains a non-finite value")]
    NonFinite,
    #[error("enlargement must be finite and >= 0, got {0}")]
    Enlargement(f64),
    #[error("abstraction document line {line}: {message}")]
    Format { line: usize, message: String },
}

/// A detection's feature vector (the logits the model produced for it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl HyperBox {
    /// Closed containment.
    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxAbstraction {
    pub d: usize,
    pub k: usize,
    pub enlargement: f64,
    pub boxes: Vec<HyperBox>,
}

fn check_dims<'a>(
    vs: impl IntoIterator<Item = &'a FeatureVector>,
) -> Result<Option<usize>, OmsError> {
    let mut dim = None;
    for v in vs {
        if v.0.iter().any(|x| !x.is_finite()) {
            return Err(OmsError::NonFinite);
        }
        match dim {
            None => dim = Some(v.dim()),
            Some(d) if d != v.dim() => {
                return Err(OmsError::Dimension {
                    expected: d,
                    found: v.dim(),
                })
            }
            _ => {}
        }
    }
    Ok(dim)
}

/// Splits `features` into `k` non-empty subsets by k-means.
pub fn partition_features(
    features: &[FeatureVector],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<FeatureVector>>, OmsError> {
    if k == 0 {
        return Err(OmsError::ZeroK);
    }
    if features.len() < k {
        return Err(OmsError::TooFewPoints {
            points: features.len(),
            k,
        });
    }
    check_dims(features)?;
    let refs: Vec<&[f64]> = features.iter().map(FeatureVector::as_slice).collect();
    let km = kmeans(&refs, k, seed);
    let mut subsets = vec![Vec::new(); k];
    for (f, &a) in features.iter().zip(&km.assignment) {
        subsets[a].push(f.clone());
    }
    Ok(subsets)
}

/// Tight box per subset, widened by `enlargement` times the subset's extent
/// in each dimension.
pub fn build_abstraction(
    subsets: &[Vec<FeatureVector>],
    enlargement: f64,
) -> Result<BoxAbstraction, OmsError> {
    if !(enlargement.is_finite() && enlargement >= 0.0) {
        return Err(OmsError::Enlargement(enlargement));
    }
    if subsets.is_empty() {
        return Err(OmsError::ZeroK);
    }
    if let Some(i) = subsets.iter().position(Vec::is_empty) {
        return Err(OmsError::EmptySubset(i));
    }
    let d = check_dims(subsets.iter().flatten())?.expect("non-empty subsets");
    let boxes = subsets
        .iter()
        .map(|s| {
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for v in s {
                for t in 0..d {
                    lo[t] = lo[t].min(v.0[t]);
                    hi[t] = hi[t].max(v.0[t]);
                }
            }
            for t in 0..d {
                let pad = enlargement * (hi[t] - lo[t]);
                lo[t] -= pad;
                hi[t] += pad;
            }
            HyperBox { lo, hi }
        })
        .collect();
    Ok(BoxAbstraction {
        d,
        k: subsets.len(),
        enlargement,
        boxes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmsParams {
    pub tau_iou: f64,
    /// Confidence filter applied before matching the construction set.
    pub tau_conf: f64,
    pub k: usize,
    pub enlargement: f64,
    pub seed: u64,
}

impl Default for OmsParams {
    fn default() -> Self {
        Self {
            tau_iou: 0.7,
            tau_conf: 0.0,
            k: DEFAULT_K,
            enlargement: 0.0,
            seed: 0,
        }
    }
}

/// Feature vectors of the detections matched to a ground truth.
pub fn true_positive_features<'a, I>(images: I, tau_iou: f64, tau_conf: f64) -> Vec<FeatureVector>
where
    I: IntoIterator<Item = (&'a [FeaturedDetection], &'a [BBox])>,
{
    let mut out = Vec::new();
    for (dets, gts) in images {
        let plain = plain_detections(dets);
        let m = match_detections(&plain, gts, tau_iou, tau_conf);
        // pairs follow confidence order; restore detection order
        let mut idx: Vec<usize> = m.pairs.iter().map(|p| p.detection).collect();
        idx.sort_unstable();
        out.extend(idx.into_iter().map(|i| dets[i].features.clone()));
    }
    out
}

/// Builds the abstraction from the true-positive features of a labelled trace.
pub fn fit_oms<'a, I>(images: I, params: &OmsParams) -> Result<BoxAbstraction, OmsError>
where
    I: IntoIterator<Item = (&'a [FeaturedDetection], &'a [BBox])>,
{
    if params.k == 0 {
        return Err(OmsError::ZeroK);
    }
    let tps = true_positive_features(images, params.tau_iou, params.tau_conf);
    if tps.len() < params.k {
        return Err(OmsError::TooFewTruePositives {
            found: tps.len(),
            k: params.k,
        });
    }
    let subsets = partition_features(&tps, params.k, params.seed)?;
    build_abstraction(&subsets, params.enlargement)
}

impl BoxAbstraction {
    pub fn contains(&self, z: &FeatureVector) -> Result<bool, OmsError> {
        if z.dim() != self.d {
            return Err(OmsError::Dimension {
                expected: self.d,
                found: z.dim(),
            });
        }
        Ok(self.boxes.iter().any(|b| b.contains(&z.0)))
    }

    pub fn to_text(&self) -> String {
        let row = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut out = format!(
            "{ABSTRACTION_HEADER}\nd {}\nk {}\nenlargement {:.16e}\n",
            self.d, self.k, self.enlargement
        );
        for b in &self.boxes {
            out.push_str(&format!("lo {}\nhi {}\n", row(&b.lo), row(&b.hi)));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, OmsError> {
        let err = |line: usize, message: String| OmsError::Format { line, message };
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let mut it = lines.into_iter();
        match it.next() {
            Some((_, ABSTRACTION_HEADER)) => {}
            Some((n, other)) => {
                return Err(err(
                    n,
                    format!("expected `{ABSTRACTION_HEADER}`, got `{other}`"),
                ))
            }
            None => return Err(err(0, "empty document".into())),
        }
        let mut scalar = |key: &str| -> Result<(usize, String), OmsError> {
            let (n, line) = it
                .next()
                .ok_or_else(|| err(0, format!("missing `{key}`")))?;
            let rest = line
                .strip_prefix(key)
                .map(str::trim)
                .ok_or_else(|| err(n, format!("expected `{key}`")))?;
            Ok((n, rest.to_string()))
        };
        let (n, d) = scalar("d")?;
        let d: usize = d.parse().map_err(|_| err(n, "bad d".into()))?;
        let (n, k) = scalar("k")?;
        let k: usize = k.parse().map_err(|_| err(n, "bad k".into()))?;
        let (n, e) = scalar("enlargement")?;
        let enlargement: f64 = e.parse().map_err(|_| err(n, "bad enlargement".into()))?;

        let parse_row = |n: usize, key: &str, line: &str| -> Result<Vec<f64>, OmsError> {
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| err(n, format!("expected `{key}` row")))?;
            let vals = rest
                .split_whitespace()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| err(n, format!("bad number `{s}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if vals.len() != d {
                return Err(err(
                    n,
                    format!("row has {} values, expected {d}", vals.len()),
                ));
            }
            Ok(vals)
        };
        let mut boxes = Vec::with_capacity(k);
        let rest: Vec<(usize, &str)> = it.collect();
        for pair in rest.chunks(2) {
            let [(n1, lo), (n2, hi)] = pair else {
                return Err(err(pair[0].0, "unpaired lo row".into()));
            };
            let lo = parse_row(*n1, "lo", lo)?;
            let hi = parse_row(*n2, "hi", hi)?;
            if lo.iter().zip(&hi).any(|(a, b)| a > b) {
                return Err(err(*n2, "box has lo > hi".into()));
            }
            boxes.push(HyperBox { lo, hi });
        }
        if boxes.len() != k || k == 0 {
            return Err(err(
                0,
                format!("found {} boxes, header says k = {k}", boxes.len()),
            ));
        }
        Ok(Self {
            d,
            k,
            enlargement,
            boxes,
        })
    }
}

/// Rejects the image iff some detection's features fall outside every box.
/// Reasons are the indices of rejected detections.
pub fn check_oms(
    abstraction: &BoxAbstraction,
    detections: &[FeaturedDetection],
) -> Result<Verdict, OmsError> {
    let mut reasons = Vec::new();
    for (i, d) in detections.iter().enumerate() {
        if !abstraction.contains(&d.features)? {
            reasons.push(i.to_string());
        }
    }
    Ok(Verdict::from_reasons(Stage::Oms, reasons))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::Detection;
    use crate::verdict::Decision;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector(v.to_vec())
    }

    fn featured(features: &[f64]) -> FeaturedDetection {
        FeaturedDetection {
            detection: Detection {
                bbox: BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
                label: 0,
                confidence: 0.9,
            },
            features: fv(features),
        }
    }

    #[test]
    fn k_one_keeps_everything() {
        let f: Vec<FeatureVector> = (0..7).map(|i| fv(&[i as f64, 1.0])).collect();
        let parts = partition_features(&f, 1, 3).unwrap();
        assert_eq!(parts, vec![f]);
    }

    #[test]
    fn too_few_points() {
        let f = vec![fv(&[0.0]), fv(&[1.0])];
        assert_eq!(
            partition_features(&f, 3, 0).unwrap_err(),
            OmsError::TooFewPoints { points: 2, k: 3 }
        );
    }

    #[test]
    fn box_examples() {
        let a = build_abstraction(&[vec![fv(&[0.5, 0.25])]], 0.0).unwrap();
        assert_eq!(a.boxes[0].lo, a.boxes[0].hi);
        let a = build_abstraction(&[vec![fv(&[0.0, 0.0]), fv(&[1.0, 2.0])]], 0.0).unwrap();
        assert_eq!(
            a.boxes[0],
            HyperBox {
                lo: vec![0.0, 0.0],
                hi: vec![1.0, 2.0]
            }
        );
        assert!(a.contains(&fv(&[0.0, 1.0])).unwrap());
        assert!(!a.contains(&fv(&[1.5, 1.0])).unwrap());
        assert!(a.contains(&fv(&[1.0, 2.0])).unwrap());
        assert_eq!(
            a.contains(&fv(&[1.0])).unwrap_err(),
            OmsError::Dimension {
                expected: 2,
                found: 1
            }
        );
        let wide = build_abstraction(&[vec![fv(&[0.0, 0.0]), fv(&[1.0, 2.0])]], 0.5).unwrap();
        assert_eq!(
            wide.boxes[0],
            HyperBox {
                lo: vec![-0.5, -1.0],
                hi: vec![1.5, 3.0]
            }
        );
    }

    #[test]
    fn empty_subset_is_an_error() {
        assert_eq!(
            build_abstraction(&[vec![fv(&[1.0])], vec![]], 0.0).unwrap_err(),
            OmsError::EmptySubset(1)
        );
        assert!(build_abstraction(&[vec![fv(&[1.0])]], -0.1).is_err());
    }

    #[test]
    fn check_examples() {
        let a = build_abstraction(&[vec![fv(&[0.0, 0.0]), fv(&[1.0, 1.0])]], 0.0).unwrap();
        let inside = [featured(&[0.5, 0.5]), featured(&[0.1, 0.9])];
        assert_eq!(check_oms(&a, &inside).unwrap().decision, Decision::Accept);
        let mixed = [
            featured(&[0.5, 0.5]),
            featured(&[3.0, 0.5]),
            featured(&[0.2, 0.2]),
        ];
        let v = check_oms(&a, &mixed).unwrap();
        assert_eq!(v.decision, Decision::Reject);
        assert_eq!(v.reasons, vec!["1"]);
        assert_eq!(check_oms(&a, &[]).unwrap().decision, Decision::Accept);
    }

    #[test]
    fn fit_oms_without_true_positives() {
        let gt = [BBox::new(50.0, 50.0, 60.0, 60.0).unwrap()];
        let dets = [featured(&[0.0, 1.0])];
        let err = fit_oms(
            [(&dets[..], &gt[..])],
            &OmsParams {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert_eq!(err, OmsError::TooFewTruePositives { found: 0, k: 1 });
    }

    #[test]
    fn fit_oms_all_true_positives() {
        let gts: Vec<[BBox; 1]> = (0..6)
            .map(|i| [BBox::new(0.0, 0.0, 1.0, 1.0 + i as f64).unwrap()])
            .collect();
        let dets: Vec<[FeaturedDetection; 1]> = gts
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let mut d = featured(&[i as f64, -(i as f64)]);
                d.detection.bbox = g[0];
                [d]
            })
            .collect();
        let params = OmsParams {
            k: 2,
            ..Default::default()
        };
        let a = fit_oms(
            dets.iter().map(|d| &d[..]).zip(gts.iter().map(|g| &g[..])),
            &params,
        )
        .unwrap();
        for d in &dets {
            assert!(a.contains(&d[0].features).unwrap());
        }
        let total: usize = a.boxes.len();
        assert_eq!(total, 2);
    }

    #[test]
    fn text_roundtrip() {
        let subsets = vec![
            vec![fv(&[0.1, 1.0 / 3.0]), fv(&[2.0, -7.5])],
            vec![fv(&[std::f64::consts::PI, 1e-300])],
        ];
        let a = build_abstraction(&subsets, 0.125).unwrap();
        assert_eq!(BoxAbstraction::from_text(&a.to_text()).unwrap(), a);
        assert!(
            BoxAbstraction::from_text("box-abstraction v1\nd 2\nk 1\nenlargement 0\nlo 0 0\n")
                .is_err()
        );
        assert!(BoxAbstraction::from_text(
            "box-abstraction v1\nd 2\nk 1\nenlargement 0\nlo 1 0\nhi 0 0\n"
        )
        .is_err());
    }

    fn cloud(n: usize, seed: u64) -> Vec<FeatureVector> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                fv(&[
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                ])
            })
            .collect()
    }

    proptest! {
        #[test]
        fn construction_points_are_contained(seed in 0u64..1000, k in 1usize..6, eps in 0.0f64..0.5) {
            let f = cloud(40, seed);
            let parts = partition_features(&f, k, seed).unwrap();
            prop_assert_eq!(parts.iter().map(Vec::len).sum::<usize>(), f.len());
            prop_assert!(parts.iter().all(|p| !p.is_empty()));
            let a = build_abstraction(&parts, eps).unwrap();
            for z in &f {
                prop_assert!(a.contains(z).unwrap());
            }
        }

        #[test]
        fn enlargement_is_monotone(seed in 0u64..1000, eps in 0.0f64..0.3, extra in 0.0f64..0.3) {
            let f = cloud(30, seed);
            let parts = partition_features(&f, 3, 7).unwrap();
            let tight = build_abstraction(&parts, eps).unwrap();
            let loose = build_abstraction(&parts, eps + extra).unwrap();
            for probe in cloud(50, seed + 1) {
                if tight.contains(&probe).unwrap() {
                    prop_assert!(loose.contains(&probe).unwrap());
                }
            }
        }

        #[test]
        fn partition_is_deterministic(seed in 0u64..1000) {
            let f = cloud(25, seed);
            prop_assert_eq!(partition_features(&f, 4, seed).unwrap(), partition_features(&f, 4, seed).unwrap());
        }
    }
}
