//! Synthetic runway scenes and a stub detector with programmable failures.
//!
//! Scenes are a textured ground plane under a sky band with a bright
//! trapezoidal runway; the ground truth is the runway's bounding box. The stub
//! detector draws its errors and per-detection feature vectors from explicit
//! distributions, so the behavior of every monitor has a known target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{BBox, Detection, FeaturedDetection};
use crate::imaging::{Corruption, Image};
use crate::odd::{FlightMetadata, Interval, OddParameter, OddSpec};
use crate::oms::FeatureVector;
use crate::pipeline::{Detector, DetectorError, ImageSource, Sample, ThreatLabel};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("image must be at least 32x32, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("range `{0}` is empty or outside its domain")]
    BadRange(&'static str),
    #[error("threat fractions must be in [0, 1] and sum to 1, got sum {0}")]
    Fractions(f64),
    #[error("runway can be as short as {0:.1} px; need at least 8")]
    Infeasible(f64),
    #[error("{0} must be a probability, got {1}")]
    Probability(&'static str, f64),
    #[error("feature dimension must be at least 2, got {0}")]
    FeatureDim(usize),
    #[error("{0} must be finite and positive")]
    Positive(&'static str),
}

/// SplitMix64 finalizer applied to `seed + key`; used to derive independent
/// per-sample seeds.
pub fn derive_seed(seed: u64, key: u64) -> u64 {
    let mut z = seed.wrapping_add(key.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, for turning sample ids into seed keys.
pub fn hash_id(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetadataMode {
    /// Metadata inside the landing cone, except for `odd_violation` samples.
    InsideCone,
    /// Every sample violates the cone on this parameter.
    OutsideCone(OddParameter),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThreatFractions {
    pub nominal: f64,
    pub odd_violation: f64,
    pub ood_threat: f64,
    pub id_error: f64,
}

impl Default for ThreatFractions {
    fn default() -> Self {
        Self::nominal_only()
    }
}

impl ThreatFractions {
    pub fn nominal_only() -> Self {
        Self {
            nominal: 1.0,
            odd_violation: 0.0,
            ood_threat: 0.0,
            id_error: 0.0,
        }
    }

    pub fn mixed() -> Self {
        Self {
            nominal: 0.7,
            odd_violation: 0.1,
            ood_threat: 0.1,
            id_error: 0.1,
        }
    }

    fn as_array(&self) -> [f64; 4] {
        [
            self.nominal,
            self.odd_violation,
            self.ood_threat,
            self.id_error,
        ]
    }

    fn pick(&self, u: f64) -> ThreatLabel {
        let mut acc = 0.0;
        for (f, label) in self.as_array().into_iter().zip(ThreatLabel::ALL) {
            acc += f;
            if u < acc {
                return label;
            }
        }
        // u lands past the rounded sum; take the last label with weight
        let last = self.as_array().iter().rposition(|&f| f > 0.0).unwrap_or(0);
        ThreatLabel::ALL[last]
    }
}

/// Geometry is given as fractions of the image size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    /// Height of the sky band.
    pub horizon: (f64, f64),
    /// Vertical position of the runway's near edge.
    pub runway_bottom: (f64, f64),
    /// Gap between the horizon and the runway's far edge.
    pub runway_top_offset: (f64, f64),
    pub bottom_width: (f64, f64),
    /// Far-edge width relative to the near edge.
    pub top_width_ratio: (f64, f64),
    pub center_x: (f64, f64),
    /// Horizontal offset of the far edge's center.
    pub skew: (f64, f64),
    /// Value-noise cell size in pixels.
    pub texture_cell: (usize, usize),
    /// Texture amplitude in 8-bit units.
    pub texture_amplitude: (f64, f64),
    pub metadata: MetadataMode,
    pub threats: ThreatFractions,
    pub id_prefix: String,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            horizon: (0.15, 0.3),
            runway_bottom: (0.85, 0.98),
            runway_top_offset: (0.02, 0.12),
            bottom_width: (0.35, 0.7),
            top_width_ratio: (0.15, 0.4),
            center_x: (0.4, 0.6),
            skew: (-0.1, 0.1),
            texture_cell: (6, 14),
            texture_amplitude: (20.0, 45.0),
            metadata: MetadataMode::InsideCone,
            threats: ThreatFractions::nominal_only(),
            id_prefix: "s".into(),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width < 32 || self.height < 32 {
            return Err(SynthError::TooSmall(self.width, self.height));
        }
        let unit = |name, (a, b): (f64, f64)| {
            if a.is_finite() && b.is_finite() && 0.0 <= a && a <= b && b <= 1.0 {
                Ok(())
            } else {
                Err(SynthError::BadRange(name))
            }
        };
        unit("horizon", self.horizon)?;
        unit("runway_bottom", self.runway_bottom)?;
        unit("runway_top_offset", self.runway_top_offset)?;
        unit("bottom_width", self.bottom_width)?;
        unit("top_width_ratio", self.top_width_ratio)?;
        unit("center_x", self.center_x)?;
        let (s0, s1) = self.skew;
        if !(s0.is_finite() && s1.is_finite() && s0 <= s1 && s0.abs() <= 1.0 && s1.abs() <= 1.0) {
            return Err(SynthError::BadRange("skew"));
        }
        let (c0, c1) = self.texture_cell;
        if c0 == 0 || c0 > c1 {
            return Err(SynthError::BadRange("texture_cell"));
        }
        let (a0, a1) = self.texture_amplitude;
        if !(a0.is_finite() && a1.is_finite() && 0.0 <= a0 && a0 <= a1) {
            return Err(SynthError::BadRange("texture_amplitude"));
        }
        let f = self.threats.as_array();
        let sum: f64 = f.iter().sum();
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) || (sum - 1.0).abs() > 1e-9 {
            return Err(SynthError::Fractions(sum));
        }
        let shortest =
            (self.runway_bottom.0 - self.horizon.1 - self.runway_top_offset.1) * self.height as f64;
        if shortest < 8.0 {
            return Err(SynthError::Infeasible(shortest));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (a, b): (f64, f64)) -> f64 {
    if a == b {
        a
    } else {
        rng.random_range(a..=b)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform inside every interval of `spec`.
pub fn sample_inside(spec: &OddSpec, rng: &mut ChaCha8Rng) -> FlightMetadata {
    let mut m = FlightMetadata::default();
    for p in OddParameter::ALL {
        let iv = spec.interval(p);
        m.set(p, Some(uniform(rng, (iv.lo, iv.hi))));
    }
    m
}

/// Inside on every parameter but `p`, which lies outside by 5% to 100% of the
/// interval width.
pub fn sample_outside(spec: &OddSpec, p: OddParameter, rng: &mut ChaCha8Rng) -> FlightMetadata {
    let mut m = sample_inside(spec, rng);
    let Interval { lo, hi } = spec.interval(p);
    let width = (hi - lo).max(1.0);
    let gap = width * rng.random_range(0.05..=1.0);
    // keep distances positive
    let above = rng.random_bool(0.5) || (lo >= 0.0 && lo - gap < 0.0);
    m.set(p, Some(if above { hi + gap } else { lo - gap }));
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Style {
    Nominal,
    Night,
    Haze,
    Noise,
}

struct Scene {
    image: Image,
    runway: BBox,
}

fn value_noise(w: usize, h: usize, cell: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gw = w / cell + 2;
    let gh = h / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let fx = x as f64 / cell as f64;
            let fy = y as f64 / cell as f64;
            let (ix, iy) = (fx as usize, fy as usize);
            let (tx, ty) = (fx - ix as f64, fy - iy as f64);
            let g = |i: usize, j: usize| grid[j * gw + i];
            let top = g(ix, iy) * (1.0 - tx) + g(ix + 1, iy) * tx;
            let bot = g(ix, iy + 1) * (1.0 - tx) + g(ix + 1, iy + 1) * tx;
            out[y * w + x] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

fn render(cfg: &SceneConfig, style: Style, rng: &mut ChaCha8Rng) -> Scene {
    let (w, h) = (cfg.width, cfg.height);
    let (wf, hf) = (w as f64, h as f64);
    let horizon = uniform(rng, cfg.horizon) * hf;
    let bottom = uniform(rng, cfg.runway_bottom) * hf;
    let top = horizon + uniform(rng, cfg.runway_top_offset) * hf;
    let bw = uniform(rng, cfg.bottom_width) * wf;
    let tw = bw * uniform(rng, cfg.top_width_ratio);
    let cx = uniform(rng, cfg.center_x) * wf;
    let tcx = cx + uniform(rng, cfg.skew) * wf;
    let (bl, br) = ((cx - bw / 2.0).max(0.0), (cx + bw / 2.0).min(wf));
    let (tl, tr) = ((tcx - tw / 2.0).max(0.0), (tcx + tw / 2.0).min(wf));

    let sky = [
        rng.random_range(140.0..190.0),
        rng.random_range(160.0..200.0),
        rng.random_range(190.0..235.0),
    ];
    let ground = [
        rng.random_range(85.0..130.0),
        rng.random_range(95.0..140.0),
        rng.random_range(60.0..100.0),
    ];
    let runway = rng.random_range(170.0..215.0);
    let cell = rng.random_range(cfg.texture_cell.0..=cfg.texture_cell.1);
    let amp = uniform(rng, cfg.texture_amplitude);
    let texture = value_noise(w, h, cell, rng);
    let gain = rng.random_range(0.9..=1.1);

    let mut buf = vec![[0.0f64; 3]; w * h];
    for y in 0..h {
        let py = y as f64 + 0.5;
        for x in 0..w {
            let px = x as f64 + 0.5;
            let t = texture[y * w + x] * amp;
            let mut c = if py < horizon {
                [sky[0] + 0.3 * t, sky[1] + 0.3 * t, sky[2] + 0.3 * t]
            } else {
                [ground[0] + t, ground[1] + t, ground[2] + 0.8 * t]
            };
            if py >= top && py <= bottom {
                let s = (py - top) / (bottom - top);
                let l = tl + s * (bl - tl);
                let r = tr + s * (br - tr);
                if px >= l && px <= r {
                    let v = runway + 0.25 * t;
                    c = [v, v, v];
                }
            }
            buf[y * w + x] = c.map(|v| v * gain);
        }
    }

    match style {
        Style::Nominal => {}
        Style::Night => buf.iter_mut().for_each(|c| *c = c.map(|v| v * 0.3)),
        Style::Haze => buf.iter_mut().for_each(|c| {
            *c = [
                c[0] * 0.35 + 143.0,
                c[1] * 0.35 + 143.0,
                c[2] * 0.35 + 146.0,
            ]
        }),
        Style::Noise => {}
    }
    let sigma = if style == Style::Noise { 64.0 } else { 2.5 };
    for c in &mut buf {
        for v in c.iter_mut() {
            *v += sigma * normal(rng);
        }
    }

    let data = buf
        .iter()
        .flat_map(|c| c.map(|v| v.round().clamp(0.0, 255.0) as u8))
        .collect();
    let image = Image::from_raw(w, h, data).expect("buffer sized from dimensions");
    let runway = BBox::new(bl.min(tl), top, br.max(tr), bottom).expect("validated geometry");
    Scene { image, runway }
}

fn generate_one(cfg: &SceneConfig, spec: &OddSpec, index: usize, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index as u64));
    let threat = match cfg.metadata {
        MetadataMode::OutsideCone(_) => ThreatLabel::OddViolation,
        MetadataMode::InsideCone => cfg.threats.pick(rng.random()),
    };
    let metadata = match (cfg.metadata, threat) {
        (MetadataMode::OutsideCone(p), _) => sample_outside(spec, p, &mut rng),
        (_, ThreatLabel::OddViolation) => {
            let p = OddParameter::ALL[rng.random_range(0..OddParameter::ALL.len())];
            sample_outside(spec, p, &mut rng)
        }
        _ => sample_inside(spec, &mut rng),
    };
    let style = if threat == ThreatLabel::OodThreat {
        [Style::Night, Style::Haze, Style::Noise][rng.random_range(0..3)]
    } else {
        Style::Nominal
    };
    let scene = render(cfg, style, &mut rng);
    Sample {
        id: format!("{}{index:06}", cfg.id_prefix),
        image: ImageSource::Loaded(scene.image),
        metadata,
        ground_truth: vec![scene.runway],
        threat: Some(threat),
        corruption: None,
    }
}

/// `n` samples; sample `i` depends only on `(seed, i)`.
pub fn generate_dataset(cfg: &SceneConfig, n: usize, seed: u64) -> Result<Vec<Sample>, SynthError> {
    cfg.validate()?;
    let spec = OddSpec::landing_cone();
    Ok((0..n)
        .into_par_iter()
        .map(|i| generate_one(cfg, &spec, i, seed))
        .collect())
}

/// Error-probability multipliers per ground-truth threat label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThreatSensitivity {
    pub odd_violation: f64,
    pub ood_threat: f64,
    pub id_error: f64,
}

impl Default for ThreatSensitivity {
    fn default() -> Self {
        Self {
            odd_violation: 2.5,
            ood_threat: 3.0,
            id_error: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubDetectorConfig {
    pub p_fn: f64,
    pub p_fp: f64,
    pub p_shift: f64,
    /// Uniform corner jitter of a clean hit, in pixels.
    pub jitter_px: f64,
    /// Horizontal shift of a degraded hit, as a fraction of the box width.
    pub shift_fraction: f64,
    pub feature_dim: usize,
    /// Number of correct-mode clusters.
    pub modes: usize,
    pub mode_separation: f64,
    pub feature_sigma: f64,
    /// Correct-mode noise is clipped to this many sigmas.
    pub feature_clip: f64,
    /// Per-dimension offset of error-mode features, in sigmas.
    pub error_shift: f64,
    /// Error-probability multiplier per corruption severity 1..=3.
    pub corruption_sensitivity: [f64; 3],
    pub threat_sensitivity: ThreatSensitivity,
}

impl Default for StubDetectorConfig {
    fn default() -> Self {
        Self {
            p_fn: 0.1,
            p_fp: 0.12,
            p_shift: 0.0,
            jitter_px: 0.5,
            shift_fraction: 0.5,
            feature_dim: 8,
            modes: 3,
            mode_separation: 10.0,
            feature_sigma: 1.0,
            feature_clip: 2.0,
            error_shift: 4.0,
            corruption_sensitivity: [1.5, 2.5, 4.0],
            threat_sensitivity: ThreatSensitivity::default(),
        }
    }
}

impl StubDetectorConfig {
    /// Never misses, never hallucinates, never shifts.
    pub fn error_free() -> Self {
        Self {
            p_fn: 0.0,
            p_fp: 0.0,
            p_shift: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, p) in [
            ("p_fn", self.p_fn),
            ("p_fp", self.p_fp),
            ("p_shift", self.p_shift),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::Probability(name, p));
            }
        }
        if self.feature_dim < 2 {
            return Err(SynthError::FeatureDim(self.feature_dim));
        }
        if self.modes == 0 {
            return Err(SynthError::Positive("modes"));
        }
        let s = &self.threat_sensitivity;
        let positive = [
            ("feature_sigma", self.feature_sigma),
            ("feature_clip", self.feature_clip),
            ("corruption_sensitivity", self.corruption_sensitivity[0]),
            ("corruption_sensitivity", self.corruption_sensitivity[1]),
            ("corruption_sensitivity", self.corruption_sensitivity[2]),
            ("threat_sensitivity", s.odd_violation),
            ("threat_sensitivity", s.ood_threat),
            ("threat_sensitivity", s.id_error),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SynthError::Positive(name));
            }
        }
        for (name, v) in [
            ("jitter_px", self.jitter_px),
            ("shift_fraction", self.shift_fraction),
            ("mode_separation", self.mode_separation),
            ("error_shift", self.error_shift),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError::Positive(name));
            }
        }
        Ok(())
    }

    /// Center of correct mode `m`: `mode_separation` on the dimensions congruent
    /// to `m` modulo the mode count, zero elsewhere.
    pub fn mode_center(&self, m: usize) -> Vec<f64> {
        (0..self.feature_dim)
            .map(|j| {
                if j % self.modes == m % self.modes {
                    self.mode_separation
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn clipped_noise(&self, rng: &mut ChaCha8Rng) -> f64 {
        normal(rng).clamp(-self.feature_clip, self.feature_clip) * self.feature_sigma
    }

    /// A feature vector from a random correct mode.
    pub fn correct_features(&self, rng: &mut ChaCha8Rng) -> FeatureVector {
        let c = self.mode_center(rng.random_range(0..self.modes));
        FeatureVector(c.into_iter().map(|v| v + self.clipped_noise(rng)).collect())
    }

    /// A correct-mode draw pushed `error_shift` sigmas along a random sign
    /// pattern.
    pub fn error_features(&self, rng: &mut ChaCha8Rng) -> FeatureVector {
        let shift = self.error_shift * self.feature_sigma;
        let mut f = self.correct_features(rng);
        for v in &mut f.0 {
            *v += if rng.random_bool(0.5) { shift } else { -shift };
        }
        f
    }

    /// Multiplier applied to all three error probabilities for `sample`.
    pub fn sensitivity(&self, sample: &Sample) -> f64 {
        let c = sample.corruption.map_or(1.0, |c| {
            self.corruption_sensitivity[c.severity.level() as usize - 1]
        });
        let t = match sample.threat {
            Some(ThreatLabel::OddViolation) => self.threat_sensitivity.odd_violation,
            Some(ThreatLabel::OodThreat) => self.threat_sensitivity.ood_threat,
            Some(ThreatLabel::IdError) => self.threat_sensitivity.id_error,
            Some(ThreatLabel::Nominal) | None => 1.0,
        };
        c * t
    }
}

fn clamp_box(x0: f64, y0: f64, x1: f64, y1: f64, w: f64, h: f64) -> BBox {
    let x0 = x0.clamp(0.0, w - 1.0);
    let y0 = y0.clamp(0.0, h - 1.0);
    let x1 = x1.clamp(x0 + 1.0, w);
    let y1 = y1.clamp(y0 + 1.0, h);
    BBox::new(x0, y0, x1, y1).expect("clamped box is well formed")
}

fn spurious_box(gt: &[BBox], w: f64, h: f64, rng: &mut ChaCha8Rng) -> BBox {
    let far = |b: &BBox| gt.iter().all(|g| crate::detect::iou(b, g) < 0.3);
    for _ in 0..32 {
        let bw = rng.random_range(0.1..0.4) * w;
        let bh = rng.random_range(0.1..0.3) * h;
        let x0 = rng.random_range(0.0..w - bw);
        let y0 = rng.random_range(0.0..h - bh);
        let b = BBox::new(x0, y0, x0 + bw, y0 + bh).expect("positive size");
        if far(&b) {
            return b;
        }
    }
    // a thin strip along the top edge never reaches IoU 0.3 with a runway
    BBox::new(0.0, 0.0, w, 2.0).expect("positive size")
}

/// Stub model output for one sample; a pure function of `(sample, cfg, seed)`.
pub fn stub_detect(
    sample: &Sample,
    width: usize,
    height: usize,
    cfg: &StubDetectorConfig,
    seed: u64,
) -> Vec<FeaturedDetection> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, hash_id(&sample.id)));
    let s = cfg.sensitivity(sample);
    let p = |base: f64| (base * s).min(1.0);
    let (w, h) = (width as f64, height as f64);
    let mut out = Vec::new();
    for gt in &sample.ground_truth {
        if rng.random_bool(p(cfg.p_fn)) {
            continue;
        }
        let det = if rng.random_bool(p(cfg.p_shift)) {
            let dx =
                cfg.shift_fraction * gt.width() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let mut b = BBox::new(gt.x_min() + dx, gt.y_min(), gt.x_max() + dx, gt.y_max())
                .expect("shifted box");
            if b.x_min() < 0.0 || b.x_max() > w {
                // shift the other way to stay inside the frame
                b = BBox::new(gt.x_min() - dx, gt.y_min(), gt.x_max() - dx, gt.y_max())
                    .expect("shifted box");
            }
            FeaturedDetection {
                detection: Detection {
                    bbox: b,
                    label: 0,
                    confidence: rng.random_range(0.55..=0.9),
                },
                features: cfg.error_features(&mut rng),
            }
        } else {
            let mut j = || rng.random_range(-1.0..=1.0) * cfg.jitter_px;
            let (a, b, c, d) = (j(), j(), j(), j());
            FeaturedDetection {
                detection: Detection {
                    bbox: clamp_box(
                        gt.x_min() + a,
                        gt.y_min() + b,
                        gt.x_max() + c,
                        gt.y_max() + d,
                        w,
                        h,
                    ),
                    label: 0,
                    confidence: rng.random_range(0.75..=1.0),
                },
                features: cfg.correct_features(&mut rng),
            }
        };
        out.push(det);
    }
    if rng.random_bool(p(cfg.p_fp)) {
        out.push(FeaturedDetection {
            detection: Detection {
                bbox: spurious_box(&sample.ground_truth, w, h, &mut rng),
                label: 0,
                confidence: rng.random_range(0.55..=0.85),
            },
            features: cfg.error_features(&mut rng),
        });
    }
    out
}

/// [`stub_detect`] behind the [`Detector`] interface.
#[derive(Debug, Clone, PartialEq)]
pub struct StubDetector {
    pub config: StubDetectorConfig,
    pub seed: u64,
}

impl StubDetector {
    pub fn new(config: StubDetectorConfig, seed: u64) -> Result<Self, SynthError> {
        config.validate()?;
        Ok(Self { config, seed })
    }
}

impl Detector for StubDetector {
    fn detect(
        &self,
        sample: &Sample,
        image: &Image,
    ) -> Result<Vec<FeaturedDetection>, DetectorError> {
        Ok(stub_detect(
            sample,
            image.width(),
            image.height(),
            &self.config,
            self.seed,
        ))
    }
}

/// Applies `corruption` to every loaded image and records it on the sample.
/// Metadata is left as is.
pub fn corrupt_samples(samples: &[Sample], corruption: Corruption, seed: u64) -> Vec<Sample> {
    samples
        .par_iter()
        .map(|s| {
            let mut out = s.clone();
            if let ImageSource::Loaded(img) = &s.image {
                let key = derive_seed(seed, hash_id(&s.id));
                out.image =
                    ImageSource::Loaded(crate::imaging::apply_corruption(img, corruption, key));
            }
            out.corruption = Some(corruption);
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{image_correct, iou, plain_detections};
    use crate::imaging::{compute_meta_properties, CorruptionKind};
    use crate::odd::check_odd;
    use crate::oms::{fit_oms, OmsParams};
    use crate::verdict::Decision;

    fn dims(s: &Sample) -> (usize, usize) {
        match &s.image {
            ImageSource::Loaded(i) => (i.width(), i.height()),
            ImageSource::File(_) => unreachable!(),
        }
    }

    #[test]
    fn inside_cone_passes_odd() {
        let spec = OddSpec::landing_cone();
        for s in generate_dataset(&SceneConfig::default(), 200, 1).unwrap() {
            assert_eq!(
                check_odd(&spec, &s.metadata).unwrap().decision,
                Decision::Accept
            );
        }
    }

    #[test]
    fn outside_cone_fails_on_that_parameter() {
        let spec = OddSpec::landing_cone();
        for p in OddParameter::ALL {
            let cfg = SceneConfig {
                metadata: MetadataMode::OutsideCone(p),
                ..Default::default()
            };
            for s in generate_dataset(&cfg, 50, 2).unwrap() {
                let v = check_odd(&spec, &s.metadata).unwrap();
                assert_eq!(v.reasons, vec![p.name().to_string()]);
            }
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let cfg = SceneConfig {
            threats: ThreatFractions::mixed(),
            ..Default::default()
        };
        let a = generate_dataset(&cfg, 40, 9).unwrap();
        assert_eq!(a, generate_dataset(&cfg, 40, 9).unwrap());
        assert_ne!(a, generate_dataset(&cfg, 40, 10).unwrap());
        // a prefix of a larger run is the smaller run
        assert_eq!(a[..10], generate_dataset(&cfg, 10, 9).unwrap()[..]);
    }

    #[test]
    fn config_validation() {
        let bad = |f: fn(&mut SceneConfig)| {
            let mut c = SceneConfig::default();
            f(&mut c);
            c.validate().unwrap_err()
        };
        assert_eq!(bad(|c| c.width = 16), SynthError::TooSmall(16, 64));
        assert!(matches!(
            bad(|c| c.threats.nominal = 0.5),
            SynthError::Fractions(_)
        ));
        assert!(matches!(
            bad(|c| c.runway_bottom = (0.3, 0.4)),
            SynthError::Infeasible(_)
        ));
        assert!(matches!(
            bad(|c| c.center_x = (0.7, 0.2)),
            SynthError::BadRange("center_x")
        ));
        let stub = StubDetectorConfig {
            p_fn: 1.5,
            ..Default::default()
        };
        assert_eq!(
            stub.validate().unwrap_err(),
            SynthError::Probability("p_fn", 1.5)
        );
    }

    #[test]
    fn runway_is_large_enough_and_inside() {
        for s in generate_dataset(&SceneConfig::default(), 100, 3).unwrap() {
            let (w, h) = dims(&s);
            let b = s.ground_truth[0];
            assert!(b.height() >= 8.0 && b.width() >= 16.0, "{b:?}");
            assert!(b.x_min() >= 0.0 && b.x_max() <= w as f64 && b.y_max() <= h as f64);
        }
    }

    #[test]
    fn ood_threats_move_meta_properties() {
        let base = generate_dataset(&SceneConfig::default(), 100, 4).unwrap();
        let cfg = SceneConfig {
            threats: ThreatFractions {
                nominal: 0.0,
                ood_threat: 1.0,
                ..ThreatFractions::nominal_only()
            },
            ..Default::default()
        };
        let threats = generate_dataset(&cfg, 100, 4).unwrap();
        let meta = |s: &Sample| match &s.image {
            ImageSource::Loaded(i) => compute_meta_properties(i).unwrap(),
            ImageSource::File(_) => unreachable!(),
        };
        let mean_sat =
            |v: &[Sample]| v.iter().map(|s| meta(s).saturation).sum::<f64>() / v.len() as f64;
        assert!(mean_sat(&threats) != mean_sat(&base));
    }

    #[test]
    fn error_free_stub_is_always_right() {
        let cfg = StubDetectorConfig::error_free();
        for s in generate_dataset(&SceneConfig::default(), 200, 5).unwrap() {
            let (w, h) = dims(&s);
            let d = stub_detect(&s, w, h, &cfg, 0);
            assert_eq!(d.len(), 1);
            assert!(iou(&d[0].detection.bbox, &s.ground_truth[0]) > 0.85);
            assert!(image_correct(
                &plain_detections(&d),
                &s.ground_truth,
                0.7,
                0.5
            ));
        }
    }

    #[test]
    fn always_missing_stub() {
        let cfg = StubDetectorConfig {
            p_fn: 1.0,
            p_fp: 0.0,
            ..Default::default()
        };
        for s in generate_dataset(&SceneConfig::default(), 50, 6).unwrap() {
            let d = stub_detect(&s, 64, 64, &cfg, 0);
            assert!(d.is_empty());
            assert!(!image_correct(&[], &s.ground_truth, 0.7, 0.5));
        }
    }

    #[test]
    fn shifted_hits_are_wrong() {
        let cfg = StubDetectorConfig {
            p_fn: 0.0,
            p_fp: 0.0,
            p_shift: 1.0,
            ..Default::default()
        };
        for s in generate_dataset(&SceneConfig::default(), 100, 7).unwrap() {
            let d = stub_detect(&s, 64, 64, &cfg, 0);
            assert!(!image_correct(
                &plain_detections(&d),
                &s.ground_truth,
                0.7,
                0.5
            ));
        }
    }

    #[test]
    fn error_rate_matches_closed_form() {
        let samples = generate_dataset(&SceneConfig::default(), 20_000, 8).unwrap();
        let cfg = StubDetectorConfig::default();
        let wrong = samples
            .par_iter()
            .filter(|s| {
                let d = stub_detect(s, 64, 64, &cfg, 11);
                !image_correct(&plain_detections(&d), &s.ground_truth, 0.7, 0.5)
            })
            .count();
        let rate = wrong as f64 / samples.len() as f64;
        assert!((rate - (1.0 - 0.9 * 0.88)).abs() < 0.01, "{rate}");
    }

    #[test]
    fn corruption_raises_error_rates() {
        let cfg = StubDetectorConfig::default();
        let clean = generate_dataset(&SceneConfig::default(), 1, 0)
            .unwrap()
            .remove(0);
        let c = Corruption::new(CorruptionKind::Fog, 3).unwrap();
        let dirty = corrupt_samples(std::slice::from_ref(&clean), c, 0).remove(0);
        assert_eq!(cfg.sensitivity(&clean), 1.0);
        assert_eq!(cfg.sensitivity(&dirty), 4.0);
        assert_eq!(dirty.metadata, clean.metadata);
        assert_eq!(dirty.corruption, Some(c));
        assert_ne!(dirty.image, clean.image);
    }

    #[test]
    fn feature_clusters_are_learnable() {
        let cfg = StubDetectorConfig::error_free();
        let samples = generate_dataset(&SceneConfig::default(), 600, 12).unwrap();
        let dets: Vec<Vec<FeaturedDetection>> = samples
            .iter()
            .map(|s| stub_detect(s, 64, 64, &cfg, 3))
            .collect();
        let abs = fit_oms(
            dets.iter()
                .map(|d| &d[..])
                .zip(samples.iter().map(|s| &s.ground_truth[..])),
            &OmsParams {
                k: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 5000;
        let accepted = (0..n)
            .filter(|_| abs.contains(&cfg.correct_features(&mut rng)).unwrap())
            .count();
        let rejected = (0..n)
            .filter(|_| !abs.contains(&cfg.error_features(&mut rng)).unwrap())
            .count();
        assert!(accepted as f64 / n as f64 >= 0.99, "{accepted}");
        assert!(rejected as f64 / n as f64 >= 0.5, "{rejected}");
    }
}
