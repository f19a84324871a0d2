use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Image, ImageError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    Brightness,
    DefocusBlur,
    FrostedBlur,
    Fog,
    GaussianNoise,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 5] = [
        CorruptionKind::Brightness,
        CorruptionKind::DefocusBlur,
        CorruptionKind::FrostedBlur,
        CorruptionKind::Fog,
        CorruptionKind::GaussianNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::Brightness => "brightness",
            CorruptionKind::DefocusBlur => "defocus_blur",
            CorruptionKind::FrostedBlur => "frosted_blur",
            CorruptionKind::Fog => "fog",
            CorruptionKind::GaussianNoise => "gaussian_noise",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CorruptionKind::Brightness => "Brightness",
            CorruptionKind::DefocusBlur => "Defocus Blur",
            CorruptionKind::FrostedBlur => "Frosted Blur",
            CorruptionKind::Fog => "Fog",
            CorruptionKind::GaussianNoise => "Gaussian Noise",
        }
    }
}

impl std::fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CorruptionKind {
    type Err = ImageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace(['-', ' '], "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| ImageError::UnknownKind(s.to_string()))
    }
}

/// Severity level 1 (small), 2 (medium) or 3 (large).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Severity(u8);

impl Severity {
    pub const ALL: [Severity; 3] = [Severity(1), Severity(2), Severity(3)];

    pub fn new(level: u8) -> Result<Self, ImageError> {
        match level {
            1..=3 => Ok(Self(level)),
            _ => Err(ImageError::Severity(level)),
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    fn pick<T: Copy>(self, table: [T; 3]) -> T {
        table[usize::from(self.0 - 1)]
    }
}

impl TryFrom<u8> for Severity {
    type Error = ImageError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Severity::new(v)
    }
}

impl From<Severity> for u8 {
    fn from(s: Severity) -> u8 {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Corruption {
    pub kind: CorruptionKind,
    pub severity: Severity,
}

impl Corruption {
    pub fn new(kind: CorruptionKind, severity: u8) -> Result<Self, ImageError> {
        Ok(Self {
            kind,
            severity: Severity::new(severity)?,
        })
    }
}

impl std::fmt::Display for Corruption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}", self.kind, self.severity.0)
    }
}

pub const BRIGHTNESS_DELTA: [f64; 3] = [0.1, 0.3, 0.5];
pub const DEFOCUS_RADIUS: [usize; 3] = [3, 5, 9];
pub const FROST_ITERATIONS: [usize; 3] = [1, 2, 3];
pub const FROST_RADIUS: [usize; 3] = [2, 3, 4];
pub const FROST_BLUR_RADIUS: usize = 2;
pub const FOG_WEIGHT: [f64; 3] = [0.15, 0.30, 0.50];
pub const NOISE_SIGMA: [f64; 3] = [0.04, 0.08, 0.18];

/// Applies one corruption. The output depends only on `(img, c, seed)`.
pub fn apply_corruption(img: &Image, c: Corruption, seed: u64) -> Image {
    let s = c.severity;
    match c.kind {
        CorruptionKind::Brightness => adjust_brightness(img, s.pick(BRIGHTNESS_DELTA)),
        CorruptionKind::DefocusBlur => disk_blur(img, s.pick(DEFOCUS_RADIUS)),
        CorruptionKind::FrostedBlur => {
            frost(img, s.pick(FROST_ITERATIONS), s.pick(FROST_RADIUS), seed)
        }
        CorruptionKind::Fog => fog(img, s.pick(FOG_WEIGHT), seed),
        CorruptionKind::GaussianNoise => gaussian_noise(img, s.pick(NOISE_SIGMA), seed),
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Adds `delta` to the HSV value channel, clamping to `[0, 1]`.
///
/// Hue and saturation are unchanged, so each pixel is scaled by `v'/v`;
/// black pixels (undefined hue) become gray at `v'`.
pub fn adjust_brightness(img: &Image, delta: f64) -> Image {
    let mut out = img.clone();
    for p in out.data.chunks_exact_mut(3) {
        let max = p[0].max(p[1]).max(p[2]);
        let v = f64::from(max) / 255.0;
        let v_new = (v + delta).clamp(0.0, 1.0);
        if max == 0 {
            let g = to_u8(v_new * 255.0);
            p.fill(g);
        } else {
            let scale = v_new / v;
            for c in p.iter_mut() {
                *c = to_u8(f64::from(*c) * scale);
            }
        }
    }
    out
}

fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut offsets = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                offsets.push((dx, dy));
            }
        }
    }
    offsets
}

/// Convolution with a normalized disk kernel; borders replicate the edge pixel.
pub fn disk_blur(img: &Image, radius: usize) -> Image {
    if radius == 0 {
        return img.clone();
    }
    let offsets = disk_offsets(radius);
    let norm = 1.0 / offsets.len() as f64;
    let (w, h) = (img.width as isize, img.height as isize);
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for &(dx, dy) in &offsets {
                let sx = (x + dx).clamp(0, w - 1) as usize;
                let sy = (y + dy).clamp(0, h - 1) as usize;
                let p = img.pixel(sx, sy);
                for c in 0..3 {
                    acc[c] += f64::from(p[c]);
                }
            }
            out.set_pixel(
                x as usize,
                y as usize,
                [
                    to_u8(acc[0] * norm),
                    to_u8(acc[1] * norm),
                    to_u8(acc[2] * norm),
                ],
            );
        }
    }
    out
}

/// Local random pixel swaps followed by a small disk blur.
pub fn frost(img: &Image, iterations: usize, radius: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    let (w, h) = (img.width as i64, img.height as i64);
    let r = radius as i64;
    for _ in 0..iterations {
        for y in 0..h {
            for x in 0..w {
                let tx = (x + rng.random_range(-r..=r)).clamp(0, w - 1);
                let ty = (y + rng.random_range(-r..=r)).clamp(0, h - 1);
                let a = out.pixel(x as usize, y as usize);
                let b = out.pixel(tx as usize, ty as usize);
                out.set_pixel(x as usize, y as usize, b);
                out.set_pixel(tx as usize, ty as usize, a);
            }
        }
    }
    disk_blur(&out, FROST_BLUR_RADIUS)
}

/// Diamond-square plasma normalized to `[0, 1]`, cropped to `width x height`.
pub fn plasma(width: usize, height: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = width.max(height).max(2).next_power_of_two();
    let n = size + 1;
    let mut grid = vec![0.0f64; n * n];
    let idx = |x: usize, y: usize| y * n + x;
    let mut scale = 1.0;
    let mut step = size;
    while step > 1 {
        let half = step / 2;
        // diamond step: square centers
        for y in (half..size).step_by(step) {
            for x in (half..size).step_by(step) {
                let avg = (grid[idx(x - half, y - half)]
                    + grid[idx(x + half, y - half)]
                    + grid[idx(x - half, y + half)]
                    + grid[idx(x + half, y + half)])
                    / 4.0;
                grid[idx(x, y)] = avg + scale * rng.random_range(-1.0..1.0);
            }
        }
        // square step: edge midpoints
        for y in (0..n).step_by(half) {
            let x0 = if (y / half).is_multiple_of(2) {
                half
            } else {
                0
            };
            for x in (x0..n).step_by(step) {
                let mut sum = 0.0;
                let mut count = 0.0;
                if x >= half {
                    sum += grid[idx(x - half, y)];
                    count += 1.0;
                }
                if x + half < n {
                    sum += grid[idx(x + half, y)];
                    count += 1.0;
                }
                if y >= half {
                    sum += grid[idx(x, y - half)];
                    count += 1.0;
                }
                if y + half < n {
                    sum += grid[idx(x, y + half)];
                    count += 1.0;
                }
                grid[idx(x, y)] = sum / count + scale * rng.random_range(-1.0..1.0);
            }
        }
        scale *= 0.5;
        step = half;
    }

    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            out.push(grid[idx(x, y)]);
        }
    }
    let (lo, hi) = out
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    for v in &mut out {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.5 };
    }
    out
}

/// Alpha-blends a gray plasma layer over the image.
pub fn fog(img: &Image, weight: f64, seed: u64) -> Image {
    let layer = plasma(img.width, img.height, seed);
    let mut out = img.clone();
    for (p, &f) in out.data.chunks_exact_mut(3).zip(&layer) {
        for c in p.iter_mut() {
            *c = to_u8((1.0 - weight) * f64::from(*c) + weight * f * 255.0);
        }
    }
    out
}

/// Adds i.i.d. Gaussian noise with standard deviation `sigma` on the `[0, 1]` scale.
pub fn gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    let mut out = img.clone();
    for c in out.data.iter_mut() {
        let v = f64::from(*c) / 255.0 + normal.sample(&mut rng);
        *c = to_u8(v.clamp(0.0, 1.0) * 255.0);
    }
    out
}
