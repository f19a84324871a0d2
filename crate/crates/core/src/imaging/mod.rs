//! RGB images, the four appearance meta-properties used by the OOD monitor,
//! and the corruption generator.

mod corruption;
mod io;

pub use corruption::{
    adjust_brightness, apply_corruption, disk_blur, fog, frost, gaussian_noise, Corruption,
    CorruptionKind, Severity,
};
pub use io::{load_image, read_ppm, save_image, write_ppm};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("degenerate image: {width}x{height}")]
    Degenerate { width: usize, height: usize },
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("invalid severity {0} (expected 1, 2 or 3)")]
    Severity(u8),
    #[error("unknown corruption kind `{0}`")]
    UnknownKind(String),
    #[error("malformed PPM: {0}")]
    Ppm(String),
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 8-bit RGB image, row-major, three interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Degenerate { width, height });
        }
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(ImageError::BufferSize {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image filled with a single color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ImageError> {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self::from_raw(width, height, data)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::from_raw(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Rec. 601 luma on the 0..=255 scale.
    pub fn luminance(&self) -> Vec<f64> {
        self.pixels().map(luma).collect()
    }
}

pub(crate) fn luma(p: [u8; 3]) -> f64 {
    0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
}

/// Names of the meta-properties in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaProperty {
    Brightness,
    Saturation,
    Entropy,
    EdgeAmount,
}

impl MetaProperty {
    pub const ALL: [MetaProperty; 4] = [
        MetaProperty::Brightness,
        MetaProperty::Saturation,
        MetaProperty::Entropy,
        MetaProperty::EdgeAmount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetaProperty::Brightness => "brightness",
            MetaProperty::Saturation => "saturation",
            MetaProperty::Entropy => "entropy",
            MetaProperty::EdgeAmount => "edge_amount",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Range the property can take on any image.
    pub fn range(self) -> (f64, f64) {
        match self {
            MetaProperty::Entropy => (0.0, 8.0),
            _ => (0.0, 1.0),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for MetaProperty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaProperties {
    pub brightness: f64,
    pub saturation: f64,
    /// Bits, in `[0, 8]`.
    pub entropy: f64,
    pub edge_amount: f64,
}

impl MetaProperties {
    pub fn get(&self, p: MetaProperty) -> f64 {
        match p {
            MetaProperty::Brightness => self.brightness,
            MetaProperty::Saturation => self.saturation,
            MetaProperty::Entropy => self.entropy,
            MetaProperty::EdgeAmount => self.edge_amount,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [
            self.brightness,
            self.saturation,
            self.entropy,
            self.edge_amount,
        ]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            brightness: v[0],
            saturation: v[1],
            entropy: v[2],
            edge_amount: v[3],
        }
    }
}

/// Maximum Sobel gradient magnitude for grayscale values in `[0, 1]`.
pub const SOBEL_MAX_MAGNITUDE: f64 = 4.0 * std::f64::consts::SQRT_2;

/// Fraction of the maximum Sobel magnitude above which a pixel counts as an edge.
pub const EDGE_THRESHOLD_FRACTION: f64 = 0.1;

/// Computes brightness (mean HSV value), saturation (mean HSV saturation),
/// luminance-histogram entropy and the Sobel edge fraction.
pub fn compute_meta_properties(img: &Image) -> Result<MetaProperties, ImageError> {
    if img.width == 0 || img.height == 0 {
        return Err(ImageError::Degenerate {
            width: img.width,
            height: img.height,
        });
    }
    let n = (img.width * img.height) as f64;

    let mut value_sum = 0.0;
    let mut sat_sum = 0.0;
    let mut hist = [0u64; 256];
    for p in img.pixels() {
        let max = p[0].max(p[1]).max(p[2]);
        let min = p[0].min(p[1]).min(p[2]);
        value_sum += f64::from(max) / 255.0;
        if max > 0 {
            sat_sum += f64::from(max - min) / f64::from(max);
        }
        let bin = luma(p).round().clamp(0.0, 255.0) as usize;
        hist[bin] += 1;
    }

    let entropy = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0);

    Ok(MetaProperties {
        brightness: value_sum / n,
        saturation: sat_sum / n,
        entropy,
        edge_amount: edge_amount(img),
    })
}

fn edge_amount(img: &Image) -> f64 {
    let (w, h) = (img.width, img.height);
    if w < 3 || h < 3 {
        return 0.0;
    }
    let gray: Vec<f64> = img.pixels().map(|p| luma(p) / 255.0).collect();
    let at = |x: usize, y: usize| gray[y * w + x];
    let threshold = EDGE_THRESHOLD_FRACTION * SOBEL_MAX_MAGNITUDE;
    let mut edges = 0usize;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            if gx.hypot(gy) > threshold {
                edges += 1;
            }
        }
    }
    edges as f64 / ((w - 2) * (h - 2)) as f64
}
