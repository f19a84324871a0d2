use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Image, ImageError};

/// Encodes a binary PPM (P6, maxval 255).
pub fn write_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn read_ppm(bytes: &[u8]) -> Result<Image, ImageError> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::Ppm("truncated header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P6" {
        return Err(ImageError::Ppm(format!("unsupported magic {}", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| ImageError::Ppm(format!("bad header field `{s}`")))
    };
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(ImageError::Ppm(format!("unsupported maxval {maxval}")));
    }
    // single whitespace byte separates header from raster
    pos += 1;
    let data = bytes
        .get(pos..pos + w * h * 3)
        .ok_or_else(|| ImageError::Ppm("truncated raster".into()))?
        .to_vec();
    Image::from_raw(w, h, data)
}

fn is_ppm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"))
}

/// Loads a PPM or PNG image, chosen by file extension.
pub fn load_image(path: &Path) -> Result<Image, ImageError> {
    if is_ppm(path) {
        return read_ppm(&fs::read(path)?);
    }
    let rgb = image::open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    Image::from_raw(w as usize, h as usize, rgb.into_raw())
}

pub fn save_image(img: &Image, path: &Path) -> Result<(), ImageError> {
    if is_ppm(path) {
        let mut f = fs::File::create(path)?;
        f.write_all(&write_ppm(img))?;
        return Ok(());
    }
    let buf =
        image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
            .expect("buffer length checked at construction");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Image {
        Image::from_fn(5, 3, |x, y| [x as u8 * 40, y as u8 * 90, 7]).unwrap()
    }

    #[test]
    fn ppm_roundtrip_with_comment() {
        let img = sample();
        assert_eq!(read_ppm(&write_ppm(&img)).unwrap(), img);
        let mut commented = b"P6\n# made by hand\n5 3\n255\n".to_vec();
        commented.extend_from_slice(img.data());
        assert_eq!(read_ppm(&commented).unwrap(), img);
    }

    #[test]
    fn ppm_rejects_truncated() {
        let bytes = write_ppm(&sample());
        assert!(read_ppm(&bytes[..bytes.len() - 1]).is_err());
        assert!(read_ppm(b"P3\n1 1\n255\n").is_err());
    }

    #[test]
    fn png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        save_image(&sample(), &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), sample());
    }
}
