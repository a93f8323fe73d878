//! Image and raster file I/O. Binary PGM/PPM are parsed directly; PNG goes
//! through the image crate. Loaded pixels are normalized to (v - 128) / 255
//! so both stereo images live in [-0.5, 0.5].

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;
use std::fs;
use std::io::Write;
use std::path::Path;

/// 8-bit value -> normalized intensity.
pub fn normalize_byte<F: Scalar>(v: u8) -> F {
    c::<F>((v as f64 - 128.0) / 255.0)
}

/// Normalized intensity -> 8-bit value (round, clamp).
pub fn quantize_to_byte<F: Scalar>(v: F) -> u8 {
    let raw = v.to_f64_lossy() * 255.0 + 128.0;
    raw.round().clamp(0.0, 255.0) as u8
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::io(path.display().to_string(), e)
}

/// Loads an 8-bit PGM (P5), PPM (P6) or PNG image as a normalized
/// `[C,H,W]` tensor (C = 1 for grayscale, 3 for color).
pub fn load_image<F: Scalar>(path: &Path) -> Result<Tensor<F>> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "pgm" | "ppm" => {
            let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
            let (channels, w, h, data) = parse_pnm(&bytes)
                .map_err(|msg| Error::Format(format!("{}: {msg}", path.display())))?;
            bytes_to_tensor(channels, h, w, &data)
        }
        "png" => {
            let img = image::open(path)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            match img {
                image::DynamicImage::ImageLuma8(g) => {
                    let (w, h) = (g.width() as usize, g.height() as usize);
                    bytes_to_tensor(1, h, w, g.as_raw())
                }
                image::DynamicImage::ImageRgb8(rgb) => {
                    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
                    bytes_to_tensor(3, h, w, rgb.as_raw())
                }
                other => {
                    // normalize any other color type through RGB8
                    let rgb = other.to_rgb8();
                    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
                    bytes_to_tensor(3, h, w, rgb.as_raw())
                }
            }
        }
        _ => Err(Error::Format(format!(
            "{}: unsupported image extension (need pgm/ppm/png)",
            path.display()
        ))),
    }
}

/// Interleaved 8-bit data -> planar normalized tensor.
fn bytes_to_tensor<F: Scalar>(channels: usize, h: usize, w: usize, data: &[u8]) -> Result<Tensor<F>> {
    if data.len() != channels * h * w {
        return Err(Error::Format(format!(
            "pixel buffer holds {} bytes, expected {}",
            data.len(),
            channels * h * w
        )));
    }
    let mut out = vec![F::zero(); channels * h * w];
    for s in 0..h * w {
        for ch in 0..channels {
            out[ch * h * w + s] = normalize_byte(data[s * channels + ch]);
        }
    }
    Tensor::from_vec(&[channels, h, w], out)
}

fn parse_pnm(bytes: &[u8]) -> std::result::Result<(usize, usize, usize, Vec<u8>), String> {
    let magic = bytes.get(..2).ok_or("truncated header")?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err("not a binary PGM/PPM (P5/P6)".into()),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comment lines
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("malformed header field")?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(format!("only 8-bit images supported, maxval is {maxval}"));
    }
    pos += 1; // single whitespace after maxval
    let need = channels * w * h;
    let data = bytes
        .get(pos..pos + need)
        .ok_or("truncated pixel data")?
        .to_vec();
    Ok((channels, w, h, data))
}

/// Writes a normalized `[C,H,W]` tensor as binary PGM (C = 1) or PPM (C = 3).
pub fn save_image<F: Scalar>(path: &Path, img: &Tensor<F>) -> Result<()> {
    let (channels, h, w) = img.spatial_dims()?;
    let magic = match channels {
        1 => "P5",
        3 => "P6",
        other => {
            return Err(Error::Config(format!(
                "can only save 1- or 3-channel images, got {other}"
            )))
        }
    };
    let mut out = Vec::with_capacity(channels * h * w + 32);
    write!(out, "{magic}\n{w} {h}\n255\n").expect("vec write");
    for s in 0..h * w {
        for ch in 0..channels {
            out.push(quantize_to_byte(img.data()[ch * h * w + s]));
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Raw little-endian f32 raster, row-major.
pub fn write_f32_raster<F: Scalar>(path: &Path, t: &Tensor<F>) -> Result<()> {
    let mut out = Vec::with_capacity(t.numel() * 4);
    for &v in t.data() {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_f32_raster<F: Scalar>(path: &Path, h: usize, w: usize) -> Result<Tensor<F>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() != h * w * 4 {
        return Err(Error::Format(format!(
            "{}: holds {} bytes, expected {} for {h}x{w} f32",
            path.display(),
            bytes.len(),
            h * w * 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| c::<F>(f32::from_le_bytes(b.try_into().unwrap()) as f64))
        .collect();
    Tensor::from_vec(&[h, w], data)
}

/// Raw u8 raster (validity/occlusion masks), row-major.
pub fn write_u8_raster<F: Scalar>(path: &Path, t: &Tensor<F>) -> Result<()> {
    let out: Vec<u8> = t
        .data()
        .iter()
        .map(|&v| if v != F::zero() { 1 } else { 0 })
        .collect();
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_u8_raster<F: Scalar>(path: &Path, h: usize, w: usize) -> Result<Tensor<F>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() != h * w {
        return Err(Error::Format(format!(
            "{}: holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            h * w
        )));
    }
    let data = bytes
        .iter()
        .map(|&b| if b != 0 { F::one() } else { F::zero() })
        .collect();
    Tensor::from_vec(&[h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn normalization_maps_reference_values() {
        assert_eq!(normalize_byte::<f64>(128), 0.0);
        assert!((normalize_byte::<f64>(255) - 127.0 / 255.0).abs() < 1e-15);
        assert!((normalize_byte::<f64>(0) + 128.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn pgm_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let img = Tensor::<f64>::from_vec(
            &[1, 2, 3],
            (0..6).map(|v| normalize_byte::<f64>(40 * v as u8)).collect(),
        )
        .unwrap();
        save_image(&path, &img).unwrap();
        let back: Tensor<f64> = load_image(&path).unwrap();
        assert_eq!(back.shape(), img.shape());
        assert_eq!(back.data(), img.data());
    }

    #[test]
    fn ppm_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        let img = Tensor::<f32>::from_vec(
            &[3, 2, 2],
            (0..12).map(|v| normalize_byte::<f32>((v * 20) as u8)).collect(),
        )
        .unwrap();
        save_image(&path, &img).unwrap();
        let back: Tensor<f32> = load_image(&path).unwrap();
        assert_eq!(back.data(), img.data());
    }

    #[test]
    fn raster_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.f32");
        let t = Tensor::<f32>::from_vec(&[2, 2], vec![0.0, 1.5, -2.25, 4.0]).unwrap();
        write_f32_raster(&path, &t).unwrap();
        let back: Tensor<f32> = read_f32_raster(&path, 2, 2).unwrap();
        assert_eq!(back.data(), t.data());
    }

    #[test]
    fn unreadable_file_is_io_error_with_path() {
        let r: Result<Tensor<f64>> = load_image(Path::new("/nonexistent/x.pgm"));
        let msg = r.unwrap_err().to_string();
        assert!(msg.contains("x.pgm"), "{msg}");
    }
}
