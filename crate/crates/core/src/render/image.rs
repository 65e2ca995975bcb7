//! RGB float images, PNG/PFM I/O and PSNR.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vec3;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// `height x width x 3` image, row-major from the top row.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, c: Vec3) -> Self {
        Self::from_pixels(width, height, &vec![c; width * height])
    }

    pub fn from_pixels(width: usize, height: usize, pixels: &[Vec3]) -> Self {
        assert_eq!(pixels.len(), width * height);
        let data = pixels
            .iter()
            .flat_map(|p| [p.x as f32, p.y as f32, p.z as f32])
            .collect();
        Self { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> Vec3 {
        let i = 3 * (y * self.width + x);
        Vec3::new(self.data[i] as f64, self.data[i + 1] as f64, self.data[i + 2] as f64)
    }

    pub fn set(&mut self, x: usize, y: usize, c: Vec3) {
        let i = 3 * (y * self.width + x);
        self.data[i] = c.x as f32;
        self.data[i + 1] = c.y as f32;
        self.data[i + 2] = c.z as f32;
    }

    pub fn pixels(&self) -> Vec<Vec3> {
        self.data
            .chunks_exact(3)
            .map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64))
            .collect()
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(w, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer
            .write_image_data(&self.to_rgb8())
            .map_err(|e| Error::Png(e.to_string()))?;
        writer.finish().map_err(|e| Error::Png(e.to_string()))?;
        Ok(())
    }

    /// Reads an 8-bit RGB or RGBA PNG (alpha is dropped).
    pub fn read_png(path: &Path) -> Result<Self> {
        let dec = png::Decoder::new(BufReader::new(File::open(path)?));
        let mut reader = dec.read_info().map_err(|e| Error::Png(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Png("image too large".into()))?];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(e.to_string()))?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Png(format!("unsupported bit depth {:?}", info.bit_depth)));
        }
        let channels = match info.color_type {
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            other => return Err(Error::Png(format!("unsupported colour type {other:?}"))),
        };
        let (w, h) = (info.width as usize, info.height as usize);
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            let row = &buf[y * info.line_size..y * info.line_size + w * channels];
            for px in row.chunks_exact(channels) {
                data.extend(px[..3].iter().map(|&b| b as f32 / 255.0));
            }
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }

    /// Little-endian colour PFM (rows stored bottom to top).
    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "PF\n{} {}\n-1.0\n", self.width, self.height)?;
        for y in (0..self.height).rev() {
            let row = &self.data[y * self.width * 3..(y + 1) * self.width * 3];
            for v in row {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_pfm(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut header = Vec::new();
        for _ in 0..3 {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Format("truncated PFM header".into()));
            }
            header.push(line.trim().to_string());
        }
        if header[0] != "PF" {
            return Err(Error::Format(format!("unsupported PFM type `{}`", header[0])));
        }
        let dims: Vec<usize> = header[1]
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Format("bad PFM dimensions".into())))
            .collect::<Result<_>>()?;
        if dims.len() != 2 {
            return Err(Error::Format("bad PFM dimensions".into()));
        }
        let scale: f64 = header[2].parse().map_err(|_| Error::Format("bad PFM scale".into()))?;
        let little = scale < 0.0;
        let (width, height) = (dims[0], dims[1]);
        let mut raw = vec![0u8; width * height * 12];
        r.read_exact(&mut raw)?;
        let vals: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| {
                let b: [u8; 4] = c.try_into().expect("4 bytes");
                if little {
                    f32::from_le_bytes(b)
                } else {
                    f32::from_be_bytes(b)
                }
            })
            .collect();
        let mut data = Vec::with_capacity(vals.len());
        for y in (0..height).rev() {
            data.extend_from_slice(&vals[y * width * 3..(y + 1) * width * 3]);
        }
        Ok(Self { width, height, data })
    }

    /// Loads a PNG or PFM depending on the file extension.
    pub fn read(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("pfm") => Self::read_pfm(path),
            _ => Self::read_png(path),
        }
    }
}

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch {
            a: (a.width, a.height),
            b: (b.width, b.height),
        });
    }
    let n = a.data.len().max(1) as f64;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / n)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// `10 log10(1 / MSE)` over all channels, capped at [`PSNR_CAP`].
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    mse(a, b).map(psnr_from_mse)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let grey = ImageBuffer::filled(4, 3, Vec3::splat(0.5));
        assert_eq!(psnr(&grey, &grey).unwrap(), PSNR_CAP);
        let black = ImageBuffer::filled(4, 3, Vec3::ZERO);
        let white = ImageBuffer::filled(4, 3, Vec3::ONE);
        assert_eq!(psnr(&black, &white).unwrap(), 0.0);
        let a = ImageBuffer::filled(4, 3, Vec3::splat(0.5));
        let b = ImageBuffer::filled(4, 3, Vec3::splat(0.6));
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        assert!(matches!(
            psnr(&a, &ImageBuffer::new(3, 4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn png_and_pfm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = ImageBuffer::new(5, 3);
        for y in 0..3 {
            for x in 0..5 {
                img.set(x, y, Vec3::new(x as f64 / 4.0, y as f64 / 2.0, 0.25));
            }
        }
        let p = dir.path().join("a.pfm");
        img.write_pfm(&p).unwrap();
        assert_eq!(ImageBuffer::read_pfm(&p).unwrap(), img);

        let p = dir.path().join("a.png");
        img.write_png(&p).unwrap();
        let back = ImageBuffer::read_png(&p).unwrap();
        assert_eq!(back.to_rgb8(), img.to_rgb8());
    }
}
