//! RGB raster with `f64` samples in `[0, 1]`, stored row-major HWC.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

/// Rec.601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

const U16_MAX: f64 = 65535.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::invalid(format!(
                "image buffer has {} samples, expected {}x{}x3",
                data.len(),
                height,
                width
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width * 3],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(3)
    }

    /// Luma plane, row-major.
    pub fn luma(&self) -> Vec<f64> {
        self.pixels().map(luma_of).collect()
    }

    pub fn mean_luma(&self) -> f64 {
        let n = (self.height * self.width) as f64;
        self.pixels().map(luma_of).sum::<f64>() / n
    }

    pub fn channel_means(&self) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for p in self.pixels() {
            for c in 0..3 {
                acc[c] += p[c];
            }
        }
        let n = (self.height * self.width) as f64;
        acc.map(|v| v / n)
    }

    pub fn channel_stds(&self) -> [f64; 3] {
        let means = self.channel_means();
        let mut acc = [0.0; 3];
        for p in self.pixels() {
            for c in 0..3 {
                acc[c] += (p[c] - means[c]).powi(2);
            }
        }
        let n = (self.height * self.width) as f64;
        acc.map(|v| (v / n).sqrt())
    }

    pub fn is_within_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn crop(&self, top: usize, left: usize, size: usize) -> Result<Image> {
        if top + size > self.height || left + size > self.width {
            return Err(Error::invalid(format!(
                "crop {size}x{size} at ({top},{left}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(size * size * 3);
        for y in top..top + size {
            let start = (y * self.width + left) * 3;
            data.extend_from_slice(&self.data[start..start + size * 3]);
        }
        Ok(Image {
            height: size,
            width: size,
            data,
        })
    }

    pub fn center_crop(&self, size: usize) -> Result<Image> {
        if size > self.height || size > self.width {
            return Err(Error::invalid(format!(
                "center crop {size} larger than {}x{}",
                self.height, self.width
            )));
        }
        self.crop((self.height - size) / 2, (self.width - size) / 2, size)
    }

    pub fn hflip(&self) -> Image {
        Image::from_fn(self.height, self.width, |y, x| self.pixel(y, self.width - 1 - x))
    }

    /// Rotates by `quarter_turns` x 90 degrees counter-clockwise.
    pub fn rot90(&self, quarter_turns: u8) -> Image {
        let (h, w) = (self.height, self.width);
        match quarter_turns % 4 {
            0 => self.clone(),
            1 => Image::from_fn(w, h, |y, x| self.pixel(x, w - 1 - y)),
            2 => Image::from_fn(h, w, |y, x| self.pixel(h - 1 - y, w - 1 - x)),
            _ => Image::from_fn(w, h, |y, x| self.pixel(h - 1 - x, y)),
        }
    }

    /// Channel-major copy (`3 x H x W`), the layout the encoders consume.
    pub fn to_chw(&self) -> Vec<f64> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; plane * 3];
        for (i, p) in self.pixels().enumerate() {
            out[i] = p[0];
            out[plane + i] = p[1];
            out[2 * plane + i] = p[2];
        }
        out
    }

    /// Rounds every sample to the 16-bit grid used on disk.
    pub fn quantized(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| quantize(v) as f64 / U16_MAX).collect(),
        }
    }

    /// Writes a 16-bit RGB PNG. Loading it back yields `self.quantized()`.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Sixteen);
        let codec = |e: png::EncodingError| Error::Codec {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut writer = encoder.write_header().map_err(codec)?;
        let bytes: Vec<u8> = self
            .data
            .iter()
            .flat_map(|&v| quantize(v).to_be_bytes())
            .collect();
        writer.write_image_data(&bytes).map_err(codec)?;
        writer.finish().map_err(codec)
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let codec = |message: String| Error::Codec {
            path: path.to_path_buf(),
            message,
        };
        let decoder = png::Decoder::new(BufReader::new(file));
        let mut reader = decoder.read_info().map_err(|e| codec(e.to_string()))?;
        let mut buf = vec![0u8; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).map_err(|e| codec(e.to_string()))?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Sixteen {
            return Err(codec(format!(
                "expected 16-bit RGB, found {:?} at {:?}",
                info.color_type, info.bit_depth
            )));
        }
        let data = buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / U16_MAX)
            .collect();
        Image::new(info.height as usize, info.width as usize, data)
    }
}

#[inline]
pub fn luma_of(p: &[f64]) -> f64 {
    LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2]
}

fn quantize(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * U16_MAX).round() as u16
}
