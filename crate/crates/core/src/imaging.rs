//! Grayscale rasters, portable-anymap I/O and the handful of geometric
//! raster operations the rest of the pipeline builds on.
//!
//! Geometry convention: `x` is the column, `y` is the row, origin at the
//! top-left pixel. Pixel `(i, j)` has its center at coordinates `(i, j)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 8-bit luminance raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Parameter(format!(
                "image data has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image filled with a single intensity.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    /// Pixel lookup with out-of-range coordinates resolved by `mode`.
    #[inline]
    pub fn get_edge(&self, x: i64, y: i64, mode: EdgeMode) -> u8 {
        let xi = match mode {
            EdgeMode::Clamp => x.clamp(0, self.width as i64 - 1),
            EdgeMode::WrapX => x.rem_euclid(self.width as i64),
        };
        let yi = y.clamp(0, self.height as i64 - 1);
        self.get(xi as usize, yi as usize)
    }

    /// Geometric center `(width / 2, height / 2)`.
    pub fn center(&self) -> Point2 {
        Point2::new(self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    /// Applies `f` to every intensity.
    pub fn map(&self, f: impl Fn(u8) -> u8) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Bilinear sample at sub-pixel coordinates.
    pub fn sample_bilinear(&self, x: f64, y: f64, mode: EdgeMode) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as i64, y0 as i64);
        let p00 = self.get_edge(xi, yi, mode) as f64;
        let p10 = self.get_edge(xi + 1, yi, mode) as f64;
        let p01 = self.get_edge(xi, yi + 1, mode) as f64;
        let p11 = self.get_edge(xi + 1, yi + 1, mode) as f64;
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        top + (bottom - top) * fy
    }
}

/// Out-of-bounds policy for pixel lookups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    /// Replicate the nearest edge pixel.
    #[default]
    Clamp,
    /// Wrap columns modulo the width (panoramas); rows still clamp.
    WrapX,
}

/// Sub-pixel image coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned window of integer size centered on a sub-pixel point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub center: Point2,
    pub width: usize,
    pub height: usize,
}

impl Window {
    pub fn new(center: Point2, width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "window dimensions must be >= 1");
        Self {
            center,
            width,
            height,
        }
    }

    /// The window covering the whole image.
    pub fn full(image: &GrayImage) -> Self {
        Self::new(image.center(), image.width(), image.height())
    }

    /// Top-left pixel of the window (`center - size / 2`, rounded half-up).
    pub fn origin(&self) -> (i64, i64) {
        let left = (self.center.x - self.width as f64 / 2.0 + 0.5).floor() as i64;
        let top = (self.center.y - self.height as f64 / 2.0 + 0.5).floor() as i64;
        (left, top)
    }
}

/// Crops `window` out of `image`. Pixels outside the image are filled
/// according to `mode`.
pub fn crop(image: &GrayImage, window: &Window, mode: EdgeMode) -> GrayImage {
    let (left, top) = window.origin();
    GrayImage::from_fn(window.width, window.height, |x, y| {
        image.get_edge(left + x as i64, top + y as i64, mode)
    })
}

/// Bilinear resize with pixel-center alignment and edge clamping.
pub fn resize_bilinear(image: &GrayImage, new_width: usize, new_height: usize) -> GrayImage {
    assert!(new_width >= 1 && new_height >= 1, "target size must be >= 1");
    if new_width == image.width && new_height == image.height {
        return image.clone();
    }
    let sx = image.width as f64 / new_width as f64;
    let sy = image.height as f64 / new_height as f64;
    GrayImage::from_fn(new_width, new_height, |x, y| {
        let src_x = (x as f64 + 0.5) * sx - 0.5;
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        round_u8(image.sample_bilinear(src_x, src_y, EdgeMode::Clamp))
    })
}

/// Rounds half-up and saturates to the 8-bit range.
#[inline]
pub fn round_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// ITU-R BT.601 luminance, rounded half-up, in exact integer arithmetic.
#[inline]
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Loads an image as luminance. Portable anymaps (P2/P3/P5/P6) are parsed
/// directly; other formats go through the `image` crate.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.first() == Some(&b'P') {
        return parse_pnm(&bytes).map_err(|msg| Error::format(path, msg));
    }
    let decoded = image::load_from_memory(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb
        .pixels()
        .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
        .collect();
    GrayImage::new(w as usize, h as usize, data).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads only the dimensions of an image file.
pub fn image_dimensions(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.first() == Some(&b'P') {
        let mut reader = PnmReader::new(&bytes);
        let header = reader.header().map_err(|msg| Error::format(path, msg))?;
        return Ok((header.width, header.height));
    }
    let (w, h) = image::ImageReader::new(std::io::Cursor::new(&bytes))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .into_dimensions()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((w as usize, h as usize))
}

/// Writes a binary (P5) graymap.
pub fn save_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    write_file(path, &out)
}

/// Writes an ASCII (P2) graymap.
pub fn save_pgm_ascii(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P2\n{} {}\n255\n", image.width, image.height);
    for row in image.data.chunks(image.width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Writes a binary (P6) pixmap from interleaved RGB bytes.
pub fn save_ppm(width: usize, height: usize, rgb: &[u8], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if rgb.len() != width * height * 3 {
        return Err(Error::Parameter(format!(
            "rgb buffer has {} bytes, expected {}",
            rgb.len(),
            width * height * 3
        )));
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    write_file(path, &out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(bytes).map_err(|e| Error::io(path, e))
}

struct PnmHeader {
    magic: u8,
    width: usize,
    height: usize,
    maxval: u32,
}

struct PnmReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PnmReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8], String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err("unexpected end of data".into());
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Result<u32, String> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| format!("expected a number, found {:?}", String::from_utf8_lossy(tok)))
    }

    fn header(&mut self) -> Result<PnmHeader, String> {
        let magic = self.token()?;
        let magic = match magic {
            b"P2" => 2,
            b"P3" => 3,
            b"P5" => 5,
            b"P6" => 6,
            other => return Err(format!("unsupported magic {:?}", String::from_utf8_lossy(other))),
        };
        let width = self.number()? as usize;
        let height = self.number()? as usize;
        let maxval = self.number()?;
        if width == 0 || height == 0 {
            return Err(format!("invalid dimensions {width}x{height}"));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(format!("invalid maxval {maxval}"));
        }
        Ok(PnmHeader {
            magic,
            width,
            height,
            maxval,
        })
    }
}

fn parse_pnm(bytes: &[u8]) -> Result<GrayImage, String> {
    let mut reader = PnmReader::new(bytes);
    let header = reader.header()?;
    let channels = if header.magic == 3 || header.magic == 6 { 3 } else { 1 };
    let count = header.width * header.height * channels;
    let mut samples = Vec::with_capacity(count);
    match header.magic {
        2 | 3 => {
            for _ in 0..count {
                let v = reader.number()?;
                if v > header.maxval {
                    return Err(format!("sample {v} exceeds maxval {}", header.maxval));
                }
                samples.push(v);
            }
        }
        _ => {
            // exactly one whitespace byte separates the header from the raster
            let start = reader.pos + 1;
            let wide = header.maxval > 255;
            let needed = count * if wide { 2 } else { 1 };
            if bytes.len() < start + needed {
                return Err(format!(
                    "raster truncated: need {needed} bytes, have {}",
                    bytes.len().saturating_sub(start)
                ));
            }
            let raster = &bytes[start..start + needed];
            if wide {
                samples.extend(raster.chunks(2).map(|c| u32::from(c[0]) << 8 | u32::from(c[1])));
            } else {
                samples.extend(raster.iter().map(|&b| u32::from(b)));
            }
            if let Some(v) = samples.iter().find(|&&v| v > header.maxval) {
                return Err(format!("sample {v} exceeds maxval {}", header.maxval));
            }
        }
    }
    let scale = |v: u32| -> u8 {
        if header.maxval == 255 {
            v as u8
        } else {
            ((v * 255 * 2 + header.maxval) / (2 * header.maxval)) as u8
        }
    };
    let data = if channels == 1 {
        samples.into_iter().map(scale).collect()
    } else {
        samples
            .chunks(3)
            .map(|c| luminance(scale(c[0]), scale(c[1]), scale(c[2])))
            .collect()
    };
    GrayImage::new(header.width, header.height, data).map_err(|e| e.to_string())
}
