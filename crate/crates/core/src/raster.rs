//! RGBA8 rasters: straight-alpha pixels, the "over" compositing rule,
//! pixel digests and PNG interchange.

use std::cell::Cell;
use std::io::{self, Read};
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{Digest64, Fnv1a};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("pixel buffer holds {actual} pixels, expected {width}x{height}")]
    BufferLength {
        width: u32,
        height: u32,
        actual: usize,
    },
    #[error("png parse error at byte offset {offset}: {message}")]
    Decode { offset: u64, message: String },
    #[error("png encode error: {0}")]
    Encode(String),
    #[error("unsupported png layout: {0}")]
    Unsupported(String),
}

/// One straight-alpha RGBA8 sample. Serializes as `[r, g, b, a]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u8; 4]", into = "[u8; 4]")]
pub struct Rgba {
    pub r: u8,
    pub g: u8,
    pub b: u8,
    pub a: u8,
}

impl Rgba {
    pub const TRANSPARENT: Rgba = Rgba::new(0, 0, 0, 0);
    pub const WHITE: Rgba = Rgba::new(255, 255, 255, 255);
    pub const BLACK: Rgba = Rgba::new(0, 0, 0, 255);

    pub const fn new(r: u8, g: u8, b: u8, a: u8) -> Self {
        Rgba { r, g, b, a }
    }

    pub const fn opaque(r: u8, g: u8, b: u8) -> Self {
        Rgba { r, g, b, a: 255 }
    }

    pub fn channels(self) -> [u8; 4] {
        [self.r, self.g, self.b, self.a]
    }
}

impl From<[u8; 4]> for Rgba {
    fn from(c: [u8; 4]) -> Self {
        Rgba::new(c[0], c[1], c[2], c[3])
    }
}

impl From<Rgba> for [u8; 4] {
    fn from(c: Rgba) -> Self {
        c.channels()
    }
}

/// Integer `round(num / den)` with halves rounded up. `den > 0`.
#[inline]
fn div_round_half_up(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}

/// Effective source alpha on the 0-255 scale: `round(a * opacity)`.
#[inline]
fn effective_alpha(a: u8, opacity: f64) -> u64 {
    let opacity = if opacity.is_nan() { 0.0 } else { opacity.clamp(0.0, 1.0) };
    (f64::from(a) * opacity + 0.5).floor() as u64
}

/// Straight-alpha "over": `src` at `src_opacity` on top of `dst`.
///
/// The source alpha is first scaled by the opacity and rounded to an 8-bit
/// value. Every output channel is then the exactly evaluated rational
/// result rounded half-up, so the integer path agrees with an exact
/// rational evaluation. Opacity outside `[0, 1]` is clamped, and a source
/// whose scaled alpha rounds to zero leaves `dst` untouched.
pub fn composite_over(src: Rgba, src_opacity: f64, dst: Rgba) -> Rgba {
    let sa = effective_alpha(src.a, src_opacity);
    if sa == 0 {
        return dst;
    }
    let da = u64::from(dst.a);
    // Output alpha scaled by 255^2.
    let out_alpha = 255 * sa + da * (255 - sa);
    let mix = |s: u8, d: u8| -> u8 {
        let num = u64::from(s) * sa * 255 + u64::from(d) * da * (255 - sa);
        div_round_half_up(num, out_alpha) as u8
    };
    Rgba {
        r: mix(src.r, dst.r),
        g: mix(src.g, dst.g),
        b: mix(src.b, dst.b),
        a: div_round_half_up(out_alpha, 255) as u8,
    }
}

/// Row-major RGBA8 image. The pixel count always equals `width * height`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<Rgba>,
}

impl RasterImage {
    pub fn filled(width: u32, height: u32, color: Rgba) -> Self {
        RasterImage {
            width,
            height,
            pixels: vec![color; width as usize * height as usize],
        }
    }

    pub fn transparent(width: u32, height: u32) -> Self {
        Self::filled(width, height, Rgba::TRANSPARENT)
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<Rgba>) -> Result<Self, RasterError> {
        if pixels.len() != width as usize * height as usize {
            return Err(RasterError::BufferLength {
                width,
                height,
                actual: pixels.len(),
            });
        }
        Ok(RasterImage {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from `f(x, y)` evaluated in row-major order.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Rgba) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        RasterImage {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[Rgba] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgba] {
        &mut self.pixels
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> Option<Rgba> {
        (x < self.width && y < self.height).then(|| self.pixels[self.offset(x, y)])
    }

    pub fn set(&mut self, x: u32, y: u32, color: Rgba) {
        assert!(x < self.width && y < self.height, "pixel ({x},{y}) out of bounds");
        let i = self.offset(x, y);
        self.pixels[i] = color;
    }

    /// Composites `color` at full opacity over the pixel at `(x, y)`.
    pub fn blend_pixel(&mut self, x: u32, y: u32, color: Rgba) {
        let i = self.offset(x, y);
        self.pixels[i] = composite_over(color, 1.0, self.pixels[i]);
    }

    pub fn to_rgba_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.channels()).collect()
    }

    pub fn from_rgba_bytes(width: u32, height: u32, bytes: &[u8]) -> Result<Self, RasterError> {
        if bytes.len() != width as usize * height as usize * 4 {
            return Err(RasterError::BufferLength {
                width,
                height,
                actual: bytes.len() / 4,
            });
        }
        let pixels = bytes
            .chunks_exact(4)
            .map(|c| Rgba::new(c[0], c[1], c[2], c[3]))
            .collect();
        Ok(RasterImage {
            width,
            height,
            pixels,
        })
    }
}

/// FNV-1a 64 over `width` and `height` as 8-byte big-endian integers
/// followed by the raw RGBA byte stream.
pub fn pixel_digest(img: &RasterImage) -> Digest64 {
    let mut h = Fnv1a::new();
    h.write(&u64::from(img.width).to_be_bytes());
    h.write(&u64::from(img.height).to_be_bytes());
    for p in &img.pixels {
        h.write(&p.channels());
    }
    Digest64(h.finish())
}

pub fn encode_png(img: &RasterImage) -> Result<Vec<u8>, RasterError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width, img.height);
        encoder.set_color(png::ColorType::Rgba);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(png::Compression::Fast);
        let mut writer = encoder
            .write_header()
            .map_err(|e| RasterError::Encode(e.to_string()))?;
        writer
            .write_image_data(&img.to_rgba_bytes())
            .map_err(|e| RasterError::Encode(e.to_string()))?;
        writer.finish().map_err(|e| RasterError::Encode(e.to_string()))?;
    }
    Ok(out)
}

/// Reader that records how far into the input the decoder has read.
struct TrackedReader<'a> {
    inner: io::Cursor<&'a [u8]>,
    high_water: Rc<Cell<u64>>,
}

impl TrackedReader<'_> {
    fn note(&self) {
        let pos = self.inner.position();
        if pos > self.high_water.get() {
            self.high_water.set(pos);
        }
    }
}

impl Read for TrackedReader<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.note();
        Ok(n)
    }
}

impl io::BufRead for TrackedReader<'_> {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        self.inner.consume(amt);
        self.note();
    }
}

impl io::Seek for TrackedReader<'_> {
    fn seek(&mut self, pos: io::SeekFrom) -> io::Result<u64> {
        let p = self.inner.seek(pos)?;
        self.note();
        Ok(p)
    }
}

/// Decodes any 8- or 16-bit PNG into RGBA8. Palette, grayscale and RGB
/// inputs are expanded; 16-bit samples are reduced to their high byte.
/// Parse failures carry the input offset the decoder had reached.
pub fn decode_png(bytes: &[u8]) -> Result<RasterImage, RasterError> {
    let high_water = Rc::new(Cell::new(0u64));
    let mut decoder = png::Decoder::new(TrackedReader {
        inner: io::Cursor::new(bytes),
        high_water: Rc::clone(&high_water),
    });
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let decode_err = |e: png::DecodingError| RasterError::Decode {
        offset: high_water.get(),
        message: e.to_string(),
    };

    let mut reader = decoder.read_info().map_err(decode_err)?;
    let Some(buf_len) = reader.output_buffer_size() else {
        return Err(RasterError::Unsupported("image too large".into()));
    };
    let mut buf = vec![0u8; buf_len];
    let info = reader.next_frame(&mut buf).map_err(decode_err)?;
    // reject streams that stop before IEND
    reader.finish().map_err(decode_err)?;
    let (width, height) = (info.width, info.height);
    let data = &buf[..info.buffer_size()];
    let pixels: Vec<Rgba> = match info.color_type {
        png::ColorType::Rgba => data.chunks_exact(4).map(|c| Rgba::new(c[0], c[1], c[2], c[3])).collect(),
        png::ColorType::Rgb => data.chunks_exact(3).map(|c| Rgba::opaque(c[0], c[1], c[2])).collect(),
        png::ColorType::GrayscaleAlpha => data.chunks_exact(2).map(|c| Rgba::new(c[0], c[0], c[0], c[1])).collect(),
        png::ColorType::Grayscale => data.iter().map(|&v| Rgba::opaque(v, v, v)).collect(),
        other => return Err(RasterError::Unsupported(format!("{other:?}"))),
    };
    RasterImage::from_pixels(width, height, pixels)
}
