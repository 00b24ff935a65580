//! Image, mask and filter-stack files.
//!
//! Images are read from PNG (8 or 16 bit, any colour type) and binary PPM
//! (`P6`, maxval up to 255) and written as 8-bit PNG or PPM, chosen by file
//! extension. Stacks use a small little-endian container:
//!
//! ```text
//! "DCCF"  u16 version  u32 grid_w  u32 grid_h  u32 m  3 x u8 order
//! f32 planes: V_min, φ1..φm | σ | δ11..δ34 | a_raw, w11..w34
//! ```
//!
//! Every plane is `grid_w * grid_h` values in row-major order. All writes go
//! through a temporary file in the target directory followed by a rename.

use std::fs;
use std::io::{Cursor, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::filters::{AttentiveFilterMap, FilterMap, FilterStack, HueFilterMap, ParamGrid, SaturationFilterMap, StageOrder, ValueFilterMap};
use crate::image::{Mask, PlaneImage, RgbImage};

pub const STACK_MAGIC: &[u8; 4] = b"DCCF";
pub const STACK_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Ppm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("png") => Ok(ImageFormat::Png),
            Some("ppm") => Ok(ImageFormat::Ppm),
            _ => Err(Error::UnsupportedFormat(path.display().to_string())),
        }
    }

    pub fn sniff(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(b"\x89PNG") {
            Ok(ImageFormat::Png)
        } else if bytes.starts_with(b"P6") {
            Ok(ImageFormat::Ppm)
        } else if bytes.len() < 2 {
            Err(Error::CorruptHeader("file too short".into()))
        } else {
            Err(Error::UnsupportedFormat("neither PNG nor binary PPM".into()))
        }
    }
}

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Decoded pixels before conversion: `channels` samples per pixel in [0, 1].
struct Raw {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<f64>,
}

impl Raw {
    fn rgb(&self) -> Result<RgbImage> {
        let mut data = Vec::with_capacity(self.width * self.height * 3);
        for px in self.samples.chunks_exact(self.channels) {
            match self.channels {
                1 | 2 => data.extend_from_slice(&[px[0]; 3]),
                _ => data.extend_from_slice(&px[..3]),
            }
        }
        RgbImage::from_vec(self.width, self.height, data)
    }

    fn gray(&self) -> Vec<f64> {
        self.samples
            .chunks_exact(self.channels)
            .map(|px| match self.channels {
                1 | 2 => px[0],
                _ => (px[0] + px[1] + px[2]) / 3.0,
            })
            .collect()
    }
}

fn decode_raw(bytes: &[u8]) -> Result<Raw> {
    match ImageFormat::sniff(bytes)? {
        ImageFormat::Png => decode_png(bytes),
        ImageFormat::Ppm => decode_ppm(bytes),
    }
}

fn decode_png(bytes: &[u8]) -> Result<Raw> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(png_error)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::CorruptHeader("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(png_error)?;
    let channels = info.color_type.samples();
    let (width, height) = (info.width as usize, info.height as usize);
    let n = width * height * channels;
    let samples = match info.bit_depth {
        png::BitDepth::Eight => buf[..n].iter().map(|b| *b as f64 / 255.0).collect(),
        png::BitDepth::Sixteen => buf[..2 * n]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0)
            .collect(),
        other => return Err(Error::UnsupportedBitDepth(other as u8)),
    };
    Ok(Raw { width, height, channels, samples })
}

fn png_error(e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::CorruptHeader("unexpected end of PNG data".into())
        }
        png::DecodingError::IoError(e) => Error::Io(e),
        other => Error::CorruptHeader(other.to_string()),
    }
}

fn decode_ppm(bytes: &[u8]) -> Result<Raw> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::CorruptHeader("PPM header ends early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptHeader("expected a number in PPM header".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::CorruptHeader("PPM header ends early".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::CorruptHeader("PPM has zero size".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::CorruptHeader(format!("PPM maxval {maxval}")));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedBitDepth(16));
    }
    let n = width * height * 3;
    let body = &bytes[pos..];
    if body.len() < n {
        return Err(Error::CorruptHeader(format!("PPM pixel data truncated: expected {n} bytes, found {}", body.len())));
    }
    let samples = body[..n].iter().map(|b| (*b as f64 / maxval as f64).min(1.0)).collect();
    Ok(Raw { width, height, channels: 3, samples })
}

/// Decodes PNG or PPM bytes to an RGB image.
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage> {
    decode_raw(bytes)?.rgb()
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    decode_image(&fs::read(path)?)
}

/// 8-bit quantization with halves rounded up.
#[inline]
pub fn to_u8(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn png_bytes(width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(encoding_error)?;
        writer.write_image_data(data).map_err(encoding_error)?;
        writer.finish().map_err(encoding_error)?;
    }
    Ok(out)
}

fn encoding_error(e: png::EncodingError) -> Error {
    match e {
        png::EncodingError::IoError(e) => Error::Io(e),
        other => Error::invalid(other.to_string()),
    }
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let data: Vec<u8> = img.data().iter().map(|v| to_u8(*v)).collect();
    png_bytes(img.width(), img.height(), png::ColorType::Rgb, &data)
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|v| to_u8(*v)));
    out
}

pub fn encode_image(img: &RgbImage, format: ImageFormat) -> Result<Vec<u8>> {
    match format {
        ImageFormat::Png => encode_png(img),
        ImageFormat::Ppm => Ok(encode_ppm(img)),
    }
}

/// Saves as PNG or PPM depending on the extension of `path`.
pub fn save_image(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_image(img, ImageFormat::from_path(path)?)?;
    write_atomic(path, &bytes)
}

/// Grayscale 8-bit PNG of `plane / max_value`.
pub fn encode_plane_png(plane: &PlaneImage, max_value: f64) -> Result<Vec<u8>> {
    if !(max_value > 0.0) {
        return Err(Error::invalid("max_value must be positive"));
    }
    let data: Vec<u8> = plane.data().iter().map(|v| to_u8(v / max_value)).collect();
    png_bytes(plane.width(), plane.height(), png::ColorType::Grayscale, &data)
}

pub fn save_plane(plane: &PlaneImage, max_value: f64, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_plane_png(plane, max_value)?)
}

/// Decodes a mask. Colour inputs are averaged to gray. Unless `soft`,
/// values are thresholded: `>= 0.5` becomes 1.
pub fn decode_mask(bytes: &[u8], soft: bool) -> Result<Mask> {
    let raw = decode_raw(bytes)?;
    let mut gray = raw.gray();
    if !soft {
        gray.iter_mut().for_each(|v| *v = if *v >= 0.5 { 1.0 } else { 0.0 });
    }
    Mask::new(PlaneImage::from_vec(raw.width, raw.height, gray)?)
}

pub fn load_mask(path: impl AsRef<Path>, soft: bool) -> Result<Mask> {
    decode_mask(&fs::read(path)?, soft)
}

/// Grayscale 8-bit PNG of a mask.
pub fn encode_mask_png(mask: &Mask) -> Result<Vec<u8>> {
    encode_plane_png(mask.plane(), 1.0)
}

pub fn encode_stack(stack: &FilterStack) -> Vec<u8> {
    let (gw, gh) = stack.grid_dims();
    let mut out = Vec::with_capacity(21 + 4 * stack.param_count());
    out.extend_from_slice(STACK_MAGIC);
    out.extend_from_slice(&STACK_VERSION.to_le_bytes());
    out.extend_from_slice(&(gw as u32).to_le_bytes());
    out.extend_from_slice(&(gh as u32).to_le_bytes());
    out.extend_from_slice(&(stack.m() as u32).to_le_bytes());
    out.extend(stack.order.stages().map(|c| c.letter() as u8));
    for grid in [stack.val.grid(), stack.sat.grid(), stack.hue.grid(), stack.attn.grid()] {
        for c in 0..grid.channels() {
            for v in grid.channel_plane(c).data() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    out
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Truncated(format!("stack ends inside {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_stack(bytes: &[u8]) -> Result<FilterStack> {
    let mut r = ByteReader { bytes, pos: 0 };
    let magic = r.take(4, "magic").map_err(|_| Error::BadMagic)?;
    if magic != STACK_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
    if version != STACK_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: STACK_VERSION });
    }
    let gw = r.u32("grid width")? as usize;
    let gh = r.u32("grid height")? as usize;
    let m = r.u32("segment count")? as usize;
    if gw == 0 || gh == 0 || m == 0 {
        return Err(Error::CorruptHeader(format!("grid {gw}x{gh}, m = {m}")));
    }
    let order_bytes = r.take(3, "order")?;
    let order: StageOrder = std::str::from_utf8(order_bytes)
        .map_err(|_| Error::CorruptHeader("order is not ASCII".into()))?
        .parse()
        .map_err(|_| Error::CorruptHeader("invalid stage order".into()))?;
    let cells = gw.checked_mul(gh).ok_or_else(|| Error::CorruptHeader("grid too large".into()))?;
    let expected = cells.saturating_mul(4 * (27 + m));
    if bytes.len() - r.pos < expected {
        return Err(Error::Truncated(format!("expected {expected} bytes of parameters, found {}", bytes.len() - r.pos)));
    }
    let mut read_grid = |channels: usize, what: &str| -> Result<ParamGrid> {
        let mut data = vec![0.0; cells * channels];
        for c in 0..channels {
            for i in 0..cells {
                let b = r.take(4, what)?;
                data[i * channels + c] = f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64;
            }
        }
        ParamGrid::new(gw, gh, channels, data)
    };
    let val = ValueFilterMap::new(read_grid(1 + m, "value map")?)?;
    let sat = SaturationFilterMap::new(read_grid(1, "saturation map")?)?;
    let hue = HueFilterMap::new(read_grid(12, "hue map")?)?;
    let attn = AttentiveFilterMap::new(read_grid(13, "attention map")?)?;
    if r.pos != bytes.len() {
        return Err(Error::CorruptHeader(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    FilterStack::new(val, sat, hue, attn, order)
}

pub fn save_stack(stack: &FilterStack, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_stack(stack))
}

pub fn load_stack(path: impl AsRef<Path>) -> Result<FilterStack> {
    decode_stack(&fs::read(path)?)
}
