//! PNG and binary PGM (P5) reading and writing, 8 or 16 bits per sample.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{Error, Result};
use crate::raster::{max_for_depth, GrayRaster, LabelRaster};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Container {
    Png,
    Pgm,
}

impl Container {
    fn from_extension(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("png") => Ok(Container::Png),
            Some("pgm") => Ok(Container::Pgm),
            _ => Err(Error::UnsupportedContainer(path.to_path_buf())),
        }
    }

    fn sniff(bytes: &[u8]) -> Option<Self> {
        if bytes.starts_with(PNG_MAGIC) {
            Some(Container::Png)
        } else if bytes.starts_with(b"P5") {
            Some(Container::Pgm)
        } else {
            None
        }
    }
}

/// Interleaved samples as decoded, before channel selection.
struct Decoded {
    width: usize,
    height: usize,
    channels: u8,
    bits: u8,
    samples: Vec<u16>,
}

impl Decoded {
    fn select(self, channel: Option<usize>) -> Result<(usize, usize, u8, Vec<u16>)> {
        let Decoded {
            width,
            height,
            channels,
            bits,
            samples,
        } = self;
        if channels == 1 {
            return Ok((width, height, bits, samples));
        }
        let c = channel.ok_or(Error::MultiChannel { channels })?;
        if c >= channels as usize {
            return Err(Error::ChannelOutOfRange { channel: c, channels });
        }
        let picked = samples.iter().skip(c).step_by(channels as usize).copied().collect();
        Ok((width, height, bits, picked))
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn decode(path: &Path, bytes: &[u8]) -> Result<Decoded> {
    match Container::sniff(bytes) {
        Some(Container::Png) => decode_png(bytes),
        Some(Container::Pgm) => decode_pgm(path, bytes),
        None => Err(Error::UnsupportedContainer(path.to_path_buf())),
    }
}

fn decode_png(bytes: &[u8]) -> Result<Decoded> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let channels = img.color().channel_count();
    let (bits, samples): (u8, Vec<u16>) = match &img {
        DynamicImage::ImageLuma8(b) => (8, b.as_raw().iter().map(|&v| v as u16).collect()),
        DynamicImage::ImageLumaA8(b) => (8, b.as_raw().iter().map(|&v| v as u16).collect()),
        DynamicImage::ImageRgb8(b) => (8, b.as_raw().iter().map(|&v| v as u16).collect()),
        DynamicImage::ImageRgba8(b) => (8, b.as_raw().iter().map(|&v| v as u16).collect()),
        DynamicImage::ImageLuma16(b) => (16, b.as_raw().clone()),
        DynamicImage::ImageLumaA16(b) => (16, b.as_raw().clone()),
        DynamicImage::ImageRgb16(b) => (16, b.as_raw().clone()),
        DynamicImage::ImageRgba16(b) => (16, b.as_raw().clone()),
        other => {
            return Err(Error::BitDepth(
                (other.color().bits_per_pixel() / other.color().channel_count() as u16) as u8,
            ))
        }
    };
    Ok(Decoded {
        width,
        height,
        channels,
        bits,
        samples,
    })
}

fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<Decoded> {
    let malformed = |reason: &str| Error::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(malformed("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("bad header field"))?;
    }
    // exactly one whitespace byte before the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(malformed("missing separator after maxval"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(malformed("maxval out of range"));
    }
    let wide = maxval > 255;
    let n = width * height;
    let body = &bytes[pos..];
    let samples: Vec<u16> = if wide {
        if body.len() < 2 * n {
            return Err(malformed("truncated raster"));
        }
        body[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        if body.len() < n {
            return Err(malformed("truncated raster"));
        }
        body[..n].iter().map(|&v| v as u16).collect()
    };
    Ok(Decoded {
        width,
        height,
        channels: 1,
        bits: if wide { 16 } else { 8 },
        samples,
    })
}

/// Loads a single-channel 8- or 16-bit image with raw intensities.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayRaster> {
    load_gray_channel(path, None)
}

/// Like [`load_gray`], but multi-channel inputs are reduced to `channel`.
pub fn load_gray_channel(path: impl AsRef<Path>, channel: Option<usize>) -> Result<GrayRaster> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let (w, h, bits, samples) = decode(path, &bytes)?.select(channel)?;
    GrayRaster::with_bit_depth(w, h, samples.into_iter().map(f64::from).collect(), bits)
}

pub fn load_labels(path: impl AsRef<Path>, channel: Option<usize>) -> Result<LabelRaster> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let (w, h, _, samples) = decode(path, &bytes)?.select(channel)?;
    LabelRaster::new(w, h, samples)
}

/// Saves a raw raster at its declared bit depth. Values are rounded and
/// clamped to the container range.
pub fn save_gray(raster: &GrayRaster, path: impl AsRef<Path>) -> Result<()> {
    let bits = raster.bit_depth().unwrap_or(8);
    let max = max_for_depth(bits);
    let samples: Vec<u16> = raster
        .data()
        .iter()
        .map(|&v| v.round().clamp(0.0, max) as u16)
        .collect();
    write_samples(path.as_ref(), raster.width(), raster.height(), bits, &samples)
}

/// Saves a `[0, 1]` field scaled to the full range of `bits`; values
/// outside `[0, 1]` are clamped.
pub fn save_unit(raster: &GrayRaster, path: impl AsRef<Path>, bits: u8) -> Result<()> {
    if bits != 8 && bits != 16 {
        return Err(Error::BitDepth(bits));
    }
    let max = max_for_depth(bits);
    let samples: Vec<u16> = raster
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * max).round() as u16)
        .collect();
    write_samples(path.as_ref(), raster.width(), raster.height(), bits, &samples)
}

pub fn save_labels(labels: &LabelRaster, path: impl AsRef<Path>) -> Result<()> {
    let bits = if labels.data().iter().all(|&v| v <= 255) { 8 } else { 16 };
    write_samples(path.as_ref(), labels.width(), labels.height(), bits, labels.data())
}

fn write_samples(path: &Path, width: usize, height: usize, bits: u8, samples: &[u16]) -> Result<()> {
    let bytes = match Container::from_extension(path)? {
        Container::Png => encode_png(width, height, bits, samples)?,
        Container::Pgm => encode_pgm(width, height, bits, samples),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn encode_png(width: usize, height: usize, bits: u8, samples: &[u16]) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    let encoder = PngEncoder::new(&mut out);
    if bits == 8 {
        let buf: Vec<u8> = samples.iter().map(|&v| v as u8).collect();
        encoder.write_image(&buf, width as u32, height as u32, ExtendedColorType::L8)?;
    } else {
        // the encoder takes native-endian samples and byte-swaps them itself
        let buf: Vec<u8> = samples.iter().flat_map(|v| v.to_ne_bytes()).collect();
        encoder.write_image(&buf, width as u32, height as u32, ExtendedColorType::L16)?;
    }
    Ok(out.into_inner())
}

fn encode_pgm(width: usize, height: usize, bits: u8, samples: &[u16]) -> Vec<u8> {
    let maxval = if bits == 8 { 255 } else { 65535 };
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if bits == 8 {
        out.extend(samples.iter().map(|&v| v as u8));
    } else {
        out.extend(samples.iter().flat_map(|v| v.to_be_bytes()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_load_8bit() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.png", "a.pgm"] {
            let p = dir.path().join(name);
            let r = GrayRaster::with_bit_depth(2, 2, vec![0.0, 255.0, 128.0, 64.0], 8).unwrap();
            save_gray(&r, &p).unwrap();
            let back = load_gray(&p).unwrap();
            assert_eq!(back.dims(), (2, 2));
            assert_eq!(back.data(), &[0.0, 255.0, 128.0, 64.0]);
            assert_eq!(back.bit_depth(), Some(8));
        }
    }

    #[test]
    fn empty_file_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.png");
        fs::write(&p, b"").unwrap();
        assert!(matches!(load_gray(&p), Err(Error::UnsupportedContainer(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_gray("/nonexistent/x.png"), Err(Error::Io { .. })));
    }

    #[test]
    fn sixteen_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.png", "b.pgm"] {
            let p = dir.path().join(name);
            let r = GrayRaster::with_bit_depth(3, 1, vec![0.0, 65535.0, 300.0], 16).unwrap();
            save_gray(&r, &p).unwrap();
            let back = load_gray(&p).unwrap();
            assert_eq!(back.bit_depth(), Some(16));
            assert_eq!(back.data(), &[0.0, 65535.0, 300.0]);
            let first = fs::read(&p).unwrap();
            save_gray(&back, &p).unwrap();
            assert_eq!(fs::read(&p).unwrap(), first);
        }
    }

    #[test]
    fn multichannel_needs_channel_rule() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        let img = image::RgbImage::from_raw(2, 1, vec![10, 20, 30, 40, 50, 60]).unwrap();
        img.save(&p).unwrap();
        assert!(matches!(load_gray(&p), Err(Error::MultiChannel { channels: 3 })));
        let g = load_gray_channel(&p, Some(1)).unwrap();
        assert_eq!(g.data(), &[20.0, 50.0]);
        assert!(matches!(
            load_gray_channel(&p, Some(3)),
            Err(Error::ChannelOutOfRange { .. })
        ));
    }

    #[test]
    fn pgm_header_with_comment() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([7u8, 9]);
        fs::write(&p, bytes).unwrap();
        assert_eq!(load_gray(&p).unwrap().data(), &[7.0, 9.0]);
    }

    #[test]
    fn truncated_pgm_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.pgm");
        fs::write(&p, b"P5\n4 4\n255\n\x01\x02").unwrap();
        assert!(matches!(load_gray(&p), Err(Error::Malformed { .. })));
    }

    #[test]
    fn unit_save_clamps() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.png");
        let r = GrayRaster::new(3, 1, vec![1.2, 0.5, -0.1]).unwrap();
        save_unit(&r, &p, 8).unwrap();
        assert_eq!(load_gray(&p).unwrap().data(), &[255.0, 128.0, 0.0]);
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.png");
        let l = LabelRaster::new(3, 1, vec![0, 2, 4]).unwrap();
        save_labels(&l, &p).unwrap();
        assert_eq!(load_labels(&p, None).unwrap(), l);
    }
}
