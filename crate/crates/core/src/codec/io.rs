use std::cell::Cell;
use std::io::{self, BufRead, Cursor, Read, Seek, SeekFrom};
use std::path::Path;
use std::rc::Rc;

use super::{ycbcr_to_rgb, Colorspace, ImagePlanes};
use crate::error::{Error, Result};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Reads a PNG or binary PPM/PGM file. Grayscale files are expanded to
/// three equal RGB planes.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImagePlanes> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "ppm" | "pgm" | "pnm")) {
            out.push(path);
        }
    }
    out.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(out)
}

/// Decodes from memory, detecting the format from the leading bytes.
pub fn decode_image(bytes: &[u8]) -> Result<ImagePlanes> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P6") || bytes.starts_with(b"P5") {
        decode_pnm(bytes)
    } else {
        Err(Error::Malformed {
            format: "image",
            offset: 0,
            message: "neither a PNG signature nor a P5/P6 header".into(),
        })
    }
}

/// Writes 8-bit RGB. `.ppm`/`.pnm` selects binary PPM, anything else PNG.
pub fn save_image(img: &ImagePlanes, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let rgb = match img.colorspace {
        Colorspace::Rgb => img.clone(),
        Colorspace::YCbCr => ycbcr_to_rgb(img)?,
    };
    let bytes = rgb.to_rgb8()?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let encoded = match ext.as_deref() {
        Some("ppm") | Some("pnm") => {
            let mut out = format!("P6\n{} {}\n255\n", rgb.width, rgb.height).into_bytes();
            out.extend_from_slice(&bytes);
            out
        }
        _ => encode_png(rgb.width, rgb.height, &bytes)?,
    };
    std::fs::write(path, encoded).map_err(|e| Error::io(path, e))
}

fn encode_png(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let fail = |e: png::EncodingError| Error::Invalid(format!("PNG encoding failed: {e}"));
    let mut writer = enc.write_header().map_err(fail)?;
    writer.write_image_data(rgb).map_err(fail)?;
    writer.finish().map_err(fail)?;
    Ok(out)
}

/// Cursor that publishes its furthest read position, so decoder errors can
/// be reported with a byte offset.
struct Tracked<'a> {
    inner: Cursor<&'a [u8]>,
    furthest: Rc<Cell<u64>>,
}

impl Tracked<'_> {
    fn note(&self) {
        let p = self.inner.position();
        if p > self.furthest.get() {
            self.furthest.set(p);
        }
    }
}

impl Read for Tracked<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.note();
        Ok(n)
    }
}

impl BufRead for Tracked<'_> {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        self.inner.consume(amt);
        self.note();
    }
}

impl Seek for Tracked<'_> {
    fn seek(&mut self, pos: SeekFrom) -> io::Result<u64> {
        self.inner.seek(pos)
    }
}

fn decode_png(bytes: &[u8]) -> Result<ImagePlanes> {
    let furthest = Rc::new(Cell::new(0));
    let malformed = |e: png::DecodingError| Error::Malformed {
        format: "PNG",
        offset: furthest.get() as usize,
        message: e.to_string(),
    };
    let mut decoder = png::Decoder::new(Tracked {
        inner: Cursor::new(bytes),
        furthest: furthest.clone(),
    });
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(malformed)?;
    let depth = reader.info().bit_depth;
    if depth == png::BitDepth::Sixteen {
        return Err(Error::Unsupported("16-bit PNG; only 8-bit samples are accepted".into()));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Unsupported("PNG too large to decode".into()))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(malformed)?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let data = &buf[..frame.buffer_size()];
    let stride = frame.color_type.samples();
    let pick = |channels: &[usize]| -> Vec<u8> {
        data.chunks_exact(stride)
            .flat_map(|px| channels.iter().map(move |&c| px[c]))
            .collect()
    };
    match frame.color_type {
        png::ColorType::Rgb => ImagePlanes::from_rgb8(w, h, data),
        png::ColorType::Rgba => ImagePlanes::from_rgb8(w, h, &pick(&[0, 1, 2])),
        png::ColorType::Grayscale => ImagePlanes::from_gray8(w, h, data),
        png::ColorType::GrayscaleAlpha => ImagePlanes::from_gray8(w, h, &pick(&[0])),
        png::ColorType::Indexed => Err(Error::Unsupported("unexpanded palette PNG".into())),
    }
}

struct HeaderScanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderScanner<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Malformed {
            format: "PPM",
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Malformed {
                format: "PPM",
                offset: start,
                message: format!("{what} out of range"),
            })
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<ImagePlanes> {
    let channels = if bytes[1] == b'6' { 3 } else { 1 };
    let mut s = HeaderScanner { bytes, pos: 2 };
    let width = s.number("width")?;
    let height = s.number("height")?;
    let maxval = s.number("maximum value")?;
    if maxval != 255 {
        return Err(Error::Unsupported(format!(
            "PPM maximum value {maxval}; only 8-bit (255) is accepted"
        )));
    }
    if width == 0 || height == 0 {
        return Err(s.error("zero image extent"));
    }
    if !s.bytes.get(s.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(s.error("expected a single whitespace byte after the header"));
    }
    s.pos += 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| s.error("image extent overflows"))?;
    let pixels = &bytes[s.pos..];
    if pixels.len() < need {
        return Err(Error::Malformed {
            format: "PPM",
            offset: bytes.len(),
            message: format!("pixel data truncated: need {need} bytes, found {}", pixels.len()),
        });
    }
    let pixels = &pixels[..need];
    if channels == 3 {
        ImagePlanes::from_rgb8(width, height, pixels)
    } else {
        ImagePlanes::from_gray8(width, height, pixels)
    }
}
