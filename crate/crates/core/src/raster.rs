//! Grayscale rasters, binary masks, probability maps and their file formats.
//!
//! Supported on disk:
//! - 8-bit grayscale PNG and binary PGM (`P5`, maxval 255) for images,
//! - 8-bit grayscale PNG with values {0, 255} for masks,
//! - 16-bit grayscale PNG for probability maps (`v / 65535`).
//!
//! All buffers are row-major with a top-left origin; pixel `(x, y)` lives at
//! `y * width + x`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
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

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Copies the window `[x, x+w) × [y, y+h)`; the window must lie inside the image.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Raster> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::DimensionMismatch(format!(
                "crop window ({x},{y},{w},{h}) outside {}x{}",
                self.width, self.height
            )));
        }
        Raster::from_fn(w, h, |cx, cy| self.get(x + cx, y + cy))
    }
}

/// Binary defect mask: 0 = background, 1 = defect.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some(i) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidMaskValue {
                x: i % width,
                y: i / width,
                value: data[i] as u16,
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        Self::new(width, height, data)
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

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn defect_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Mask> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::DimensionMismatch(format!(
                "crop window ({x},{y},{w},{h}) outside {}x{}",
                self.width, self.height
            )));
        }
        Mask::from_fn(w, h, |cx, cy| self.get(x + cx, y + cy))
    }
}

/// Per-pixel defect probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ProbMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("probability {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Thresholds at `p >= 0.5`.
    pub fn to_mask(&self) -> Mask {
        let data = self.data.iter().map(|&p| (p >= 0.5) as u8).collect();
        Mask { width: self.width, height: self.height, data }
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidRaster(format!("empty dimensions {width}x{height}")));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::InvalidRaster(format!(
            "buffer length {len} does not match {width}x{height}"
        )));
    }
    Ok(())
}

struct GrayImage {
    width: usize,
    height: usize,
    bit_depth: u8,
    samples: Vec<u16>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn read_png(path: &Path) -> Result<GrayImage> {
    let file = open(path)?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::UnsupportedFormat(format!(
            "{}: color type {:?}, expected grayscale",
            path.display(),
            info.color_type
        )));
    }
    let bit_depth = match info.bit_depth {
        png::BitDepth::Eight => 8,
        png::BitDepth::Sixteen => 16,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: bit depth {:?}",
                path.display(),
                other
            )))
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptImage(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0u8; size];
    let out = reader.next_frame(&mut buf).map_err(png_err)?;
    let (width, height) = (out.width as usize, out.height as usize);
    let samples = if bit_depth == 8 {
        buf[..width * height].iter().map(|&v| v as u16).collect()
    } else {
        buf[..width * height * 2]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok(GrayImage { width, height, bit_depth, samples })
}

fn png_err(e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(io) => Error::Io(io),
        other => Error::CorruptImage(other.to_string()),
    }
}

fn write_png(path: &Path, width: usize, height: usize, depth: png::BitDepth, bytes: &[u8]) -> Result<()> {
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(depth);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::CorruptImage(e.to_string()))?;
    writer
        .write_image_data(bytes)
        .map_err(|e| Error::CorruptImage(e.to_string()))?;
    writer.finish().map_err(|e| Error::CorruptImage(e.to_string()))?;
    Ok(())
}

fn read_pgm(path: &Path) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes)?;
    let corrupt = |msg: &str| Error::CorruptImage(format!("{}: {msg}", path.display()));
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
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
                None => return Err(corrupt("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt("bad header field"))?;
    }
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: PGM maxval {maxval}, expected 255",
            path.display()
        )));
    }
    // exactly one whitespace byte precedes the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(corrupt("missing raster separator"));
    }
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(corrupt("truncated raster"));
    }
    let samples = bytes[pos..pos + n].iter().map(|&v| v as u16).collect();
    Ok(GrayImage { width, height, bit_depth: 8, samples })
}

fn read_gray(path: &Path) -> Result<GrayImage> {
    let mut magic = [0u8; 8];
    let n = open(path)?.read(&mut magic)?;
    if n >= 2 && &magic[..2] == b"P5" {
        read_pgm(path)
    } else if n == 8 && magic == [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A] {
        read_png(path)
    } else if n >= 2 && magic[0] == b'P' && magic[1].is_ascii_digit() {
        Err(Error::UnsupportedFormat(format!(
            "{}: only binary PGM (P5) is supported",
            path.display()
        )))
    } else {
        Err(Error::UnsupportedFormat(format!("{}: not a PNG or PGM file", path.display())))
    }
}

/// Loads an 8-bit grayscale PNG or binary PGM with exact pixel values.
pub fn load_grayscale(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let img = read_gray(path)?;
    if img.bit_depth != 8 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {}-bit image, expected 8-bit",
            path.display(),
            img.bit_depth
        )));
    }
    Raster::new(img.width, img.height, img.samples.into_iter().map(|v| v as u8).collect())
}

/// Saves as 8-bit PNG, or as binary PGM when the extension is `.pgm`.
pub fn save_grayscale(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "P5\n{} {}\n255\n", raster.width, raster.height)?;
        w.write_all(&raster.data)?;
        w.flush()?;
        Ok(())
    } else {
        write_png(path, raster.width, raster.height, png::BitDepth::Eight, &raster.data)
    }
}

/// Loads a 0/255 mask; any other value is rejected.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let img = read_gray(path)?;
    if img.bit_depth != 8 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: masks must be 8-bit",
            path.display()
        )));
    }
    let mut data = Vec::with_capacity(img.samples.len());
    for (i, &v) in img.samples.iter().enumerate() {
        match v {
            0 => data.push(0),
            255 => data.push(1),
            value => {
                return Err(Error::InvalidMaskValue {
                    x: i % img.width,
                    y: i / img.width,
                    value,
                })
            }
        }
    }
    Mask::new(img.width, img.height, data)
}

/// Writes the mask as an 8-bit 0/255 PNG.
pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = mask.data.iter().map(|&v| v * 255).collect();
    write_png(path.as_ref(), mask.width, mask.height, png::BitDepth::Eight, &bytes)
}

/// Loads a 16-bit grayscale PNG as probabilities `v / 65535`.
pub fn load_probmap(path: impl AsRef<Path>) -> Result<ProbMap> {
    let path = path.as_ref();
    let img = read_gray(path)?;
    if img.bit_depth != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: probability maps must be 16-bit grayscale PNG",
            path.display()
        )));
    }
    let data = img.samples.iter().map(|&v| v as f64 / 65535.0).collect();
    ProbMap::new(img.width, img.height, data)
}

/// Writes probabilities as 16-bit PNG, rounding `p * 65535` to nearest.
pub fn save_probmap(map: &ProbMap, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::with_capacity(map.data.len() * 2);
    for &p in &map.data {
        let v = (p * 65535.0).round() as u16;
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    write_png(path.as_ref(), map.width, map.height, png::BitDepth::Sixteen, &bytes)
}
