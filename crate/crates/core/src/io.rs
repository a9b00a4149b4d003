//! Image files and result tables.
//!
//! Readers accept PGM (`P2` ASCII and `P5` binary, 8 or 16 bit), grayscale
//! PNG (8 or 16 bit) and `RF32` rasters, detected by magic bytes. `RF32` is
//! the lossless format for real-valued images: the four bytes `RF32`, rows
//! and columns as little-endian `u32`, then row-major little-endian `f32`
//! samples.

use std::fs;
use std::path::Path;

use crate::image::IntensityRange;
use crate::noise::NoiseModel;
use crate::{Error, Image, Result};

const RF32_MAGIC: &[u8; 4] = b"RF32";
const PNG_MAGIC: &[u8; 8] = b"\x89PNG\r\n\x1a\n";

/// Reads an image; samples keep their stored values (`[0, maxval]` for
/// integer formats).
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes image bytes in any supported format.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.is_empty() {
        return Err(Error::Malformed("empty file".into()));
    }
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else if bytes.starts_with(RF32_MAGIC) {
        decode_rf32(bytes)
    } else {
        Err(Error::UnsupportedFormat(
            "expected PGM (P2/P5), grayscale PNG or RF32".into(),
        ))
    }
}

/// Splits PGM header tokens, skipping `#` comments; returns the tokens and
/// the offset just past the single whitespace byte that ends the header.
fn pgm_header(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut pos = 0;
    while tokens.len() < count {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Malformed("truncated PGM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    Ok((tokens, pos + 1))
}

fn header_number(token: &str, what: &str) -> Result<usize> {
    token
        .parse()
        .map_err(|_| Error::Malformed(format!("PGM {what} is not a number: {token:?}")))
}

fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let (tokens, data_start) = pgm_header(bytes, 4)?;
    let cols = header_number(&tokens[1], "width")?;
    let rows = header_number(&tokens[2], "height")?;
    let maxval = header_number(&tokens[3], "maxval")?;
    if rows == 0 || cols == 0 {
        return Err(Error::Malformed(format!("zero dimension {cols}x{rows}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Malformed(format!(
            "maxval {maxval} outside 1..=65535"
        )));
    }
    let len = rows * cols;
    let data: Vec<f64> = if tokens[0] == "P2" {
        let text = std::str::from_utf8(bytes.get(data_start..).unwrap_or_default())
            .map_err(|_| Error::Malformed("P2 body is not ASCII".into()))?;
        let values: Vec<f64> = text
            .split_ascii_whitespace()
            .take(len)
            .map(|t| {
                t.parse::<u32>()
                    .map(f64::from)
                    .map_err(|_| Error::Malformed(format!("bad P2 sample {t:?}")))
            })
            .collect::<Result<_>>()?;
        if values.len() < len {
            return Err(Error::Malformed(format!(
                "P2 has {} of {len} samples",
                values.len()
            )));
        }
        values
    } else {
        let width = if maxval < 256 { 1 } else { 2 };
        let body = bytes.get(data_start..).unwrap_or_default();
        if body.len() < len * width {
            return Err(Error::Malformed(format!(
                "P5 body has {} bytes, expected {}",
                body.len(),
                len * width
            )));
        }
        if width == 1 {
            body[..len].iter().map(|&b| f64::from(b)).collect()
        } else {
            body[..2 * len]
                .chunks_exact(2)
                .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])))
                .collect()
        }
    };
    if let Some(v) = data.iter().find(|&&v| v > maxval as f64) {
        return Err(Error::Malformed(format!(
            "sample {v} exceeds maxval {maxval}"
        )));
    }
    Image::new(rows, cols, data)
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Malformed(format!("png: {e}")))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Malformed(format!("png: {e}")))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::UnsupportedFormat(format!(
            "png color type {:?}; only grayscale is read",
            info.color_type
        )));
    }
    let (rows, cols) = (info.height as usize, info.width as usize);
    let len = rows * cols;
    let data: Vec<f64> = match info.bit_depth {
        png::BitDepth::Eight => buf[..len].iter().map(|&b| f64::from(b)).collect(),
        png::BitDepth::Sixteen => buf[..2 * len]
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])))
            .collect(),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "png bit depth {other:?}; only 8 and 16 are read"
            )))
        }
    };
    Image::new(rows, cols, data)
}

fn decode_rf32(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 12 {
        return Err(Error::Malformed("RF32 header truncated".into()));
    }
    let word =
        |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (rows, cols) = (word(4), word(8));
    if rows == 0 || cols == 0 {
        return Err(Error::Malformed(format!("zero dimension {rows}x{cols}")));
    }
    let body = &bytes[12..];
    let len = rows * cols;
    if body.len() != 4 * len {
        return Err(Error::Malformed(format!(
            "RF32 body has {} bytes, expected {}",
            body.len(),
            4 * len
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Image::new(rows, cols, data)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// 8-bit P5 for viewing: `range` maps linearly onto `[0, 255]`, values
/// outside it clamp.
pub fn write_image(image: &Image, path: impl AsRef<Path>, range: IntensityRange) -> Result<()> {
    if range.span() <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "display range [{}, {}] is empty",
            range.lo(),
            range.hi()
        )));
    }
    let mut out = format!("P5\n{} {}\n255\n", image.cols(), image.rows()).into_bytes();
    out.extend(image.data().iter().map(|&v| {
        let u = ((v - range.lo()) / range.span()).clamp(0.0, 1.0);
        (u * 255.0).round() as u8
    }));
    write_bytes(path.as_ref(), &out)
}

/// Display range `[0, 1.1·max(truth)]`.
pub fn display_range(truth: &Image) -> Result<IntensityRange> {
    let hi = 1.1 * truth.max();
    IntensityRange::new(0.0, if hi > 0.0 { hi } else { 1.0 })
}

/// Lossless PGM of integer samples in `[0, maxval]`; 8-bit samples when
/// `maxval < 256`, big-endian 16-bit otherwise.
pub fn write_pgm_exact(image: &Image, path: impl AsRef<Path>, maxval: u16) -> Result<()> {
    if maxval == 0 {
        return Err(Error::InvalidArgument("maxval must be positive".into()));
    }
    if let Some(v) = image
        .data()
        .iter()
        .find(|&&v| v.fract() != 0.0 || v < 0.0 || v > f64::from(maxval))
    {
        return Err(Error::Domain(format!(
            "{v} is not an integer sample in [0, {maxval}]"
        )));
    }
    let mut out = format!("P5\n{} {}\n{maxval}\n", image.cols(), image.rows()).into_bytes();
    if maxval < 256 {
        out.extend(image.data().iter().map(|&v| v as u8));
    } else {
        for &v in image.data() {
            out.extend_from_slice(&(v as u16).to_be_bytes());
        }
    }
    write_bytes(path.as_ref(), &out)
}

pub fn write_rf32(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let rows =
        u32::try_from(image.rows()).map_err(|_| Error::InvalidArgument("too many rows".into()))?;
    let cols =
        u32::try_from(image.cols()).map_err(|_| Error::InvalidArgument("too many cols".into()))?;
    let mut out = Vec::with_capacity(12 + 4 * image.len());
    out.extend_from_slice(RF32_MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for &v in image.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_bytes(path.as_ref(), &out)
}

/// Stores observations without loss: Bernoulli as PGM with maxval 1,
/// Poisson as 16-bit PGM, speckle as RF32.
pub fn write_observation(model: NoiseModel, y: &Image, path: impl AsRef<Path>) -> Result<()> {
    match model {
        NoiseModel::Bernoulli => write_pgm_exact(y, path, 1),
        NoiseModel::Poisson => write_pgm_exact(y, path, u16::MAX),
        NoiseModel::Speckle { .. } => write_rf32(y, path),
    }
}

/// Rows of per-image results with an `Average` row, stored as CSV with the
/// header `image,<column>,...`. Empty fields are missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
    pub average: Vec<Option<f64>>,
}

const AVERAGE: &str = "Average";

fn column_mean(rows: &[(String, Vec<Option<f64>>)], c: usize) -> Option<f64> {
    let values: Vec<f64> = rows
        .iter()
        .filter_map(|(_, v)| v[c])
        .filter(|v| v.is_finite())
        .collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

impl Table {
    pub fn with_average(columns: Vec<String>, rows: Vec<(String, Vec<Option<f64>>)>) -> Self {
        let average = (0..columns.len()).map(|c| column_mean(&rows, c)).collect();
        Self {
            columns,
            rows,
            average,
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["image".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        let fmt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (name, values) in &self.rows {
            let mut rec = vec![name.clone()];
            rec.extend(values.iter().map(fmt));
            w.write_record(&rec)?;
        }
        let mut rec = vec![AVERAGE.to_string()];
        rec.extend(self.average.iter().map(fmt));
        w.write_record(&rec)?;
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), self.to_csv()?.as_bytes())
    }

    /// Parses a table and checks that its `Average` row is the mean of the
    /// image rows.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header.get(0) != Some("image") {
            return Err(Error::Malformed(
                "table header must start with `image`".into(),
            ));
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut average = None;
        for rec in r.records() {
            let rec = rec?;
            let name = rec.get(0).unwrap_or_default().to_string();
            let values = rec
                .iter()
                .skip(1)
                .map(|f| {
                    if f.trim().is_empty() {
                        Ok(None)
                    } else {
                        f.trim()
                            .parse::<f64>()
                            .map(Some)
                            .map_err(|_| Error::Malformed(format!("bad table value {f:?}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if name == AVERAGE {
                average = Some(values);
            } else {
                rows.push((name, values));
            }
        }
        let average = average.ok_or_else(|| Error::Malformed("table has no Average row".into()))?;
        let table = Self::with_average(columns, rows);
        for (c, (stored, expected)) in average.iter().zip(&table.average).enumerate() {
            let consistent = match (stored, expected) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * b.abs().max(1.0),
                (None, None) => true,
                (Some(a), None) => a.is_nan(),
                (None, Some(_)) => false,
            };
            if !consistent {
                return Err(Error::Malformed(format!(
                    "Average of column {} is {stored:?}, rows give {expected:?}",
                    table.columns[c]
                )));
            }
        }
        Ok(table)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}
