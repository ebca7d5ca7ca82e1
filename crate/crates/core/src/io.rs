use crate::error::{Error, Result};
use crate::field::{BoolField, ScalarField};
use std::path::Path;

/// Sample depth for PGM output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmDepth {
    Eight,
    Sixteen,
}

impl PgmDepth {
    fn maxval(self) -> u32 {
        match self {
            PgmDepth::Eight => 255,
            PgmDepth::Sixteen => 65535,
        }
    }
}

/// Grid spacing convention for loaded fields: the longer axis spans [0, 1].
fn default_spacing(width: usize, height: usize) -> f64 {
    1.0 / (width.max(height).saturating_sub(1).max(1)) as f64
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Byte-level PGM scanner that remembers offsets for error reporting.
struct PgmScanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> PgmScanner<'a> {
    fn malformed(&self, reason: impl Into<String>) -> Error {
        Error::MalformedHeader {
            path: self.path.to_path_buf(),
            offset: self.pos,
            reason: reason.into(),
        }
    }

    /// Skips whitespace and `#` comments.
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn read_uint(&mut self, what: &str) -> Result<u64> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.malformed(format!("expected {what}, found non-digit")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        text.parse::<u64>()
            .map_err(|_| self.malformed(format!("{what} out of range")))
    }
}

/// Reads a scalar field from PGM (P2/P5, values normalized by maxval into
/// [0, 1]) or CSV (values taken verbatim), chosen by file extension.
pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    match extension(path)? {
        Format::Pgm => read_pgm(path),
        Format::Csv => read_csv(path),
    }
}

enum Format {
    Pgm,
    Csv,
}

fn extension(path: &Path) -> Result<Format> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("pgm") => Ok(Format::Pgm),
        Some("csv") => Ok(Format::Csv),
        _ => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
        }),
    }
}

fn read_pgm(path: &Path) -> Result<ScalarField> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let mut s = PgmScanner {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if bytes.len() < 2 {
        return Err(s.malformed("file shorter than the magic number"));
    }
    let binary = match &bytes[0..2] {
        b"P5" => true,
        b"P2" => false,
        _ => return Err(s.malformed("magic number is neither P2 nor P5")),
    };
    s.pos = 2;
    let width = s.read_uint("width")? as usize;
    let height = s.read_uint("height")? as usize;
    let maxval_offset = {
        s.skip_separators();
        s.pos
    };
    let maxval = s.read_uint("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::UnsupportedMaxval {
            path: path.to_path_buf(),
            offset: maxval_offset,
            maxval,
        });
    }
    let expected = width * height;
    let mut values = Vec::with_capacity(expected);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if s.pos >= bytes.len() || !bytes[s.pos].is_ascii_whitespace() {
            return Err(s.malformed("missing whitespace after maxval"));
        }
        s.pos += 1;
        let wide = maxval > 255;
        let per_sample = if wide { 2 } else { 1 };
        let available = (bytes.len() - s.pos) / per_sample;
        if available < expected {
            return Err(Error::TruncatedData {
                path: path.to_path_buf(),
                offset: s.pos + available * per_sample,
                expected,
                found: available,
            });
        }
        for k in 0..expected {
            let off = s.pos + k * per_sample;
            let raw = if wide {
                u16::from_be_bytes([bytes[off], bytes[off + 1]]) as u64
            } else {
                bytes[off] as u64
            };
            values.push(raw as f64 / maxval as f64);
        }
    } else {
        for k in 0..expected {
            s.skip_separators();
            if s.pos >= bytes.len() {
                return Err(Error::TruncatedData {
                    path: path.to_path_buf(),
                    offset: s.pos,
                    expected,
                    found: k,
                });
            }
            let raw = s.read_uint("sample")?;
            values.push(raw as f64 / maxval as f64);
        }
    }
    ScalarField::new(width, height, default_spacing(width, height), values)
}

fn read_csv(path: &Path) -> Result<ScalarField> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0usize;
    for line in text.lines() {
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            let mut row = Vec::new();
            for cell in trimmed.split(',') {
                let v: f64 = cell.trim().parse().map_err(|_| Error::MalformedHeader {
                    path: path.to_path_buf(),
                    offset,
                    reason: format!("cannot parse {:?} as a number", cell.trim()),
                })?;
                row.push(v);
            }
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::MalformedHeader {
                        path: path.to_path_buf(),
                        offset,
                        reason: format!(
                            "row has {} columns, expected {}",
                            row.len(),
                            first.len()
                        ),
                    });
                }
            }
            rows.push(row);
        }
        offset += line.len() + 1;
    }
    if rows.is_empty() {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            offset: 0,
            reason: "empty CSV".into(),
        });
    }
    let width = rows[0].len();
    let height = rows.len();
    let values: Vec<f64> = rows.into_iter().flatten().collect();
    ScalarField::new(width, height, default_spacing(width, height), values)
}

/// Writes a scalar field to PGM (clamped to [0, 1] and quantized) or CSV
/// (full precision, exact round-trip), chosen by file extension.
pub fn write_field(field: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    write_field_depth(field, path, PgmDepth::Eight)
}

/// As [`write_field`], with an explicit PGM sample depth.
pub fn write_field_depth(
    field: &ScalarField,
    path: impl AsRef<Path>,
    depth: PgmDepth,
) -> Result<()> {
    let path = path.as_ref();
    match extension(path)? {
        Format::Pgm => write_pgm(field, path, depth),
        Format::Csv => write_csv(field, path),
    }
}

fn write_pgm(field: &ScalarField, path: &Path, depth: PgmDepth) -> Result<()> {
    let maxval = depth.maxval();
    let mut out = format!("P5\n{} {}\n{}\n", field.width(), field.height(), maxval).into_bytes();
    for &v in field.values() {
        let q = (v.clamp(0.0, 1.0) * maxval as f64).round() as u32;
        match depth {
            PgmDepth::Eight => out.push(q as u8),
            PgmDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

fn write_csv(field: &ScalarField, path: &Path) -> Result<()> {
    let mut out = String::new();
    for j in 0..field.height() {
        for i in 0..field.width() {
            if i > 0 {
                out.push(',');
            }
            // `{}` prints the shortest representation that parses back to
            // the same f64, so CSV round-trips are exact.
            out.push_str(&format!("{}", field.get(i, j)));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a known-pixel mask: any strictly positive sample marks a known
/// pixel.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BoolField> {
    let field = read_field(path)?;
    let values: Vec<bool> = field.values().iter().map(|&v| v > 0.0).collect();
    BoolField::new(field.width(), field.height(), values)
}

/// Writes a mask as an 8-bit PGM (known = 255) or CSV of 0/1 values.
pub fn write_mask(mask: &BoolField, path: impl AsRef<Path>) -> Result<()> {
    let values: Vec<f64> = mask
        .values()
        .iter()
        .map(|&m| if m { 1.0 } else { 0.0 })
        .collect();
    let field = ScalarField::new(
        mask.width(),
        mask.height(),
        default_spacing(mask.width(), mask.height()),
        values,
    )?;
    write_field(&field, path)
}
