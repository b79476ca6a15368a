//! Matrix files: Matrix Market dense arrays and the `ADPM` binary format.
//!
//! Binary layout, all little-endian: magic `ADPM`, `u32` version 1, `u64`
//! rows, `u64` cols, then `rows * cols` FP64 values in row-major order.
//! Binary files keep every bit, NaN payloads and `-0.0` included. Matrix
//! Market files store values column-major in shortest round-trip decimal.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ozadp_core::MatrixF64;

pub const BINARY_MAGIC: &[u8; 4] = b"ADPM";
pub const BINARY_VERSION: u32 = 1;
const MM_HEADER: &str = "%%MatrixMarket matrix array real general";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Format(String),
}

impl IoError {
    fn at(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
        move |source| IoError::Io { path: path.to_path_buf(), source }
    }
}

pub type Result<T> = std::result::Result<T, IoError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    MatrixMarket,
    Binary,
}

impl MatrixFormat {
    /// `.mtx` means Matrix Market; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("mtx") => MatrixFormat::MatrixMarket,
            _ => MatrixFormat::Binary,
        }
    }
}

fn format_err(msg: impl Into<String>) -> IoError {
    IoError::Format(msg.into())
}

pub fn write_binary<W: Write>(mut w: W, m: &MatrixF64) -> std::io::Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_bits().to_le_bytes())?;
    }
    w.flush()
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err(format!("truncated binary matrix: missing {what}")),
        _ => format_err(format!("reading {what}: {e}")),
    })
}

pub fn read_binary<R: Read>(mut r: R) -> Result<MatrixF64> {
    let mut header = [0u8; 24];
    read_exact_or(&mut r, &mut header, "header")?;
    if &header[..4] != BINARY_MAGIC {
        return Err(format_err("not an ADPM file (bad magic)"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != BINARY_VERSION {
        return Err(format_err(format!("unsupported ADPM version {version}")));
    }
    let rows = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
    let len = rows
        .checked_mul(cols)
        .and_then(|n| usize::try_from(n).ok())
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| format_err(format!("matrix size {rows}x{cols} is too large")))?;
    let mut bytes = Vec::new();
    r.take(len as u64 * 8 + 1).read_to_end(&mut bytes).map_err(|e| format_err(format!("reading values: {e}")))?;
    if bytes.len() < len * 8 {
        return Err(format_err(format!("truncated binary matrix: {} of {} values", bytes.len() / 8, len)));
    }
    if bytes.len() > len * 8 {
        return Err(format_err("trailing bytes after binary matrix"));
    }
    let data =
        bytes.chunks_exact(8).map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes")))).collect();
    MatrixF64::from_vec(rows as usize, cols as usize, data).map_err(|e| format_err(e.to_string()))
}

pub fn write_matrix_market<W: Write>(mut w: W, m: &MatrixF64) -> std::io::Result<()> {
    writeln!(w, "{MM_HEADER}")?;
    writeln!(w, "{} {}", m.rows(), m.cols())?;
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            writeln!(w, "{:e}", m[(i, j)])?;
        }
    }
    w.flush()
}

pub fn read_matrix_market<R: BufRead>(r: R) -> Result<MatrixF64> {
    let mut lines = r.lines();
    let header =
        lines.next().ok_or_else(|| format_err("empty Matrix Market file"))?.map_err(|e| format_err(e.to_string()))?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.first().map(String::as_str) != Some("%%matrixmarket") {
        return Err(format_err("missing %%MatrixMarket header"));
    }
    if tokens[1..] != ["matrix", "array", "real", "general"] {
        return Err(format_err(format!("unsupported Matrix Market type '{}'", tokens[1..].join(" "))));
    }
    let mut size: Option<(usize, usize)> = None;
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| format_err(e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let at = || format!("line {}", lineno + 2);
        match size {
            None => {
                let dims: Vec<&str> = t.split_whitespace().collect();
                if dims.len() != 2 {
                    return Err(format_err(format!("{}: expected 'rows cols'", at())));
                }
                let parse =
                    |s: &str| s.parse::<usize>().map_err(|_| format_err(format!("{}: bad dimension '{s}'", at())));
                let (r, c) = (parse(dims[0])?, parse(dims[1])?);
                let len = r.checked_mul(c).ok_or_else(|| format_err("matrix too large"))?;
                values.reserve(len.min(1 << 24));
                size = Some((r, c));
            }
            Some(_) => {
                for tok in t.split_whitespace() {
                    let v = tok.parse::<f64>().map_err(|_| format_err(format!("{}: bad value '{tok}'", at())))?;
                    values.push(v);
                }
            }
        }
    }
    let (rows, cols) = size.ok_or_else(|| format_err("missing size line"))?;
    if values.len() != rows * cols {
        return Err(format_err(format!("expected {} values, found {}", rows * cols, values.len())));
    }
    Ok(MatrixF64::from_fn(rows, cols, |i, j| values[j * rows + i]))
}

/// Reads either format, recognizing binary files by their magic.
pub fn read_matrix(path: &Path) -> Result<MatrixF64> {
    let mut reader = BufReader::new(File::open(path).map_err(IoError::at(path))?);
    let is_binary = reader.fill_buf().map_err(IoError::at(path))?.starts_with(BINARY_MAGIC);
    let parsed = if is_binary { read_binary(reader) } else { read_matrix_market(reader) };
    parsed.map_err(|e| match e {
        IoError::Format(msg) => format_err(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes Matrix Market for `.mtx` paths and binary otherwise.
pub fn write_matrix(path: &Path, m: &MatrixF64) -> Result<()> {
    let w = BufWriter::new(File::create(path).map_err(IoError::at(path))?);
    match MatrixFormat::from_path(path) {
        MatrixFormat::MatrixMarket => write_matrix_market(w, m),
        MatrixFormat::Binary => write_binary(w, m),
    }
    .map_err(IoError::at(path))
}

/// Writes `contents` to `path`.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(IoError::at(path))
}
