//! NPY v1.0 reader/writer for 2-D float matrices.
//!
//! Layout: `\x93NUMPY`, version bytes `1 0`, little-endian `u16` header
//! length, then an ASCII Python dict literal with `descr`, `fortran_order`
//! and `shape`, space-padded so the payload starts on a 64-byte boundary and
//! terminated by `\n`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{IdError, Result};
use crate::scalar::Scalar;

use super::PointCloud;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NpyHeader {
    pub descr: String,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dtype {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

impl NpyHeader {
    fn dtype(&self) -> Result<(Dtype, Endian)> {
        let bytes = self.descr.as_bytes();
        if bytes.len() != 3 {
            return Err(IdError::Format(format!(
                "unsupported dtype '{}'",
                self.descr
            )));
        }
        let endian = match bytes[0] {
            b'<' | b'=' => Endian::Little,
            b'>' => Endian::Big,
            _ => {
                return Err(IdError::Format(format!(
                    "unsupported dtype '{}'",
                    self.descr
                )))
            }
        };
        let dtype = match &bytes[1..] {
            b"f4" => Dtype::F32,
            b"f8" => Dtype::F64,
            _ => {
                return Err(IdError::Format(format!(
                    "unsupported dtype '{}'",
                    self.descr
                )))
            }
        };
        Ok((dtype, endian))
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// The header block exactly as written to disk (dict, padding, newline).
    pub fn render(&self) -> String {
        let shape = match self.shape.len() {
            1 => format!("({},)", self.shape[0]),
            _ => format!(
                "({})",
                self.shape
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        };
        let mut dict = format!(
            "{{'descr': '{}', 'fortran_order': {}, 'shape': {}, }}",
            self.descr,
            if self.fortran_order { "True" } else { "False" },
            shape
        );
        let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
        let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
        dict.extend(std::iter::repeat(' ').take(pad));
        dict.push('\n');
        dict
    }

    /// Parses the dict literal of a v1.0 header.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = DictParser::new(text);
        p.skip_ws();
        p.expect('{')?;
        let mut descr = None;
        let mut fortran_order = None;
        let mut shape = None;
        loop {
            p.skip_ws();
            if p.peek() == Some('}') {
                p.bump();
                break;
            }
            let key = p.string()?;
            p.skip_ws();
            p.expect(':')?;
            p.skip_ws();
            match key.as_str() {
                "descr" => descr = Some(p.string()?),
                "fortran_order" => fortran_order = Some(p.boolean()?),
                "shape" => shape = Some(p.tuple()?),
                other => return Err(IdError::Format(format!("unexpected header key '{other}'"))),
            }
            p.skip_ws();
            match p.peek() {
                Some(',') => {
                    p.bump();
                }
                Some('}') => {}
                _ => return Err(IdError::Format("expected ',' or '}' in header".into())),
            }
        }
        Ok(NpyHeader {
            descr: descr.ok_or_else(|| IdError::Format("header lacks 'descr'".into()))?,
            fortran_order: fortran_order
                .ok_or_else(|| IdError::Format("header lacks 'fortran_order'".into()))?,
            shape: shape.ok_or_else(|| IdError::Format("header lacks 'shape'".into()))?,
        })
    }
}

struct DictParser<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
}

impl<'a> DictParser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            chars: text.chars().peekable(),
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        self.chars.next()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.bump();
        }
    }

    fn expect(&mut self, want: char) -> Result<()> {
        match self.bump() {
            Some(c) if c == want => Ok(()),
            other => Err(IdError::Format(format!(
                "expected '{want}' in header, found {other:?}"
            ))),
        }
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.bump() {
            Some(q @ ('\'' | '"')) => q,
            other => {
                return Err(IdError::Format(format!(
                    "expected quoted string in header, found {other:?}"
                )))
            }
        };
        let mut out = String::new();
        loop {
            match self.bump() {
                Some(c) if c == quote => return Ok(out),
                Some(c) => out.push(c),
                None => return Err(IdError::Format("unterminated string in header".into())),
            }
        }
    }

    fn word(&mut self) -> String {
        let mut out = String::new();
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
            out.push(self.bump().unwrap());
        }
        out
    }

    fn boolean(&mut self) -> Result<bool> {
        match self.word().as_str() {
            "True" => Ok(true),
            "False" => Ok(false),
            w => Err(IdError::Format(format!("expected True/False, found '{w}'"))),
        }
    }

    fn tuple(&mut self) -> Result<Vec<usize>> {
        self.expect('(')?;
        let mut dims = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(')') {
                self.bump();
                return Ok(dims);
            }
            let w = self.word();
            // numpy may emit a trailing 'L' on py2-era files
            let w = w.trim_end_matches('L');
            let v = w
                .parse::<usize>()
                .map_err(|_| IdError::Format(format!("bad shape entry '{w}'")))?;
            dims.push(v);
            self.skip_ws();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some(')') => {}
                _ => return Err(IdError::Format("malformed shape tuple".into())),
            }
        }
    }
}

/// Reads any-rank float NPY data, converting to `T`. Values are returned
/// in C order; Fortran-ordered 2-D payloads are transposed.
pub fn read_npy<T: Scalar, R: Read>(reader: R) -> Result<(NpyHeader, Vec<T>)> {
    let mut reader = BufReader::new(reader);
    let mut prefix = [0u8; 10];
    reader
        .read_exact(&mut prefix)
        .map_err(|_| IdError::Format("file too short for an NPY preamble".into()))?;
    if &prefix[..6] != MAGIC {
        return Err(IdError::Format("missing \\x93NUMPY magic".into()));
    }
    if prefix[6..8] != [1, 0] {
        return Err(IdError::Format(format!(
            "unsupported NPY version {}.{}",
            prefix[6], prefix[7]
        )));
    }
    let header_len = u16::from_le_bytes([prefix[8], prefix[9]]) as usize;
    let mut header_bytes = vec![0u8; header_len];
    reader
        .read_exact(&mut header_bytes)
        .map_err(|_| IdError::Format("truncated NPY header".into()))?;
    let text = std::str::from_utf8(&header_bytes)
        .map_err(|_| IdError::Format("header is not ASCII".into()))?;
    let header = NpyHeader::parse(text)?;
    let (dtype, endian) = header.dtype()?;

    let count = header.element_count();
    let mut values = Vec::with_capacity(count);
    let width = match dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let mut buf = vec![0u8; width * 8192];
    let mut remaining = count;
    while remaining > 0 {
        let take = remaining.min(8192);
        let chunk = &mut buf[..take * width];
        reader
            .read_exact(chunk)
            .map_err(|_| IdError::Format("payload shorter than declared shape".into()))?;
        for raw in chunk.chunks_exact(width) {
            let v = match (dtype, endian) {
                (Dtype::F32, Endian::Little) => f32::from_le_bytes(raw.try_into().unwrap()) as f64,
                (Dtype::F32, Endian::Big) => f32::from_be_bytes(raw.try_into().unwrap()) as f64,
                (Dtype::F64, Endian::Little) => f64::from_le_bytes(raw.try_into().unwrap()),
                (Dtype::F64, Endian::Big) => f64::from_be_bytes(raw.try_into().unwrap()),
            };
            values.push(T::from_f64_lossy(v));
        }
        remaining -= take;
    }

    if header.fortran_order && header.shape.len() == 2 {
        let (n, d) = (header.shape[0], header.shape[1]);
        let mut c_order = Vec::with_capacity(count);
        for i in 0..n {
            for j in 0..d {
                c_order.push(values[j * n + i]);
            }
        }
        values = c_order;
    }
    Ok((header, values))
}

/// Loads a 2-D NPY file as a cloud of scalar type `T`.
pub fn load_matrix_as<T: Scalar>(path: impl AsRef<Path>) -> Result<PointCloud<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IdError::io(path, e))?;
    let (header, values) = read_npy::<T, _>(file)?;
    if header.shape.len() != 2 {
        return Err(IdError::Shape(format!(
            "{} has shape {:?}; a 2-D matrix is required",
            path.display(),
            header.shape
        )));
    }
    PointCloud::new(values, header.shape[0], header.shape[1])
}

/// Loads a 2-D NPY file in working precision.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<PointCloud<f64>> {
    load_matrix_as::<f64>(path)
}

/// Writes `n x d` values (C order) as a `<f8` NPY stream.
pub fn write_npy<W: Write, I>(writer: W, n: usize, d: usize, values: I) -> std::io::Result<()>
where
    I: IntoIterator<Item = f64>,
{
    let header = NpyHeader {
        descr: "<f8".into(),
        fortran_order: false,
        shape: vec![n, d],
    };
    let rendered = header.render();
    let mut w = BufWriter::new(writer);
    w.write_all(MAGIC)?;
    w.write_all(&[1, 0])?;
    w.write_all(&(rendered.len() as u16).to_le_bytes())?;
    w.write_all(rendered.as_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

/// Saves a cloud as a little-endian `f64` C-order NPY v1.0 file.
pub fn save_matrix<T: Scalar>(cloud: &PointCloud<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if cloud.n() == 0 {
        return Err(IdError::Shape("refusing to write a zero-row matrix".into()));
    }
    let file = File::create(path).map_err(|e| IdError::io(path, e))?;
    write_npy(
        file,
        cloud.n(),
        cloud.d_ambient(),
        cloud.as_slice().iter().map(|v| v.as_f64()),
    )
    .map_err(|e| IdError::io(path, e))
}
