//! NPY v1.0 reader/writer restricted to little-endian `float32`, C order.

use std::fs;
use std::path::Path;

use super::TensorError;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE: usize = 10;
const ALIGN: usize = 64;

/// A dense float32 tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl TensorFile {
    /// Rank must be 2 (depth/confidence) or 3 (features) and the element count must match.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        if !(2..=3).contains(&shape.len()) {
            return Err(TensorError::UnsupportedRank(shape.len()));
        }
        let expected = shape.iter().product::<usize>();
        if expected != data.len() {
            return Err(TensorError::ShapeMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f32>) {
        (self.shape, self.data)
    }

    /// Serializes to NPY v1.0 bytes.
    pub fn to_npy_bytes(&self) -> Vec<u8> {
        let dims = match self.shape.as_slice() {
            [d] => format!("({d},)"),
            ds => format!(
                "({})",
                ds.iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        };
        let mut header = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {dims}, }}");
        let unpadded = PREAMBLE + header.len() + 1;
        let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
        header.extend(std::iter::repeat_n(' ', pad));
        header.push('\n');

        let mut out = Vec::with_capacity(PREAMBLE + header.len() + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(header.len() as u16).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses NPY bytes. Only `<f4`, C-order payloads are accepted.
    pub fn from_npy_bytes(bytes: &[u8]) -> Result<Self, TensorError> {
        if bytes.len() < PREAMBLE || &bytes[..6] != MAGIC {
            return Err(TensorError::MalformedHeader("missing NUMPY magic".into()));
        }
        let (major, minor) = (bytes[6], bytes[7]);
        if (major, minor) != (1, 0) {
            return Err(TensorError::MalformedHeader(format!(
                "unsupported version {major}.{minor}"
            )));
        }
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        let body_start = PREAMBLE + header_len;
        if bytes.len() < body_start {
            return Err(TensorError::MalformedHeader(
                "header extends past end of file".into(),
            ));
        }
        let header = std::str::from_utf8(&bytes[PREAMBLE..body_start])
            .map_err(|_| TensorError::MalformedHeader("header is not ASCII".into()))?;
        let fields = HeaderFields::parse(header)?;

        if fields.descr != "<f4" {
            return Err(TensorError::UnsupportedDtype(fields.descr));
        }
        if fields.fortran_order {
            return Err(TensorError::UnsupportedLayout);
        }
        let count: usize = fields.shape.iter().product();
        let payload = &bytes[body_start..];
        if payload.len() != count * 4 {
            return Err(TensorError::TruncatedPayload {
                expected: count * 4,
                actual: payload.len(),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::new(fields.shape, data)
    }
}

struct HeaderFields {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

impl HeaderFields {
    fn parse(header: &str) -> Result<Self, TensorError> {
        let bad = |what: &str| TensorError::MalformedHeader(what.to_string());
        let text = header.trim_end_matches(['\n', ' ', '\0']).trim();
        let inner = text
            .strip_prefix('{')
            .and_then(|t| t.strip_suffix('}'))
            .ok_or_else(|| bad("header is not a dict literal"))?;

        let descr = quoted_value(inner, "descr").ok_or_else(|| bad("missing 'descr'"))?;
        let fortran_order = match raw_value(inner, "fortran_order").map(str::trim) {
            Some(v) if v.starts_with("False") => false,
            Some(v) if v.starts_with("True") => true,
            _ => return Err(bad("missing or invalid 'fortran_order'")),
        };
        let shape_src = raw_value(inner, "shape")
            .ok_or_else(|| bad("missing 'shape'"))?
            .trim();
        let tuple = shape_src
            .strip_prefix('(')
            .and_then(|s| s.split_once(')'))
            .map(|(body, _)| body)
            .ok_or_else(|| bad("'shape' is not a tuple"))?;
        let shape = tuple
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.trim_end_matches('L')
                    .parse::<usize>()
                    .map_err(|_| bad("non-integer dimension"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            descr,
            fortran_order,
            shape,
        })
    }
}

/// Text immediately after `'key':`.
fn raw_value<'a>(dict: &'a str, key: &str) -> Option<&'a str> {
    let pat = format!("'{key}'");
    let at = dict.find(&pat)? + pat.len();
    let rest = dict[at..].trim_start();
    rest.strip_prefix(':')
}

fn quoted_value(dict: &str, key: &str) -> Option<String> {
    let v = raw_value(dict, key)?.trim_start();
    let q = v.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let body = &v[1..];
    body.find(q).map(|end| body[..end].to_string())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorFile, TensorError> {
    let bytes = fs::read(path.as_ref())?;
    TensorFile::from_npy_bytes(&bytes)
}

pub fn write_tensor(tensor: &TensorFile, path: impl AsRef<Path>) -> Result<(), TensorError> {
    fs::write(path.as_ref(), tensor.to_npy_bytes())?;
    Ok(())
}
