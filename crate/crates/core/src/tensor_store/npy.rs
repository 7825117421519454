//! Minimal NPY (version 1.0) reader and writer.
//!
//! Only little-endian, C-ordered `<f4` and `<i4` arrays are supported. The
//! header is written exactly as numpy formats it, padded with spaces so the
//! payload starts on a 64-byte boundary.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    F32(Vec<f32>),
    I32(Vec<i32>),
}

impl NpyData {
    pub fn len(&self) -> usize {
        match self {
            NpyData::F32(v) => v.len(),
            NpyData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn descr(&self) -> &'static str {
        match self {
            NpyData::F32(_) => "<f4",
            NpyData::I32(_) => "<i4",
        }
    }
}

/// A dense array as stored in an `.npy` file.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(shape, NpyData::F32(data))
    }

    pub fn i32(shape: Vec<usize>, data: Vec<i32>) -> Result<Self> {
        Self::new(shape, NpyData::I32(data))
    }

    pub fn new(shape: Vec<usize>, data: NpyData) -> Result<Self> {
        let expected = element_count(&shape)?;
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {expected} elements but {} were given",
                data.len()
            )));
        }
        Ok(NpyArray { shape, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        read_npy(&mut reader).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        write_npy(&mut writer, self)
            .and_then(|_| writer.flush())
            .map_err(|e| Error::io(path, e))
    }
}

fn element_count(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("shape {shape:?} overflows")))
}

fn header_string(descr: &str, shape: &[usize]) -> String {
    let shape_repr = match shape {
        [] => "()".to_string(),
        [d] => format!("({d},)"),
        dims => format!(
            "({})",
            dims.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut header =
        format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_repr}, }}");
    // magic + version + u16 length + header + '\n'
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');
    header
}

pub fn write_npy<W: Write>(writer: &mut W, array: &NpyArray) -> io::Result<()> {
    let header = header_string(array.data.descr(), &array.shape);
    let header_len = u16::try_from(header.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "npy header too long"))?;
    writer.write_all(MAGIC)?;
    writer.write_all(&[1, 0])?;
    writer.write_all(&header_len.to_le_bytes())?;
    writer.write_all(header.as_bytes())?;

    let mut buf = Vec::with_capacity(array.data.len() * 4);
    match &array.data {
        NpyData::F32(values) => values
            .iter()
            .for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
        NpyData::I32(values) => values
            .iter()
            .for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
    }
    writer.write_all(&buf)
}

pub fn read_npy<R: Read>(reader: &mut R) -> Result<NpyArray> {
    let io_err = |e: io::Error| Error::io("<stream>", e);

    let mut magic = [0u8; 6];
    reader
        .read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for npy magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("missing \\x93NUMPY magic".into()));
    }
    let mut version = [0u8; 2];
    reader.read_exact(&mut version).map_err(io_err)?;
    let header_len = match version[0] {
        1 => {
            let mut b = [0u8; 2];
            reader.read_exact(&mut b).map_err(io_err)?;
            u16::from_le_bytes(b) as usize
        }
        2 | 3 => {
            let mut b = [0u8; 4];
            reader.read_exact(&mut b).map_err(io_err)?;
            u32::from_le_bytes(b) as usize
        }
        v => {
            return Err(Error::Format(format!(
                "unsupported npy version {v}.{}",
                version[1]
            )))
        }
    };
    let mut header = vec![0u8; header_len];
    reader
        .read_exact(&mut header)
        .map_err(|_| Error::Format("truncated npy header".into()))?;
    let header = std::str::from_utf8(&header)
        .map_err(|_| Error::Format("npy header is not valid text".into()))?;
    let dict = HeaderDict::parse(header)?;

    if dict.fortran_order {
        return Err(Error::Format(
            "fortran_order arrays are not supported".into(),
        ));
    }
    let count = element_count(&dict.shape)?;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(io_err)?;
    if bytes.len() != count * 4 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, shape {:?} needs {}",
            bytes.len(),
            dict.shape,
            count * 4
        )));
    }
    let words = bytes.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]);
    let data = match dict.descr.as_str() {
        "<f4" => NpyData::F32(words.map(f32::from_le_bytes).collect()),
        "<i4" => NpyData::I32(words.map(i32::from_le_bytes).collect()),
        other => {
            return Err(Error::Dtype {
                found: other.to_string(),
                expected: "'<f4' or '<i4'",
            })
        }
    };
    Ok(NpyArray {
        shape: dict.shape,
        data,
    })
}

#[derive(Debug, PartialEq)]
struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

impl HeaderDict {
    /// Parses the python dict literal found in npy headers. Only the three
    /// standard keys are understood; anything else is a format error.
    fn parse(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Format(format!("npy header {text:?}: {msg}"));
        let body = text
            .trim()
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .ok_or_else(|| bad("not a dict"))?;

        let mut descr = None;
        let mut fortran_order = None;
        let mut shape = None;
        let mut rest = body.trim_start();
        while !rest.is_empty() {
            let (key, after) = parse_quoted(rest).ok_or_else(|| bad("expected quoted key"))?;
            let after = after
                .trim_start()
                .strip_prefix(':')
                .ok_or_else(|| bad("expected ':'"))?
                .trim_start();
            rest = match key {
                "descr" => {
                    let (v, after) = parse_quoted(after).ok_or_else(|| bad("bad descr"))?;
                    descr = Some(v.to_string());
                    after
                }
                "fortran_order" => {
                    if let Some(a) = after.strip_prefix("False") {
                        fortran_order = Some(false);
                        a
                    } else if let Some(a) = after.strip_prefix("True") {
                        fortran_order = Some(true);
                        a
                    } else {
                        return Err(bad("bad fortran_order"));
                    }
                }
                "shape" => {
                    let inner = after.strip_prefix('(').ok_or_else(|| bad("bad shape"))?;
                    let close = inner.find(')').ok_or_else(|| bad("unterminated shape"))?;
                    let dims = inner[..close]
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<usize>().map_err(|_| bad("bad shape entry")))
                        .collect::<Result<Vec<_>>>()?;
                    shape = Some(dims);
                    &inner[close + 1..]
                }
                other => return Err(bad(&format!("unexpected key {other:?}"))),
            };
            rest = rest.trim_start();
            rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
        }
        Ok(HeaderDict {
            descr: descr.ok_or_else(|| bad("missing descr"))?,
            fortran_order: fortran_order.ok_or_else(|| bad("missing fortran_order"))?,
            shape: shape.ok_or_else(|| bad("missing shape"))?,
        })
    }
}

fn parse_quoted(s: &str) -> Option<(&str, &str)> {
    let quote = s.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let inner = &s[1..];
    let end = inner.find(quote)?;
    Some((&inner[..end], &inner[end + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(array: &NpyArray) -> Vec<u8> {
        let mut buf = Vec::new();
        write_npy(&mut buf, array).unwrap();
        buf
    }

    #[test]
    fn header_matches_numpy_layout() {
        let array = NpyArray::f32(vec![2, 2, 3], vec![0.0; 12]).unwrap();
        let bytes = encode(&array);
        assert_eq!(&bytes[..6], MAGIC);
        assert_eq!(&bytes[6..8], &[1, 0]);
        let len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + len) % 64, 0);
        let header = std::str::from_utf8(&bytes[10..10 + len]).unwrap();
        assert!(
            header.starts_with("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 2, 3), }")
        );
        assert!(header.ends_with('\n'));
        assert_eq!(bytes.len(), 10 + len + 48);
    }

    #[test]
    fn one_dimensional_shape_has_trailing_comma() {
        assert!(header_string("<i4", &[5]).contains("'shape': (5,)"));
        assert!(header_string("<i4", &[]).contains("'shape': ()"));
    }

    #[test]
    fn parses_reordered_keys_and_double_quotes() {
        let dict = HeaderDict::parse("{\"shape\": (3, 4), 'fortran_order': False, 'descr': '<i4'}")
            .unwrap();
        assert_eq!(dict.shape, vec![3, 4]);
        assert_eq!(dict.descr, "<i4");
        assert!(!dict.fortran_order);
    }

    #[test]
    fn rejects_wrong_dtype() {
        let mut bytes = encode(&NpyArray::f32(vec![2], vec![1.0, 2.0]).unwrap());
        let pos = bytes.windows(3).position(|w| w == b"<f4").unwrap();
        bytes[pos..pos + 3].copy_from_slice(b"<f8");
        let err = read_npy(&mut bytes.as_slice()).unwrap_err();
        assert!(
            matches!(err, Error::Format(_) | Error::Dtype { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let bytes = encode(&NpyArray::i32(vec![4], vec![1, 2, 3, 4]).unwrap());
        let mut broken = bytes.clone();
        broken[1] = b'X';
        assert!(matches!(
            read_npy(&mut broken.as_slice()),
            Err(Error::Format(_))
        ));
        let truncated = &bytes[..bytes.len() - 2];
        assert!(matches!(
            read_npy(&mut &truncated[..]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn rejects_fortran_order() {
        let mut bytes = encode(&NpyArray::f32(vec![1], vec![1.0]).unwrap());
        let pos = bytes.windows(5).position(|w| w == b"False").unwrap();
        bytes[pos..pos + 5].copy_from_slice(b"True ");
        assert!(read_npy(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(NpyArray::f32(vec![2, 3], vec![0.0; 5]).is_err());
    }
}
